/**
 * Perturbation jobs: produce the perturbed image variant plus a geometry
 * sidecar recording the exact parameters the benchmark needs to project
 * proposals back into the reference frame.
 *
 * Output formats: the identity-like jobs (kind 'none', illumination 100%,
 * lossless jpeg) copy the source bytes verbatim; jpeg re-encodes at the
 * requested quality; everything else is written as lossless binary PPM so
 * pixel-level contracts (e.g. exactly n salt-and-pepper flips) survive.
 */

import * as fs from 'fs';
import {
  CropRect,
  PerturbationSpec,
  pixelCrop,
  inscribedCrop,
  validateSpec,
} from './geometry';
import {
  RasterImage,
  atomicWrite,
  cloneImage,
  encodeJpeg,
  encodePpm,
  luma,
  readImage,
} from './image';
import { gaussianBlur, rotateAndCrop, scaleImage } from './resample';

export interface PerturbJob {
  sourcePath: string;
  spec: PerturbationSpec;
  outputPath: string;
  /** Required iff spec.kind === 'saltpepper'. */
  seed?: number;
  /** Crop design angle for rotation jobs (the grid maximum). */
  thetaMax?: number;
}

export interface GeometrySidecar {
  kind: string;
  /** 'lossless' stands in for the non-finite jpeg sentinel in JSON. */
  param: number | 'lossless';
  source: { width: number; height: number };
  output: { width: number; height: number };
  scale?: number;
  theta?: number;
  /** Continuous inscribed crop (x, y, w, h) in the rotated-canvas frame. */
  crop?: [number, number, number, number];
  /** Whole-pixel crop actually rendered. */
  pixelCrop?: [number, number, number, number];
  seed?: number;
}

/** Deterministic 32-bit PRNG (mulberry32); stable across platforms. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Flip n distinct pixels: dark pixels (luma < 128) to white, others to black. */
export function saltPepper(img: RasterImage, count: number, seed: number): RasterImage {
  const out = cloneImage(img);
  const total = img.width * img.height;
  if (count > total) throw new Error(`noise count ${count} exceeds pixel count ${total}`);
  const rng = mulberry32(seed);
  const chosen = new Set<number>();
  while (chosen.size < count) {
    chosen.add(Math.floor(rng() * total));
  }
  for (const idx of chosen) {
    const base = idx * 3;
    const dark = luma(out.data[base], out.data[base + 1], out.data[base + 2]) < 128;
    const value = dark ? 255 : 0;
    out.data[base] = value;
    out.data[base + 1] = value;
    out.data[base + 2] = value;
  }
  return out;
}

/** Scale the HSB brightness channel by factor/100, clamping at saturation. */
export function adjustBrightness(img: RasterImage, factorPercent: number): RasterImage {
  const out = cloneImage(img);
  const f = factorPercent / 100;
  for (let i = 0; i < img.width * img.height; i++) {
    const r = img.data[i * 3];
    const g = img.data[i * 3 + 1];
    const b = img.data[i * 3 + 2];
    // HSB value is max(r, g, b); scaling V scales all components equally
    // until they clamp, which reproduces over/under-saturation.
    const scaled = [r * f, g * f, b * f];
    out.data[i * 3] = Math.min(255, Math.round(scaled[0]));
    out.data[i * 3 + 1] = Math.min(255, Math.round(scaled[1]));
    out.data[i * 3 + 2] = Math.min(255, Math.round(scaled[2]));
  }
  return out;
}

export function perturb(job: PerturbJob): GeometrySidecar {
  validateSpec(job.spec);
  const { kind, param } = job.spec;
  const sourceBytes = fs.readFileSync(job.sourcePath);
  const source = readImage(job.sourcePath);
  const sidecar: GeometrySidecar = {
    kind,
    param: param === Infinity ? 'lossless' : param,
    source: { width: source.width, height: source.height },
    output: { width: source.width, height: source.height },
  };

  if (kind === 'none' || (kind === 'illumination' && param === 100) || (kind === 'jpeg' && param === Infinity)) {
    // The neutral settings change nothing: copy bytes so outputs are
    // verifiably identical to the source.
    atomicWrite(job.outputPath, sourceBytes);
    writeSidecar(job.outputPath, sidecar);
    return sidecar;
  }

  let result: RasterImage;
  switch (kind) {
    case 'scale': {
      result = scaleImage(source, param);
      sidecar.scale = param;
      break;
    }
    case 'rotation': {
      const thetaMax = job.thetaMax ?? 20;
      const crop = pixelCrop(source.width, source.height, thetaMax);
      const continuous = inscribedCrop(source.width, source.height, thetaMax);
      result = rotateAndCrop(source, param, crop);
      sidecar.theta = param;
      sidecar.crop = [continuous.x, continuous.y, continuous.w, continuous.h];
      sidecar.pixelCrop = [crop.x, crop.y, crop.w, crop.h];
      break;
    }
    case 'blur': {
      result = gaussianBlur(source, param);
      break;
    }
    case 'jpeg': {
      result = source; // re-encoded below
      break;
    }
    case 'illumination': {
      result = adjustBrightness(source, param);
      break;
    }
    case 'saltpepper': {
      if (job.seed === undefined) throw new Error('saltpepper requires a seed');
      result = saltPepper(source, param, job.seed);
      sidecar.seed = job.seed;
      break;
    }
    default:
      throw new Error(`unhandled kind '${kind}'`);
  }

  sidecar.output = { width: result.width, height: result.height };
  if (kind === 'jpeg') {
    atomicWrite(job.outputPath, encodeJpeg(source, param));
  } else {
    atomicWrite(job.outputPath, encodePpm(result));
  }
  writeSidecar(job.outputPath, sidecar);
  return sidecar;
}

function writeSidecar(outputPath: string, sidecar: GeometrySidecar): void {
  const ordered: Record<string, unknown> = {};
  const plain = sidecar as unknown as Record<string, unknown>;
  for (const key of Object.keys(plain).sort()) {
    ordered[key] = plain[key];
  }
  atomicWrite(`${outputPath}.json`, JSON.stringify(ordered, null, 2) + '\n');
}

export function sidecarPath(outputPath: string): string {
  return `${outputPath}.json`;
}
