/**
 * Geometric resampling: bicubic upscaling, area-averaged (anti-aliased)
 * downscaling, rotation with bilinear sampling, and separable Gaussian
 * blur. All samplers replicate edge pixels outside the support.
 */

import { CropRect } from './geometry';
import { RasterImage, createImage } from './image';

function clamp(v: number, lo: number, hi: number): number {
  return v < lo ? lo : v > hi ? hi : v;
}

function sampleClamped(img: RasterImage, x: number, y: number, c: number): number {
  const xi = clamp(x, 0, img.width - 1);
  const yi = clamp(y, 0, img.height - 1);
  return img.data[(yi * img.width + xi) * 3 + c];
}

/** Catmull-Rom cubic kernel (a = -0.5), the conventional bicubic choice. */
function cubicWeight(t: number): number {
  const a = -0.5;
  const at = Math.abs(t);
  if (at <= 1) return (a + 2) * at * at * at - (a + 3) * at * at + 1;
  if (at < 2) return a * at * at * at - 5 * a * at * at + 8 * a * at - 4 * a;
  return 0;
}

function bilinear(img: RasterImage, fx: number, fy: number, c: number): number {
  const x0 = Math.floor(fx);
  const y0 = Math.floor(fy);
  const dx = fx - x0;
  const dy = fy - y0;
  const v00 = sampleClamped(img, x0, y0, c);
  const v10 = sampleClamped(img, x0 + 1, y0, c);
  const v01 = sampleClamped(img, x0, y0 + 1, c);
  const v11 = sampleClamped(img, x0 + 1, y0 + 1, c);
  return v00 * (1 - dx) * (1 - dy) + v10 * dx * (1 - dy) + v01 * (1 - dx) * dy + v11 * dx * dy;
}

function bicubic(img: RasterImage, fx: number, fy: number, c: number): number {
  const x0 = Math.floor(fx);
  const y0 = Math.floor(fy);
  let acc = 0;
  let wsum = 0;
  for (let j = -1; j <= 2; j++) {
    const wy = cubicWeight(fy - (y0 + j));
    if (wy === 0) continue;
    for (let i = -1; i <= 2; i++) {
      const wx = cubicWeight(fx - (x0 + i));
      if (wx === 0) continue;
      acc += wx * wy * sampleClamped(img, x0 + i, y0 + j, c);
      wsum += wx * wy;
    }
  }
  return acc / wsum;
}

/**
 * Scale by a factor: bicubic interpolation upward, pixel-area averaging
 * downward so high frequencies are low-passed rather than aliased. Output
 * dimensions are round(factor * input).
 */
export function scaleImage(img: RasterImage, factor: number): RasterImage {
  const outW = Math.max(1, Math.round(img.width * factor));
  const outH = Math.max(1, Math.round(img.height * factor));
  const out = createImage(outW, outH);
  const sx = img.width / outW;
  const sy = img.height / outH;
  for (let y = 0; y < outH; y++) {
    for (let x = 0; x < outW; x++) {
      for (let c = 0; c < 3; c++) {
        let value: number;
        if (factor >= 1) {
          value = bicubic(img, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5, c);
        } else {
          value = boxAverage(img, x * sx, y * sy, (x + 1) * sx, (y + 1) * sy, c);
        }
        out.data[(y * outW + x) * 3 + c] = clamp(Math.round(value), 0, 255);
      }
    }
  }
  return out;
}

function boxAverage(
  img: RasterImage,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  c: number,
): number {
  let acc = 0;
  let area = 0;
  const yStart = Math.floor(y0);
  const xStart = Math.floor(x0);
  for (let y = yStart; y < y1; y++) {
    const cover_y = Math.min(y + 1, y1) - Math.max(y, y0);
    if (cover_y <= 0) continue;
    for (let x = xStart; x < x1; x++) {
      const cover_x = Math.min(x + 1, x1) - Math.max(x, x0);
      if (cover_x <= 0) continue;
      acc += cover_x * cover_y * sampleClamped(img, x, y, c);
      area += cover_x * cover_y;
    }
  }
  return acc / area;
}

/**
 * Rotate by theta degrees about the image centre and crop to the given
 * rectangle (in the rotated canvas frame). Out-of-support samples replicate
 * the nearest edge pixel; the crop discards that border anyway for grid
 * angles up to the crop's design angle.
 */
export function rotateAndCrop(img: RasterImage, thetaDeg: number, crop: CropRect): RasterImage {
  const outW = Math.floor(crop.w);
  const outH = Math.floor(crop.h);
  const out = createImage(outW, outH);
  const t = (-thetaDeg * Math.PI) / 180; // inverse map: output -> source
  const cos = Math.cos(t);
  const sin = Math.sin(t);
  const cx = img.width / 2;
  const cy = img.height / 2;
  for (let y = 0; y < outH; y++) {
    for (let x = 0; x < outW; x++) {
      const px = x + 0.5 + crop.x - cx;
      const py = y + 0.5 + crop.y - cy;
      const srcX = px * cos - py * sin + cx - 0.5;
      const srcY = px * sin + py * cos + cy - 0.5;
      for (let c = 0; c < 3; c++) {
        out.data[(y * outW + x) * 3 + c] = clamp(Math.round(bilinear(img, srcX, srcY, c)), 0, 255);
      }
    }
  }
  return out;
}

/** Separable Gaussian blur with kernel radius ceil(4 sigma). */
export function gaussianBlur(img: RasterImage, sigma: number): RasterImage {
  if (sigma <= 0) return { width: img.width, height: img.height, data: new Uint8Array(img.data) };
  const radius = Math.ceil(4 * sigma);
  const kernel = new Float64Array(2 * radius + 1);
  let sum = 0;
  for (let i = -radius; i <= radius; i++) {
    const w = Math.exp(-0.5 * (i / sigma) * (i / sigma));
    kernel[i + radius] = w;
    sum += w;
  }
  for (let i = 0; i < kernel.length; i++) kernel[i] /= sum;

  const horizontal = new Float64Array(img.width * img.height * 3);
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      for (let c = 0; c < 3; c++) {
        let acc = 0;
        for (let i = -radius; i <= radius; i++) {
          acc += kernel[i + radius] * sampleClamped(img, x + i, y, c);
        }
        horizontal[(y * img.width + x) * 3 + c] = acc;
      }
    }
  }
  const out = createImage(img.width, img.height);
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      for (let c = 0; c < 3; c++) {
        let acc = 0;
        for (let i = -radius; i <= radius; i++) {
          const yy = clamp(y + i, 0, img.height - 1);
          acc += kernel[i + radius] * horizontal[(yy * img.width + x) * 3 + c];
        }
        out.data[(y * img.width + x) * 3 + c] = clamp(Math.round(acc), 0, 255);
      }
    }
  }
  return out;
}
