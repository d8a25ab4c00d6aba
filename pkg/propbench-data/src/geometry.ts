/**
 * Perturbation parameter model and the rotation-crop geometry shared with
 * the benchmark side: coordinates are continuous, 0-indexed, top-left
 * origin, boxes as (x, y, w, h).
 */

export type PerturbationKind =
  | 'none'
  | 'scale'
  | 'rotation'
  | 'blur'
  | 'jpeg'
  | 'illumination'
  | 'saltpepper';

export interface PerturbationSpec {
  kind: PerturbationKind;
  /** scale factor | angle in degrees | sigma px | quality % (Infinity = lossless)
   *  | brightness % | noise pixel count; 0 for kind 'none'. */
  param: number;
}

export interface CropRect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export function validateSpec(spec: PerturbationSpec): void {
  const p = spec.param;
  const ok: Record<PerturbationKind, boolean> = {
    none: p === 0,
    scale: p > 0 && Number.isFinite(p),
    rotation: p >= -20 && p <= 20,
    blur: p >= 0 && p <= 8,
    jpeg: (p >= 5 && p <= 100) || p === Infinity,
    illumination: p >= 50 && p <= 150,
    saltpepper: p >= 1 && p <= 1000 && Number.isInteger(p),
  };
  if (!(spec.kind in ok)) {
    throw new Error(`unknown perturbation kind '${spec.kind}'`);
  }
  if (!ok[spec.kind]) {
    throw new Error(`parameter ${p} out of range for kind '${spec.kind}'`);
  }
}

/** Stable `kind-param` label used for output directory names. */
export function specLabel(spec: PerturbationSpec): string {
  if (spec.kind === 'none') return 'none-0';
  if (spec.kind === 'jpeg' && spec.param === Infinity) return 'jpeg-lossless';
  return `${spec.kind}-${formatParam(spec.param)}`;
}

function formatParam(p: number): string {
  return Number.isInteger(p) ? String(p) : String(p);
}

/**
 * Largest centred rectangle with the image's aspect ratio that stays inside
 * the image under a rotation of thetaMax degrees about the centre. The same
 * crop is reused for all smaller angles of the grid.
 */
export function inscribedCrop(width: number, height: number, thetaMax: number): CropRect {
  if (width < 1 || height < 1) throw new Error('image dimensions must be >= 1');
  if (thetaMax < 0 || thetaMax >= 90) throw new Error('thetaMax must lie in [0, 90)');
  const t = (thetaMax * Math.PI) / 180;
  const c = Math.abs(Math.cos(t));
  const s = Math.abs(Math.sin(t));
  const aspect = width / height;
  const v = Math.min(width / (2 * (aspect * c + s)), height / (2 * (aspect * s + c)));
  const u = aspect * v;
  return { x: width / 2 - u, y: height / 2 - v, w: 2 * u, h: 2 * v };
}

/**
 * The inscribed crop quantised to whole-pixel dimensions (floored, centred).
 * The benchmark back-projects proposals with the same convention, so both
 * sides must agree on it exactly.
 */
export function pixelCrop(width: number, height: number, thetaMax: number): CropRect {
  const crop = inscribedCrop(width, height, thetaMax);
  const w = Math.max(1, Math.floor(crop.w));
  const h = Math.max(1, Math.floor(crop.h));
  return { x: (width - w) / 2, y: (height - h) / 2, w, h };
}

/** The default perturbation grid; mirrors the benchmark's expected levels. */
export function defaultGrid(): PerturbationSpec[] {
  const levels: Array<[PerturbationKind, number[]]> = [
    ['none', [0]],
    ['scale', [0.5, 0.75, 0.9, 0.95, 0.99, 1.01, 1.05, 1.1, 1.25, 1.5, 1.75, 2.0]],
    ['rotation', [-20, -15, -10, -5, 0, 5, 10, 15, 20]],
    ['blur', [0, 1, 2, 3, 4, 5, 6, 7, 8]],
    ['jpeg', [5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95, 100, Infinity]],
    ['illumination', [50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150]],
    ['saltpepper', [1, 3, 10, 30, 100, 300, 1000]],
  ];
  const specs: PerturbationSpec[] = [];
  for (const [kind, params] of levels) {
    for (const param of params) specs.push({ kind, param });
  }
  specs.forEach(validateSpec);
  return specs;
}
