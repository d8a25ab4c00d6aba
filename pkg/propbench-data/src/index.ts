export {
  PerturbationKind,
  PerturbationSpec,
  CropRect,
  inscribedCrop,
  pixelCrop,
  defaultGrid,
  specLabel,
  validateSpec,
} from './geometry';
export {
  RasterImage,
  createImage,
  cloneImage,
  decodeImage,
  readImage,
  encodePpm,
  encodePgm,
  encodePng,
  encodeJpeg,
  atomicWrite,
  luma,
} from './image';
export { scaleImage, rotateAndCrop, gaussianBlur } from './resample';
export {
  PerturbJob,
  GeometrySidecar,
  perturb,
  saltPepper,
  adjustBrightness,
  mulberry32,
  sidecarPath,
} from './perturb';
export { ingestVoc, parseVocAnnotation, tagText, tagBlocks, writeManifests } from './voc';
export { ingestCoco } from './coco';
export { writeJsonLines } from './jsonl';
export { dispatch } from './cli';
