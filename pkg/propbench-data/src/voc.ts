/**
 * VOC-layout ingestion: converts per-image XML annotation files into the
 * benchmark's images.jsonl / annotations.jsonl manifests.
 *
 * VOC boxes are 1-indexed inclusive pixel corners (xmin, ymin, xmax, ymax);
 * the manifests use continuous 0-indexed (x, y, w, h), so a corner box
 * (1, 1, 10, 10) becomes (0, 0, 10, 10).
 */

import * as fs from 'fs';
import * as path from 'path';
import { writeJsonLines } from './jsonl';

export interface IngestStats {
  images: number;
  annotations: number;
  skipped: number;
}

/** First <tag>...</tag> text content inside a block, if present. */
export function tagText(xml: string, tag: string): string | undefined {
  const match = xml.match(new RegExp(`<${tag}>\\s*([\\s\\S]*?)\\s*</${tag}>`));
  return match ? match[1] : undefined;
}

/** Every <tag>...</tag> block, non-nested (VOC annotation files are flat). */
export function tagBlocks(xml: string, tag: string): string[] {
  const out: string[] = [];
  const re = new RegExp(`<${tag}>([\\s\\S]*?)</${tag}>`, 'g');
  for (let m = re.exec(xml); m; m = re.exec(xml)) out.push(m[1]);
  return out;
}

function requiredNumber(xml: string, tag: string, where: string): number {
  const text = tagText(xml, tag);
  const value = text === undefined ? NaN : Number(text);
  if (!Number.isFinite(value)) throw new Error(`${where}: missing or bad <${tag}>`);
  return value;
}

interface ImageRecord {
  id: string;
  width: number;
  height: number;
  file?: string;
}

interface AnnotationRecord {
  image_id: string;
  class: string;
  box: [number, number, number, number];
  difficult: boolean;
  crowd: boolean;
}

export function parseVocAnnotation(
  xml: string,
  imageId: string,
  where: string,
): { image: ImageRecord; annotations: AnnotationRecord[] } {
  const size = tagBlocks(xml, 'size')[0];
  if (!size) throw new Error(`${where}: missing <size>`);
  const width = requiredNumber(size, 'width', where);
  const height = requiredNumber(size, 'height', where);
  const filename = tagText(xml, 'filename');
  const image: ImageRecord = { id: imageId, width, height };
  if (filename) image.file = path.join('JPEGImages', filename);
  const annotations: AnnotationRecord[] = [];
  for (const object of tagBlocks(xml, 'object')) {
    const name = tagText(object, 'name');
    if (!name) throw new Error(`${where}: object without <name>`);
    const bndbox = tagBlocks(object, 'bndbox')[0];
    if (!bndbox) throw new Error(`${where}: object without <bndbox>`);
    const xmin = requiredNumber(bndbox, 'xmin', where);
    const ymin = requiredNumber(bndbox, 'ymin', where);
    const xmax = requiredNumber(bndbox, 'xmax', where);
    const ymax = requiredNumber(bndbox, 'ymax', where);
    if (xmax < xmin || ymax < ymin) throw new Error(`${where}: inverted bndbox`);
    annotations.push({
      image_id: imageId,
      class: name,
      box: [xmin - 1, ymin - 1, xmax - xmin + 1, ymax - ymin + 1],
      difficult: tagText(object, 'difficult') === '1',
      crowd: false,
    });
  }
  return { image, annotations };
}

/**
 * Ingest one split of a VOC-layout directory tree into `outDir`.
 * Malformed annotation files are skipped with a warning and counted so a
 * single broken file does not kill a long ingestion run.
 */
export function ingestVoc(
  vocRoot: string,
  split: string,
  outDir: string,
  warn: (message: string) => void = (m) => console.error(m),
): IngestStats {
  const splitPath = path.join(vocRoot, 'ImageSets', 'Main', `${split}.txt`);
  if (!fs.existsSync(splitPath)) {
    throw new Error(`split file not found: ${splitPath}`);
  }
  const ids = fs
    .readFileSync(splitPath, 'utf-8')
    .split('\n')
    .map((line) => line.trim().split(/\s+/)[0])
    .filter((id) => id.length > 0);
  const images: ImageRecord[] = [];
  const annotations: AnnotationRecord[] = [];
  let skipped = 0;
  for (const id of ids) {
    const annPath = path.join(vocRoot, 'Annotations', `${id}.xml`);
    try {
      const xml = fs.readFileSync(annPath, 'utf-8');
      const parsed = parseVocAnnotation(xml, id, annPath);
      if (parsed.image.file) {
        parsed.image.file = path.resolve(vocRoot, parsed.image.file);
      }
      images.push(parsed.image);
      annotations.push(...parsed.annotations);
    } catch (err) {
      skipped += 1;
      warn(`warning: skipping ${annPath}: ${(err as Error).message}`);
    }
  }
  writeManifests(outDir, images, annotations);
  return { images: images.length, annotations: annotations.length, skipped };
}

export function writeManifests(
  outDir: string,
  images: ImageRecord[],
  annotations: AnnotationRecord[],
): void {
  fs.mkdirSync(outDir, { recursive: true });
  writeJsonLines(
    path.join(outDir, 'images.jsonl'),
    images.map((img) => {
      const record: Record<string, unknown> = {
        id: img.id,
        width: img.width,
        height: img.height,
      };
      if (img.file) record.file = img.file;
      return record;
    }),
  );
  writeJsonLines(
    path.join(outDir, 'annotations.jsonl'),
    annotations.map((ann) => ({
      image_id: ann.image_id,
      class: ann.class,
      box: ann.box,
      difficult: ann.difficult,
      crowd: ann.crowd,
    })),
  );
}
