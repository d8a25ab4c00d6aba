/**
 * COCO-style annotation ingestion. Boxes are already (x, y, w, h); crowd
 * regions are carried through with crowd=true so the evaluator can exclude
 * them rather than silently dropping data here.
 */

import * as fs from 'fs';
import { writeManifests } from './voc';
import type { IngestStats } from './voc';

interface CocoDocument {
  images: Array<{ id: number | string; file_name?: string; width: number; height: number }>;
  annotations: Array<{
    image_id: number | string;
    category_id: number | string;
    bbox: [number, number, number, number];
    iscrowd?: number | boolean;
  }>;
  categories: Array<{ id: number | string; name: string }>;
}

export function ingestCoco(jsonPath: string, outDir: string): IngestStats {
  const doc = JSON.parse(fs.readFileSync(jsonPath, 'utf-8')) as Partial<CocoDocument>;
  for (const field of ['images', 'annotations', 'categories'] as const) {
    if (!Array.isArray(doc[field])) {
      throw new Error(`${jsonPath}: missing or non-array '${field}'`);
    }
  }
  const { images, annotations, categories } = doc as CocoDocument;
  const categoryName = new Map<string, string>();
  for (const cat of categories) {
    if (cat.name === undefined) throw new Error(`${jsonPath}: category without name`);
    categoryName.set(String(cat.id), cat.name);
  }
  const imageRecords = images.map((img) => {
    if (!Number.isFinite(img.width) || !Number.isFinite(img.height)) {
      throw new Error(`${jsonPath}: image ${img.id} lacks dimensions`);
    }
    const record: { id: string; width: number; height: number; file?: string } = {
      id: String(img.id),
      width: img.width,
      height: img.height,
    };
    if (img.file_name) record.file = img.file_name;
    return record;
  });
  const known = new Set(imageRecords.map((img) => img.id));
  const annotationRecords = annotations.map((ann, index) => {
    const imageId = String(ann.image_id);
    if (!known.has(imageId)) {
      throw new Error(`${jsonPath}: annotation ${index} references unknown image ${imageId}`);
    }
    const cls = categoryName.get(String(ann.category_id));
    if (cls === undefined) {
      throw new Error(`${jsonPath}: annotation ${index} has unknown category ${ann.category_id}`);
    }
    const [x, y, w, h] = ann.bbox ?? [];
    if (![x, y, w, h].every(Number.isFinite) || w <= 0 || h <= 0) {
      throw new Error(`${jsonPath}: annotation ${index} has invalid bbox ${ann.bbox}`);
    }
    return {
      image_id: imageId,
      class: cls,
      box: [x, y, w, h] as [number, number, number, number],
      difficult: false,
      crowd: Boolean(ann.iscrowd),
    };
  });
  writeManifests(outDir, imageRecords, annotationRecords);
  return { images: imageRecords.length, annotations: annotationRecords.length, skipped: 0 };
}
