#!/usr/bin/env node
/**
 * propbench-data: dataset conversion and perturbed-image generation for the
 * proposal benchmark. Exit codes: 0 success, 1 usage error, 2 data error.
 */

import * as fs from 'fs';
import * as path from 'path';
import { parseArgs } from 'util';
import { ingestCoco } from './coco';
import { defaultGrid, PerturbationKind, specLabel } from './geometry';
import { atomicWrite, encodePgm, encodePpm, readImage } from './image';
import { perturb } from './perturb';
import { ingestVoc } from './voc';

class UsageError extends Error {}

function requireOption(values: Record<string, unknown>, name: string): string {
  const value = values[name];
  if (typeof value !== 'string' || value.length === 0) {
    throw new UsageError(`--${name} is required`);
  }
  return value;
}

function numberOption(values: Record<string, unknown>, name: string): number | undefined {
  const value = values[name];
  if (value === undefined) return undefined;
  const parsed = Number(value);
  if (!Number.isFinite(parsed) && value !== 'lossless' && value !== 'inf') {
    throw new UsageError(`--${name} must be numeric, got '${value}'`);
  }
  return value === 'lossless' || value === 'inf' ? Infinity : parsed;
}

function cmdIngestVoc(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      'voc-root': { type: 'string' },
      split: { type: 'string' },
      out: { type: 'string' },
    },
  });
  const stats = ingestVoc(
    requireOption(values, 'voc-root'),
    requireOption(values, 'split'),
    requireOption(values, 'out'),
  );
  console.log(
    `ingested ${stats.images} images, ${stats.annotations} annotations` +
      (stats.skipped ? ` (${stats.skipped} files skipped)` : ''),
  );
  return 0;
}

function cmdIngestCoco(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: { json: { type: 'string' }, out: { type: 'string' } },
  });
  const stats = ingestCoco(requireOption(values, 'json'), requireOption(values, 'out'));
  console.log(`ingested ${stats.images} images, ${stats.annotations} annotations`);
  return 0;
}

function cmdPerturb(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      image: { type: 'string' },
      kind: { type: 'string' },
      param: { type: 'string' },
      out: { type: 'string' },
      seed: { type: 'string' },
      'theta-max': { type: 'string' },
      dataset: { type: 'string' },
      grid: { type: 'string' },
      'out-dir': { type: 'string' },
    },
  });
  const seed = numberOption(values, 'seed');
  const thetaMax = numberOption(values, 'theta-max') ?? 20;

  if (values.grid !== undefined) {
    if (values.grid !== 'default') throw new UsageError("only '--grid default' is supported");
    const datasetDir = requireOption(values, 'dataset');
    const outDir = requireOption(values, 'out-dir');
    const imagesPath = path.join(datasetDir, 'images.jsonl');
    const lines = fs
      .readFileSync(imagesPath, 'utf-8')
      .split('\n')
      .filter((line) => line.trim().length > 0);
    let jobs = 0;
    for (const line of lines) {
      const record = JSON.parse(line) as { id: string; file?: string };
      if (!record.file) throw new Error(`image ${record.id} has no raster file`);
      const source = path.isAbsolute(record.file)
        ? record.file
        : path.join(datasetDir, record.file);
      for (const spec of defaultGrid()) {
        if (spec.kind === 'saltpepper' && seed === undefined) {
          throw new UsageError('--seed is required when the grid includes saltpepper');
        }
        const extension = spec.kind === 'jpeg' && spec.param !== Infinity ? '.jpg' : '.ppm';
        const outputPath = path.join(outDir, specLabel(spec), `${record.id}${extension}`);
        perturb({
          sourcePath: source,
          spec,
          outputPath,
          seed: spec.kind === 'saltpepper' ? seed : undefined,
          thetaMax,
        });
        jobs += 1;
      }
    }
    console.log(`wrote ${jobs} perturbed variants under ${outDir}`);
    return 0;
  }

  const kind = requireOption(values, 'kind') as PerturbationKind;
  const param = numberOption(values, 'param');
  if (param === undefined) throw new UsageError('--param is required');
  const sidecar = perturb({
    sourcePath: requireOption(values, 'image'),
    spec: { kind, param },
    outputPath: requireOption(values, 'out'),
    seed,
    thetaMax,
  });
  console.log(
    `wrote ${values.out} (${sidecar.output.width}x${sidecar.output.height})`,
  );
  return 0;
}

function cmdToPpm(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      image: { type: 'string' },
      out: { type: 'string' },
      grayscale: { type: 'boolean', default: false },
    },
  });
  const image = readImage(requireOption(values, 'image'));
  const out = requireOption(values, 'out');
  atomicWrite(out, values.grayscale ? encodePgm(image) : encodePpm(image));
  console.log(`wrote ${out} (${image.width}x${image.height})`);
  return 0;
}

const COMMANDS: Record<string, (argv: string[]) => number> = {
  'ingest-voc': cmdIngestVoc,
  'ingest-coco': cmdIngestCoco,
  perturb: cmdPerturb,
  'to-ppm': cmdToPpm,
};

export function dispatch(argv: string[]): number {
  const [command, ...rest] = argv;
  if (!command || command === '--help' || command === '-h') {
    console.error('usage: propbench-data <ingest-voc|ingest-coco|perturb|to-ppm> [options]');
    return command ? 0 : 1;
  }
  const handler = COMMANDS[command];
  if (!handler) {
    console.error(`unknown command '${command}'`);
    return 1;
  }
  try {
    return handler(rest);
  } catch (err) {
    if (err instanceof UsageError || (err as { code?: string }).code === 'ERR_PARSE_ARGS_UNKNOWN_OPTION') {
      console.error(`usage error: ${(err as Error).message}`);
      return 1;
    }
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

if (require.main === module) {
  process.exit(dispatch(process.argv.slice(2)));
}
