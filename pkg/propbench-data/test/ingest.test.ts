import assert from 'node:assert/strict';
import { spawnSync } from 'node:child_process';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { test } from 'node:test';
import { ingestCoco } from '../src/coco';
import { ingestVoc, parseVocAnnotation } from '../src/voc';

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), 'pbdata-ingest-'));
}

const VOC_XML = `<annotation>
  <filename>000001.jpg</filename>
  <size><width>353</width><height>500</height><depth>3</depth></size>
  <object>
    <name>dog</name>
    <difficult>0</difficult>
    <bndbox><xmin>1</xmin><ymin>1</ymin><xmax>10</xmax><ymax>10</ymax></bndbox>
  </object>
  <object>
    <name>person</name>
    <difficult>1</difficult>
    <bndbox><xmin>8</xmin><ymin>12</ymin><xmax>352</xmax><ymax>498</ymax></bndbox>
  </object>
</annotation>`;

function writeVocTree(root: string, ids: string[], xmlById: Record<string, string>): void {
  fs.mkdirSync(path.join(root, 'Annotations'), { recursive: true });
  fs.mkdirSync(path.join(root, 'ImageSets', 'Main'), { recursive: true });
  fs.writeFileSync(path.join(root, 'ImageSets', 'Main', 'test.txt'), ids.join('\n') + '\n');
  for (const [id, xml] of Object.entries(xmlById)) {
    fs.writeFileSync(path.join(root, 'Annotations', `${id}.xml`), xml);
  }
}

function readLines(p: string): Array<Record<string, unknown>> {
  const text = fs.readFileSync(p, 'utf-8');
  return text
    .split('\n')
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line));
}

test('VOC corners are 1-indexed inclusive: (1,1,10,10) becomes (0,0,10,10)', () => {
  const parsed = parseVocAnnotation(VOC_XML, '000001', 'fixture');
  assert.deepEqual(parsed.annotations[0].box, [0, 0, 10, 10]);
  assert.equal(parsed.annotations[0].class, 'dog');
  assert.equal(parsed.annotations[0].difficult, false);
  assert.equal(parsed.annotations[1].difficult, true);
  assert.equal(parsed.image.width, 353);
  assert.equal(parsed.image.height, 500);
});

test('VOC ingestion writes manifests for a split', () => {
  const root = tmpdir();
  const out = path.join(root, 'dataset');
  writeVocTree(root, ['000001'], { '000001': VOC_XML });
  const stats = ingestVoc(root, 'test', out, () => {});
  assert.deepEqual(stats, { images: 1, annotations: 2, skipped: 0 });
  const images = readLines(path.join(out, 'images.jsonl'));
  assert.equal(images[0].id, '000001');
  const anns = readLines(path.join(out, 'annotations.jsonl'));
  assert.deepEqual(anns[0].box, [0, 0, 10, 10]);
  assert.equal(anns[1].difficult, true);
  assert.equal(anns[0].crowd, false);
});

test('VOC ingestion: empty split yields empty manifests', () => {
  const root = tmpdir();
  const out = path.join(root, 'dataset');
  writeVocTree(root, [], {});
  const stats = ingestVoc(root, 'test', out, () => {});
  assert.deepEqual(stats, { images: 0, annotations: 0, skipped: 0 });
  assert.equal(fs.readFileSync(path.join(out, 'images.jsonl'), 'utf-8'), '');
});

test('VOC ingestion skips malformed files with a warning and a count', () => {
  const root = tmpdir();
  const out = path.join(root, 'dataset');
  writeVocTree(root, ['good', 'bad'], {
    good: VOC_XML,
    bad: '<annotation><object><name>x</name></object></annotation>',
  });
  const warnings: string[] = [];
  const stats = ingestVoc(root, 'test', out, (m) => warnings.push(m));
  assert.equal(stats.images, 1);
  assert.equal(stats.skipped, 1);
  assert.equal(warnings.length, 1);
  assert.match(warnings[0], /bad\.xml/);
});

test('VOC ingestion: missing split file is an error', () => {
  const root = tmpdir();
  assert.throws(() => ingestVoc(root, 'nope', path.join(root, 'out'), () => {}));
});

const COCO_DOC = {
  images: [
    { id: 17, file_name: 'a.jpg', width: 640, height: 480 },
    { id: 23, file_name: 'b.jpg', width: 320, height: 240 },
  ],
  annotations: [
    { image_id: 17, category_id: 1, bbox: [10, 20, 30, 40], iscrowd: 0 },
    { image_id: 17, category_id: 2, bbox: [0, 0, 100, 90], iscrowd: 1 },
    { image_id: 23, category_id: 1, bbox: [5, 5, 10, 10] },
  ],
  categories: [
    { id: 1, name: 'person' },
    { id: 2, name: 'crowd-of-people' },
  ],
};

test('COCO ingestion preserves crowd flags and category names', () => {
  const root = tmpdir();
  const jsonPath = path.join(root, 'coco.json');
  fs.writeFileSync(jsonPath, JSON.stringify(COCO_DOC));
  const out = path.join(root, 'dataset');
  const stats = ingestCoco(jsonPath, out);
  assert.deepEqual(stats, { images: 2, annotations: 3, skipped: 0 });
  const anns = readLines(path.join(out, 'annotations.jsonl'));
  assert.equal(anns[0].crowd, false);
  assert.equal(anns[1].crowd, true);
  assert.equal(anns[1].class, 'crowd-of-people');
  assert.deepEqual(anns[0].box, [10, 20, 30, 40]);
  const images = readLines(path.join(out, 'images.jsonl'));
  assert.deepEqual(
    images.map((img) => img.id),
    ['17', '23'],
  );
});

test('COCO ingestion: empty annotation list gives an empty file', () => {
  const root = tmpdir();
  const jsonPath = path.join(root, 'coco.json');
  fs.writeFileSync(
    jsonPath,
    JSON.stringify({ images: [], annotations: [], categories: [] }),
  );
  const out = path.join(root, 'dataset');
  ingestCoco(jsonPath, out);
  assert.equal(fs.readFileSync(path.join(out, 'annotations.jsonl'), 'utf-8'), '');
});

test('COCO ingestion rejects schema violations', () => {
  const root = tmpdir();
  const jsonPath = path.join(root, 'coco.json');
  fs.writeFileSync(jsonPath, JSON.stringify({ images: [] }));
  assert.throws(() => ingestCoco(jsonPath, path.join(root, 'out')));
  fs.writeFileSync(
    jsonPath,
    JSON.stringify({
      images: [{ id: 1, width: 10, height: 10 }],
      annotations: [{ image_id: 1, category_id: 99, bbox: [0, 0, 5, 5] }],
      categories: [],
    }),
  );
  assert.throws(() => ingestCoco(jsonPath, path.join(root, 'out2')), /unknown category/);
});

test('rotation sidecar crop equals the benchmark inscribed crop within 1e-6 px', (t) => {
  const probe = spawnSync('python3', ['-c', 'import propbench'], {
    env: { ...process.env, PYTHONPATH: path.resolve(__dirname, '..', '..', '..', 'src') },
  });
  if (probe.status !== 0) {
    t.skip('python3 with the benchmark package is not available');
    return;
  }
  const script =
    'import json, sys\n' +
    'from propbench import inscribed_crop\n' +
    'c = inscribed_crop(int(sys.argv[1]), int(sys.argv[2]), float(sys.argv[3]))\n' +
    'print(json.dumps([c.x, c.y, c.w, c.h]))\n';
  for (const [w, h] of [
    [640, 480],
    [353, 500],
    [97, 61],
  ] as Array<[number, number]>) {
    const result = spawnSync('python3', ['-c', script, String(w), String(h), '20'], {
      env: { ...process.env, PYTHONPATH: path.resolve(__dirname, '..', '..', '..', 'src') },
    });
    assert.equal(result.status, 0, String(result.stderr));
    const remote = JSON.parse(String(result.stdout)) as number[];
    const local = require('../src/geometry').inscribedCrop(w, h, 20);
    const localArr = [local.x, local.y, local.w, local.h];
    for (let i = 0; i < 4; i++) {
      assert.ok(
        Math.abs(remote[i] - localArr[i]) < 1e-6,
        `crop component ${i} for ${w}x${h}: ${remote[i]} vs ${localArr[i]}`,
      );
    }
  }
});

test('crowd annotations are excluded by the benchmark recall command', (t) => {
  // Integration against the Python benchmark CLI: a dataset with one normal
  // annotation (covered by a proposal) and one crowd annotation (covered by
  // nothing) must still score AR = 1, because crowd regions are excluded.
  const probe = spawnSync('python3', ['-c', 'import propbench'], {
    env: { ...process.env, PYTHONPATH: path.resolve(__dirname, '..', '..', '..', 'src') },
  });
  if (probe.status !== 0) {
    t.skip('python3 with the benchmark package is not available');
    return;
  }
  const root = tmpdir();
  const jsonPath = path.join(root, 'coco.json');
  fs.writeFileSync(
    jsonPath,
    JSON.stringify({
      images: [{ id: 1, file_name: 'a.jpg', width: 100, height: 100 }],
      annotations: [
        { image_id: 1, category_id: 1, bbox: [10, 10, 20, 20], iscrowd: 0 },
        { image_id: 1, category_id: 1, bbox: [0, 0, 90, 90], iscrowd: 1 },
      ],
      categories: [{ id: 1, name: 'person' }],
    }),
  );
  const dataset = path.join(root, 'dataset');
  ingestCoco(jsonPath, dataset);
  const proposals = path.join(root, 'proposals.jsonl');
  fs.writeFileSync(
    proposals,
    JSON.stringify({ image_id: '1', boxes: [[10, 10, 20, 20]], sorted: false }) + '\n',
  );
  const result = spawnSync(
    'python3',
    [
      '-m',
      'propbench',
      'recall',
      '--dataset',
      dataset,
      '--proposals',
      proposals,
      '--out',
      path.join(root, 'recall.csv'),
    ],
    { env: { ...process.env, PYTHONPATH: path.resolve(__dirname, '..', '..', '..', 'src') } },
  );
  assert.equal(result.status, 0, String(result.stderr));
  assert.match(String(result.stdout), /AR=1\.000000/);
});
