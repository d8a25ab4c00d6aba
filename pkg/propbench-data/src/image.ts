/**
 * Minimal raster image model plus codecs: binary PPM/PGM natively, PNG via
 * pngjs, JPEG via jpeg-js. Pixels are interleaved 8-bit RGB.
 */

import * as fs from 'fs';
import * as path from 'path';
import * as jpeg from 'jpeg-js';
import { PNG } from 'pngjs';

export interface RasterImage {
  width: number;
  height: number;
  /** Interleaved RGB, length = width * height * 3. */
  data: Uint8Array;
}

export function createImage(width: number, height: number): RasterImage {
  return { width, height, data: new Uint8Array(width * height * 3) };
}

export function cloneImage(img: RasterImage): RasterImage {
  return { width: img.width, height: img.height, data: new Uint8Array(img.data) };
}

/** Integer BT.601 luma; exact identity on grey pixels (299+587+114=1000). */
export function luma(r: number, g: number, b: number): number {
  return Math.round((299 * r + 587 * g + 114 * b) / 1000);
}

export function decodeImage(buffer: Buffer, name: string): RasterImage {
  if (buffer.length >= 2 && buffer[0] === 0x50 && (buffer[1] === 0x35 || buffer[1] === 0x36)) {
    return decodePnm(buffer, name);
  }
  if (buffer.length >= 8 && buffer[0] === 0x89 && buffer[1] === 0x50) {
    const png = PNG.sync.read(buffer);
    const out = createImage(png.width, png.height);
    for (let i = 0, j = 0; i < png.width * png.height; i++, j += 4) {
      out.data[i * 3] = png.data[j];
      out.data[i * 3 + 1] = png.data[j + 1];
      out.data[i * 3 + 2] = png.data[j + 2];
    }
    return out;
  }
  if (buffer.length >= 2 && buffer[0] === 0xff && buffer[1] === 0xd8) {
    const decoded = jpeg.decode(buffer, { useTArray: true, formatAsRGBA: true });
    const out = createImage(decoded.width, decoded.height);
    for (let i = 0; i < decoded.width * decoded.height; i++) {
      out.data[i * 3] = decoded.data[i * 4];
      out.data[i * 3 + 1] = decoded.data[i * 4 + 1];
      out.data[i * 3 + 2] = decoded.data[i * 4 + 2];
    }
    return out;
  }
  throw new Error(`${name}: unsupported image format`);
}

export function readImage(filePath: string): RasterImage {
  return decodeImage(fs.readFileSync(filePath), filePath);
}

function decodePnm(buffer: Buffer, name: string): RasterImage {
  let pos = 0;
  const token = (): string => {
    while (pos < buffer.length) {
      const ch = buffer[pos];
      if (ch === 0x23) {
        while (pos < buffer.length && buffer[pos] !== 0x0a) pos++;
      } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
        pos++;
      } else {
        break;
      }
    }
    const start = pos;
    while (pos < buffer.length && !isSpace(buffer[pos])) pos++;
    if (start === pos) throw new Error(`${name}: truncated PNM header`);
    return buffer.subarray(start, pos).toString('ascii');
  };
  const isSpace = (ch: number) => ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d;
  const magic = token();
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (maxval !== 255) throw new Error(`${name}: only maxval 255 supported`);
  pos += 1; // single whitespace byte after maxval
  const out = createImage(width, height);
  if (magic === 'P6') {
    const need = width * height * 3;
    if (buffer.length - pos < need) throw new Error(`${name}: truncated pixel payload`);
    out.data.set(buffer.subarray(pos, pos + need));
  } else if (magic === 'P5') {
    const need = width * height;
    if (buffer.length - pos < need) throw new Error(`${name}: truncated pixel payload`);
    for (let i = 0; i < need; i++) {
      const v = buffer[pos + i];
      out.data[i * 3] = v;
      out.data[i * 3 + 1] = v;
      out.data[i * 3 + 2] = v;
    }
  } else {
    throw new Error(`${name}: unsupported PNM magic '${magic}'`);
  }
  return out;
}

export function encodePpm(img: RasterImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, 'ascii');
  return Buffer.concat([header, Buffer.from(img.data)]);
}

export function encodePgm(img: RasterImage): Buffer {
  const header = Buffer.from(`P5\n${img.width} ${img.height}\n255\n`, 'ascii');
  const grey = Buffer.alloc(img.width * img.height);
  for (let i = 0; i < grey.length; i++) {
    grey[i] = luma(img.data[i * 3], img.data[i * 3 + 1], img.data[i * 3 + 2]);
  }
  return Buffer.concat([header, grey]);
}

export function encodeJpeg(img: RasterImage, quality: number): Buffer {
  const rgba = Buffer.alloc(img.width * img.height * 4);
  for (let i = 0; i < img.width * img.height; i++) {
    rgba[i * 4] = img.data[i * 3];
    rgba[i * 4 + 1] = img.data[i * 3 + 1];
    rgba[i * 4 + 2] = img.data[i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
  return jpeg.encode({ data: rgba, width: img.width, height: img.height }, quality).data;
}

export function encodePng(img: RasterImage): Buffer {
  const png = new PNG({ width: img.width, height: img.height });
  for (let i = 0; i < img.width * img.height; i++) {
    png.data[i * 4] = img.data[i * 3];
    png.data[i * 4 + 1] = img.data[i * 3 + 1];
    png.data[i * 4 + 2] = img.data[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png);
}

/** Write via a temp file in the same directory, then rename into place. */
export function atomicWrite(filePath: string, payload: Buffer | string): void {
  fs.mkdirSync(path.dirname(path.resolve(filePath)), { recursive: true });
  const tmp = `${filePath}.tmp`;
  fs.writeFileSync(tmp, payload);
  fs.renameSync(tmp, filePath);
}
