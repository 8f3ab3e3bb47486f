/**
 * Minimal MAT-file (level 5) reader: enough to pull named 2-D numeric
 * matrices out of experiment recordings. Handles little-endian files,
 * plain and zlib-compressed elements, double and single precision data,
 * and both the full and the small element tag formats.
 */

import * as zlib from "node:zlib";

export const MI_INT8 = 1;
export const MI_INT32 = 5;
export const MI_UINT32 = 6;
export const MI_SINGLE = 7;
export const MI_DOUBLE = 9;
export const MI_MATRIX = 14;
export const MI_COMPRESSED = 15;

const MX_DOUBLE_CLASS = 6;
const MX_SINGLE_CLASS = 7;

export interface MatArray {
  name: string;
  dims: number[];
  /** column-major, as stored in the file */
  data: Float64Array;
}

interface Tag {
  type: number;
  size: number;
  dataStart: number;
  next: number;
}

function readTag(buf: Buffer, off: number): Tag {
  const first = buf.readUInt32LE(off);
  const smallSize = first >>> 16;
  if (smallSize !== 0) {
    // small data element: size and type packed into one word, 4 data bytes
    return { type: first & 0xffff, size: smallSize, dataStart: off + 4, next: off + 8 };
  }
  const size = buf.readUInt32LE(off + 4);
  const dataStart = off + 8;
  let next = dataStart + size;
  if ((next % 8) !== 0) next += 8 - (next % 8);
  return { type: first, size, dataStart, next };
}

function parseNumeric(buf: Buffer, tag: Tag): Float64Array {
  const n = tag.size;
  if (tag.type === MI_DOUBLE) {
    const out = new Float64Array(n / 8);
    for (let i = 0; i < out.length; i++) {
      out[i] = buf.readDoubleLE(tag.dataStart + 8 * i);
    }
    return out;
  }
  if (tag.type === MI_SINGLE) {
    const out = new Float64Array(n / 4);
    for (let i = 0; i < out.length; i++) {
      out[i] = buf.readFloatLE(tag.dataStart + 4 * i);
    }
    return out;
  }
  throw new Error(`unsupported numeric storage type ${tag.type}`);
}

function parseMatrix(buf: Buffer, start: number, size: number): MatArray {
  const end = start + size;
  let off = start;

  const flagsTag = readTag(buf, off);
  if (flagsTag.type !== MI_UINT32) {
    throw new Error("matrix element missing array-flags subelement");
  }
  const classId = buf.readUInt32LE(flagsTag.dataStart) & 0xff;
  off = flagsTag.next;

  const dimsTag = readTag(buf, off);
  if (dimsTag.type !== MI_INT32) {
    throw new Error("matrix element missing dimensions subelement");
  }
  const dims: number[] = [];
  for (let i = 0; i < dimsTag.size / 4; i++) {
    dims.push(buf.readInt32LE(dimsTag.dataStart + 4 * i));
  }
  off = dimsTag.next;

  const nameTag = readTag(buf, off);
  if (nameTag.type !== MI_INT8) {
    throw new Error("matrix element missing name subelement");
  }
  const name = buf.toString("utf8", nameTag.dataStart, nameTag.dataStart + nameTag.size);
  off = nameTag.next;

  if (classId !== MX_DOUBLE_CLASS && classId !== MX_SINGLE_CLASS) {
    throw new Error(`variable ${name}: unsupported array class ${classId}`);
  }
  if (off >= end) throw new Error(`variable ${name}: no data subelement`);
  const dataTag = readTag(buf, off);
  const data = parseNumeric(buf, dataTag);
  const count = dims.reduce((a, b) => a * b, 1);
  if (data.length !== count) {
    throw new Error(
      `variable ${name}: ${data.length} values for dims [${dims.join("x")}]`,
    );
  }
  return { name, dims, data };
}

/** All named numeric matrices in the file, keyed by variable name. */
export function readMat(buf: Buffer): Map<string, MatArray> {
  if (buf.length < 128) throw new Error("file too short for a MAT header");
  const endian = buf.toString("latin1", 126, 128);
  if (endian !== "IM") {
    throw new Error("not a little-endian level-5 MAT file");
  }
  const version = buf.readUInt16LE(124);
  if (version !== 0x0100) {
    throw new Error(`unsupported MAT version 0x${version.toString(16)}`);
  }

  const out = new Map<string, MatArray>();
  let off = 128;
  while (off + 8 <= buf.length) {
    const tag = readTag(buf, off);
    if (tag.type === MI_COMPRESSED) {
      const inflated = zlib.inflateSync(
        buf.subarray(tag.dataStart, tag.dataStart + tag.size),
      );
      const inner = readTag(inflated, 0);
      if (inner.type === MI_MATRIX) {
        const arr = parseMatrix(inflated, inner.dataStart, inner.size);
        out.set(arr.name, arr);
      }
      off = tag.dataStart + tag.size;          // compressed data is unpadded
      if ((off % 8) !== 0) off += 8 - (off % 8);
    } else {
      if (tag.type === MI_MATRIX) {
        const arr = parseMatrix(buf, tag.dataStart, tag.size);
        out.set(arr.name, arr);
      }
      off = tag.next;
    }
  }
  return out;
}
