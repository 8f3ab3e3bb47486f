/**
 * Test-side helpers: a minimal MAT level-5 writer for fixtures and an
 * exchange-format reader kept independent of src/exchange.ts so
 * round-trip checks cannot share bugs with the writer under test.
 */

import * as zlib from "node:zlib";

export interface FixtureVar {
  name: string;
  rows: number;
  cols: number;
  /** column-major float64 values */
  data: Float64Array;
  compressed?: boolean;
}

function element(type: number, payload: Buffer): Buffer {
  const pad = (8 - (payload.length % 8)) % 8;
  const out = Buffer.alloc(8 + payload.length + pad);
  out.writeUInt32LE(type, 0);
  out.writeUInt32LE(payload.length, 4);
  payload.copy(out, 8);
  return out;
}

function matrixElement(v: FixtureVar): Buffer {
  const flags = Buffer.alloc(8);
  flags.writeUInt32LE(6, 0);                     // mxDOUBLE_CLASS
  const dims = Buffer.alloc(8);
  dims.writeInt32LE(v.rows, 0);
  dims.writeInt32LE(v.cols, 4);
  const name = Buffer.from(v.name, "utf8");
  const data = Buffer.alloc(8 * v.data.length);
  for (let i = 0; i < v.data.length; i++) data.writeDoubleLE(v.data[i], 8 * i);

  const body = Buffer.concat([
    element(6, flags),                           // miUINT32 array flags
    element(5, dims),                            // miINT32 dimensions
    element(1, name),                            // miINT8 name
    element(9, data),                            // miDOUBLE real part
  ]);
  return element(14, body);                      // miMATRIX
}

export function writeMatBuffer(vars: FixtureVar[]): Buffer {
  const header = Buffer.alloc(128, 0x20);
  header.write("MATLAB 5.0 MAT-file, synthetic fixture", 0, "latin1");
  header.fill(0, 116, 124);                      // subsystem offset
  header.writeUInt16LE(0x0100, 124);             // version
  header.write("IM", 126, "latin1");             // little-endian marker

  const parts: Buffer[] = [header];
  for (const v of vars) {
    const el = matrixElement(v);
    if (v.compressed) {
      const deflated = zlib.deflateSync(el);
      const pad = (8 - ((8 + deflated.length) % 8)) % 8;
      const wrapped = Buffer.alloc(8 + deflated.length + pad);
      wrapped.writeUInt32LE(15, 0);              // miCOMPRESSED
      wrapped.writeUInt32LE(deflated.length, 4);
      deflated.copy(wrapped, 8);
      parts.push(wrapped);
    } else {
      parts.push(el);
    }
  }
  return Buffer.concat(parts);
}

/** deterministic pseudo-random clip, column-major [rows x cols] */
export function fixtureClip(rows: number, cols: number, seed: number): Float64Array {
  const out = new Float64Array(rows * cols);
  let state = BigInt(seed * 2654435761 + 1);
  for (let i = 0; i < out.length; i++) {
    state = (state * 6364136223846793005n + 1442695040888963407n) & 0xffffffffffffffffn;
    out[i] = Number(state >> 11n) / Number(1n << 53n) * 40.0 - 20.0;
  }
  return out;
}

export interface DecodedExchange {
  fs: number;
  channels: string[];
  label: number;
  subject: number;
  experiment: number;
  nSamples: number;
  /** row-major float32 payload */
  payload: Float32Array;
}

/** independent .e4dr parser (mirrors the documented format, not the writer) */
export function readExchange(buf: Buffer): DecodedExchange {
  if (buf.toString("latin1", 0, 4) !== "E4DR") throw new Error("bad magic");
  if (buf.readUInt32LE(4) !== 1) throw new Error("bad version");
  const fsHz = buf.readUInt32LE(8);
  const c = buf.readUInt32LE(12);
  const n = buf.readUInt32LE(16);
  const label = buf.readUInt32LE(20);
  const subject = buf.readUInt32LE(24);
  const experiment = buf.readUInt32LE(28);
  let off = 32;
  const channels: string[] = [];
  for (let i = 0; i < c; i++) {
    const len = buf.readUInt16LE(off);
    channels.push(buf.toString("utf8", off + 2, off + 2 + len));
    off += 2 + len;
  }
  if (buf.length !== off + 4 * c * n) throw new Error("size mismatch");
  const payload = new Float32Array(c * n);
  for (let i = 0; i < c * n; i++) payload[i] = buf.readFloatLE(off + 4 * i);
  return { fs: fsHz, channels, label, subject, experiment, nSamples: n, payload };
}
