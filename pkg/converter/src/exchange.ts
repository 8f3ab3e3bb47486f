/**
 * Writer for the .e4dr raw-recording exchange format (little-endian):
 *
 *   magic "E4DR" | u32 version=1 | u32 fs | u32 channel_count
 *   | u32 n_samples | u32 label | u32 subject | u32 experiment
 *   | per channel: u16 name_len + UTF-8 name
 *   | payload: channel_count * n_samples float32, channel-major
 */

export interface ExchangeRecording {
  fs: number;
  channels: string[];
  label: number;
  subject: number;
  experiment: number;
  nSamples: number;
  /** row-major [channel][sample], length channels.length * nSamples */
  data: Float64Array;
}

export function encodeExchange(rec: ExchangeRecording): Buffer {
  const c = rec.channels.length;
  const n = rec.nSamples;
  if (rec.data.length !== c * n) {
    throw new Error(`payload has ${rec.data.length} values, expected ${c * n}`);
  }
  const nameBufs = rec.channels.map((name) => Buffer.from(name, "utf8"));
  const tableSize = nameBufs.reduce((acc, b) => acc + 2 + b.length, 0);
  const buf = Buffer.alloc(32 + tableSize + 4 * c * n);

  buf.write("E4DR", 0, "latin1");
  buf.writeUInt32LE(1, 4);
  buf.writeUInt32LE(rec.fs, 8);
  buf.writeUInt32LE(c, 12);
  buf.writeUInt32LE(n, 16);
  buf.writeUInt32LE(rec.label, 20);
  buf.writeUInt32LE(rec.subject, 24);
  buf.writeUInt32LE(rec.experiment, 28);

  let off = 32;
  for (const nb of nameBufs) {
    buf.writeUInt16LE(nb.length, off);
    nb.copy(buf, off + 2);
    off += 2 + nb.length;
  }
  for (let i = 0; i < c * n; i++) {
    buf.writeFloatLE(Math.fround(rec.data[i]), off + 4 * i);
  }
  return buf;
}
