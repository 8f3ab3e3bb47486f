/**
 * One-shot conversion of MAT-format per-experiment recordings into one
 * .e4dr exchange file per clip. Sample values pass through untouched
 * except for the float32 cast the exchange payload requires.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { CANONICAL_CHANNELS } from "./channels.js";
import { encodeExchange } from "./exchange.js";
import { MatArray, readMat } from "./mat.js";

export interface ConvertOptions {
  fs: number;
  subject?: number;
  experiment: number;
  /** regex over variable names; capture group 1 is the 1-based clip index */
  keyPattern: RegExp;
  /** channel names in the MAT's row order; defaults to the canonical order */
  rowChannels?: string[];
}

export interface ConvertResult {
  written: string[];
  errors: string[];
}

export const DEFAULT_KEY_PATTERN = /_eeg(\d+)$/;

export function defaultSubjectFromFilename(name: string): number {
  const m = /^(\d+)/.exec(path.basename(name));
  return m ? parseInt(m[1], 10) : 0;
}

function rowPermutation(rowChannels: string[]): number[] {
  if (rowChannels.length !== CANONICAL_CHANNELS.length) {
    throw new Error(
      `channel file lists ${rowChannels.length} names, expected ` +
      `${CANONICAL_CHANNELS.length}`,
    );
  }
  return CANONICAL_CHANNELS.map((name) => {
    const row = rowChannels.indexOf(name);
    if (row < 0) throw new Error(`channel file is missing ${name}`);
    return row;
  });
}

/** column-major MAT matrix [c x n] -> row-major payload in canonical order */
export function clipPayload(arr: MatArray, perm: number[]): Float64Array {
  const [c, n] = arr.dims;
  const out = new Float64Array(c * n);
  for (let ch = 0; ch < c; ch++) {
    const src = perm[ch];
    for (let t = 0; t < n; t++) {
      out[ch * n + t] = arr.data[t * c + src];
    }
  }
  return out;
}

export function convertFile(
  matPath: string,
  labels: number[],
  outDir: string,
  opts: ConvertOptions,
): ConvertResult {
  const vars = readMat(fs.readFileSync(matPath));
  const clips = new Map<number, MatArray>();
  for (const [name, arr] of vars) {
    const m = opts.keyPattern.exec(name);
    if (m) clips.set(parseInt(m[1], 10), arr);
  }

  const stem = path.basename(matPath).replace(/\.mat$/i, "");
  const subject = opts.subject ?? defaultSubjectFromFilename(matPath);
  const perm = rowPermutation(opts.rowChannels ?? [...CANONICAL_CHANNELS]);

  const result: ConvertResult = { written: [], errors: [] };
  for (let idx = 1; idx <= labels.length; idx++) {
    const arr = clips.get(idx);
    if (!arr) {
      result.errors.push(`${stem}: no variable matches clip ${idx}`);
      continue;
    }
    if (arr.dims.length !== 2 || arr.dims[0] !== CANONICAL_CHANNELS.length) {
      // wrong electrode count is unrecoverable for the whole recording
      throw new Error(
        `${stem}: variable ${arr.name} has shape [${arr.dims.join("x")}], ` +
        `expected [${CANONICAL_CHANNELS.length} x n]`,
      );
    }
    const outPath = path.join(
      outDir, `${stem}_clip${String(idx).padStart(2, "0")}.e4dr`,
    );
    fs.writeFileSync(outPath, encodeExchange({
      fs: opts.fs,
      channels: [...CANONICAL_CHANNELS],
      label: labels[idx - 1],
      subject,
      experiment: opts.experiment,
      nSamples: arr.dims[1],
      data: clipPayload(arr, perm),
    }));
    result.written.push(outPath);
  }
  return result;
}
