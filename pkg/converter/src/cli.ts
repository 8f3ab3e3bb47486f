/**
 * convert --in <dir> --out <dir> --labels <file>
 *         [--fs 200] [--experiment N] [--subject N]
 *         [--key-pattern REGEX] [--channels FILE]
 *
 * Converts every .mat file under --in into per-clip .e4dr exchange files.
 * Missing clip variables are reported and skipped; a wrong channel count
 * aborts. Exit codes: 0 ok, 1 usage error, 2 data error.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";

import { ConvertOptions, DEFAULT_KEY_PATTERN, convertFile } from "./convert.js";
import { parseLabelTable } from "./labels.js";

function usageError(message: string): never {
  process.stderr.write(`error: ${message}\n`);
  process.exit(1);
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        in: { type: "string" },
        out: { type: "string" },
        labels: { type: "string" },
        fs: { type: "string", default: "200" },
        subject: { type: "string" },
        experiment: { type: "string", default: "0" },
        "key-pattern": { type: "string" },
        channels: { type: "string" },
      },
      allowPositionals: false,
    });
  } catch (err) {
    usageError((err as Error).message);
  }
  const values = parsed.values;
  if (!values.in || !values.out || !values.labels) {
    usageError("--in, --out and --labels are required");
  }

  let labels: number[];
  let rowChannels: string[] | undefined;
  try {
    labels = parseLabelTable(fs.readFileSync(values.labels, "utf8"));
    if (values.channels) {
      rowChannels = fs.readFileSync(values.channels, "utf8")
        .split(/\r?\n/)
        .map((l) => l.split("#", 1)[0].trim())
        .filter((l) => l.length > 0);
    }
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 2;
  }

  const opts: ConvertOptions = {
    fs: parseInt(values.fs!, 10),
    subject: values.subject === undefined ? undefined
      : parseInt(values.subject, 10),
    experiment: parseInt(values.experiment!, 10),
    keyPattern: values["key-pattern"]
      ? new RegExp(values["key-pattern"]) : DEFAULT_KEY_PATTERN,
    rowChannels,
  };

  const matFiles = fs.readdirSync(values.in)
    .filter((f) => f.toLowerCase().endsWith(".mat"))
    .sort();
  if (matFiles.length === 0) {
    process.stderr.write(`warning: no .mat files under ${values.in}\n`);
    return 0;
  }
  fs.mkdirSync(values.out, { recursive: true });

  let written = 0;
  let failed = 0;
  for (const f of matFiles) {
    try {
      const res = convertFile(path.join(values.in, f), labels, values.out,
        opts);
      written += res.written.length;
      failed += res.errors.length;
      for (const e of res.errors) process.stderr.write(`error: ${e}\n`);
    } catch (err) {
      failed += 1;
      process.stderr.write(`error: ${f}: ${(err as Error).message}\n`);
    }
  }
  process.stdout.write(
    `convert: wrote ${written} exchange files from ${matFiles.length} ` +
    `recordings (${failed} errors)\n`,
  );
  return failed > 0 ? 2 : 0;
}

if (process.argv[1] && /cli\.(ts|js)$/.test(process.argv[1])) {
  process.exit(main(process.argv.slice(2)));
}
