#!/usr/bin/env node
/**
 * cell-convert --spec <spec.json> --out <dir>
 *
 * The spec file is a RawSourceSpec: dataset name, raw archive root, and the
 * train / primary_test / secondary_test cell-id lists.
 */

import { readFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { convert } from "./convert.js";
import { ConversionError, RawSourceSpec } from "./types.js";

export function runCli(argv: string[]): number {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        spec: { type: "string" },
        out: { type: "string" },
      },
      strict: true,
    }));
  } catch (err) {
    process.stderr.write(`usage error: ${(err as Error).message}\n`);
    return 1;
  }
  if (!values.spec || !values.out) {
    process.stderr.write("usage error: --spec and --out are required\n");
    return 1;
  }
  try {
    const spec = JSON.parse(readFileSync(values.spec, "utf-8")) as RawSourceSpec;
    const report = convert(spec, values.out);
    process.stdout.write(
      `converted ${report.cells.length} cells ` +
        `(train=${report.counts.train}, primary_test=${report.counts.primary_test}, ` +
        `secondary_test=${report.counts.secondary_test}); ` +
        `${report.total_cycles_written} cycles written, ` +
        `${report.total_cycles_dropped} dropped, ` +
        `${report.skipped_cells.length} cells skipped\n`,
    );
    return 0;
  } catch (err) {
    if (err instanceof ConversionError || (err as NodeJS.ErrnoException).code === "ENOENT") {
      process.stderr.write(`data error: ${(err as Error).message}\n`);
      return 2;
    }
    throw err;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(runCli(process.argv.slice(2)));
}
