/**
 * Whole-archive conversion: verify checksums, parse and clean every cell,
 * write canonical directories grouped by split, and emit a deterministic
 * conversion_report.json.
 */

import { readdirSync, writeFileSync, mkdirSync } from "node:fs";
import * as path from "node:path";

import { loadManifest, readVerified } from "./checksum.js";
import { writeCellDir } from "./canonical.js";
import { cleanCell, parseRawCell } from "./raw.js";
import {
  CellReport,
  ConversionError,
  ConversionReport,
  EXPECTED_SPLITS,
  RawSourceSpec,
  SplitName,
} from "./types.js";

// The raw exports carry a per-sample cumulative discharge-capacity series;
// it maps directly onto the canonical capacity channel. Noted in the report
// because the upstream documentation leaves the choice open.
const CAPACITY_MAPPING: Record<string, string> = {
  tri: "per-sample cumulative discharge capacity (Qd) -> capacity_ah",
  lhp: "per-sample cumulative discharge capacity -> capacity_ah",
};

const SPLITS: SplitName[] = ["train", "primary_test", "secondary_test"];

export function validateSpec(spec: RawSourceSpec): Map<string, SplitName> {
  if (spec.dataset !== "tri" && spec.dataset !== "lhp") {
    throw new ConversionError(`unknown dataset '${(spec as any).dataset}'`);
  }
  const assignment = new Map<string, SplitName>();
  for (const split of SPLITS) {
    for (const id of spec.split[split] ?? []) {
      if (assignment.has(id)) {
        throw new ConversionError(`cell '${id}' assigned to both ${assignment.get(id)} and ${split}`);
      }
      assignment.set(id, split);
    }
  }
  const expected = EXPECTED_SPLITS[spec.dataset];
  for (const split of SPLITS) {
    const got = (spec.split[split] ?? []).length;
    if (got !== expected[split]) {
      throw new ConversionError(
        `${spec.dataset}: ${split} split has ${got} cells, expected ${expected[split]}`,
      );
    }
  }
  return assignment;
}

export function convert(spec: RawSourceSpec, outDir: string): ConversionReport {
  const assignment = validateSpec(spec);
  const manifest = loadManifest(spec.root);
  const cellsDir = path.join(spec.root, "cells");
  const files = readdirSync(cellsDir)
    .filter((f) => f.endsWith(".json"))
    .sort();
  if (files.length === 0) {
    throw new ConversionError(`${cellsDir}: no raw cell files`);
  }

  mkdirSync(outDir, { recursive: true });
  const cellReports: CellReport[] = [];
  const skipped: { cell_id: string; reason: string }[] = [];
  const seen = new Set<string>();

  for (const file of files) {
    const rel = path.join("cells", file);
    const data = readVerified(spec.root, rel, manifest);
    let cell;
    try {
      cell = parseRawCell(data, rel);
    } catch (err) {
      if (err instanceof ConversionError) {
        // unparseable cell: skip and report rather than abort the archive
        skipped.push({ cell_id: file.replace(/\.json$/, ""), reason: err.message });
        continue;
      }
      throw err;
    }
    const split = assignment.get(cell.cell_id);
    if (split === undefined) {
      throw new ConversionError(`${rel}: cell '${cell.cell_id}' is not in the split assignment`);
    }
    if (seen.has(cell.cell_id)) {
      throw new ConversionError(`${rel}: duplicate cell_id '${cell.cell_id}'`);
    }
    seen.add(cell.cell_id);
    let cleaned;
    try {
      cleaned = cleanCell(cell, rel);
    } catch (err) {
      if (err instanceof ConversionError) {
        skipped.push({ cell_id: cell.cell_id, reason: err.message });
        continue;
      }
      throw err;
    }
    const dir = writeCellDir(path.join(outDir, split), cleaned, spec.dataset);
    cellReports.push({
      cell_id: cell.cell_id,
      split,
      cycles_written: cleaned.kept.length,
      dropped: cleaned.dropped,
      out_dir: path.relative(outDir, dir),
    });
  }

  for (const id of assignment.keys()) {
    if (!seen.has(id) && !skipped.some((s) => s.cell_id === id)) {
      throw new ConversionError(`split assignment names '${id}' but no raw file provided it`);
    }
  }

  cellReports.sort((a, b) => a.cell_id.localeCompare(b.cell_id));
  const counts = { train: 0, primary_test: 0, secondary_test: 0 } as Record<SplitName, number>;
  let written = 0;
  let dropped = 0;
  for (const c of cellReports) {
    counts[c.split] += 1;
    written += c.cycles_written;
    dropped += c.dropped.length;
  }

  const report: ConversionReport = {
    dataset: spec.dataset,
    capacity_mapping: CAPACITY_MAPPING[spec.dataset],
    cells: cellReports,
    counts,
    total_cycles_written: written,
    total_cycles_dropped: dropped,
    skipped_cells: skipped,
  };
  writeFileSync(path.join(outDir, "conversion_report.json"), JSON.stringify(report, null, 2) + "\n");
  return report;
}
