/**
 * Canonical cell-directory writer: meta.json plus a long-format cycles.csv
 * (cycle_index,time_s,voltage_v,current_a,capacity_ah). Output is fully
 * deterministic — stable key order, LF line endings, shortest-roundtrip
 * number formatting — so re-running a conversion is byte-identical.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import * as path from "node:path";

import { CleanedCell } from "./raw.js";

export const CSV_HEADER = "cycle_index,time_s,voltage_v,current_a,capacity_ah";

/** Shortest decimal text that parses back to the same double. */
export function fmt(x: number): string {
  return String(x);
}

export function canonicalMeta(cellId: string, nominalCapacityAh: number, dataset: string, protocol: string): string {
  const meta = {
    cell_id: cellId,
    nominal_capacity_ah: nominalCapacityAh,
    dataset,
    protocol,
  };
  return JSON.stringify(meta, null, 2) + "\n";
}

export function canonicalCsv(cleaned: CleanedCell): string {
  const lines: string[] = [CSV_HEADER];
  cleaned.kept.forEach((cycle, k) => {
    const idx = k + 1; // renumbered: loader requires contiguous 1-based indices
    for (let i = 0; i < cycle.time_s.length; i++) {
      lines.push(
        `${idx},${fmt(cycle.time_s[i])},${fmt(cycle.voltage_v[i])},` +
          `${fmt(cycle.current_a[i])},${fmt(cycle.capacity_ah[i])}`,
      );
    }
  });
  return lines.join("\n") + "\n";
}

/** Write one canonical cell directory; returns its path. */
export function writeCellDir(outRoot: string, cleaned: CleanedCell, dataset: string): string {
  const dir = path.join(outRoot, cleaned.cell.cell_id);
  mkdirSync(dir, { recursive: true });
  const protocol = cleaned.cell.protocol ?? "unknown";
  writeFileSync(path.join(dir, "meta.json"), canonicalMeta(cleaned.cell.cell_id, cleaned.cell.nominal_capacity_ah, dataset, protocol));
  writeFileSync(path.join(dir, "cycles.csv"), canonicalCsv(cleaned));
  return dir;
}
