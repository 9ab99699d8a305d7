import { mkdirSync, mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";

import { sha256Hex } from "../src/checksum.js";
import { RawCell, RawCycle, RawSourceSpec, DatasetName } from "../src/types.js";

export function tempDir(prefix: string): string {
  return mkdtempSync(path.join(tmpdir(), prefix));
}

export function makeCycle(nSamples: number, offset = 0): RawCycle {
  const time_s: number[] = [];
  const voltage_v: number[] = [];
  const current_a: number[] = [];
  const capacity_ah: number[] = [];
  for (let i = 0; i < nSamples; i++) {
    time_s.push(10 * i + offset);
    voltage_v.push(4.2 - 0.01 * i - 0.001 * offset);
    current_a.push(-1.1);
    capacity_ah.push(0.1 * (i + 1));
  }
  return { time_s, voltage_v, current_a, capacity_ah };
}

export function makeCell(cellId: string, nCycles: number): RawCell {
  const cycles: RawCycle[] = [];
  for (let c = 0; c < nCycles; c++) {
    cycles.push(makeCycle(4, c));
  }
  return { cell_id: cellId, nominal_capacity_ah: 1.1, protocol: "mock", cycles };
}

/**
 * Write a raw corpus (cells/<id>.json + checksums.json) and its spec file.
 * `overrides` lets a test substitute arbitrary file contents per cell id.
 */
export function writeCorpus(
  root: string,
  dataset: DatasetName,
  split: { train: string[]; primary_test: string[]; secondary_test?: string[] },
  nCycles = 3,
  overrides: Record<string, string> = {},
): RawSourceSpec {
  const cellsDir = path.join(root, "cells");
  mkdirSync(cellsDir, { recursive: true });
  const manifest: Record<string, string> = {};
  const allIds = [...split.train, ...split.primary_test, ...(split.secondary_test ?? [])];
  for (const id of allIds) {
    const body = overrides[id] ?? JSON.stringify(makeCell(id, nCycles));
    writeFileSync(path.join(cellsDir, `${id}.json`), body);
    manifest[path.join("cells", `${id}.json`)] = sha256Hex(body);
  }
  writeFileSync(path.join(root, "checksums.json"), JSON.stringify(manifest, null, 2));
  return { dataset, root, split };
}

export function idRange(prefix: string, n: number, start = 0): string[] {
  const out: string[] = [];
  for (let i = 0; i < n; i++) {
    out.push(`${prefix}${String(start + i).padStart(3, "0")}`);
  }
  return out;
}
