/**
 * Raw cell parsing and per-cycle sanity checks.
 *
 * A raw cycle is dropped (never interpolated) when its channels disagree in
 * length, contain non-finite values, are empty, or run backwards in time.
 * Surviving cycles are renumbered contiguously from 1 so the canonical
 * loader's contiguity rule holds even after drops.
 */

import { ConversionError, DroppedCycle, RawCell, RawCycle } from "./types.js";

const CHANNELS = ["time_s", "voltage_v", "current_a", "capacity_ah"] as const;

export function parseRawCell(data: Buffer, sourceName: string): RawCell {
  let parsed: any;
  try {
    parsed = JSON.parse(data.toString("utf8"));
  } catch (err) {
    throw new ConversionError(`${sourceName}: invalid JSON (${(err as Error).message})`);
  }
  if (typeof parsed?.cell_id !== "string" || parsed.cell_id.length === 0) {
    throw new ConversionError(`${sourceName}: missing cell_id`);
  }
  if (typeof parsed?.nominal_capacity_ah !== "number" || !(parsed.nominal_capacity_ah > 0)) {
    throw new ConversionError(`${sourceName}: nominal_capacity_ah must be a positive number`);
  }
  if (!Array.isArray(parsed?.cycles)) {
    throw new ConversionError(`${sourceName}: cycles must be an array`);
  }
  return parsed as RawCell;
}

/** null when the cycle is usable, otherwise the reason to drop it. */
export function cycleProblem(cycle: RawCycle): string | null {
  for (const name of CHANNELS) {
    const arr = (cycle as any)[name];
    if (!Array.isArray(arr)) return `${name} is not an array`;
  }
  const lengths = CHANNELS.map((name) => (cycle as any)[name].length);
  if (new Set(lengths).size !== 1) {
    return `unequal channel lengths (${lengths.join("/")})`;
  }
  if (lengths[0] === 0) return "empty cycle";
  for (const name of CHANNELS) {
    for (const v of (cycle as any)[name] as unknown[]) {
      if (typeof v !== "number" || !Number.isFinite(v)) return `non-finite value in ${name}`;
    }
  }
  const t = cycle.time_s;
  for (let i = 1; i < t.length; i++) {
    if (t[i] < t[i - 1]) return "time_s decreases";
  }
  return null;
}

export interface CleanedCell {
  cell: RawCell;
  /** cycles that survived, in original order, renumbered by position */
  kept: RawCycle[];
  dropped: DroppedCycle[];
}

export function cleanCell(cell: RawCell, sourceName: string): CleanedCell {
  const kept: RawCycle[] = [];
  const dropped: DroppedCycle[] = [];
  cell.cycles.forEach((cycle, i) => {
    const problem = cycleProblem(cycle);
    if (problem === null) {
      kept.push(cycle);
    } else {
      dropped.push({ raw_index: i + 1, reason: problem });
    }
  });
  if (kept.length === 0) {
    throw new ConversionError(`${sourceName}: every cycle was malformed`);
  }
  return { cell, kept, dropped };
}
