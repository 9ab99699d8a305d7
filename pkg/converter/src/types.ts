/**
 * Shared types for the raw-to-canonical converter.
 *
 * Raw inputs are per-cell JSON exports of cycler data, one file per cell,
 * accompanied by a `checksums.json` manifest (sha256 per file). The
 * canonical output is one directory per cell holding `meta.json` and a
 * long-format `cycles.csv`, the interchange format the training pipeline
 * loads.
 */

export type DatasetName = "tri" | "lhp";

export type SplitName = "train" | "primary_test" | "secondary_test";

/** Which raw archive to convert and how its cells are assigned to splits. */
export interface RawSourceSpec {
  dataset: DatasetName;
  /** Directory holding checksums.json and cells/<id>.json */
  root: string;
  /** Every cell id must appear in exactly one list. */
  split: {
    train: string[];
    primary_test: string[];
    secondary_test?: string[];
  };
}

export interface RawCycle {
  time_s: number[];
  voltage_v: number[];
  current_a: number[];
  capacity_ah: number[];
}

export interface RawCell {
  cell_id: string;
  nominal_capacity_ah: number;
  protocol?: string;
  cycles: RawCycle[];
}

export interface DroppedCycle {
  /** 1-based position in the raw cycle list */
  raw_index: number;
  reason: string;
}

export interface CellReport {
  cell_id: string;
  split: SplitName;
  cycles_written: number;
  dropped: DroppedCycle[];
  out_dir: string;
}

export interface ConversionReport {
  dataset: DatasetName;
  /** How the raw fields map onto the canonical capacity channel. */
  capacity_mapping: string;
  cells: CellReport[];
  counts: Record<SplitName, number>;
  total_cycles_written: number;
  total_cycles_dropped: number;
  skipped_cells: { cell_id: string; reason: string }[];
}

/** Expected archive split sizes; conversion refuses specs that disagree. */
export const EXPECTED_SPLITS: Record<DatasetName, Record<SplitName, number>> = {
  tri: { train: 41, primary_test: 43, secondary_test: 40 },
  lhp: { train: 55, primary_test: 22, secondary_test: 0 },
};

export class ConversionError extends Error {}
