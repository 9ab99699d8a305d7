"""Canonical battery cycling data: on-disk format, life labels, synthetic cells.

A cell lives in a directory holding ``meta.json`` and ``cycles.csv``
(header ``cycle_index,time_s,voltage_v,current_a,capacity_ah``, rows
grouped by ascending cycle index).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = ["cycle_index", "time_s", "voltage_v", "current_a", "capacity_ah"]


class DataError(Exception):
    """Raised when cycling data violates the canonical format or labeling rules."""


@dataclass(frozen=True)
class CycleSeries:
    """Raw signals of one charge-discharge cycle."""

    cycle_index: int
    time_s: np.ndarray
    voltage_v: np.ndarray
    current_a: np.ndarray
    capacity_ah: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("time_s", "voltage_v", "current_a", "capacity_ah"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            arrays[name] = arr
        lengths = {name: len(a) for name, a in arrays.items()}
        if len(set(lengths.values())) != 1:
            raise DataError(f"cycle {self.cycle_index}: unequal channel lengths {lengths}")
        if lengths["time_s"] < 1:
            raise DataError(f"cycle {self.cycle_index}: empty cycle")
        if self.cycle_index < 1:
            raise DataError(f"cycle_index must be >= 1, got {self.cycle_index}")
        if np.any(np.diff(self.time_s) < 0):
            raise DataError(f"cycle {self.cycle_index}: time_s not non-decreasing")

    def __len__(self):
        return len(self.time_s)


@dataclass(frozen=True)
class CellRecord:
    """One cell: ordered cycles plus per-cycle maximum discharge capacity."""

    cell_id: str
    nominal_capacity_ah: float
    cycles: tuple
    max_discharge_capacity_ah: np.ndarray
    dataset: str = "unknown"
    protocol: str = "unknown"

    def __post_init__(self):
        if self.nominal_capacity_ah <= 0:
            raise DataError(f"{self.cell_id}: nominal_capacity_ah must be positive")
        object.__setattr__(self, "cycles", tuple(self.cycles))
        if not self.cycles:
            raise DataError(f"{self.cell_id}: no cycles")
        indices = [c.cycle_index for c in self.cycles]
        if indices != list(range(1, len(indices) + 1)):
            raise DataError(f"{self.cell_id}: non-contiguous cycle_index {indices[:10]}...")
        caps = np.asarray(self.max_discharge_capacity_ah, dtype=np.float64)
        object.__setattr__(self, "max_discharge_capacity_ah", caps)
        if len(caps) != len(self.cycles):
            raise DataError(
                f"{self.cell_id}: {len(caps)} capacity entries for {len(self.cycles)} cycles"
            )

    @classmethod
    def from_cycles(cls, cell_id, nominal_capacity_ah, cycles, dataset="unknown", protocol="unknown"):
        """Build a record, deriving per-cycle max discharge capacity.

        Capacity is the max of capacity_ah over samples with negative
        current (discharge); cycles with no discharge samples fall back
        to the max over all samples.
        """
        caps = np.array([_max_discharge_capacity(c) for c in cycles])
        return cls(cell_id, nominal_capacity_ah, tuple(cycles), caps, dataset, protocol)


def _max_discharge_capacity(cycle):
    mask = cycle.current_a < 0
    if mask.any():
        return float(cycle.capacity_ah[mask].max())
    return float(cycle.capacity_ah.max())


@dataclass(frozen=True)
class LifeLabel:
    """Cycle life and the per-cycle RUL sequence of one cell."""

    cycle_life: int
    eol_threshold: float
    rul: np.ndarray  # rul[c-1] == cycle_life - c for c in 1..cycle_life

    def __post_init__(self):
        if self.cycle_life < 1:
            raise DataError("cycle_life must be positive")
        if not 0 < self.eol_threshold < 1:
            raise DataError("eol_threshold must lie in (0,1)")
        rul = np.asarray(self.rul, dtype=np.int64)
        object.__setattr__(self, "rul", rul)
        expected = np.arange(self.cycle_life - 1, -1, -1)
        if rul.shape != expected.shape or np.any(rul != expected):
            raise DataError("rul must decrease by 1 per cycle and end at 0")


def compute_cycle_life(cell: CellRecord, eol_threshold: float = 0.8) -> LifeLabel:
    """Locate end of life and build the RUL label sequence.

    Cycle life is the last cycle whose max discharge capacity is still
    at or above eol_threshold * nominal capacity.
    """
    if not 0 < eol_threshold < 1:
        raise DataError(f"eol_threshold must lie in (0,1), got {eol_threshold}")
    limit = eol_threshold * cell.nominal_capacity_ah
    below = np.nonzero(cell.max_discharge_capacity_ah < limit)[0]
    if below.size == 0:
        raise DataError(f"{cell.cell_id}: EOL not reached (threshold {eol_threshold})")
    cycle_life = int(below[0])  # first below (1-based) minus 1
    if cycle_life < 1:
        raise DataError(f"{cell.cell_id}: below EOL threshold at first cycle")
    rul = np.arange(cycle_life - 1, -1, -1)
    return LifeLabel(cycle_life=cycle_life, eol_threshold=eol_threshold, rul=rul)


def compute_rul_labels(cell: CellRecord, life: LifeLabel) -> np.ndarray:
    """RUL (remaining cycles) for cycles 1..cycle_life: cycle_life - c."""
    if life.cycle_life > len(cell.cycles):
        raise DataError(f"{cell.cell_id}: label exceeds recorded cycles")
    return life.cycle_life - np.arange(1, life.cycle_life + 1)


# ---------------------------------------------------------------------------
# canonical directory I/O


def load_cell(path) -> CellRecord:
    """Read a canonical cell directory (meta.json + cycles.csv)."""
    path = Path(path)
    meta_path = path / "meta.json"
    csv_path = path / "cycles.csv"
    if not meta_path.is_file():
        raise DataError(f"{meta_path}: missing meta.json")
    if not csv_path.is_file():
        raise DataError(f"{csv_path}: missing cycles.csv")
    with open(meta_path, encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{meta_path}: invalid JSON ({exc})") from exc
    for key in ("cell_id", "nominal_capacity_ah"):
        if key not in meta:
            raise DataError(f"{meta_path}: missing key '{key}'")

    groups = []  # list of (cycle_index, columns)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise DataError(f"{csv_path}:1: bad header {header}, expected {CSV_HEADER}")
        current_idx = None
        cols = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"{csv_path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                idx = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise DataError(f"{csv_path}:{lineno}: unparseable value ({exc})") from exc
            if idx != current_idx:
                if current_idx is not None and idx <= current_idx:
                    raise DataError(f"{csv_path}:{lineno}: cycle_index not ascending")
                current_idx = idx
                cols = ([], [], [], [])
                groups.append((idx, cols))
            for col, v in zip(cols, vals):
                col.append(v)
    if not groups:
        raise DataError(f"{csv_path}: no cycles")
    indices = [g[0] for g in groups]
    if indices != list(range(1, len(indices) + 1)):
        raise DataError(f"{csv_path}: non-contiguous cycle_index {indices[:10]}")
    cycles = [
        CycleSeries(idx, np.array(t), np.array(v), np.array(i), np.array(q))
        for idx, (t, v, i, q) in groups
    ]
    return CellRecord.from_cycles(
        cell_id=str(meta["cell_id"]),
        nominal_capacity_ah=float(meta["nominal_capacity_ah"]),
        cycles=cycles,
        dataset=str(meta.get("dataset", "unknown")),
        protocol=str(meta.get("protocol", "unknown")),
    )


def write_cell(cell: CellRecord, path) -> Path:
    """Write a CellRecord to a canonical directory (inverse of load_cell)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "cell_id": cell.cell_id,
        "nominal_capacity_ah": cell.nominal_capacity_ah,
        "dataset": cell.dataset,
        "protocol": cell.protocol,
    }
    with open(path / "meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    with open(path / "cycles.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for cyc in cell.cycles:
            for k in range(len(cyc)):
                fh.write(
                    f"{cyc.cycle_index},{float(cyc.time_s[k])!r},{float(cyc.voltage_v[k])!r},"
                    f"{float(cyc.current_a[k])!r},{float(cyc.capacity_ah[k])!r}\n"
                )
    return path


# ---------------------------------------------------------------------------
# synthetic cells


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic degradation model.

    Fade follows Q(c) = Q0 * (1 - 0.25 * (c/L)^beta): a single-knee power
    law with a closed-form EOL, overlaid with gaussian noise (amplitude
    eta relative to each channel's scale) and occasional 1.5x spikes.
    """

    cycle_life_target: int = 200
    nominal_capacity_ah: float = 1.1
    knee_beta: float = 1.0
    noise_level: float = 0.0
    samples_per_cycle: int = 24
    spike_period: int = 20  # one spiked sample every ~this many cycles

    def __post_init__(self):
        if self.cycle_life_target < 60:
            raise DataError("cycle_life_target must be >= 60")
        if self.nominal_capacity_ah <= 0:
            raise DataError("nominal_capacity_ah must be positive")
        if self.knee_beta < 1:
            raise DataError("knee_beta must be >= 1")
        if self.noise_level < 0:
            raise DataError("noise_level must be >= 0")
        if self.samples_per_cycle < 8:
            raise DataError("samples_per_cycle must be >= 8")


def generate_synthetic_cell(seed: int, params: SynthParams, cell_id=None) -> CellRecord:
    """Deterministic synthetic cell; pure function of (seed, params).

    Each cycle draws from its own counter-based Philox stream keyed by
    (seed, cycle_index), so generation order cannot matter.
    """
    L = params.cycle_life_target
    q0 = params.nominal_capacity_ah
    m = params.samples_per_cycle
    eta = params.noise_level
    cycles = []
    for c in range(1, L + 1):
        rng = np.random.Generator(np.random.Philox(key=[seed, c]))
        q_c = q0 * (1.0 - 0.25 * (c / L) ** params.knee_beta)
        duration = q_c / 4.4 * 3600.0
        time_s = np.linspace(0.0, duration, m)
        voltage = np.linspace(3.3, 2.0, m)
        current = np.full(m, -4.4)
        capacity = np.linspace(0.0, q_c, m)
        if eta > 0:
            voltage = voltage + eta * 1.3 * rng.standard_normal(m)
            current = current + eta * 4.4 * rng.standard_normal(m)
            capacity = capacity + eta * q0 * rng.standard_normal(m)
            if rng.random() < 1.0 / params.spike_period:
                k = int(rng.integers(m))
                voltage[k] *= 1.5
                current[k] *= 1.5
                capacity[k] *= 1.5
        cycles.append(CycleSeries(c, time_s, voltage, current, capacity))
    name = cell_id if cell_id is not None else f"synth-{seed}"
    return CellRecord.from_cycles(name, q0, cycles, dataset="synthetic", protocol=f"beta={params.knee_beta}")
