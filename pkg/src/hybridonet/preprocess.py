"""Signal preprocessing: median filtering, per-cycle statistics, window
assembly, and min-max scaling.

Each cycle's current/voltage/capacity channels are median-filtered and
reduced to six statistics (Mean, Std, Min, Max, Var, Med); a model input
stacks 10 such 3x6 matrices taken at stride 3 from the 30 cycles ending
at the prediction cycle.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cycle_data import CellRecord, CycleSeries, DataError, LifeLabel

N_CHANNELS = 3  # current, voltage, capacity
N_STATS = 6  # Mean, Std, Min, Max, Var, Med
N_FEATURES = N_CHANNELS * N_STATS
WINDOW_CYCLES = 10
WINDOW_SPAN = 30
WINDOW_STRIDE = 3


def median_filter(signal, kernel: int = 5) -> np.ndarray:
    """Sliding median with replicate padding; output length == input length."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and positive, got {kernel}")
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("median_filter expects a 1-D signal")
    if kernel > len(x):
        warnings.warn(f"kernel {kernel} exceeds signal length {len(x)}; returning constant median")
        return np.full_like(x, np.median(x))
    if kernel == 1:
        return x.copy()
    half = kernel // 2
    padded = np.pad(x, half, mode="edge")
    return np.median(sliding_window_view(padded, kernel), axis=1)


def _stat_row(x):
    # population variance; median averages the two central order statistics
    return np.array([x.mean(), x.std(), x.min(), x.max(), x.var(), np.median(x)])


def extract_features(cycle: CycleSeries, kernel: int = 5) -> np.ndarray:
    """3x6 statistics matrix; rows = (current, voltage, capacity)."""
    rows = []
    for channel in (cycle.current_a, cycle.voltage_v, cycle.capacity_ah):
        if len(channel) == 0:
            raise DataError(f"cycle {cycle.cycle_index}: empty channel")
        rows.append(_stat_row(median_filter(channel, kernel)))
    return np.stack(rows)


@dataclass(frozen=True)
class SampleWindow:
    """One model input: 10 cycles x 3 channels x 6 statistics plus its label.

    rul_label is in cycles for raw windows and in (0,1) after scaling.
    """

    features: np.ndarray  # (10, 3, 6)
    anchor_cycle: int
    rul_label: float
    cell_id: str

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.shape != (WINDOW_CYCLES, N_CHANNELS, N_STATS):
            raise DataError(f"window features must be {(WINDOW_CYCLES, N_CHANNELS, N_STATS)}, got {feats.shape}")
        object.__setattr__(self, "features", feats)
        if self.anchor_cycle < WINDOW_SPAN:
            raise DataError(f"anchor_cycle must be >= {WINDOW_SPAN}, got {self.anchor_cycle}")
        if self.rul_label < 0:
            raise DataError("rul_label must be non-negative")

    def flat_features(self) -> np.ndarray:
        """(10, 18) view: per time step, channel-major then statistic."""
        return self.features.reshape(WINDOW_CYCLES, N_FEATURES)


def window_cycle_indices(anchor: int) -> list:
    """Cycles feeding the window anchored at `anchor`: stride 3, most recent last."""
    return [anchor - WINDOW_SPAN + WINDOW_STRIDE * k for k in range(1, WINDOW_CYCLES + 1)]


def build_sample_windows(cell: CellRecord, life: LifeLabel, kernel: int = 5):
    """All windows of a labeled cell: anchors 30..cycle_life."""
    if life.cycle_life < WINDOW_SPAN:
        warnings.warn(f"{cell.cell_id}: only {life.cycle_life} labeled cycles, no windows")
        return []
    cache = {}

    def features_of(idx):
        if idx not in cache:
            cache[idx] = extract_features(cell.cycles[idx - 1], kernel)
        return cache[idx]

    windows = []
    for anchor in range(WINDOW_SPAN, life.cycle_life + 1):
        feats = np.stack([features_of(i) for i in window_cycle_indices(anchor)])
        windows.append(
            SampleWindow(
                features=feats,
                anchor_cycle=anchor,
                rul_label=int(life.cycle_life - anchor),
                cell_id=cell.cell_id,
            )
        )
    return windows


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature min/max over all samples and time steps, plus the label max
    that maps RUL labels into (0,1) for the sigmoid output head."""

    feature_min: np.ndarray  # (18,)
    feature_max: np.ndarray  # (18,)
    label_max: float

    def __post_init__(self):
        fmin = np.asarray(self.feature_min, dtype=np.float64)
        fmax = np.asarray(self.feature_max, dtype=np.float64)
        if fmin.shape != (N_FEATURES,) or fmax.shape != (N_FEATURES,):
            raise DataError(f"scaler vectors must have shape ({N_FEATURES},)")
        if np.any(fmax < fmin):
            raise DataError("feature_max must be >= feature_min")
        if self.label_max <= 0:
            raise DataError("label_max must be positive")
        object.__setattr__(self, "feature_min", fmin)
        object.__setattr__(self, "feature_max", fmax)

    def to_json(self) -> str:
        return json.dumps(
            {
                "min": self.feature_min.tolist(),
                "max": self.feature_max.tolist(),
                "label_max": self.label_max,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ScalerParams":
        obj = json.loads(text)
        return cls(np.array(obj["min"]), np.array(obj["max"]), float(obj["label_max"]))


def fit_minmax_scaler(samples) -> ScalerParams:
    """Fit per-feature min/max over all windows and time steps."""
    if not samples:
        raise DataError("cannot fit a scaler on an empty sample list")
    stacked = np.stack([s.flat_features() for s in samples])  # (N, 10, 18)
    labels = np.array([s.rul_label for s in samples], dtype=np.float64)
    return ScalerParams(
        feature_min=stacked.min(axis=(0, 1)),
        feature_max=stacked.max(axis=(0, 1)),
        label_max=float(max(labels.max(), 1.0)),
    )


def transform_features(sample: SampleWindow, scaler: ScalerParams) -> SampleWindow:
    """Map features to [0,1] on the fitted range (no clipping) and the label
    to [0,1] by label_max (clipped)."""
    span = scaler.feature_max - scaler.feature_min
    safe = np.where(span > 0, span, 1.0)
    flat = (sample.flat_features() - scaler.feature_min) / safe
    flat = np.where(span > 0, flat, 0.0)  # constant features map to 0
    label = min(max(sample.rul_label / scaler.label_max, 0.0), 1.0)
    return replace(sample, features=flat.reshape(WINDOW_CYCLES, N_CHANNELS, N_STATS), rul_label=label)


def inverse_transform_features(sample: SampleWindow, scaler: ScalerParams) -> SampleWindow:
    """Undo transform_features (constant features return their fitted min)."""
    span = scaler.feature_max - scaler.feature_min
    flat = sample.flat_features() * span + scaler.feature_min
    label = sample.rul_label * scaler.label_max
    return replace(sample, features=flat.reshape(WINDOW_CYCLES, N_CHANNELS, N_STATS), rul_label=label)


def windows_to_arrays(samples):
    """Stack windows into (N, 10, 18) inputs and (N, 1) labels."""
    x = np.stack([s.flat_features() for s in samples])
    y = np.array([[s.rul_label] for s in samples], dtype=np.float64)
    return x, y
