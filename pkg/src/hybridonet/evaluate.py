"""Evaluation in cycle units: RMSE, R^2, and cycle-life-normalized MAPE,
aggregated per cell, plus CSV exports of prediction traces and embeddings."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cycle_data import compute_cycle_life
from .preprocess import build_sample_windows, transform_features, windows_to_arrays


def compute_metrics(observed, predicted, cycle_life):
    """(rmse, r2, mape_percent); MAPE divides by cycle life, not per-sample
    observations. R^2 is None when the observed sequence is constant."""
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if observed.size == 0 or observed.shape != predicted.shape:
        raise ValueError("observed/predicted must be equal-length and non-empty")
    if cycle_life <= 0:
        raise ValueError("cycle_life must be positive")
    err = observed - predicted
    rmse = float(np.sqrt(np.mean(err * err)))
    sst = float(np.sum((observed - observed.mean()) ** 2))
    r2 = None if sst == 0 else 1.0 - float(np.sum(err * err)) / sst
    mape = float(np.mean(np.abs(err))) / cycle_life * 100.0
    return rmse, r2, mape


def mape_standard(observed, predicted):
    """Conventional MAPE with per-sample denominators, for sanity checks."""
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    mask = observed != 0
    if not mask.any():
        return math.nan
    return float(np.mean(np.abs((observed[mask] - predicted[mask]) / observed[mask]))) * 100.0


@dataclass
class EvalReport:
    per_cell: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    traces: list = field(default_factory=list)  # (cell_id, anchor, observed, predicted)
    skipped: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"per_cell": self.per_cell, "aggregate": self.aggregate, "skipped": self.skipped},
            indent=2,
        )


def _mean_or_none(values):
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def evaluate_cells(predictor, cells, kernel=5, eol_threshold=0.8):
    """Per-cell metrics and their unweighted mean over cells.

    `predictor` is a trained model or an Ensemble; predictions use the
    predictor's own scaler.
    """
    report = EvalReport()
    for cell in sorted(cells, key=lambda c: c.cell_id):
        life = compute_cycle_life(cell, eol_threshold)
        windows = build_sample_windows(cell, life, kernel)
        if not windows:
            report.skipped.append(cell.cell_id)
            continue
        preds = _predict(predictor, windows)
        obs = np.array([w.rul_label for w in windows], dtype=np.float64)
        rmse, r2, mape = compute_metrics(obs, preds, life.cycle_life)
        report.per_cell.append(
            {
                "cell_id": cell.cell_id,
                "protocol": cell.protocol,
                "rmse_cycles": rmse,
                "r2": r2,
                "mape_percent": mape,
                "n_windows": len(windows),
            }
        )
        for w, p in zip(windows, preds):
            report.traces.append((cell.cell_id, w.anchor_cycle, float(w.rul_label), float(p)))
    if report.per_cell:
        report.aggregate = {
            "rmse_cycles": float(np.mean([c["rmse_cycles"] for c in report.per_cell])),
            "r2": _mean_or_none([c["r2"] for c in report.per_cell]),
            "mape_percent": float(np.mean([c["mape_percent"] for c in report.per_cell])),
            "n_cells": len(report.per_cell),
        }
    return report


def _predict(predictor, windows):
    if hasattr(predictor, "predict"):
        return predictor.predict(windows)
    from .model import predict_rul

    return predict_rul(predictor, windows)


def export_traces(report: EvalReport, path):
    """CSV of (cell_id, anchor_cycle, observed_rul, predicted_rul)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell_id", "anchor_cycle", "observed_rul", "predicted_rul"])
        for row in report.traces:
            writer.writerow(row)
    return path


def export_embeddings(model, windows, scaler, path, domain="target"):
    """CSV of feature-extractor outputs, one row per window."""
    path = Path(path)
    scaler = scaler if scaler is not None else model.scaler
    scaled = [transform_features(w, scaler) for w in windows]
    x, _ = windows_to_arrays(scaled)
    dim = model.config.hidden
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell_id", "anchor_cycle", "domain"] + [f"f{i}" for i in range(dim)])
        for lo in range(0, len(windows), 256):
            feats, _ = model.feature_extract(x[lo : lo + 256], train=False)
            for w, f in zip(windows[lo : lo + 256], feats):
                writer.writerow([w.cell_id, w.anchor_cycle, domain] + [repr(float(v)) for v in f])
    return path
