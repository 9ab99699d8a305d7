"""Training objective: MSE regression terms, Gaussian-kernel MMD between
source and target embeddings, and the sigmoid ramp schedule of the MMD
weight."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def mse_loss(pred, label):
    """(1/u) sum of squared errors and its gradient 2(pred-label)/u."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.size == 0:
        raise ValueError("mse_loss on empty batch")
    return _mse_and_grad(pred, label)


def median_bandwidth(fs, ft):
    """Median of pairwise distances in the joint batch; 1.0 when degenerate."""
    z = np.vstack([fs, ft])
    sq = _pairwise_sq_dists(z, z)
    iu = np.triu_indices(len(z), k=1)
    if iu[0].size == 0:
        return 1.0
    med = float(np.median(np.sqrt(np.maximum(sq[iu], 0.0))))
    return med if med > 0 else 1.0


def _pairwise_sq_dists(a, b):
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * a @ b.T, 0.0)


def mmd_loss(fs, ft, bandwidth="median"):
    """Biased Gaussian-kernel MMD (self-pairs included) and its gradients.

    k(x,y) = exp(-||x-y||^2 / (2 sigma^2)); sigma comes from the median
    heuristic by default and is treated as a constant in the backward pass.
    Returns (value, grad_fs, grad_ft).
    """
    fs = np.asarray(fs, dtype=np.float64)
    ft = np.asarray(ft, dtype=np.float64)
    n, m = fs.shape[0], ft.shape[0]
    if n == 0 or m == 0:
        raise ValueError("mmd_loss on empty feature set")
    sigma = median_bandwidth(fs, ft) if bandwidth == "median" else float(bandwidth)
    z = np.vstack([fs, ft])
    k = np.exp(-_pairwise_sq_dists(z, z) / (2.0 * sigma * sigma))
    w = np.empty((n + m, n + m))
    w[:n, :n] = 1.0 / (n * n)
    w[n:, n:] = 1.0 / (m * m)
    w[:n, n:] = -1.0 / (n * m)
    w[n:, :n] = -1.0 / (n * m)
    value = float(np.sum(w[:n, :n] * k[:n, :n]) + np.sum(w[n:, n:] * k[n:, n:]) + 2.0 * np.sum(w[:n, n:] * k[:n, n:]))
    # d value / d z_i = (2/sigma^2) * sum_j w_ij k_ij (z_j - z_i)
    wk = w * k
    row = wk.sum(axis=1)
    g_z = (2.0 / (sigma * sigma)) * (wk @ z - row[:, None] * z)
    return value, g_z[:n], g_z[n:]


def lambda_schedule(epoch: int, epochs: int) -> float:
    """MMD weight ramp: 2 / (1 + exp(-10 * epoch/epochs)) - 1."""
    if epochs <= 0:
        raise ValueError("epochs must be >= 1")
    if not 0 <= epoch <= epochs:
        raise ValueError(f"epoch must lie in [0, {epochs}], got {epoch}")
    return 2.0 / (1.0 + np.exp(-10.0 * epoch / epochs)) - 1.0


@dataclass(frozen=True)
class LossBreakdown:
    mse_source: float
    mse_target: float
    mmd: float
    lam: float
    total: float


def total_loss(model, x_s, y_s, x_t, y_t, lam, train=True, rng=None, bandwidth="median"):
    """Combined objective; populates gradients for every parameter.

    Source batch flows through the source head only; target batch through
    the trade-off blend of both heads; MMD acts on the two embeddings.
    """
    if x_s.shape[0] == 0 or x_t.shape[0] == 0:
        raise ValueError("total_loss requires non-empty source and target batches")
    model.store.zero_grad()
    ys_pred, _, f_s, cache_s = model.forward(x_s, train, rng)
    _, yt_pred, f_t, cache_t = model.forward(x_t, train, rng)
    mse_s, g_ys = _mse_and_grad(ys_pred, y_s)
    mse_t, g_yt = _mse_and_grad(yt_pred, y_t)
    mmd, g_fs, g_ft = mmd_loss(f_s, f_t, bandwidth)
    total = mse_s + mse_t + lam * mmd
    model.backward(g_ys, None, cache_s, g_feats_extra=lam * g_fs)
    model.backward(None, g_yt, cache_t, g_feats_extra=lam * g_ft)
    return LossBreakdown(mse_source=mse_s, mse_target=mse_t, mmd=mmd, lam=lam, total=total)


def supervised_loss(model, x_t, y_t, train=True, rng=None):
    """Target-only MSE objective (the no-adaptation training mode)."""
    if x_t.shape[0] == 0:
        raise ValueError("supervised_loss on empty batch")
    model.store.zero_grad()
    _, yt_pred, _, cache = model.forward(x_t, train, rng)
    mse_t, g_yt = _mse_and_grad(yt_pred, y_t)
    model.backward(None, g_yt, cache)
    return LossBreakdown(mse_source=0.0, mse_target=mse_t, mmd=0.0, lam=0.0, total=mse_t)


def _mse_and_grad(pred, label):
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {label.shape}")
    diff = pred - label
    u = pred.shape[0]
    return float(np.sum(diff * diff) / u), 2.0 * diff / u
