"""The RUL network: shared feature extractor (LSTM -> self-attention ->
NODE) feeding two identical predictor heads whose outputs blend through
trainable trade-off scalars.

Target prediction: y_t = theta_s * head_s(F) + theta_t * head_t(F);
source prediction: y_s = head_s(F).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import netcore as nc
from .preprocess import N_FEATURES, WINDOW_CYCLES, ScalerParams, transform_features, windows_to_arrays

ATTENTION_PICKS = ("last", "second_to_last", "mean")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = N_FEATURES
    seq_len: int = WINDOW_CYCLES
    hidden: int = 64
    lstm_layers: int = 2
    heads: int = 4
    node_steps: int = 2
    attention_pick: str = "second_to_last"
    predictor_dims: tuple = (128, 64, 32, 1)
    dropout: float = 0.1

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide hidden ({self.hidden})")
        if self.attention_pick not in ATTENTION_PICKS:
            raise ValueError(f"attention_pick must be one of {ATTENTION_PICKS}")
        object.__setattr__(self, "predictor_dims", tuple(self.predictor_dims))
        if self.predictor_dims[-1] != 1:
            raise ValueError("predictor_dims must end in 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0,1)")


class PredictorHead:
    """Blocks of [linear -> ReLU -> batchnorm -> dropout] then linear -> sigmoid."""

    def __init__(self, store, prefix, d_in, dims, dropout_rate, rng):
        self.dropout_rate = dropout_rate
        self.blocks = []
        d = d_in
        for k, width in enumerate(dims[:-1]):
            lin = nc.Linear(store, f"{prefix}.block{k}.lin", d, width, rng)
            bn = nc.BatchNorm1d(store, f"{prefix}.block{k}.bn", width)
            self.blocks.append((lin, bn))
            d = width
        self.out = nc.Linear(store, f"{prefix}.out", d, dims[-1], rng)

    def forward(self, x, train, rng):
        caches = []
        for lin, bn in self.blocks:
            x, c_lin = lin.forward(x)
            x, c_relu = nc.relu(x)
            x, c_bn = bn.forward(x, train)
            x, c_drop = nc.dropout(x, self.dropout_rate, train, rng)
            caches.append((c_lin, c_relu, c_bn, c_drop))
        z, c_out = self.out.forward(x)
        y, c_sig = nc.sigmoid(z)
        return y, (caches, c_out, c_sig)

    def backward(self, grad, cache):
        caches, c_out, c_sig = cache
        g = nc.sigmoid_backward(grad, c_sig)
        g = self.out.backward(g, c_out)
        for (lin, bn), (c_lin, c_relu, c_bn, c_drop) in zip(reversed(self.blocks), reversed(caches)):
            g = nc.dropout_backward(g, c_drop)
            g = bn.backward(g, c_bn)
            g = nc.relu_backward(g, c_relu)
            g = lin.backward(g, c_lin)
        return g


class HybridoModel:
    """Assembled network; all trainable arrays live in one ParamStore."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = seed
        self.store = nc.ParamStore()
        self.scaler: ScalerParams | None = None
        rng = np.random.default_rng(seed)
        self.lstm = nc.LSTMStack(self.store, "gf.lstm", config.input_dim, config.hidden, config.lstm_layers, rng)
        self.attention = nc.MultiheadSelfAttention(self.store, "gf.attn", config.hidden, config.heads, rng)
        self.node = nc.NodeBlock(self.store, "gf.node", config.hidden, config.node_steps, rng)
        self.head_s = PredictorHead(self.store, "gs", config.hidden, config.predictor_dims, config.dropout, rng)
        self.head_t = PredictorHead(self.store, "gt", config.hidden, config.predictor_dims, config.dropout, rng)
        self.theta_s = self.store.add("theta_s", np.array(0.5))
        self.theta_t = self.store.add("theta_t", np.array(0.5))

    # -- feature extractor ---------------------------------------------------

    def _pick_index(self, T):
        if self.config.attention_pick == "last" or T == 1:
            return T - 1
        if self.config.attention_pick == "second_to_last":
            return T - 2
        return None  # mean

    def feature_extract(self, x, train=False):
        """(B, T, input_dim) -> (B, hidden) embedding."""
        h_seq, c_lstm = self.lstm.forward(x)
        a_seq, c_attn = self.attention.forward(h_seq)
        T = a_seq.shape[1]
        idx = self._pick_index(T)
        h0 = a_seq.mean(axis=1) if idx is None else a_seq[:, idx, :]
        out, c_node = self.node.forward(h0)
        return out, (c_lstm, c_attn, c_node, a_seq.shape, idx)

    def feature_backward(self, grad, cache):
        c_lstm, c_attn, c_node, a_shape, idx = cache
        g_h0 = self.node.backward(grad, c_node)
        g_a = np.zeros(a_shape)
        if idx is None:
            g_a[:] = g_h0[:, None, :] / a_shape[1]
        else:
            g_a[:, idx, :] = g_h0
        g_h = self.attention.backward(g_a, c_attn)
        return self.lstm.backward(g_h, c_lstm)

    # -- full forward --------------------------------------------------------

    def forward(self, x, train=False, rng=None):
        """Returns (y_source, y_target, features, cache)."""
        if train and rng is None:
            rng = np.random.default_rng(0)
        feats, c_feat = self.feature_extract(x, train)
        ys, c_s = self.head_s.forward(feats, train, rng)
        yt_head, c_t = self.head_t.forward(feats, train, rng)
        y_target = self.theta_s * ys + self.theta_t * yt_head
        cache = (c_feat, c_s, c_t, ys, yt_head)
        return ys, y_target, feats, cache

    def backward(self, g_ys, g_yt, cache, g_feats_extra=None):
        """Backprop given upstream grads of y_source, y_target, and optionally
        the feature embedding (e.g. from an alignment loss)."""
        c_feat, c_s, c_t, ys, yt_head = cache
        g_hs = np.zeros_like(ys)
        g_ht = np.zeros_like(yt_head)
        if g_ys is not None:
            g_hs += g_ys
        if g_yt is not None:
            g_hs += float(self.theta_s) * g_yt
            g_ht += float(self.theta_t) * g_yt
            self.store.accumulate("theta_s", np.sum(g_yt * ys))
            self.store.accumulate("theta_t", np.sum(g_yt * yt_head))
        g_feats = self.head_s.backward(g_hs, c_s) + self.head_t.backward(g_ht, c_t)
        if g_feats_extra is not None:
            g_feats = g_feats + g_feats_extra
        return self.feature_backward(g_feats, c_feat)

    # -- convenience ---------------------------------------------------------

    def set_theta(self, theta_s, theta_t):
        self.store.params["theta_s"][...] = theta_s
        self.store.params["theta_t"][...] = theta_t


def init_model(config: ModelConfig, seed: int) -> HybridoModel:
    """Deterministic initialization from seed; trade-off scalars start at 0.5."""
    return HybridoModel(config, seed)


def predict_rul(model, windows, scaler=None, batch_size=256):
    """Predicted RUL in cycles for raw (unscaled) windows; floored at 0."""
    scaler = scaler if scaler is not None else model.scaler
    if scaler is None:
        raise ValueError("no scaler fitted on model and none supplied")
    scaled = [transform_features(w, scaler) for w in windows]
    x, _ = windows_to_arrays(scaled)
    preds = np.empty(len(windows))
    for lo in range(0, len(windows), batch_size):
        xb = x[lo : lo + batch_size]
        _, y_t, _, _ = model.forward(xb, train=False)
        preds[lo : lo + batch_size] = y_t[:, 0]
    return np.maximum(preds * scaler.label_max, 0.0)
