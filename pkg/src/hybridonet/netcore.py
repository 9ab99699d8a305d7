"""Minimal differentiable layers on float64 numpy arrays.

Every layer exposes ``forward(...) -> (out, cache)`` and
``backward(grad_out, cache) -> grad_in``; parameter gradients accumulate
into a shared ParamStore. Backward passes are written by hand and are
exact, so they can be validated against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParamStore:
    """Named trainable arrays, their gradients, and non-trainable state."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.state = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def add_state(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.state:
            raise ValueError(f"duplicate state name {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        self.state[name] = arr
        return arr

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def accumulate(self, name: str, grad: np.ndarray):
        self.grads[name] += grad

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())


def _uniform_init(rng, shape, fan_in):
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# elementwise


def relu(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad, mask):
    return grad * mask


def sigmoid(x):
    y = 1.0 / (1.0 + np.exp(-x))
    return y, y


def sigmoid_backward(grad, y):
    return grad * y * (1.0 - y)


def tanh(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(grad, y):
    return grad * (1.0 - y * y)


def dropout(x, rate, train, rng):
    """Inverted dropout; eval mode is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0,1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad, mask):
    return grad if mask is None else grad * mask


def softmax_lastaxis(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# layers


class Linear:
    """y = x @ W + b on (B, d_in) inputs."""

    def __init__(self, store, prefix, d_in, d_out, rng, bias=True):
        self.store = store
        self.w_name = f"{prefix}.W"
        self.b_name = f"{prefix}.b" if bias else None
        self.W = store.add(self.w_name, _uniform_init(rng, (d_in, d_out), d_in))
        self.b = store.add(self.b_name, np.zeros(d_out)) if bias else None

    def forward(self, x):
        y = x @ self.W
        if self.b is not None:
            y = y + self.b
        return y, x

    def backward(self, grad, cache):
        x = cache
        self.store.accumulate(self.w_name, x.T @ grad)
        if self.b_name is not None:
            self.store.accumulate(self.b_name, grad.sum(axis=0))
        return grad @ self.W.T


GATES = ("i", "f", "o", "c")


class LSTMLayer:
    """Single LSTM layer over (B, T, d_in); zero initial hidden and cell state."""

    def __init__(self, store, prefix, d_in, hidden, rng):
        self.store = store
        self.prefix = prefix
        self.hidden = hidden
        self.W = {}
        self.U = {}
        self.b = {}
        for g in GATES:
            self.W[g] = store.add(f"{prefix}.W_{g}", _uniform_init(rng, (d_in, hidden), d_in))
            self.U[g] = store.add(f"{prefix}.U_{g}", _uniform_init(rng, (hidden, hidden), hidden))
            self.b[g] = store.add(f"{prefix}.b_{g}", np.zeros(hidden))

    def forward(self, x):
        B, T, _ = x.shape
        h = np.zeros((B, self.hidden))
        c = np.zeros((B, self.hidden))
        h_seq = np.empty((B, T, self.hidden))
        steps = []
        for t in range(T):
            xt = x[:, t, :]
            i = _sig(xt @ self.W["i"] + h @ self.U["i"] + self.b["i"])
            f = _sig(xt @ self.W["f"] + h @ self.U["f"] + self.b["f"])
            o = _sig(xt @ self.W["o"] + h @ self.U["o"] + self.b["o"])
            cbar = np.tanh(xt @ self.W["c"] + h @ self.U["c"] + self.b["c"])
            c_new = f * c + i * cbar
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            steps.append((xt, h, c, i, f, o, cbar, tanh_c))
            h, c = h_new, c_new
            h_seq[:, t, :] = h
        return h_seq, steps

    def backward(self, grad_seq, cache):
        steps = cache
        B, T, _ = grad_seq.shape
        d_in = self.W["i"].shape[0]
        gx = np.empty((B, T, d_in))
        dh_next = np.zeros((B, self.hidden))
        dc_next = np.zeros((B, self.hidden))
        gW = {g: np.zeros_like(self.W[g]) for g in GATES}
        gU = {g: np.zeros_like(self.U[g]) for g in GATES}
        gb = {g: np.zeros_like(self.b[g]) for g in GATES}
        for t in range(T - 1, -1, -1):
            xt, h_prev, c_prev, i, f, o, cbar, tanh_c = steps[t]
            dh = grad_seq[:, t, :] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_next
            di = dc * cbar
            dcbar = dc * i
            df = dc * c_prev
            dc_next = dc * f
            pre = {
                "i": di * i * (1.0 - i),
                "f": df * f * (1.0 - f),
                "o": do * o * (1.0 - o),
                "c": dcbar * (1.0 - cbar * cbar),
            }
            gx_t = np.zeros((B, d_in))
            dh_next = np.zeros((B, self.hidden))
            for g in GATES:
                gW[g] += xt.T @ pre[g]
                gU[g] += h_prev.T @ pre[g]
                gb[g] += pre[g].sum(axis=0)
                gx_t += pre[g] @ self.W[g].T
                dh_next += pre[g] @ self.U[g].T
            gx[:, t, :] = gx_t
        for g in GATES:
            self.store.accumulate(f"{self.prefix}.W_{g}", gW[g])
            self.store.accumulate(f"{self.prefix}.U_{g}", gU[g])
            self.store.accumulate(f"{self.prefix}.b_{g}", gb[g])
        return gx


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


class LSTMStack:
    """Stacked LSTM; each layer consumes the previous layer's hidden sequence."""

    def __init__(self, store, prefix, d_in, hidden, layers, rng):
        self.layers = []
        for k in range(layers):
            self.layers.append(LSTMLayer(store, f"{prefix}.{k}", d_in if k == 0 else hidden, hidden, rng))

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, grad, caches):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad = layer.backward(grad, cache)
        return grad


class MultiheadSelfAttention:
    """Scaled dot-product self-attention over (B, T, dim); no masking."""

    def __init__(self, store, prefix, dim, heads, rng):
        if dim % heads != 0:
            raise ValueError(f"heads ({heads}) must divide model dim ({dim})")
        self.store = store
        self.prefix = prefix
        self.dim = dim
        self.heads = heads
        self.d_k = dim // heads
        self.proj = {}
        for name in ("q", "k", "v", "o"):
            self.proj[name] = store.add(f"{prefix}.W_{name}", _uniform_init(rng, (dim, dim), dim))

    def _split(self, z, B, T):
        return z.reshape(B, T, self.heads, self.d_k).transpose(0, 2, 1, 3)

    def _merge(self, z, B, T):
        return z.transpose(0, 2, 1, 3).reshape(B, T, self.dim)

    def forward(self, x):
        B, T, _ = x.shape
        q = self._split(x @ self.proj["q"], B, T)
        k = self._split(x @ self.proj["k"], B, T)
        v = self._split(x @ self.proj["v"], B, T)
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(self.d_k)
        attn = softmax_lastaxis(scores)  # (B, H, T, T)
        heads_out = attn @ v
        concat = self._merge(heads_out, B, T)
        y = concat @ self.proj["o"]
        return y, (x, q, k, v, attn, concat)

    def backward(self, grad, cache):
        x, q, k, v, attn, concat = cache
        B, T, _ = x.shape
        flat = lambda z: z.reshape(B * T, self.dim)
        self.store.accumulate(f"{self.prefix}.W_o", flat(concat).T @ flat(grad))
        g_concat = grad @ self.proj["o"].T
        g_heads = self._split(g_concat, B, T)
        g_attn = g_heads @ v.transpose(0, 1, 3, 2)
        g_v = attn.transpose(0, 1, 3, 2) @ g_heads
        # softmax backward per row
        g_scores = attn * (g_attn - (g_attn * attn).sum(axis=-1, keepdims=True))
        g_scores /= np.sqrt(self.d_k)
        g_q = g_scores @ k
        g_k = g_scores.transpose(0, 1, 3, 2) @ q
        gx = np.zeros_like(x)
        for name, g_split in (("q", g_q), ("k", g_k), ("v", g_v)):
            g_merged = self._merge(g_split, B, T)
            self.store.accumulate(f"{self.prefix}.W_{name}", flat(x).T @ flat(g_merged))
            gx += g_merged @ self.proj[name].T
        return gx


class NodeBlock:
    """Terminal state of dh/dt = h @ W + b over [0,1], fixed-step RK4.

    Backward differentiates through the unrolled solver stages, so the
    gradient is exact for the discrete map the forward pass computes.
    """

    def __init__(self, store, prefix, dim, steps, rng):
        if steps < 1:
            raise ValueError("steps must be >= 1")
        self.store = store
        self.prefix = prefix
        self.steps = steps
        self.W = store.add(f"{prefix}.W", _uniform_init(rng, (dim, dim), dim))
        self.b = store.add(f"{prefix}.b", np.zeros(dim))

    def _f(self, h):
        return h @ self.W + self.b

    def forward(self, h0, t0=0.0, t1=1.0):
        dt = (t1 - t0) / self.steps
        h = h0
        stages = []
        for _ in range(self.steps):
            k1 = self._f(h)
            u2 = h + 0.5 * dt * k1
            k2 = self._f(u2)
            u3 = h + 0.5 * dt * k2
            k3 = self._f(u3)
            u4 = h + dt * k3
            k4 = self._f(u4)
            h_next = h + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            stages.append((h, u2, u3, u4))
            h = h_next
        return h, (stages, dt)

    def backward(self, grad, cache):
        stages, dt = cache
        gW = np.zeros_like(self.W)
        gb = np.zeros_like(self.b)
        g_h = grad
        for h, u2, u3, u4 in reversed(stages):
            g_k1 = dt / 6.0 * g_h
            g_k2 = dt / 3.0 * g_h
            g_k3 = dt / 3.0 * g_h
            g_k4 = dt / 6.0 * g_h
            # k4 = f(u4), u4 = h + dt*k3
            g_u4 = g_k4 @ self.W.T
            gW += u4.T @ g_k4
            gb += g_k4.sum(axis=0)
            g_h = g_h + g_u4
            g_k3 = g_k3 + dt * g_u4
            # k3 = f(u3), u3 = h + dt/2*k2
            g_u3 = g_k3 @ self.W.T
            gW += u3.T @ g_k3
            gb += g_k3.sum(axis=0)
            g_h = g_h + g_u3
            g_k2 = g_k2 + 0.5 * dt * g_u3
            # k2 = f(u2), u2 = h + dt/2*k1
            g_u2 = g_k2 @ self.W.T
            gW += u2.T @ g_k2
            gb += g_k2.sum(axis=0)
            g_h = g_h + g_u2
            g_k1 = g_k1 + 0.5 * dt * g_u2
            # k1 = f(h)
            g_u1 = g_k1 @ self.W.T
            gW += h.T @ g_k1
            gb += g_k1.sum(axis=0)
            g_h = g_h + g_u1
        self.store.accumulate(f"{self.prefix}.W", gW)
        self.store.accumulate(f"{self.prefix}.b", gb)
        return g_h


class BatchNorm1d:
    """Batch normalization over the batch axis of (B, d) inputs."""

    def __init__(self, store, prefix, dim, eps=1e-5, momentum=0.1):
        self.store = store
        self.prefix = prefix
        self.eps = eps
        self.momentum = momentum
        self.gamma = store.add(f"{prefix}.gamma", np.ones(dim))
        self.beta = store.add(f"{prefix}.beta", np.zeros(dim))
        self.running_mean = store.add_state(f"{prefix}.running_mean", np.zeros(dim))
        self.running_var = store.add_state(f"{prefix}.running_var", np.ones(dim))

    def forward(self, x, train):
        if train:
            if x.shape[0] < 2:
                raise ValueError("batchnorm train mode needs batch size >= 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean *= 1.0 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1.0 - self.momentum
            self.running_var += self.momentum * var
        else:
            mean = self.running_mean
            var = self.running_var
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * ivar
        y = self.gamma * xhat + self.beta
        return y, (xhat, ivar, train)

    def backward(self, grad, cache):
        xhat, ivar, train = cache
        self.store.accumulate(f"{self.prefix}.beta", grad.sum(axis=0))
        self.store.accumulate(f"{self.prefix}.gamma", (grad * xhat).sum(axis=0))
        g_xhat = grad * self.gamma
        if not train:
            return g_xhat * ivar
        B = xhat.shape[0]
        return (ivar / B) * (
            B * g_xhat - g_xhat.sum(axis=0) - xhat * (g_xhat * xhat).sum(axis=0)
        )


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_name: str
    passed: bool


def gradient_check(loss_fn, params, grads, h=1e-5, tolerance=1e-4) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    loss_fn recomputes the scalar loss from the current parameter values;
    params/grads map names to arrays (inputs may be included as extra
    entries). Every element is perturbed.
    """
    worst = 0.0
    worst_name = ""
    for name, p in params.items():
        g = grads[name]
        flat_p = p.ravel()
        flat_g = np.asarray(g).ravel()
        for idx in range(flat_p.size):
            orig = flat_p[idx]
            flat_p[idx] = orig + h
            lp = loss_fn()
            flat_p[idx] = orig - h
            lm = loss_fn()
            flat_p[idx] = orig
            numeric = (lp - lm) / (2.0 * h)
            analytic = flat_g[idx]
            rel = abs(analytic - numeric) / max(1.0, abs(analytic) + abs(numeric))
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{idx}]"
    return GradCheckReport(max_rel_error=worst, worst_name=worst_name, passed=worst <= tolerance)
