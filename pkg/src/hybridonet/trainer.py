"""Training protocol: AdamW, 90/10 validation split, per-epoch MMD weight
ramp, best-validation-RMSE checkpoint selection, and seed ensembling."""

from __future__ import annotations

import json
import math
import struct
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .losses import lambda_schedule, supervised_loss, total_loss
from .model import HybridoModel, ModelConfig, init_model, predict_rul
from .preprocess import ScalerParams, fit_minmax_scaler, transform_features, windows_to_arrays

MODES = ("hybridonet", "hybridonet_adapt")
CHECKPOINT_MAGIC = b"HYBRIDONET1\n"


class NumericalError(Exception):
    """Raised when training produces a non-finite loss."""


class CheckpointError(Exception):
    """Raised on malformed or incompatible checkpoint files."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 5e-4
    weight_decay: float = 1e-2
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    val_fraction: float = 0.1
    runs: int = 10
    seed: int = 0
    mode: str = "hybridonet_adapt"
    split_level: str = "window"  # or "cell"
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0,1)")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.split_level not in ("window", "cell"):
            raise ValueError("split_level must be 'window' or 'cell'")
        object.__setattr__(self, "betas", tuple(self.betas))
        if isinstance(self.model, dict):
            object.__setattr__(self, "model", ModelConfig(**self.model))


def split_train_val(samples, val_fraction, seed, level="window"):
    """Deterministic shuffled split; cell-level keeps whole cells together."""
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to split")
    rng = np.random.default_rng(seed)
    if level == "cell":
        cell_ids = sorted({s.cell_id for s in samples})
        perm = rng.permutation(len(cell_ids))
        n_val = max(1, round(len(cell_ids) * val_fraction))
        val_cells = {cell_ids[i] for i in perm[:n_val]}
        train = [s for s in samples if s.cell_id not in val_cells]
        val = [s for s in samples if s.cell_id in val_cells]
    else:
        perm = rng.permutation(len(samples))
        n_val = max(1, round(len(samples) * val_fraction))
        val = [samples[i] for i in perm[:n_val]]
        train = [samples[i] for i in perm[n_val:]]
    if not train:
        raise ValueError("validation fraction leaves no training samples")
    return train, val


class AdamW:
    """Decoupled weight decay; decay applies to weight matrices only
    (biases, batchnorm scale/shift, and the trade-off scalars are exempt,
    all of which are rank < 2)."""

    def __init__(self, store, lr, weight_decay=1e-2, betas=(0.9, 0.999), eps=1e-8, frozen=()):
        self.store = store
        self.lr = lr
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.frozen = set(frozen)
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in store.params.items()}
        self.v = {k: np.zeros_like(p) for k, p in store.params.items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, p in self.store.params.items():
            if name in self.frozen:
                continue
            g = self.store.grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.wd > 0 and p.ndim >= 2:
                p -= self.lr * self.wd * p


@dataclass
class RunReport:
    seed: int
    mode: str
    epochs: list = field(default_factory=list)  # per-epoch dicts
    best_val_rmse: float = math.inf
    best_epoch: int = -1
    checkpoint_path: str | None = None
    wall_seconds: float = 0.0

    def to_jsonl(self):
        lines = []
        for e in self.epochs:
            lines.append(json.dumps({"seed": self.seed, "mode": self.mode, **e}))
        return "\n".join(lines) + "\n"


def _batches(n, batch_size, order):
    for lo in range(0, n, batch_size):
        yield order[lo : lo + batch_size]


def _val_rmse_cycles(model, val_windows, scaler):
    preds = predict_rul(model, val_windows, scaler)
    obs = np.array([w.rul_label for w in val_windows], dtype=np.float64)
    return float(np.sqrt(np.mean((preds - obs) ** 2)))


def train_run(source_samples, target_samples, config: TrainConfig, seed: int, checkpoint_path=None):
    """One training run; returns (model, RunReport).

    Samples are raw (unscaled) windows. Scalers are fitted per stream on
    the training portion; the target scaler rides along with the model.
    """
    t_start = time.perf_counter()
    adapt = config.mode == "hybridonet_adapt"
    if not target_samples:
        raise ValueError("no target samples")
    if adapt and not source_samples:
        raise ValueError("hybridonet_adapt requires a source stream")

    ss = np.random.SeedSequence(seed)
    init_seed, shuffle_seed, split_seed, drop_seed = [int(s.generate_state(1)[0]) for s in ss.spawn(4)]

    tgt_train, tgt_val = split_train_val(target_samples, config.val_fraction, split_seed, config.split_level)
    tgt_scaler = fit_minmax_scaler(tgt_train)
    x_t, y_t = windows_to_arrays([transform_features(w, tgt_scaler) for w in tgt_train])
    if adapt:
        src_scaler = fit_minmax_scaler(source_samples)
        x_s, y_s = windows_to_arrays([transform_features(w, src_scaler) for w in source_samples])

    model = init_model(config.model, init_seed)
    model.scaler = tgt_scaler
    if not adapt:
        model.set_theta(0.0, 1.0)
    frozen = () if adapt else ("theta_s", "theta_t")
    opt = AdamW(model.store, config.learning_rate, config.weight_decay, config.betas, config.eps, frozen=frozen)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    drop_rng = np.random.default_rng(drop_seed)

    report = RunReport(seed=seed, mode=config.mode)
    best_params = None
    best_state = None
    for epoch in range(config.epochs):
        lam = lambda_schedule(epoch, config.epochs) if adapt else 0.0
        sums = {"mse_source": 0.0, "mse_target": 0.0, "mmd": 0.0, "total": 0.0}
        n_t, n_s = len(x_t), (len(x_s) if adapt else 0)
        t_order = shuffle_rng.permutation(n_t)
        if adapt:
            s_order = shuffle_rng.permutation(n_s)
            n_steps = math.ceil(max(n_t, n_s) / config.batch_size)
            # cycle the smaller stream, reshuffling on each wrap
            t_idx = _cycled(t_order, n_steps * config.batch_size, shuffle_rng)
            s_idx = _cycled(s_order, n_steps * config.batch_size, shuffle_rng)
        else:
            n_steps = math.ceil(n_t / config.batch_size)
            t_idx = t_order
        for step in range(n_steps):
            sl = slice(step * config.batch_size, (step + 1) * config.batch_size)
            bt = t_idx[sl]
            if adapt:
                bs = s_idx[sl]
                br = total_loss(model, x_s[bs], y_s[bs], x_t[bt], y_t[bt], lam, train=True, rng=drop_rng)
            else:
                br = supervised_loss(model, x_t[bt], y_t[bt], train=True, rng=drop_rng)
            if not math.isfinite(br.total):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} step {step}: "
                    f"mse_s={br.mse_source} mse_t={br.mse_target} mmd={br.mmd}"
                )
            opt.step()
            sums["mse_source"] += br.mse_source
            sums["mse_target"] += br.mse_target
            sums["mmd"] += br.mmd
            sums["total"] += br.total
        val_rmse = _val_rmse_cycles(model, tgt_val, tgt_scaler)
        report.epochs.append(
            {
                "epoch": epoch,
                "lambda": lam,
                **{k: v / n_steps for k, v in sums.items()},
                "val_rmse_cycles": val_rmse,
            }
        )
        if val_rmse < report.best_val_rmse:
            report.best_val_rmse = val_rmse
            report.best_epoch = epoch
            best_params = {k: p.copy() for k, p in model.store.params.items()}
            best_state = {k: s.copy() for k, s in model.store.state.items()}
    # restore the best-validation snapshot
    for k, p in model.store.params.items():
        p[...] = best_params[k]
    for k, s in model.store.state.items():
        s[...] = best_state[k]
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
        report.checkpoint_path = str(checkpoint_path)
    report.wall_seconds = time.perf_counter() - t_start
    return model, report


def _cycled(order, length, rng):
    """Repeat an index order to `length`, reshuffling on every wrap."""
    if len(order) >= length:
        return order[:length]
    parts = [order]
    total = len(order)
    while total < length:
        nxt = rng.permutation(len(order))
        parts.append(nxt)
        total += len(nxt)
    return np.concatenate(parts)[:length]


class Ensemble:
    """Arithmetic mean of member predictions, in cycle units."""

    def __init__(self, members):
        if not members:
            raise ValueError("empty ensemble")
        self.members = list(members)

    @property
    def scaler(self):
        return self.members[0].scaler

    def predict(self, windows):
        preds = np.stack([predict_rul(m, windows) for m in self.members])
        return preds.mean(axis=0)


def train_ensemble(source_samples, target_samples, config: TrainConfig, out_dir=None):
    """Independent runs with seeds seed..seed+runs-1; returns (Ensemble, reports)."""
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    members = []
    reports = []
    failures = []
    for k in range(config.runs):
        seed = config.seed + k
        ckpt = out_dir / f"run_{k}.ckpt" if out_dir is not None else None
        try:
            model, report = train_run(source_samples, target_samples, config, seed, ckpt)
            members.append(model)
            reports.append(report)
        except NumericalError as exc:
            warnings.warn(f"ensemble member {k} (seed {seed}) failed: {exc}")
            failures.append({"run": k, "seed": seed, "error": str(exc)})
    if not members:
        raise NumericalError("every ensemble member failed")
    if out_dir is not None:
        manifest = {
            "mode": config.mode,
            "runs": config.runs,
            "seed": config.seed,
            "members": [r.checkpoint_path for r in reports],
            "failures": failures,
            "best_val_rmse": [r.best_val_rmse for r in reports],
        }
        with open(out_dir / "ensemble.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
        with open(out_dir / "reports.jsonl", "w", encoding="utf-8") as fh:
            for r in reports:
                fh.write(r.to_jsonl())
    return Ensemble(members), reports


def load_ensemble(path):
    """Load an ensemble directory written by train_ensemble."""
    path = Path(path)
    with open(path / "ensemble.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    members = [load_checkpoint(p) for p in manifest["members"]]
    return Ensemble(members)


# ---------------------------------------------------------------------------
# checkpoints: magic, JSON header (config + manifest + scaler), raw float64


def save_checkpoint(model: HybridoModel, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = [["param", k, list(model.store.params[k].shape)] for k in sorted(model.store.params)]
    manifest += [["state", k, list(model.store.state[k].shape)] for k in sorted(model.store.state)]
    header = {
        "config": asdict(model.config),
        "seed": model.seed,
        "manifest": manifest,
        "scaler": json.loads(model.scaler.to_json()) if model.scaler is not None else None,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for kind, name, _ in manifest:
            arr = model.store.params[name] if kind == "param" else model.store.state[name]
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path) -> HybridoModel:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        config = ModelConfig(**{**header["config"], "predictor_dims": tuple(header["config"]["predictor_dims"])})
        model = init_model(config, header.get("seed", 0))
        expected = [["param", k, list(model.store.params[k].shape)] for k in sorted(model.store.params)]
        expected += [["state", k, list(model.store.state[k].shape)] for k in sorted(model.store.state)]
        manifest = [[kind, name, list(shape)] for kind, name, shape in header["manifest"]]
        if manifest != expected:
            raise CheckpointError(f"{path}: manifest does not match config-derived parameters")
        for kind, name, shape in manifest:
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise CheckpointError(f"{path}: truncated file while reading tensor {name!r}")
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape)
            target = model.store.params[name] if kind == "param" else model.store.state[name]
            target[...] = arr
        if header.get("scaler") is not None:
            model.scaler = ScalerParams.from_json(json.dumps(header["scaler"]))
    return model
