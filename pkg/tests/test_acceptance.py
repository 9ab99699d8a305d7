"""Acceptance gate.

Each test covers one release criterion and prints a single PASS/FAIL line
(visible with `pytest tests/test_acceptance.py -v -s`). The two training
comparisons are statistical: per seed they compare small 3-run ensembles,
which is how the training protocol is used in practice.
"""

import dataclasses
import math
import os
import time

import numpy as np
import pytest

from hybridonet import (
    ModelConfig,
    SynthParams,
    TrainConfig,
    build_sample_windows,
    compute_cycle_life,
    generate_synthetic_cell,
    init_model,
    lambda_schedule,
    load_checkpoint,
    mmd_loss,
    predict_rul,
    save_checkpoint,
    total_loss,
    train_ensemble,
    train_run,
)
from hybridonet import netcore as nc
from hybridonet.losses import _mse_and_grad
from hybridonet.preprocess import windows_to_arrays
from hybridonet.trainer import Ensemble

SMALL_MODEL = ModelConfig(hidden=16, heads=2, predictor_dims=(16, 8, 1))


def _verdict(name, passed, detail):
    print(f"\n[ACCEPTANCE] {'PASS' if passed else 'FAIL'}: {name} ({detail})")
    assert passed, f"{name}: {detail}"


def _corpus(n, seed0, beta, lives, noise, spike=20):
    cells = []
    for k in range(n):
        p = SynthParams(
            cycle_life_target=lives[k % len(lives)],
            knee_beta=beta,
            noise_level=noise,
            samples_per_cycle=8,
            spike_period=spike,
        )
        cells.append(generate_synthetic_cell(seed0 + k, p, cell_id=f"accept-{seed0}-{k}"))
    return cells


def _windows(cells, kernel=5):
    out = []
    for c in cells:
        out.extend(build_sample_windows(c, compute_cycle_life(c, 0.8), kernel))
    return out


class TestGradientSuite:
    """Criterion 1: hand-written backward passes agree with central finite
    differences (h=1e-5) to a relative error of 1e-4 on >= 20 randomized
    instances per layer and for the full training objective, in < 60 s."""

    N = 20
    TOL = 1e-4

    def test_gradient_suite(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        worst = 0.0
        worst_site = ""

        def run(site, loss_fn, arrays, grads):
            nonlocal worst, worst_site
            rep = nc.gradient_check(loss_fn, arrays, grads, tolerance=self.TOL)
            if rep.max_rel_error > worst:
                worst, worst_site = rep.max_rel_error, f"{site}/{rep.worst_name}"

        for i in range(self.N):
            # linear
            store = nc.ParamStore()
            lin = nc.Linear(store, "l", 3, 2, rng)
            x = rng.standard_normal((2, 3))
            store.zero_grad()
            y, cache = lin.forward(x)
            gx = lin.backward(np.ones_like(y), cache)
            run("linear", lambda: float(lin.forward(x)[0].sum()),
                dict(store.params, x=x), dict(store.grads, x=gx))

            # activations and the dropout-off (eval) path
            z = rng.standard_normal((2, 3))
            for name, f, fb in (
                ("relu", nc.relu, nc.relu_backward),
                ("sigmoid", nc.sigmoid, nc.sigmoid_backward),
                ("tanh", nc.tanh, nc.tanh_backward),
            ):
                out, c = f(z)
                gz = fb(np.ones_like(out), c)
                run(name, lambda f=f: float(f(z)[0].sum()), {"z": z}, {"z": gz})
            out, mask = nc.dropout(z, 0.4, train=False, rng=None)
            gz = nc.dropout_backward(np.ones_like(out), mask)
            run("dropout-off", lambda: float(nc.dropout(z, 0.4, False, None)[0].sum()), {"z": z}, {"z": gz})

            # LSTM stack
            store = nc.ParamStore()
            stack = nc.LSTMStack(store, "s", 3, 4, 2, rng)
            x = rng.standard_normal((2, 4, 3))
            store.zero_grad()
            h, cache = stack.forward(x)
            gx = stack.backward(np.ones_like(h), cache)
            run("lstm", lambda: float(stack.forward(x)[0].sum()),
                dict(store.params, x=x), dict(store.grads, x=gx))

            # attention
            store = nc.ParamStore()
            attn = nc.MultiheadSelfAttention(store, "a", 4, 2, rng)
            x = rng.standard_normal((2, 3, 4))
            store.zero_grad()
            y, cache = attn.forward(x)
            gx = attn.backward(np.ones_like(y), cache)
            run("attention", lambda: float(attn.forward(x)[0].sum()),
                dict(store.params, x=x), dict(store.grads, x=gx))

            # NODE block
            store = nc.ParamStore()
            node = nc.NodeBlock(store, "n", 3, 2, rng)
            x = rng.standard_normal((2, 3))
            store.zero_grad()
            y, cache = node.forward(x)
            gx = node.backward(np.ones_like(y), cache)
            run("node", lambda: float(node.forward(x)[0].sum()),
                dict(store.params, x=x), dict(store.grads, x=gx))

            # batchnorm, training path (batch statistics)
            store = nc.ParamStore()
            bn = nc.BatchNorm1d(store, "b", 3)
            x = rng.standard_normal((4, 3))
            store.zero_grad()
            y, cache = bn.forward(x, train=True)
            gx = bn.backward(np.ones_like(y), cache)
            run("batchnorm", lambda: float(bn.forward(x, train=True)[0].sum()),
                dict(store.params, x=x), dict(store.grads, x=gx))

            # full objective: both MSE streams plus the weighted MMD term,
            # with the kernel bandwidth pinned (it is held constant in backward)
            cfg = ModelConfig(input_dim=3, seq_len=3, hidden=4, lstm_layers=2, heads=2,
                              node_steps=2, predictor_dims=(4, 3, 1), dropout=0.0)
            # zero-initialized biases put whole rows exactly on the ReLU kink
            # (a dead block zeroes its output, and batchnorm preserves the
            # zero), where central differences measure the average of the two
            # one-sided slopes instead of the subgradient; jitter all
            # parameters and resample until every ReLU input clears the kink
            for attempt in range(50):
                m = init_model(cfg, 1000 + 100 * i + attempt)
                jitter = np.random.default_rng(attempt)
                for p in m.store.params.values():
                    p += 0.05 * jitter.standard_normal(p.shape)
                xs = rng.standard_normal((3, 3, 3))
                ys = rng.random((3, 1))
                xt = rng.standard_normal((3, 3, 3))
                yt = rng.random((3, 1))
                margin = math.inf
                orig_relu = nc.relu

                def spy(x):
                    nonlocal margin
                    margin = min(margin, float(np.abs(x).min()))
                    return orig_relu(x)

                nc.relu = spy
                try:
                    m.forward(xs)
                    m.forward(xt)
                finally:
                    nc.relu = orig_relu
                if margin > 1e-3:
                    break
            total_loss(m, xs, ys, xt, yt, 0.7, train=False, bandwidth=1.3)

            def objective():
                ysp, _, fs, _ = m.forward(xs)
                _, ytp, ft, _ = m.forward(xt)
                a, _ = _mse_and_grad(ysp, ys)
                b, _ = _mse_and_grad(ytp, yt)
                c, _, _ = mmd_loss(fs, ft, bandwidth=1.3)
                return a + b + 0.7 * c

            run("total_loss", objective, m.store.params, m.store.grads)

        wall = time.perf_counter() - t0
        ok = worst <= self.TOL and wall < 60.0
        _verdict("gradient suite", ok,
                 f"{self.N} instances/site, max rel err {worst:.3e} at {worst_site}, {wall:.1f}s")


class TestNodeOrder:
    """Criterion 2: the fixed-step RK4 solver is 4th-order accurate; the
    2-step solution of h' = h over [0,1] matches the closed-form discrete
    map and halving the step size shrinks the error ~16x."""

    def _solve(self, steps):
        store = nc.ParamStore()
        node = nc.NodeBlock(store, "n", 1, steps, np.random.default_rng(0))
        node.W[...] = 1.0
        node.b[...] = 0.0
        return float(node.forward(np.array([[1.0]]))[0][0, 0])

    def test_node_order(self):
        v2 = self._solve(2)
        # one RK4 step of size 1/2 multiplies by 1 + h + h^2/2 + h^3/6 + h^4/24
        g = 1 + 0.5 + 0.5**2 / 2 + 0.5**3 / 6 + 0.5**4 / 24
        assert v2 == pytest.approx(g * g, abs=1e-15)
        err2 = abs(v2 - math.e)
        err4 = abs(self._solve(4) - math.e)
        ratio = err2 / err4
        ok = err2 < 1e-3 and 12.0 <= ratio <= 20.0
        _verdict("NODE 4th-order convergence", ok,
                 f"2-step value {v2:.10f}, err {err2:.3e}, halving ratio {ratio:.2f}")


class TestMMDProperties:
    """Criterion 3: identical sets give exactly 0; the measure is symmetric,
    nonnegative, and matches the closed form for a single pair at
    squared distance 2*sigma^2."""

    def test_mmd_properties(self):
        rng = np.random.default_rng(7)
        zero_ok = all(abs(mmd_loss(f, f.copy())[0]) < 1e-12
                      for f in (rng.standard_normal((5, 3)) for _ in range(20)))

        fs = np.array([[0.0, 0.0]])
        ft = np.array([[math.sqrt(2.0), 0.0]])  # ||delta||^2 = 2 = 2*sigma^2 at sigma=1
        single, _, _ = mmd_loss(fs, ft, bandwidth=1.0)
        closed = 2.0 - 2.0 * math.exp(-1.0)
        single_ok = abs(single - closed) < 1e-12

        sym_ok = nonneg_ok = True
        min_v = math.inf
        for _ in range(1000):
            a = rng.standard_normal((rng.integers(1, 6), 3))
            b = rng.standard_normal((rng.integers(1, 6), 3))
            v1, _, _ = mmd_loss(a, b, bandwidth=1.0)
            v2, _, _ = mmd_loss(b, a, bandwidth=1.0)
            sym_ok &= abs(v1 - v2) < 1e-12
            nonneg_ok &= v1 >= -1e-12
            min_v = min(min_v, v1)

        ok = zero_ok and single_ok and sym_ok and nonneg_ok
        _verdict("MMD properties", ok,
                 f"zero={zero_ok}, single-pair {single:.10f} vs {closed:.10f}, "
                 f"symmetric={sym_ok}, min over 1000 pairs {min_v:.3e}")


class TestLambdaSchedule:
    """Criterion 4: the MMD weight ramp hits its closed-form values at the
    start, middle, and end of training."""

    def test_lambda_schedule(self):
        vals = [lambda_schedule(e, 10) for e in (0, 5, 10)]
        expect = [0.0, 0.9866142981, 0.9999092043]
        errs = [abs(v - e) for v, e in zip(vals, expect)]
        ok = all(e <= 1e-9 for e in errs)
        _verdict("lambda schedule", ok, f"values {vals}, max err {max(errs):.2e}")


class TestPipelineShape:
    """Criterion 5: a 40-cell synthetic corpus yields an N x 10 x 3 x 6
    feature tensor and each cell contributes exactly cycle_life - 29 windows."""

    def test_pipeline_shape(self):
        cells = _corpus(40, 4000, 1.0, [80 + 2 * k for k in range(40)], noise=0.02)
        counts_ok = True
        all_windows = []
        for cell in cells:
            life = compute_cycle_life(cell, 0.8)
            w = build_sample_windows(cell, life)
            counts_ok &= len(w) == life.cycle_life - 29
            all_windows.extend(w)
        x, y = windows_to_arrays(all_windows)
        n = len(all_windows)
        tensor = np.stack([w.features for w in all_windows])
        shape_ok = tensor.shape == (n, 10, 3, 6) and x.shape == (n, 10, 18) and y.shape == (n, 1)
        ok = counts_ok and shape_ok and n > 0
        _verdict("pipeline shape contract", ok,
                 f"40 cells, {n} windows, tensor {tensor.shape}, per-cell count rule {counts_ok}")


@pytest.mark.slow
class TestMedianFilterBenefit:
    """Criterion 6: on a spiky corpus, training on median-filtered features
    beats training on raw features (validation RMSE, best epoch, mean of a
    3-run ensemble) on at least 7 of 10 seeds, within 15 minutes."""

    def test_median_filter_benefit(self):
        t0 = time.perf_counter()
        cells = _corpus(10, 900, 1.0, [100 + 8 * k for k in range(10)], noise=0.02, spike=2)
        w5 = _windows(cells, kernel=5)
        w1 = _windows(cells, kernel=1)
        cfg = TrainConfig(epochs=50, batch_size=64, runs=1, mode="hybridonet", model=SMALL_MODEL)

        def arm(windows, s):
            return float(np.mean([train_run([], windows, cfg, s * 100 + j)[1].best_val_rmse
                                  for j in range(3)]))

        results = [(arm(w5, s), arm(w1, s)) for s in range(10)]
        wins = sum(f <= r for f, r in results)
        wall = time.perf_counter() - t0
        ok = wins >= 7 and wall < 900.0
        _verdict("median-filter benefit", ok,
                 f"filtered <= raw on {wins}/10 seeds, "
                 f"mean gap {np.mean([r - f for f, r in results]):+.3f} cycles, {wall:.0f}s")


@pytest.mark.slow
class TestDomainAdaptationBenefit:
    """Criterion 7: with a source family (knee beta 1.2) and a shifted
    8-cell target family (beta 2.0), the adaptive mode's test RMSE beats the
    target-only mode on at least 7 of 10 seeds under identical budgets,
    within 30 minutes. Only the ordering is asserted."""

    def test_domain_adaptation_benefit(self):
        t0 = time.perf_counter()
        src = _windows(_corpus(16, 500, 1.2, [90 + 4 * k for k in range(16)], noise=0.04))
        tgt = _windows(_corpus(8, 700, 2.0, [90, 96, 102, 108, 114, 120, 126, 130], noise=0.04))
        test = _windows(_corpus(6, 800, 2.0, [92, 100, 109, 117, 124, 128], noise=0.04))
        obs = np.array([w.rul_label for w in test], dtype=np.float64)

        def arm(mode, s):
            cfg = TrainConfig(epochs=10, batch_size=64, runs=1, mode=mode, model=SMALL_MODEL)
            members = [train_run(src if mode == "hybridonet_adapt" else [], tgt, cfg, s * 100 + j)[0]
                       for j in range(3)]
            preds = Ensemble(members).predict(test)
            return float(np.sqrt(np.mean((preds - obs) ** 2)))

        results = [(arm("hybridonet_adapt", s), arm("hybridonet", s)) for s in range(10)]
        wins = sum(a <= p for a, p in results)
        wall = time.perf_counter() - t0
        ok = wins >= 7 and wall < 1800.0
        _verdict("domain-adaptation benefit", ok,
                 f"adapt <= target-only on {wins}/10 seeds, "
                 f"mean gap {np.mean([p - a for a, p in results]):+.3f} cycles, {wall:.0f}s")


class TestDeterminismPersistence:
    """Criterion 8: identical (data, config, seed) reproduces per-step losses
    bitwise; checkpoints round-trip bit-exactly; an ensemble of one equals
    its single member."""

    def test_determinism_and_persistence(self, tmp_path):
        tgt = _windows(_corpus(3, 60, 1.0, [95, 105, 115], noise=0.03))
        src = _windows(_corpus(3, 70, 1.2, [95, 105, 115], noise=0.03))
        cfg = TrainConfig(epochs=3, batch_size=64, runs=1, model=SMALL_MODEL)

        m1, r1 = train_run(src, tgt, cfg, seed=5)
        m2, r2 = train_run(src, tgt, cfg, seed=5)
        bitwise = r1.epochs == r2.epochs and all(
            np.array_equal(m1.store.params[k], m2.store.params[k]) for k in m1.store.params
        )

        path = save_checkpoint(m1, tmp_path / "m.ckpt")
        back = load_checkpoint(path)
        roundtrip = all(np.array_equal(back.store.params[k], m1.store.params[k]) for k in m1.store.params)
        roundtrip &= all(np.array_equal(back.store.state[k], m1.store.state[k]) for k in m1.store.state)

        ens, _ = train_ensemble(src, tgt, dataclasses.replace(cfg, seed=5), tmp_path / "ens")
        probe = tgt[:8]
        single = np.array_equal(ens.predict(probe), predict_rul(ens.members[0], probe))

        ok = bitwise and roundtrip and single
        _verdict("determinism and persistence", ok,
                 f"bitwise rerun={bitwise}, checkpoint roundtrip={roundtrip}, ensemble-of-1={single}")


class TestFullReproduction:
    """Extended criterion (excluded from CI): with converted real-cycler data
    and the default protocol, mean test metrics should land within 20% of
    RMSE 153.24 / R^2 0.88 / MAPE 7.30. Hours-scale; set
    HYBRIDONET_REAL_DATA to a directory holding source/, target_train/,
    and target_test/ canonical cell directories to enable."""

    def test_full_reproduction(self):
        root = os.environ.get("HYBRIDONET_REAL_DATA")
        if not root:
            pytest.skip("set HYBRIDONET_REAL_DATA to run the hours-scale reproduction")
        from pathlib import Path

        from hybridonet import load_cell
        from hybridonet.evaluate import evaluate_cells

        def cells(sub):
            return [load_cell(d) for d in sorted((Path(root) / sub).iterdir()) if d.is_dir()]

        src = _windows(cells("source"))
        tgt = _windows(cells("target_train"))
        cfg = TrainConfig()  # protocol defaults: 10 epochs, batch 128, 10 runs
        ens, _ = train_ensemble(src, tgt, cfg)
        report = evaluate_cells(ens, cells("target_test"))
        agg = report.aggregate
        ok = (abs(agg["rmse_cycles"] - 153.24) <= 0.2 * 153.24
              and agg["r2"] is not None and abs(agg["r2"] - 0.88) <= 0.2 * 0.88
              and abs(agg["mape_percent"] - 7.30) <= 0.2 * 7.30)
        _verdict("full reproduction", ok, str(agg))
