"""Command-line surface: synth, preprocess, train, evaluate, predict,
export-embeddings.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
Flags override values from an optional JSON config file.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cycle_data import DataError, SynthParams, compute_cycle_life, generate_synthetic_cell, load_cell, write_cell
from .evaluate import evaluate_cells, export_embeddings, export_traces
from .model import ModelConfig, predict_rul
from .preprocess import build_sample_windows, fit_minmax_scaler, windows_to_arrays
from .trainer import NumericalError, TrainConfig, load_checkpoint, load_ensemble, train_ensemble


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    p = _Parser(prog="hybridonet", description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("synth", help="generate deterministic synthetic cells",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--cells", type=int, required=True, help="number of cells to generate")
    sp.add_argument("--seed", type=int, default=0, help="base seed; cell k uses seed+k")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--cycle-life-min", type=int, default=150)
    sp.add_argument("--cycle-life-max", type=int, default=300)
    sp.add_argument("--beta", type=float, default=1.0, help="knee sharpness of the fade curve")
    sp.add_argument("--noise", type=float, default=0.05, help="relative noise amplitude")
    sp.add_argument("--samples-per-cycle", type=int, default=24)

    pp = sub.add_parser("preprocess", help="build windows and fit the min-max scaler",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    pp.add_argument("--data", required=True, help="directory of canonical cell directories")
    pp.add_argument("--out", required=True, help="output .npz (scaler JSON written alongside)")
    pp.add_argument("--kernel", type=int, default=5, help="median filter kernel (odd)")
    pp.add_argument("--eol-threshold", type=float, default=0.8, help="EOL capacity fraction")

    tp = sub.add_parser("train", help="train an ensemble", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    tp.add_argument("--mode", choices=["hybridonet", "adapt"], default="adapt")
    tp.add_argument("--source", help="source-domain cell directory (required for adapt)")
    tp.add_argument("--target", required=True, help="target-domain cell directory")
    tp.add_argument("--config", help="JSON config file (model + training knobs)")
    tp.add_argument("--out", required=True, help="output directory for checkpoints")
    tp.add_argument("--kernel", type=int, default=5)
    tp.add_argument("--eol-threshold", type=float, default=0.8)
    tp.add_argument("--epochs", type=int, default=None)
    tp.add_argument("--runs", type=int, default=None)
    tp.add_argument("--seed", type=int, default=None)
    tp.add_argument("--batch-size", type=int, default=None)
    tp.add_argument("--learning-rate", type=float, default=None)

    ep = sub.add_parser("evaluate", help="evaluate a trained ensemble",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ep.add_argument("--model", required=True, help="ensemble directory or checkpoint file")
    ep.add_argument("--data", required=True, help="directory of cells to evaluate")
    ep.add_argument("--out", required=True, help="report JSON path")
    ep.add_argument("--traces", help="optional prediction-trace CSV path")
    ep.add_argument("--kernel", type=int, default=5)
    ep.add_argument("--eol-threshold", type=float, default=0.8)

    rp = sub.add_parser("predict", help="print per-anchor RUL for one cell",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    rp.add_argument("--model", required=True)
    rp.add_argument("--cell", required=True, help="canonical cell directory")
    rp.add_argument("--kernel", type=int, default=5)
    rp.add_argument("--eol-threshold", type=float, default=0.8)

    xp = sub.add_parser("export-embeddings", help="dump feature-extractor outputs to CSV",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    xp.add_argument("--model", required=True)
    xp.add_argument("--data", required=True)
    xp.add_argument("--out", required=True)
    xp.add_argument("--domain", default="target", choices=["source", "target"])
    xp.add_argument("--kernel", type=int, default=5)
    xp.add_argument("--eol-threshold", type=float, default=0.8)
    return p


def _load_cells(root):
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    dirs = sorted(d for d in root.iterdir() if d.is_dir() and (d / "meta.json").is_file())
    if not dirs:
        raise DataError(f"{root}: no canonical cell directories found")
    return [load_cell(d) for d in dirs]


def _windows_for(cells, kernel, eol_threshold):
    windows = []
    for cell in cells:
        life = compute_cycle_life(cell, eol_threshold)
        windows.extend(build_sample_windows(cell, life, kernel))
    if not windows:
        raise DataError("no sample windows could be built (cells too short?)")
    return windows


def _load_predictor(path):
    path = Path(path)
    if path.is_dir():
        return load_ensemble(path)
    return load_checkpoint(path)


def _train_config(args):
    base = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
    overrides = {
        "epochs": args.epochs,
        "runs": args.runs,
        "seed": args.seed,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    base["mode"] = "hybridonet_adapt" if args.mode == "adapt" else "hybridonet"
    if "model" in base and isinstance(base["model"], dict):
        base["model"] = ModelConfig(**{**base["model"], "predictor_dims": tuple(base["model"].get("predictor_dims", (128, 64, 32, 1)))})
    return TrainConfig(**base)


def _cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.cells):
        rng = np.random.Generator(np.random.Philox(key=[args.seed, k]))
        life = int(rng.integers(args.cycle_life_min, args.cycle_life_max + 1))
        params = SynthParams(
            cycle_life_target=life,
            knee_beta=args.beta,
            noise_level=args.noise,
            samples_per_cycle=args.samples_per_cycle,
        )
        cell = generate_synthetic_cell(args.seed + k, params, cell_id=f"synth-{args.seed}-{k:03d}")
        write_cell(cell, out / f"cell_{k:03d}")
    print(f"wrote {args.cells} cells to {out}")
    return 0


def _cmd_preprocess(args):
    cells = _load_cells(args.data)
    windows = _windows_for(cells, args.kernel, args.eol_threshold)
    scaler = fit_minmax_scaler(windows)
    x, y = windows_to_arrays(windows)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        out,
        features=x.reshape(len(windows), 10, 3, 6),
        rul_cycles=y[:, 0],
        anchors=np.array([w.anchor_cycle for w in windows]),
        cell_ids=np.array([w.cell_id for w in windows]),
    )
    scaler_path = Path(str(out) + ".scaler.json")
    scaler_path.write_text(scaler.to_json() + "\n", encoding="utf-8")
    print(f"wrote {len(windows)} windows to {out} and scaler to {scaler_path}")
    return 0


def _cmd_train(args):
    if args.mode == "adapt" and not args.source:
        raise UsageError("--source is required when --mode adapt")
    config = _train_config(args)
    target_windows = _windows_for(_load_cells(args.target), args.kernel, args.eol_threshold)
    source_windows = []
    if args.mode == "adapt":
        source_windows = _windows_for(_load_cells(args.source), args.kernel, args.eol_threshold)
    _, reports = train_ensemble(source_windows, target_windows, config, args.out)
    best = min(r.best_val_rmse for r in reports)
    print(f"trained {len(reports)} run(s); best validation RMSE {best:.2f} cycles; artifacts in {args.out}")
    return 0


def _cmd_evaluate(args):
    predictor = _load_predictor(args.model)
    cells = _load_cells(args.data)
    report = evaluate_cells(predictor, cells, args.kernel, args.eol_threshold)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    if args.traces:
        export_traces(report, args.traces)
    agg = report.aggregate
    if agg:
        r2 = "n/a" if agg["r2"] is None else f"{agg['r2']:.3f}"
        print(f"RMSE {agg['rmse_cycles']:.2f} cycles, R2 {r2}, MAPE {agg['mape_percent']:.2f}% over {agg['n_cells']} cells")
    return 0


def _cmd_predict(args):
    predictor = _load_predictor(args.model)
    cell = load_cell(args.cell)
    life = compute_cycle_life(cell, args.eol_threshold)
    windows = build_sample_windows(cell, life, args.kernel)
    if not windows:
        raise DataError(f"{cell.cell_id}: no windows (needs >= 30 labeled cycles)")
    preds = predictor.predict(windows) if hasattr(predictor, "predict") else predict_rul(predictor, windows)
    print("anchor_cycle,predicted_rul_cycles")
    for w, p in zip(windows, preds):
        print(f"{w.anchor_cycle},{p:.1f}")
    return 0


def _cmd_export_embeddings(args):
    predictor = _load_predictor(args.model)
    model = predictor.members[0] if hasattr(predictor, "members") else predictor
    cells = _load_cells(args.data)
    windows = _windows_for(cells, args.kernel, args.eol_threshold)
    export_embeddings(model, windows, model.scaler, args.out, domain=args.domain)
    print(f"wrote {len(windows)} embedding rows to {args.out}")
    return 0


COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "export-embeddings": _cmd_export_embeddings,
}


def run_cli(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
