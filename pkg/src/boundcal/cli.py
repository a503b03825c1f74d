"""File-to-file command line front end.

Exit codes: 0 success, 1 I/O failure, 2 usage or validation error,
3 risk cannot be controlled with the given calibration set.

Every subcommand writes a JSON run manifest next to its main output.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    SCALINGS,
    CalibrationResult,
    LambdaGrid,
    apply_calibration,
    calibrate,
)
from .core import BoundPair, RiskConfig, validate_mask
from .errors import BoundcalError, CannotControlRisk, IoFailure
from .metrics import error_heatmap, evaluate, size_heatmap, write_strata_csv
from .qr_trainer import TrainConfig, init_model, predict_bounds, train
from .sample_bounds import bounds_from_samples
from .synth import dataset_variations, gen_bimodal, gen_hetero_gauss
from .tensor_io import read_model, read_npy, write_model, write_npy, write_pgm

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2, 3
TASKS = {"hetero-gauss": gen_hetero_gauss, "bimodal": gen_bimodal}


class UsageError(Exception):
    pass


def _stack(a: np.ndarray, name: str) -> np.ndarray:
    if a.ndim == 3:
        return a[None]
    if a.ndim != 4:
        raise UsageError(f"{name} must have shape (C,H,W) or (n,C,H,W), got {a.shape}")
    return a


def _write_manifest(path: Path, args, inputs: dict, outputs: dict) -> None:
    params = {k: (str(v) if isinstance(v, Path) else v)
              for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    doc = {
        "subcommand": args.command,
        "parameters": params,
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "outputs": {k: str(v) for k, v in outputs.items() if v is not None},
        "seed": getattr(args, "seed", None),
        "version": __version__,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _load_bounds(lo_path, hi_path) -> tuple[BoundPair, bool]:
    lo, hi = read_npy(lo_path), read_npy(hi_path)
    single = lo.ndim == 3
    return BoundPair(_stack(lo, "lo"), _stack(hi, "hi")), single


def _load_mask(path):
    if path is None:
        return None
    return validate_mask(read_npy(path))


# ------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    ds = TASKS[args.task](args.n, args.height, args.width, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, arr in ds.arrays().items():
        write_npy(out / f"{name}.npy", arr)
        written[name] = out / f"{name}.npy"
    if args.variations:
        write_npy(out / "samples.npy", dataset_variations(ds, args.variations))
        written["samples"] = out / "samples.npy"
    _write_manifest(out / "manifest.json", args, {}, written)
    return EXIT_OK


def cmd_bounds(args) -> int:
    if not (0 < args.q_lo < args.q_hi < 1):
        raise UsageError(f"need 0 < q-lo < q-hi < 1, got {args.q_lo}, {args.q_hi}")
    s = read_npy(args.samples)
    if s.ndim not in (4, 5):
        raise UsageError(f"samples must be rank 4 (J,C,H,W) or 5 (n,J,C,H,W), got {s.shape}")
    pair = bounds_from_samples(s, RiskConfig(q_lo=args.q_lo, q_hi=args.q_hi))
    write_npy(args.out_lo, pair.lower)
    write_npy(args.out_hi, pair.upper)
    _write_manifest(_manifest_path(Path(args.out_lo)), args, {"samples": args.samples},
                    {"lo": args.out_lo, "hi": args.out_hi})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    bounds, _ = _load_bounds(args.lo, args.hi)
    y = _stack(read_npy(args.target), "target")
    result = calibrate(
        bounds, y, _load_mask(args.mask),
        cfg=RiskConfig(alpha=args.alpha, delta=args.delta),
        grid=LambdaGrid(args.grid_min, args.grid_max, args.grid_step),
        mode=args.scaling,
    )
    result.save(args.out)
    _write_manifest(_manifest_path(Path(args.out)), args,
                    {"lo": args.lo, "hi": args.hi, "target": args.target, "mask": args.mask},
                    {"calib": args.out})
    return EXIT_OK


def cmd_apply(args) -> int:
    try:
        result = CalibrationResult.load(args.calib)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad calibration file {args.calib}: {exc!r}") from exc
    bounds, single = _load_bounds(args.lo, args.hi)
    out = apply_calibration(bounds, result)
    lo, hi = (out.lower[0], out.upper[0]) if single else (out.lower, out.upper)
    write_npy(args.out_lo, lo)
    write_npy(args.out_hi, hi)
    _write_manifest(_manifest_path(Path(args.out_lo)), args,
                    {"lo": args.lo, "hi": args.hi, "calib": args.calib},
                    {"lo": args.out_lo, "hi": args.out_hi})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bounds, _ = _load_bounds(args.lo, args.hi)
    y = _stack(read_npy(args.target), "target")
    mask = _load_mask(args.mask)
    report = evaluate(bounds, y, mask)
    report.save(args.out_json)
    outputs = {"metrics": args.out_json}
    if args.out_strat:
        write_strata_csv(args.out_strat, report.stratified)
        outputs["strat"] = args.out_strat
    if args.heatmap_dir:
        hdir = Path(args.heatmap_dir)
        hdir.mkdir(parents=True, exist_ok=True)
        for i in range(len(bounds)):
            m = None if mask is None else (mask if mask.ndim == 2 else mask[i])
            write_pgm(hdir / f"error_{i:04d}.pgm", error_heatmap(bounds[i], y[i], m))
            write_pgm(hdir / f"size_{i:04d}.pgm", size_heatmap(bounds[i], m))
        outputs["heatmaps"] = hdir
    _write_manifest(_manifest_path(Path(args.out_json)), args,
                    {"lo": args.lo, "hi": args.hi, "target": args.target, "mask": args.mask},
                    outputs)
    return EXIT_OK


def cmd_train(args) -> int:
    x = _stack(read_npy(args.x), "x")
    if args.mode == "qr":
        if args.y is None:
            raise UsageError("qr mode needs --y")
        targets = _stack(read_npy(args.y), "y")
    else:
        if args.target_lo is None or args.target_hi is None:
            raise UsageError("approx mode needs --target-lo and --target-hi")
        targets, _ = _load_bounds(args.target_lo, args.target_hi)
    cfg = TrainConfig(mode=args.mode, lr=args.lr, epochs=args.epochs, batch=args.batch,
                      seed=args.seed, mse_weight=args.mse_weight,
                      risk=RiskConfig(alpha=args.alpha))
    model = init_model(args.k, args.hidden, x.shape[1], args.seed)
    model, history = train(model, x, targets, cfg)
    out = Path(args.out)
    write_model(out, model)
    hist_path = Path(args.history) if args.history else out.with_name("history.csv")
    names = list(history)
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch"] + names)
        for e in range(cfg.epochs):
            w.writerow([e + 1] + [repr(history[n][e]) for n in names])
    _write_manifest(_manifest_path(out), args,
                    {"x": args.x, "y": args.y, "target_lo": args.target_lo,
                     "target_hi": args.target_hi},
                    {"model": out, "history": hist_path})
    return EXIT_OK


def cmd_predict(args) -> int:
    model = read_model(args.model)
    x = read_npy(args.x)
    single = x.ndim == 3
    x = _stack(x, "x")
    if x.shape[1] != model.channels:
        raise UsageError(f"model expects {model.channels} channels, input has {x.shape[1]}")
    pair = predict_bounds(model, x)
    lo, hi = (pair.lower[0], pair.upper[0]) if single else (pair.lower, pair.upper)
    write_npy(args.out_lo, lo)
    write_npy(args.out_hi, hi)
    _write_manifest(_manifest_path(Path(args.out_lo)), args,
                    {"model": args.model, "x": args.x}, {"lo": args.out_lo, "hi": args.out_hi})
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boundcal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--task", choices=sorted(TASKS), default="hetero-gauss")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--height", type=int, default=32)
    s.add_argument("--width", type=int, default=32)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--variations", type=int, default=0,
                   help="also write J sampled variations per image to samples.npy")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("bounds", help="per-pixel quantile bounds from sampled variations")
    s.add_argument("--samples", required=True)
    s.add_argument("--q-lo", type=float, default=0.05)
    s.add_argument("--q-hi", type=float, default=0.95)
    s.add_argument("--out-lo", required=True)
    s.add_argument("--out-hi", required=True)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("calibrate", help="select lambda-hat on a calibration split")
    s.add_argument("--lo", required=True)
    s.add_argument("--hi", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--mask")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--grid-min", type=float, default=0.0)
    s.add_argument("--grid-max", type=float, default=10.0)
    s.add_argument("--grid-step", type=float, default=0.01)
    s.add_argument("--scaling", choices=SCALINGS, default="midpoint")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("apply", help="scale bounds by a calibration result")
    s.add_argument("--lo", required=True)
    s.add_argument("--hi", required=True)
    s.add_argument("--calib", required=True)
    s.add_argument("--out-lo", required=True)
    s.add_argument("--out-hi", required=True)
    s.set_defaults(func=cmd_apply)

    s = sub.add_parser("evaluate", help="risk, size, stratified risk and heatmaps")
    s.add_argument("--lo", required=True)
    s.add_argument("--hi", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--mask")
    s.add_argument("--out-json", required=True)
    s.add_argument("--out-strat")
    s.add_argument("--heatmap-dir")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("train", help="fit the patch regressor")
    s.add_argument("--mode", choices=("qr", "approx"), default="qr")
    s.add_argument("--x", required=True)
    s.add_argument("--y")
    s.add_argument("--target-lo")
    s.add_argument("--target-hi")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--batch", type=int, default=256)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--hidden", type=int, default=32)
    s.add_argument("--mse-weight", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.add_argument("--history", help="default: history.csv next to --out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="bounds from a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--x", required=True)
    s.add_argument("--out-lo", required=True)
    s.add_argument("--out-hi", required=True)
    s.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad arguments
    try:
        return args.func(args)
    except CannotControlRisk as exc:
        print(f"boundcal: cannot control risk: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (IoFailure, OSError) as exc:
        print(f"boundcal: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, BoundcalError, ValueError) as exc:
        print(f"boundcal {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
