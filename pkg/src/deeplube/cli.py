"""Command line: train, predict, evaluate, cwc-surface, synth-data, check-gradients."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import dataio, metrics, pipeline
from .config import ConfigError, RunConfig, load_config, parse_value
from .network import DimensionError, NetworkDims, ParameterSet, init_params
from .training import LossConfig, check_gradients, kink_margin, write_history

log = logging.getLogger("deeplube")

OUT_ENV = "DEEPLUBE_OUT"
ARTIFACTS = ("params.json", "predictions.csv", "metrics.json", "loss_history.csv", "config.json")


class CliError(Exception):
    pass


def out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def _int_or_str(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def _widths(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()] if text.strip() else []


# flag -> JSON path; every flag overrides exactly one path
FLAG_PATHS = {
    "data": "data.path",
    "column": "data.column",
    "lags": "data.lags",
    "normalization": "data.normalization",
    "seed": "train.seed",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "hidden": "network.hidden",
    "fc": "network.fc_hidden",
    "target_range": "metrics.target_range",
    "out": "out",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--data", help="input CSV")
    p.add_argument("--column", type=_int_or_str, help="value column (name or index)")
    p.add_argument("--lags", type=int)
    p.add_argument("--normalization", choices=["minmax", "none"])
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--fc", type=_widths, help="hidden fc widths, e.g. 32,16,8")
    p.add_argument("--target-range", type=float, help="A for PINAW/PINRW (default max(y)-min(y))")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override any config path, e.g. loss.lambda=4")


def _resolve_config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError([f"--set {item!r}: expected PATH=VALUE"])
        path, value = item.split("=", 1)
        overrides[path.strip()] = parse_value(value)
    for flag, path in FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[path] = value
    return load_config(args.config, overrides)


def _config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(cfg.to_json().encode()).hexdigest()[:10]


def _report_json(report: metrics.MetricReport, cfg: RunConfig, A: float, n: int) -> str:
    doc = report.to_dict()
    doc["config"] = {
        "cwc": cfg.cwc.model_dump(),
        "target_range": A,
        "normalized_units": cfg.metrics.normalized_units,
        "n": n,
    }
    return json.dumps(doc, indent=2) + "\n"


def _publish(staging: Path, out: Path) -> None:
    """Move a finished staging directory into place."""
    if out.exists():
        existing = {p.name for p in out.iterdir()}
        if existing and not existing <= set(ARTIFACTS):
            raise CliError(f"{out} exists and holds files that are not run artifacts; refusing to overwrite")
        for name in existing:
            (out / name).unlink()
        out.rmdir()
    os.replace(staging, out)


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out) if cfg.out else out_root() / f"train-{_config_digest(cfg)}"
    data = pipeline.prepare_data(cfg)
    outcome = pipeline.run_training(cfg, data)

    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".partial-", dir=out.parent))
    try:
        outcome.params.save(staging / "params.json")
        metrics.write_predictions(staging / "predictions.csv", *outcome.predictions)
        A = metrics.EvaluationSet(*outcome.predictions[1:], cfg.metrics.target_range).A
        (staging / "metrics.json").write_text(_report_json(outcome.report, cfg, A, len(outcome.predictions[0])))
        write_history(outcome.history, staging / "loss_history.csv")
        (staging / "config.json").write_text(cfg.to_json())
        if ParameterSet.load(staging / "params.json").to_dict() != outcome.params.to_dict():
            raise CliError("parameter file failed round-trip validation")
        _publish(staging, out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    r = outcome.report
    print(f"wrote {out}")
    print(f"train time {outcome.elapsed:.3f} s; test PICP {100 * r.picp:.2f}% PINAW {r.pinaw:.4f} "
          f"PINRW {r.pinrw:.4f} NAD {r.nad:.4f} CWC {r.cwc_proposed:.4f}")
    return 0


def cmd_predict(args) -> int:
    cfg = _resolve_config(args)
    if not args.params:
        raise CliError("--params is required")
    params = ParameterSet.load(args.params)
    pipeline.check_dims(params, cfg)
    data = pipeline.prepare_data(cfg)
    ds = {"train": data.train, "test": data.test}
    if args.subset == "all":
        parts = [data.train, data.test]
        rows = [pipeline.predict_rows(params, d, cfg.metrics.normalized_units) for d in parts]
        rows = tuple(np.concatenate(c) for c in zip(*rows))
    else:
        rows = pipeline.predict_rows(params, ds[args.subset], cfg.metrics.normalized_units)
    out = Path(cfg.out) if cfg.out else out_root()
    out.mkdir(parents=True, exist_ok=True)
    target = out / (args.filename or f"predictions_{args.subset}.csv")
    metrics.write_predictions(target, *rows)
    print(f"wrote {target} ({len(rows[0])} rows)")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    _, y, L, U = metrics.read_predictions(args.predictions)
    es = metrics.EvaluationSet(y, L, U, cfg.metrics.target_range)
    report = metrics.evaluate(es, cfg.cwc)
    text = _report_json(report, cfg, es.A, es.n)
    sys.stdout.write(text)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(text)
    return 0


def _grid(spec: str) -> np.ndarray:
    try:
        lo, hi, n = spec.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise CliError(f"grid {spec!r}: expected START:STOP:COUNT") from None


def cmd_cwc_surface(args) -> int:
    cfg = _resolve_config(args)
    rows = metrics.cwc_surface(cfg.cwc, args.variant, _grid(args.picp), _grid(args.pinaw))
    out = Path(cfg.out) if cfg.out else out_root()
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"cwc_surface_{args.variant}.csv"
    metrics.write_surface(target, rows)
    print(f"wrote {target} ({len(rows)} rows)")
    return 0


def cmd_synth(args) -> int:
    series = dataio.synth_series(args.kind, args.length, args.noise, args.seed, args.period)
    out = Path(args.out) if args.out else out_root()
    out.mkdir(parents=True, exist_ok=True)
    target = out / args.filename
    dataio.write_series(series, target)
    print(f"wrote {target} ({len(series)} rows)")
    return 0


def cmd_check_gradients(args) -> int:
    dims = NetworkDims(hidden=args.hidden, fc_hidden=tuple(args.fc))
    rng = np.random.default_rng(args.seed)
    params = init_params(dims, args.seed)
    while True:
        x = rng.uniform(0.0, 1.0, args.lags)
        y = float(rng.uniform(0.0, 1.0))
        if kink_margin(params, x, y) > args.step:
            break
    dtype = np.longdouble if args.precision == "extended" else np.float64
    report = check_gradients(params, x, y, LossConfig(), args.step, args.tolerance, dtype=dtype)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deeplube", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write run artifacts")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write ranked intervals for a data split")
    _add_config_flags(p)
    p.add_argument("--params", required=True)
    p.add_argument("--subset", choices=["train", "test", "all"], default="test")
    p.add_argument("--filename", help="default predictions_<subset>.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="interval metrics for an index,y,L,U file")
    p.add_argument("predictions")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cwc-surface", help="tabulate a CWC variant over a PICP x PINAW grid")
    _add_config_flags(p)
    p.add_argument("--variant", choices=["original", "proposed"], default="proposed")
    p.add_argument("--picp", default="0.5:1.0:101", help="START:STOP:COUNT")
    p.add_argument("--pinaw", default="0:0.5:101", help="START:STOP:COUNT")
    p.set_defaults(func=cmd_cwc_surface)

    p = sub.add_parser("synth-data", help="write a noisy sinusoid as CSV")
    p.add_argument("--kind", choices=["sine-uniform", "sine-gaussian"], default="sine-uniform")
    p.add_argument("--length", type=int, default=1008)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--period", type=int, default=dataio.POINTS_PER_DAY)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.add_argument("--filename", default="series.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("check-gradients", help="compare analytic gradients with central differences")
    p.add_argument("--hidden", type=int, default=3)
    p.add_argument("--lags", type=int, default=3)
    p.add_argument("--fc", type=_widths, default=[4])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--precision", choices=["extended", "double"], default="extended")
    p.set_defaults(func=cmd_check_gradients)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CliError, dataio.DataError, DimensionError, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
