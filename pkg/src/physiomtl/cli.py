"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Set ``PHYSIOMTL_LOG`` (e.g. ``INFO``, ``DEBUG``) to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import (
    DegenerateFit,
    DivergedSolve,
    IngestError,
    InsufficientData,
    InvalidInput,
    NumericalFailure,
)
from .harness import (
    METHOD_NAMES,
    TRAIN_FRACTIONS,
    counterfactual_sweep,
    divergence_sweep,
    make_method,
    run_split_experiment,
    sweep_slopes,
)
from .mmash import ingest_mmash
from .synth import SynthConfig, generate_tasks
from .trainer import FitConfig, PhysioMtlModel, fit, predict_unseen

logger = logging.getLogger("physiomtl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config_file(path) -> dict:
    """Read a JSON object or flat ``key=value`` lines (``#`` starts a comment)."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return dict(data)
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInput(f"{path}: line {n}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value.strip())
    return out


def _fit_config(args, file_values: dict | None = None) -> FitConfig:
    values = dict(file_values or {})
    for key in ("alpha", "gamma", "sigma", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "map", None) is not None:
        values["map_kind"] = args.map
    if "m" in values and values["m"] is not None:
        values["m"] = tuple(values["m"])
    return FitConfig.from_dict(values)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise UsageError(f"invalid grid {text!r}")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"invalid grid {text!r}") from None


def _fractions(values) -> list[float]:
    if not values:
        return list(TRAIN_FRACTIONS)
    out = []
    for v in values:
        out.extend(float(x) for x in str(v).split(",") if x.strip())
    return out


def cmd_ingest_mmash(args) -> int:
    root = Path(args.root)
    if not root.exists():
        raise IngestError("MMASH root does not exist", path=str(root))
    result = ingest_mmash(root, exclusions=args.exclude)
    out = _out_dir(args.out)
    io.write_tasks_csv(result.tasks, out / "tasks.csv")
    io.write_features_csv(result.tasks, result.feature_names, out / "features.csv")
    io.write_json(result.report, out / "ingest_report.json")
    print(f"wrote {len(result.tasks)} tasks to {out}")
    return EXIT_OK


def cmd_synth_bench(args) -> int:
    values = load_config_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    config = SynthConfig.from_dict(values)
    out = _out_dir(args.out)
    tasks = generate_tasks(config)
    io.write_tasks_csv(tasks, out / "tasks.csv")
    io.write_features_csv(tasks, ["s"], out / "features.csv")
    io.write_json(config.to_dict(), out / "synth_config.json")
    if args.shifts:
        fit_config = _fit_config(args)
        methods = [make_method(name, fit_config) for name in args.methods.split(",")]
        rows = divergence_sweep(config, _parse_grid(args.shifts), methods, config.seed, args.seeds)
        io.write_rows_csv(
            out / "sweep.csv",
            ["shift", "replicate", "divergence", "method", "rmse"],
            [(r.shift, r.replicate, r.divergence, r.method, r.rmse) for r in rows],
        )
        io.write_json(sweep_slopes(rows), out / "sweep_slopes.json")
    print(f"wrote {len(tasks)} synthetic tasks to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    config = _fit_config(args, load_config_file(args.config) if args.config else None)
    tasks, names = io.read_dataset(args.tasks, args.features, config.period_hours)
    model = fit(tasks, config, names)
    out = _out_dir(args.out)
    io.write_json(model.to_dict(), out / "model.json")
    io.write_rows_csv(
        out / "trace.csv",
        ["iteration", "objective"],
        [(i, v) for i, v in enumerate(model.objective_trace, 1)],
    )
    print(f"fitted {len(tasks)} tasks in {len(model.objective_trace)} outer iterations")
    return EXIT_OK


def _load_model(path) -> PhysioMtlModel:
    return PhysioMtlModel.from_dict(io.read_json(path))


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    feats, names = io.read_features_csv(args.features)
    if names != model.feature_names:
        raise InvalidInput(f"feature columns {names} do not match the model schema {model.feature_names}")
    if args.tasks:
        obs = io.read_tasks_csv(args.tasks, model.config.period_hours)
    else:
        grid = np.array(_parse_grid(args.times))
        obs = {tid: (grid, None) for tid in feats}
    rows = []
    for tid, (times, _) in obs.items():
        if tid not in feats:
            raise InvalidInput(f"task {tid!r} has no features row")
        for tau, v in zip(times, predict_unseen(model, feats[tid], times)):
            rows.append((tid, float(tau), float(v)))
    io.write_rows_csv(args.out, list(io.TASK_COLUMNS), rows)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _fit_config(args, load_config_file(args.config) if args.config else None)
    tasks, names = io.read_dataset(args.tasks, args.features, config.period_hours)
    seed = args.seed if args.seed is not None else config.seed
    reports = []
    for name in args.methods.split(","):
        method = make_method(name.strip(), config, k=args.k, l1_penalty=args.l1)
        for frac in _fractions(args.fraction):
            reports.append(run_split_experiment(tasks, method, frac, args.repeats, seed))
    rows = [
        (r.method, r.train_fraction, r.n_train, r.n_test, r.repeats, r.mean, r.std, len(r.failures), r.seed)
        for r in reports
    ]
    io.write_rows_csv(
        args.out,
        ["method", "train_fraction", "n_train", "n_test", "repeats", "rmse_mean", "rmse_std", "failures", "seed"],
        rows,
    )
    io.write_json([r.to_dict() for r in reports], Path(args.out).with_suffix(".json"))
    for r in reports:
        print(f"{r.method:18s} {r.train_fraction:.1f}  {r.mean:.3f} +/- {r.std:.3f}")
    return EXIT_OK


def cmd_counterfactual(args) -> int:
    model = _load_model(args.model)
    baseline = None
    if args.baseline:
        baseline = [float(v) for v in args.baseline.split(",")]
    times = np.array(_parse_grid(args.times)) if args.times else None
    curves = counterfactual_sweep(model, args.dim, _parse_grid(args.grid), baseline, times)
    rows = [(c.label, float(t), float(v)) for c in curves for t, v in zip(c.times, c.values)]
    io.write_rows_csv(args.out, ["label", "time_hours", "hrv_ms"], rows)
    print(f"wrote {len(curves)} curves to {args.out}")
    return EXIT_OK


def _add_fit_flags(p):
    p.add_argument("--config", help="JSON or key=value file of FitConfig fields")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--map", choices=["linear", "kernel"])
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="physiomtl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest-mmash", help="MMASH tree -> canonical tasks/features CSVs")
    p.add_argument("root")
    p.add_argument("--out", required=True)
    p.add_argument("--exclude", type=int, nargs="*", default=[4])
    p.set_defaults(func=cmd_ingest_mmash)

    p = sub.add_parser("synth-bench", help="generate synthetic tasks, optionally run a divergence sweep")
    p.add_argument("--out", required=True)
    p.add_argument("--shifts", help="test-feature shift grid, e.g. 0:10:2")
    p.add_argument("--seeds", type=int, default=10, help="replicates per shift")
    p.add_argument("--methods", default="global-average,knn-transfer,physiomtl-linear")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_synth_bench)

    p = sub.add_parser("fit", help="fit PhysioMTL on canonical CSVs")
    p.add_argument("tasks")
    p.add_argument("features")
    p.add_argument("--out", required=True)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict HRV for tasks from their features")
    p.add_argument("model")
    p.add_argument("features")
    p.add_argument("--tasks", help="tasks CSV whose times to predict at")
    p.add_argument("--times", default="0:23.5:0.5", help="time grid when --tasks is not given")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated random task-split evaluation")
    p.add_argument("tasks")
    p.add_argument("features")
    p.add_argument("--methods", default=",".join(METHOD_NAMES))
    p.add_argument("--fraction", action="append", help="train fraction(s); repeatable or comma list")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--k", type=int, default=5, help="neighbours for k-nearest-task baselines")
    p.add_argument("--l1", type=float, default=0.9, help="single-lasso penalty")
    p.add_argument("--out", required=True)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("counterfactual", help="sweep one feature of a fitted model")
    p.add_argument("model")
    p.add_argument("--dim", required=True)
    p.add_argument("--grid", required=True, help="start:stop:step (inclusive) or comma list")
    p.add_argument("--baseline", help="comma-separated raw feature vector; default training medians")
    p.add_argument("--times", help="time grid, default 0:23.75:0.25")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_counterfactual)
    return parser


def _setup_logging():
    level = os.environ.get("PHYSIOMTL_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"physiomtl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, DivergedSolve) as exc:
        print(f"physiomtl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInput, IngestError, DegenerateFit, InsufficientData) as exc:
        print(f"physiomtl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
