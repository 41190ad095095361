"""Experiment protocols: repeated task splits, divergence sweeps, counterfactual curves."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import (
    DEFAULT_K,
    DEFAULT_L1,
    fit_global_average,
    fit_independent,
    knn_task_transfer,
)
from .errors import InvalidInput, PhysioMTLError
from .rhythm import DEFAULT_PERIOD, RhythmModel, predict_rhythm
from .synth import SynthConfig, shifted_split
from .trainer import FitConfig, PhysioMtlModel, feature_matrix, fit, predict_unseen
from .transport_map import FeatureScaler

logger = logging.getLogger(__name__)

TRAIN_FRACTIONS = (0.8, 0.6, 0.4, 0.2)


def rmse(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if predicted.size == 0 or predicted.size != actual.size:
        raise InvalidInput(f"rmse needs equal nonzero lengths, got {predicted.size} and {actual.size}")
    return float(np.sqrt(np.mean((predicted - actual) ** 2)))


# Methods. Each has a ``name`` and ``fit(tasks)`` returning a callable
# ``predict(features, times) -> values`` that never sees held-out observations.


class GlobalAverageMethod:
    name = "global-average"

    def config(self):
        return {}

    def fit(self, tasks):
        model = fit_global_average(tasks)
        return lambda features, times: model.predict(times)


class KnnTransferMethod:
    """Independent (optionally l1-penalized) fits, transferred by k nearest tasks."""

    def __init__(self, name="knn-transfer", l1_penalty=0.0, k=DEFAULT_K, m=None,
                 period_hours=DEFAULT_PERIOD):
        self.name = name
        self.l1_penalty = l1_penalty
        self.k = k
        self.m = m
        self.period_hours = period_hours

    def config(self):
        return {"l1_penalty": self.l1_penalty, "k": self.k, "m": self.m}

    def fit(self, tasks):
        base = fit_independent(tasks, self.l1_penalty, self.period_hours)
        scaler = FeatureScaler.fit(base.train_features)
        S = scaler.transform(base.train_features)
        k = min(self.k, len(tasks))

        def predict(features, times):
            coef = knn_task_transfer(base.weights, S, scaler.transform(features), k, self.m)
            return predict_rhythm(RhythmModel.from_coef(coef, self.period_hours), times)

        return predict


class PhysioMTLMethod:
    def __init__(self, config: FitConfig, name=None, feature_names=None):
        self.fit_config = config
        self.name = name or f"physiomtl-{config.map_kind}"
        self.feature_names = feature_names

    def config(self):
        return self.fit_config.to_dict()

    def fit(self, tasks):
        model = fit(tasks, self.fit_config, self.feature_names)
        self.last_model = model
        return lambda features, times: predict_unseen(model, features, times)


METHOD_NAMES = ("global-average", "knn-transfer", "single-lasso", "physiomtl-linear", "physiomtl-kernel")


def make_method(name: str, fit_config: FitConfig | None = None, k: int = DEFAULT_K,
                l1_penalty: float = DEFAULT_L1):
    fit_config = fit_config or FitConfig()
    if name == "global-average":
        return GlobalAverageMethod()
    if name == "knn-transfer":
        return KnnTransferMethod("knn-transfer", 0.0, k, fit_config.m, fit_config.period_hours)
    if name == "single-lasso":
        return KnnTransferMethod("single-lasso", l1_penalty, k, fit_config.m, fit_config.period_hours)
    if name in ("physiomtl-linear", "physiomtl-kernel"):
        return PhysioMTLMethod(replace(fit_config, map_kind=name.split("-")[1]), name)
    raise InvalidInput(f"unknown method {name!r}; choose from {', '.join(METHOD_NAMES)}")


@dataclass
class ExperimentReport:
    method: str
    train_fraction: float
    rmses: list[float]
    seed: int
    n_train: int
    n_test: int
    config: dict = field(default_factory=dict)
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def repeats(self) -> int:
        return len(self.rmses)

    def _ok(self):
        vals = np.asarray(self.rmses, dtype=float)
        return vals[np.isfinite(vals)]

    @property
    def mean(self) -> float:
        ok = self._ok()
        return float(ok.mean()) if ok.size else float("nan")

    @property
    def std(self) -> float:
        # population std over successful repeats
        ok = self._ok()
        return float(ok.std()) if ok.size else float("nan")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "train_fraction": self.train_fraction,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "repeats": self.repeats,
            "rmses": list(self.rmses),
            "mean": self.mean,
            "std": self.std,
            "seed": self.seed,
            "failures": [list(f) for f in self.failures],
            "config": self.config,
        }


def split_sizes(n_tasks: int, train_fraction: float) -> tuple[int, int]:
    if not 0 < train_fraction < 1:
        raise InvalidInput(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if n_tasks < 2:
        raise InvalidInput(f"need at least 2 tasks to split, got {n_tasks}")
    n_train = min(max(int(round(train_fraction * n_tasks)), 1), n_tasks - 1)
    return n_train, n_tasks - n_train


def repeat_splits(n_tasks: int, train_fraction: float, repeats: int, seed: int):
    """Index splits, one per repeat, each from its own child of the master seed."""
    n_train, _ = split_sizes(n_tasks, train_fraction)
    children = np.random.SeedSequence(seed).spawn(repeats)
    for child in children:
        order = np.random.default_rng(child).permutation(n_tasks)
        yield np.sort(order[:n_train]), np.sort(order[n_train:])


def evaluate_split(method, train, test) -> float:
    predict = method.fit(train)
    pred = np.concatenate([predict(t.features, t.times) for t in test])
    actual = np.concatenate([t.values for t in test])
    return rmse(pred, actual)


def run_split_experiment(tasks, method, train_fraction: float, repeats: int = 10,
                         seed: int = 0) -> ExperimentReport:
    """Pooled held-out RMSE over ``repeats`` random task splits."""
    if repeats < 1:
        raise InvalidInput("repeats must be positive")
    n_train, n_test = split_sizes(len(tasks), train_fraction)
    report = ExperimentReport(method.name, train_fraction, [], seed, n_train, n_test, method.config())
    for r, (tr_idx, te_idx) in enumerate(repeat_splits(len(tasks), train_fraction, repeats, seed)):
        train = [tasks[i] for i in tr_idx]
        test = [tasks[i] for i in te_idx]
        try:
            report.rmses.append(evaluate_split(method, train, test))
        except PhysioMTLError as exc:
            logger.warning("%s repeat %d failed: %s", method.name, r, exc)
            report.failures.append((r, f"{type(exc).__name__}: {exc}"))
            report.rmses.append(float("nan"))
    return report


@dataclass(frozen=True)
class SweepRow:
    shift: float
    replicate: int
    divergence: float
    method: str
    rmse: float


def divergence_sweep(synth_config: SynthConfig, shift_grid, methods, seed: int = 0,
                     n_seeds: int = 1) -> list[SweepRow]:
    """Evaluate every method on test tasks shifted by each ``shift`` in the grid."""
    shift_grid = [float(s) for s in shift_grid]
    if not shift_grid:
        raise InvalidInput("shift grid is empty")
    if n_seeds < 1:
        raise InvalidInput("n_seeds must be positive")
    children = np.random.SeedSequence(seed).spawn(len(shift_grid) * n_seeds)
    rows = []
    for i, shift in enumerate(shift_grid):
        for rep in range(n_seeds):
            child = children[i * n_seeds + rep]
            split_seed = int(child.generate_state(1)[0])
            train, test, div = shifted_split(synth_config, shift, split_seed)
            for method in methods:
                rows.append(SweepRow(shift, rep, div, method.name, evaluate_split(method, train, test)))
    return rows


def summarize_sweep(rows: list[SweepRow]) -> dict[str, list[tuple[float, float, float]]]:
    """Per method: (shift, mean divergence, mean RMSE) for each shift, in grid order."""
    out: dict[str, list[tuple[float, float, float]]] = {}
    for name in dict.fromkeys(r.method for r in rows):
        shifts = list(dict.fromkeys(r.shift for r in rows if r.method == name))
        out[name] = []
        for s in shifts:
            sel = [r for r in rows if r.method == name and r.shift == s]
            out[name].append(
                (s, float(np.mean([r.divergence for r in sel])), float(np.mean([r.rmse for r in sel])))
            )
    return out


def sweep_slopes(rows: list[SweepRow]) -> dict[str, float]:
    """Least-squares slope of mean RMSE against mean divergence, per method."""
    slopes = {}
    for name, points in summarize_sweep(rows).items():
        div = np.array([p[1] for p in points])
        err = np.array([p[2] for p in points])
        slopes[name] = float(np.polyfit(div, err, 1)[0]) if div.size > 1 else float("nan")
    return slopes


@dataclass(frozen=True)
class Curve:
    label: str
    value: float | None
    times: np.ndarray
    values: np.ndarray


DEFAULT_TIMES = np.arange(0.0, 24.0, 0.25)


def counterfactual_sweep(model: PhysioMtlModel, dim_name: str, grid, baseline=None,
                         times_grid=None) -> list[Curve]:
    """Baseline curve plus one curve per grid value of ``dim_name``, others held fixed.

    ``baseline`` defaults to the per-dimension median of the training features.
    """
    if dim_name not in model.feature_names:
        raise InvalidInput(f"unknown dimension {dim_name!r}; model has {model.feature_names}")
    j = model.feature_names.index(dim_name)
    if baseline is None:
        if model.scaler.medians is None:
            raise InvalidInput("model has no training medians; pass a baseline feature vector")
        baseline = model.scaler.medians
    baseline = np.asarray(baseline, dtype=float).ravel()
    if baseline.size != len(model.feature_names):
        raise InvalidInput(f"baseline has {baseline.size} entries, schema {len(model.feature_names)}")
    times = DEFAULT_TIMES if times_grid is None else np.asarray(times_grid, dtype=float)
    curves = [Curve("baseline", float(baseline[j]), times, predict_unseen(model, baseline, times))]
    for v in grid:
        s = baseline.copy()
        s[j] = float(v)
        curves.append(Curve(f"{dim_name}={float(v):g}", float(v), times, predict_unseen(model, s, times)))
    return curves


def training_scaler_matches(model: PhysioMtlModel, train_tasks) -> bool:
    """True if the model's standardization statistics came from ``train_tasks`` only."""
    ref = FeatureScaler.fit(feature_matrix(train_tasks))
    return bool(np.array_equal(ref.means, model.scaler.means) and np.array_equal(ref.stds, model.scaler.stds))
