"""Joint learning of per-task cosinor weights and the feature-to-weight transport map.

The objective is

    0.5 * sum_t ||X_t w_t - y_t||^2 + alpha * sum_ij pi_ij ||F(s_i) - W_j||^2

with ``pi`` a Sinkhorn coupling computed once from task features and then
frozen. ``F`` and ``W`` are updated alternately; the objective trace is
non-increasing by construction (exact block minimization for a linear map,
Armijo backtracking for gradient blocks).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import DivergedSolve, InvalidInput
from .ot import Coupling, cost_matrix, median_offdiag, sinkhorn
from .rhythm import (
    DEFAULT_PERIOD,
    DEFAULT_RIDGE_EPS,
    RhythmModel,
    TaskRecord,
    coef_design,
    fit_rhythm,
    predict_rhythm,
)
from .transport_map import (
    DEFAULT_SIGMA,
    FeatureScaler,
    KernelMap,
    LinearMap,
    TransportMap,
    apply_map,
    map_from_dict,
)

logger = logging.getLogger(__name__)

N_COEF = 3
ARMIJO_C = 1e-4
MIN_STEP = 1e-14


@dataclass(frozen=True)
class FitConfig:
    alpha: float = 0.1
    gamma: float = 0.1
    m: tuple[float, ...] | None = None
    map_kind: str = "kernel"
    sigma: float = DEFAULT_SIGMA
    step_F: float = 1e-2
    step_W: float = 1e-2
    max_outer: int = 500
    max_inner: int = 10
    tol_obj: float = 1e-7
    ridge_eps: float = DEFAULT_RIDGE_EPS
    seed: int = 0
    period_hours: float = DEFAULT_PERIOD
    # cost is divided by its median off-diagonal entry so gamma is scale free
    normalize_cost: bool = True
    sinkhorn_max_iter: int = 10000
    sinkhorn_tol: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidInput(f"alpha must be nonnegative, got {self.alpha}")
        if not self.gamma > 0:
            raise InvalidInput(f"gamma must be positive, got {self.gamma}")
        if not (self.step_F > 0 and self.step_W > 0):
            raise InvalidInput("step sizes must be positive")
        if not self.tol_obj > 0:
            raise InvalidInput(f"tol_obj must be positive, got {self.tol_obj}")
        if self.map_kind not in ("linear", "kernel"):
            raise InvalidInput(f"map_kind must be 'linear' or 'kernel', got {self.map_kind!r}")
        if not self.sigma > 0:
            raise InvalidInput(f"sigma must be positive, got {self.sigma}")
        if self.ridge_eps < 0:
            raise InvalidInput("ridge_eps must be nonnegative")
        if self.max_outer < 0 or self.max_inner < 1:
            raise InvalidInput("iteration budgets must be positive")
        if self.m is not None:
            object.__setattr__(self, "m", tuple(float(v) for v in self.m))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["m"] = None if self.m is None else list(self.m)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidInput(f"unknown FitConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PhysioMtlModel:
    weights: np.ndarray
    map: TransportMap
    coupling: Coupling
    config: FitConfig
    scaler: FeatureScaler
    feature_names: list[str]
    task_ids: list[str]
    objective_trace: list[float] = field(default_factory=list)
    initial_objective: float = float("nan")
    converged: bool = False

    @property
    def n_tasks(self) -> int:
        return self.weights.shape[0]

    def task_model(self, t: int) -> RhythmModel:
        return RhythmModel.from_coef(self.weights[t], self.config.period_hours)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "map": self.map.to_dict(),
            "coupling": self.coupling.to_dict(),
            "config": self.config.to_dict(),
            "feature_stats": self.scaler.to_dict(),
            "feature_names": list(self.feature_names),
            "task_ids": list(self.task_ids),
            "objective_trace": list(self.objective_trace),
            "initial_objective": self.initial_objective,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhysioMtlModel":
        try:
            scaler = FeatureScaler.from_dict(d["feature_stats"])
            tmap = map_from_dict(d["map"])
            if tmap.scaler is None:
                tmap = replace(tmap, scaler=scaler)
            return cls(
                weights=np.asarray(d["weights"], dtype=float).reshape(-1, N_COEF),
                map=tmap,
                coupling=Coupling.from_dict(d["coupling"]),
                config=FitConfig.from_dict(d["config"]),
                scaler=scaler,
                feature_names=list(d["feature_names"]),
                task_ids=list(d["task_ids"]),
                objective_trace=[float(v) for v in d.get("objective_trace", [])],
                initial_objective=float(d.get("initial_objective", float("nan"))),
                converged=bool(d.get("converged", False)),
            )
        except KeyError as exc:
            raise InvalidInput(f"model JSON is missing key {exc}") from None


def feature_matrix(tasks: list[TaskRecord]) -> np.ndarray:
    if not tasks:
        raise InvalidInput("no tasks given")
    dims = {t.features.size for t in tasks}
    if len(dims) != 1:
        raise InvalidInput(f"tasks have inconsistent feature dimensions {sorted(dims)}")
    return np.vstack([t.features for t in tasks])


def _standardized(tasks, tmap: TransportMap) -> np.ndarray:
    S = feature_matrix(tasks)
    return tmap.scaler.transform(S) if tmap.scaler is not None else S


def task_coupling(features_std, config: FitConfig) -> Coupling:
    """Sinkhorn coupling between tasks from (standardized) features."""
    C = cost_matrix(features_std, config.m)
    if config.normalize_cost:
        scale = median_offdiag(C)
        if scale > 0:
            C = C / scale
    return sinkhorn(C, config.gamma, config.sinkhorn_max_iter, config.sinkhorn_tol)


def init_weights(tasks, ridge_eps=DEFAULT_RIDGE_EPS, period_hours=DEFAULT_PERIOD) -> np.ndarray:
    """Independent per-task cosinor fits stacked as a (T, 3) matrix."""
    return np.vstack([fit_rhythm(t, period_hours, ridge_eps).coef for t in tasks])


class _DataTerm:
    """Sufficient statistics of each task's least-squares term."""

    def __init__(self, tasks, period_hours):
        grams, moments, sq = [], [], []
        for t in tasks:
            X = coef_design(t.times, period_hours)
            grams.append(X.T @ X)
            moments.append(X.T @ t.values)
            sq.append(t.values @ t.values)
        self.G = np.array(grams)
        self.h = np.array(moments)
        self.c = np.array(sq)

    def per_task(self, W):
        return 0.5 * (np.einsum("ti,tij,tj->t", W, self.G, W) - 2 * np.einsum("ti,ti->t", W, self.h) + self.c)

    def grad(self, W):
        return np.einsum("tij,tj->ti", self.G, W) - self.h


def _check_shapes(W, tmap, coupling, tasks):
    W = np.asarray(W, dtype=float)
    T = len(tasks)
    if W.shape != (T, N_COEF):
        raise InvalidInput(f"W has shape {W.shape}, expected {(T, N_COEF)}")
    if coupling.plan.shape != (T, T):
        raise InvalidInput(f"coupling has shape {coupling.plan.shape}, expected {(T, T)}")
    if tmap.F.shape[0] != N_COEF:
        raise InvalidInput(f"map outputs {tmap.F.shape[0]} coefficients, expected {N_COEF}")
    return W


def objective(W, tmap, coupling, tasks, alpha, period_hours=DEFAULT_PERIOD) -> float:
    """Data misfit plus coupling-weighted squared distance between F(s_i) and W_j."""
    W = _check_shapes(W, tmap, coupling, tasks)
    data = _DataTerm(tasks, period_hours).per_task(W).sum()
    mapped = apply_map(tmap, _standardized(tasks, tmap))
    sqdist = np.sum((mapped[:, None, :] - W[None, :, :]) ** 2, axis=2)
    return float(data + alpha * np.sum(coupling.plan * sqdist))


def grad_map(W, tmap, coupling, tasks, alpha) -> np.ndarray:
    """Gradient of the objective with respect to the map parameters ``F``."""
    W = _check_shapes(W, tmap, coupling, tasks)
    Phi = tmap.basis(_standardized(tasks, tmap))
    pi = coupling.plan
    # sum_ij pi_ij (F phi_i - W_j) phi_i^T
    resid = pi.sum(axis=1)[:, None] * (Phi @ tmap.F.T) - pi @ W
    return 2.0 * alpha * resid.T @ Phi


def grad_weights(W, tmap, coupling, tasks, alpha, period_hours=DEFAULT_PERIOD) -> np.ndarray:
    """Gradient of the objective with respect to each task's coefficients."""
    W = _check_shapes(W, tmap, coupling, tasks)
    mapped = apply_map(tmap, _standardized(tasks, tmap))
    pi = coupling.plan
    reg = pi.sum(axis=0)[:, None] * W - pi.T @ mapped
    return _DataTerm(tasks, period_hours).grad(W) + 2.0 * alpha * reg


class _Alternation:
    """Block updates for a fixed coupling; quantities cached per block."""

    def __init__(self, tasks, Phi, pi, alpha, config: FitConfig):
        self.data = _DataTerm(tasks, config.period_hours)
        self.Phi = Phi
        self.pi = pi
        self.row_mass = pi.sum(axis=1)
        self.col_mass = pi.sum(axis=0)
        self.alpha = alpha
        self.config = config
        # Phi^T diag(row mass) Phi, shared by every F-block
        self.Q = Phi.T @ (self.row_mass[:, None] * Phi)
        self.step_F = config.step_F
        self.step_W = np.full(len(tasks), config.step_W)

    def objective(self, F, W):
        return float(self.data.per_task(W).sum() + self._reg(F, W))

    def _reg(self, F, W):
        mapped = self.Phi @ F.T
        sqdist = np.sum((mapped[:, None, :] - W[None, :, :]) ** 2, axis=2)
        return self.alpha * float(np.sum(self.pi * sqdist))

    def _f_block(self, F, R, const):
        return self.alpha * (np.sum((F @ self.Q) * F) - 2.0 * np.sum(F * R) + const)

    def update_F(self, F, W, closed_form):
        R = W.T @ self.pi.T @ self.Phi
        const = float(self.col_mass @ np.sum(W**2, axis=1))
        current = self._f_block(F, R, const)
        if closed_form:
            F_new = np.linalg.lstsq(self.Q, R.T, rcond=None)[0].T
            return F_new if self._f_block(F_new, R, const) <= current else F
        for _ in range(self.config.max_inner):
            grad = 2.0 * self.alpha * (F @ self.Q - R)
            gsq = float(np.sum(grad**2))
            if gsq == 0.0:
                break
            step = self.step_F
            while step > MIN_STEP:
                trial = F - step * grad
                value = self._f_block(trial, R, const)
                if value <= current - ARMIJO_C * step * gsq:
                    break
                step *= 0.5
            else:
                break
            F, current = trial, value
            self.step_F = 2.0 * step
        return F

    def update_W(self, F, W):
        mapped = self.Phi @ F.T
        target = self.pi.T @ mapped
        mapped_sq = self.pi.T @ np.sum(mapped**2, axis=1)
        b = self.col_mass

        def per_task(W):
            reg = b * np.sum(W**2, axis=1) - 2.0 * np.sum(W * target, axis=1) + mapped_sq
            return self.data.per_task(W) + self.alpha * reg

        current = per_task(W)
        for _ in range(self.config.max_inner):
            grad = self.data.grad(W) + 2.0 * self.alpha * (b[:, None] * W - target)
            gsq = np.sum(grad**2, axis=1)
            active = gsq > 0
            if not active.any():
                break
            step = self.step_W.copy()
            accepted = ~active
            new_W, new_val = W.copy(), current.copy()
            while not accepted.all():
                pending = ~accepted
                trial = W - step[:, None] * grad
                value = per_task(trial)
                ok = pending & (value <= current - ARMIJO_C * step * gsq)
                new_W[ok], new_val[ok] = trial[ok], value[ok]
                accepted |= ok
                step = np.where(pending & ~ok, 0.5 * step, step)
                # steps that shrank to nothing leave the task where it is
                accepted |= step < MIN_STEP
            moved = active & (step >= MIN_STEP)
            self.step_W = np.where(moved, 2.0 * step, self.step_W)
            W, current = new_W, new_val
        return W


def fit(tasks: list[TaskRecord], config: FitConfig | None = None, feature_names=None) -> PhysioMtlModel:
    """Fit per-task rhythms jointly with a transport map from task features.

    Raises
    ------
    InvalidInput
        For empty task lists or inconsistent feature dimensions.
    DivergedSolve
        If the objective becomes non-finite.
    """
    config = config or FitConfig()
    S_raw = feature_matrix(tasks)
    T, d = S_raw.shape
    if d == 0:
        raise InvalidInput("tasks carry no task-wise features")
    if config.m is not None and len(config.m) != d:
        raise InvalidInput(f"similarity weights have dimension {len(config.m)}, features {d}")
    if feature_names is None:
        feature_names = [f"s{k}" for k in range(d)]
    if len(feature_names) != d:
        raise InvalidInput(f"{len(feature_names)} feature names for {d} feature dimensions")

    scaler = FeatureScaler.fit(S_raw)
    S = scaler.transform(S_raw)
    coupling = task_coupling(S, config)
    W = init_weights(tasks, config.ridge_eps, config.period_hours)

    if config.map_kind == "linear":
        tmap: TransportMap = LinearMap(np.zeros((N_COEF, d + 1)), scaler)
    else:
        tmap = KernelMap(np.zeros((N_COEF, T)), S, config.sigma, scaler)
    Phi = tmap.basis(S)
    solver = _Alternation(tasks, Phi, coupling.plan, config.alpha, config)

    F = tmap.F
    obj = solver.objective(F, W)
    initial = obj
    trace = []
    converged = False
    for outer in range(1, config.max_outer + 1):
        F = solver.update_F(F, W, closed_form=config.map_kind == "linear")
        W = solver.update_W(F, W)
        new = solver.objective(F, W)
        if not np.isfinite(new):
            raise DivergedSolve(f"objective became {new}", outer)
        trace.append(new)
        if obj - new <= config.tol_obj * max(abs(obj), np.finfo(float).tiny):
            converged = True
            break
        obj = new
    logger.info(
        "fit: %d tasks, %s map, %d outer iterations, objective %.6g -> %.6g",
        T, config.map_kind, len(trace), initial, trace[-1] if trace else initial,
    )
    return PhysioMtlModel(
        weights=W,
        map=tmap.with_params(F),
        coupling=coupling,
        config=config,
        scaler=scaler,
        feature_names=list(feature_names),
        task_ids=[t.task_id for t in tasks],
        objective_trace=trace,
        initial_objective=initial,
        converged=converged,
    )


def predict_coef(model: PhysioMtlModel, s_new) -> np.ndarray:
    s_new = np.asarray(s_new, dtype=float)
    if s_new.shape[-1] != model.scaler.dim:
        raise InvalidInput(
            f"feature vector has {s_new.shape[-1]} dimensions, model expects {model.scaler.dim}"
        )
    return apply_map(model.map, model.scaler.transform(s_new))


def predict_unseen(model: PhysioMtlModel, s_new, times) -> np.ndarray:
    """HRV predicted for an unseen task from its raw feature vector alone."""
    coef = predict_coef(model, np.asarray(s_new, dtype=float).ravel())
    return predict_rhythm(RhythmModel.from_coef(coef, model.config.period_hours), times)
