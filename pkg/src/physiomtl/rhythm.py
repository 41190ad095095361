"""Cosinor rhythm model.

A diurnal HRV rhythm ``M + A*sin(2*pi*tau/P + phi)`` is linear in the
coefficients ``w = (w0, w1, w2) = (M, A*cos(phi), A*sin(phi))`` once the
sine is expanded, so each task is fitted by ordinary least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit, InvalidInput

DEFAULT_PERIOD = 24.0
DEFAULT_RIDGE_EPS = 1e-8


@dataclass(frozen=True)
class RhythmModel:
    """Cosinor coefficients for one task.

    ``w0`` is the MESOR, ``w1 = A*cos(phi)`` multiplies the sine regressor and
    ``w2 = A*sin(phi)`` multiplies the cosine regressor.
    """

    w0: float
    w1: float
    w2: float
    period_hours: float = DEFAULT_PERIOD

    def __post_init__(self):
        if not self.period_hours > 0:
            raise InvalidInput(f"period_hours must be positive, got {self.period_hours}")

    @property
    def coef(self) -> np.ndarray:
        return np.array([self.w0, self.w1, self.w2], dtype=float)

    @classmethod
    def from_coef(cls, coef, period_hours: float = DEFAULT_PERIOD) -> "RhythmModel":
        w0, w1, w2 = (float(c) for c in np.asarray(coef, dtype=float).ravel())
        return cls(w0, w1, w2, period_hours)

    @classmethod
    def from_physio(cls, mesor, amplitude, phase, period_hours=DEFAULT_PERIOD):
        return cls(
            float(mesor),
            float(amplitude * np.cos(phase)),
            float(amplitude * np.sin(phase)),
            period_hours,
        )


@dataclass
class TaskRecord:
    """Raw observations of one task plus its task-wise feature vector."""

    task_id: str
    times: np.ndarray
    values: np.ndarray
    features: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        self.features = np.asarray(self.features, dtype=float).ravel()
        if self.times.size != self.values.size:
            raise InvalidInput(
                f"task {self.task_id!r}: {self.times.size} times vs {self.values.size} values"
            )
        if self.times.size == 0:
            raise InvalidInput(f"task {self.task_id!r} has no observations")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.values))):
            raise InvalidInput(f"task {self.task_id!r} has non-finite observations")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInput(f"task {self.task_id!r} has non-finite features")

    @property
    def n_obs(self) -> int:
        return int(self.times.size)


def _check_times_period(times, period_hours):
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        raise InvalidInput("times must be nonempty")
    if not period_hours > 0:
        raise InvalidInput(f"period_hours must be positive, got {period_hours}")
    return times


def design_matrix(times, period_hours: float = DEFAULT_PERIOD) -> np.ndarray:
    """Rows ``[sin(2 pi t / P), cos(2 pi t / P), 1]``."""
    times = _check_times_period(times, period_hours)
    angle = 2.0 * np.pi * times / period_hours
    return np.column_stack([np.sin(angle), np.cos(angle), np.ones_like(angle)])


def coef_design(times, period_hours: float = DEFAULT_PERIOD) -> np.ndarray:
    """Design with columns ordered to match ``(w0, w1, w2)``: ``[1, sin, cos]``."""
    return design_matrix(times, period_hours)[:, [2, 0, 1]]


def fit_rhythm(
    record: TaskRecord,
    period_hours: float = DEFAULT_PERIOD,
    ridge_eps: float = DEFAULT_RIDGE_EPS,
) -> RhythmModel:
    """Least-squares cosinor fit, optionally with a tiny ridge term.

    Raises
    ------
    DegenerateFit
        If the design is rank deficient (fewer than three distinct phases)
        and ``ridge_eps`` is zero.
    """
    if ridge_eps < 0:
        raise InvalidInput(f"ridge_eps must be nonnegative, got {ridge_eps}")
    X = coef_design(record.times, period_hours)
    y = record.values
    if ridge_eps == 0:
        if np.linalg.matrix_rank(X) < 3:
            raise DegenerateFit(
                f"cosinor design has rank {np.linalg.matrix_rank(X)} < 3 "
                f"with {record.n_obs} observations",
                task_id=record.task_id,
            )
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    else:
        gram = X.T @ X + ridge_eps * np.eye(3)
        coef = np.linalg.solve(gram, X.T @ y)
    return RhythmModel.from_coef(coef, period_hours)


def predict_rhythm(model: RhythmModel, times) -> np.ndarray:
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        return np.zeros(0)
    return coef_design(times, model.period_hours) @ model.coef


def to_physio(model: RhythmModel) -> tuple[float, float, float]:
    """Return ``(mesor, amplitude, phase)`` with phase in (-pi, pi].

    Zero amplitude maps to phase 0.
    """
    amplitude = float(np.hypot(model.w1, model.w2))
    phase = float(np.arctan2(model.w2, model.w1)) if amplitude > 0 else 0.0
    if phase == -np.pi:
        phase = np.pi
    return float(model.w0), amplitude, phase
