"""Reference predictors: pooled mean, independent per-task fits, k-nearest-task transfer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .rhythm import DEFAULT_PERIOD, DEFAULT_RIDGE_EPS, coef_design, fit_rhythm

DEFAULT_L1 = 0.9
DEFAULT_K = 5


@dataclass(frozen=True)
class GlobalAverage:
    mean: float

    def predict(self, times) -> np.ndarray:
        return np.full(np.asarray(times, dtype=float).size, self.mean)


@dataclass(frozen=True)
class Independent:
    weights: np.ndarray
    train_features: np.ndarray
    l1_penalty: float = 0.0


def fit_global_average(tasks) -> GlobalAverage:
    values = [t.values for t in tasks]
    if not values or sum(v.size for v in values) == 0:
        raise InvalidInput("no observations to average")
    return GlobalAverage(float(np.concatenate(values).mean()))


def lasso_cosinor(X, y, l1_penalty, max_iter=10000, tol=1e-12) -> np.ndarray:
    """Cyclic coordinate descent for ``(1/2n)||y - Xw||^2 + l1 * (|w1| + |w2|)``.

    Column 0 of ``X`` is the intercept and is left unpenalized.
    """
    n, p = X.shape
    w = np.zeros(p)
    col_sq = np.sum(X**2, axis=0) / n
    resid = y.astype(float).copy()
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = w[j]
            rho = X[:, j] @ resid / n + col_sq[j] * old
            if j == 0:
                new = rho / col_sq[j]
            else:
                new = np.sign(rho) * max(abs(rho) - l1_penalty, 0.0) / col_sq[j]
            if new != old:
                resid -= X[:, j] * (new - old)
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta <= tol * max(1.0, np.abs(w).max()):
            break
    return w


def fit_independent(
    tasks,
    l1_penalty: float = DEFAULT_L1,
    period_hours: float = DEFAULT_PERIOD,
    ridge_eps: float = DEFAULT_RIDGE_EPS,
) -> Independent:
    """Per-task cosinor regression; ``l1_penalty=0`` is exactly :func:`fit_rhythm`."""
    if l1_penalty < 0:
        raise InvalidInput(f"l1_penalty must be nonnegative, got {l1_penalty}")
    rows = []
    for t in tasks:
        if l1_penalty == 0:
            rows.append(fit_rhythm(t, period_hours, ridge_eps).coef)
        else:
            rows.append(lasso_cosinor(coef_design(t.times, period_hours), t.values, l1_penalty))
    features = np.vstack([t.features for t in tasks]) if tasks else np.zeros((0, 0))
    return Independent(np.vstack(rows), features, l1_penalty)


def knn_task_transfer(train_weights, train_features, s_new, k: int = DEFAULT_K, m=None) -> np.ndarray:
    """Mean coefficient row of the ``k`` tasks nearest to ``s_new``.

    Distance is ``<m, |s_i - s_new|>``; features are expected standardized.
    Ties go to the lower task index.
    """
    W = np.asarray(train_weights, dtype=float)
    S = np.asarray(train_features, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    T = W.shape[0]
    if not 1 <= k <= T:
        raise InvalidInput(f"k must lie in [1, {T}], got {k}")
    s_new = np.asarray(s_new, dtype=float).ravel()
    if m is None:
        m = np.ones(S.shape[1])
    m = np.asarray(m, dtype=float).ravel()
    if s_new.size != S.shape[1] or m.size != S.shape[1]:
        raise InvalidInput("feature and weight dimensions do not match the training features")
    dist = np.abs(S - s_new) @ m
    nearest = np.argsort(dist, kind="stable")[:k]
    return W[nearest].mean(axis=0)
