"""Optimal-transport primitives: task cost matrix, Sinkhorn, exact small OT, 1-D W2."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInput, NumericalFailure

logger = logging.getLogger(__name__)

# Below this ratio of gamma to the median cost, exp(-C/gamma) is computed in log space.
LOG_DOMAIN_RATIO = 0.05
EXACT_MAX_N = 8
CHECK_EVERY = 10
NEWTON_AFTER = 200
NEWTON_MAX_DIM = 400


@dataclass(frozen=True)
class Coupling:
    """Transport plan with its prescribed marginals."""

    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    n_iter: int = 0
    converged: bool = True

    @property
    def shape(self):
        return self.plan.shape

    def marginal_violation(self) -> float:
        rows = np.abs(self.plan.sum(axis=1) - self.row_marginal).max()
        cols = np.abs(self.plan.sum(axis=0) - self.col_marginal).max()
        return float(max(rows, cols))

    def cost(self, cost) -> float:
        return float(np.sum(self.plan * np.asarray(cost, dtype=float)))

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.tolist(),
            "row_marginal": self.row_marginal.tolist(),
            "col_marginal": self.col_marginal.tolist(),
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Coupling":
        return cls(
            plan=np.asarray(d["plan"], dtype=float),
            row_marginal=np.asarray(d["row_marginal"], dtype=float),
            col_marginal=np.asarray(d["col_marginal"], dtype=float),
            n_iter=int(d.get("n_iter", 0)),
            converged=bool(d.get("converged", True)),
        )


def cost_matrix(features, m=None) -> np.ndarray:
    """Pairwise task cost ``C[i, j] = <m, |s_i - s_j|>``.

    Parameters
    ----------
    features : array-like, shape (T, d_s)
    m : array-like, shape (d_s,), optional
        Nonnegative per-dimension weights. Defaults to all ones.
    """
    S = np.asarray(features, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2:
        raise InvalidInput(f"features must be a (T, d_s) array, got shape {S.shape}")
    if m is None:
        m = np.ones(S.shape[1])
    m = np.asarray(m, dtype=float).ravel()
    if m.size != S.shape[1]:
        raise InvalidInput(f"similarity weights have dimension {m.size}, features {S.shape[1]}")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise InvalidInput("similarity weights must be finite and nonnegative")
    diff = np.abs(S[:, None, :] - S[None, :, :])
    C = diff @ m
    # exact symmetry and zero diagonal regardless of rounding
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 0.0)
    return C


def median_offdiag(C) -> float:
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if C.shape[0] != C.shape[1] or n < 2:
        return float(np.median(C)) if C.size else 0.0
    return float(np.median(C[~np.eye(n, dtype=bool)]))


def sinkhorn(
    cost,
    gamma: float,
    max_iter: int = 10000,
    tol: float = 1e-8,
    log_domain: bool | None = None,
) -> Coupling:
    """Entropic OT between uniform marginals by Sinkhorn matrix scaling.

    Returns ``diag(u) K diag(v)`` with ``K = exp(-C / gamma)``. The log-domain
    variant is used automatically when ``gamma`` is small relative to the
    median cost, or when forced with ``log_domain=True``.

    Raises
    ------
    InvalidInput
        If ``gamma <= 0`` or the cost is not a finite 2-D array.
    NumericalFailure
        If a row or column of the kernel underflows to zero.
    """
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2 or C.size == 0:
        raise InvalidInput(f"cost must be a nonempty 2-D array, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise InvalidInput("cost matrix has non-finite entries")
    if not gamma > 0:
        raise InvalidInput(f"gamma must be positive, got {gamma}")
    n, m = C.shape
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    if log_domain is None:
        scale = median_offdiag(C) if n == m else float(np.median(C))
        log_domain = gamma < LOG_DOMAIN_RATIO * scale
    if log_domain:
        plan, n_iter, converged = _sinkhorn_log(C, a, b, gamma, max_iter, tol)
    else:
        plan, n_iter, converged = _sinkhorn_plain(C, a, b, gamma, max_iter, tol)
    if not converged:
        logger.warning(
            "sinkhorn did not converge in %d iterations (gamma=%g, tol=%g)", max_iter, gamma, tol
        )
    return Coupling(plan, a, b, n_iter, converged)


def _sinkhorn_plain(C, a, b, gamma, max_iter, tol):
    K = np.exp(-C / gamma)
    if np.any(K.sum(axis=1) == 0) or np.any(K.sum(axis=0) == 0):
        raise NumericalFailure(
            f"exp(-C/gamma) underflows to an all-zero row or column at gamma={gamma}; "
            "raise gamma or use the log-domain solver"
        )
    v = np.ones_like(b)
    u = np.ones_like(a)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        u = a / (K @ v)
        v = b / (K.T @ u)
        # columns are exact after the v-update; only rows can be off
        if np.abs(u * (K @ v) - a).max() < tol:
            converged = True
            break
        if it == NEWTON_AFTER and a.size + b.size <= NEWTON_MAX_DIM:
            with np.errstate(divide="ignore"):
                f, g = gamma * np.log(u), gamma * np.log(v)
            if np.all(np.isfinite(f)) and np.all(np.isfinite(g)):
                f, g, n_newton, converged = _newton_polish(C, a, b, f, g, gamma, tol)
                it += n_newton
                if converged:
                    return np.exp((f[:, None] + g[None, :] - C) / gamma), it, True
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise NumericalFailure(f"sinkhorn scalings became non-finite at gamma={gamma}")
    return u[:, None] * K * v[None, :], it, converged


def _sinkhorn_log(C, a, b, gamma, max_iter, tol):
    log_a = np.log(a)
    log_b = np.log(b)
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        f = gamma * (log_a - logsumexp((g[None, :] - C) / gamma, axis=1))
        g = gamma * (log_b - logsumexp((f[:, None] - C) / gamma, axis=0))
        if it % CHECK_EVERY and it < max_iter:
            continue
        if _row_violation(C, f, g, gamma, a) < tol:
            converged = True
            break
        if it >= NEWTON_AFTER and a.size + b.size <= NEWTON_MAX_DIM:
            f, g, n_newton, converged = _newton_polish(C, a, b, f, g, gamma, tol)
            it += n_newton
            if converged:
                break
    plan = np.exp((f[:, None] + g[None, :] - C) / gamma)
    return plan, it, converged


def _row_violation(C, f, g, gamma, a):
    log_rows = logsumexp((f[:, None] + g[None, :] - C) / gamma, axis=1)
    return np.abs(np.exp(log_rows) - a).max()


def _newton_polish(C, a, b, f, g, gamma, tol, max_steps=50):
    """Newton ascent on the entropic dual from a Sinkhorn warm start.

    Sinkhorn's linear rate degrades like exp(-gap / gamma) for small gamma;
    Newton steps on the same dual reach the same fixed point quadratically.
    """
    n = a.size

    def dual(f, g):
        with np.errstate(over="ignore"):
            return a @ f + b @ g - gamma * np.exp((f[:, None] + g[None, :] - C) / gamma).sum()

    value = dual(f, g)
    for step in range(1, max_steps + 1):
        P = np.exp((f[:, None] + g[None, :] - C) / gamma)
        r, c = P.sum(axis=1), P.sum(axis=0)
        grad = np.concatenate([a - r, b - c])
        if max(np.abs(grad[:n]).max(), np.abs(grad[n:]).max()) < tol:
            return f, g, step, True
        hess = np.block([[np.diag(r), P], [P.T, np.diag(c)]])
        delta = gamma * np.linalg.lstsq(hess, grad, rcond=1e-14)[0]
        t = 1.0
        while t > 1e-10:
            f_new, g_new = f + t * delta[:n], g + t * delta[n:]
            new_value = dual(f_new, g_new)
            if np.isfinite(new_value) and new_value >= value:
                break
            t *= 0.5
        else:
            return f, g, step, False
        f, g, value = f_new, g_new, new_value
    ok = _row_violation(C, f, g, gamma, a) < tol
    return f, g, max_steps, ok


def exact_ot_small(cost) -> Coupling:
    """Exact OT for uniform square marginals by enumerating permutations (n <= 8)."""
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.size == 0:
        raise InvalidInput(f"cost must be a nonempty square matrix, got shape {C.shape}")
    n = C.shape[0]
    if n > EXACT_MAX_N:
        raise InvalidInput(f"exact_ot_small supports n <= {EXACT_MAX_N}, got {n}")
    rows = np.arange(n)
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(n)):
        c = C[rows, perm].sum()
        if c < best_cost:
            best_cost, best_perm = c, perm
    plan = np.zeros((n, n))
    plan[rows, best_perm] = 1.0 / n
    marg = np.full(n, 1.0 / n)
    return Coupling(plan, marg, marg.copy())


def wasserstein_1d(a, b) -> float:
    """2-Wasserstein distance between equal-size uniform empirical measures on R."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise InvalidInput("wasserstein_1d needs nonempty samples")
    if a.size != b.size:
        raise InvalidInput(f"wasserstein_1d needs equal sizes, got {a.size} and {b.size}")
    return float(np.sqrt(np.mean((a - b) ** 2)))
