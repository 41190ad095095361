"""Transport maps from task-feature space to cosinor-coefficient space.

Two families are supported: an affine map ``F @ [s; 1]`` and an RBF kernel
expansion ``F @ k(s)`` supported on the training tasks' features. Both act
on standardized features; :class:`FeatureScaler` holds the statistics needed
to map raw features into that space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

DEFAULT_SIGMA = 20.0
SIGMA_GRID = (5.0, 10.0, 20.0, 40.0)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension z-scoring fitted on training tasks only."""

    means: np.ndarray
    stds: np.ndarray
    medians: np.ndarray | None = None

    @classmethod
    def fit(cls, features) -> "FeatureScaler":
        S = _as_2d(features)
        stds = S.std(axis=0)
        # a constant dimension carries no similarity information; leave it centered
        stds = np.where(stds > 0, stds, 1.0)
        return cls(S.mean(axis=0), stds, np.median(S, axis=0))

    @property
    def dim(self) -> int:
        return int(self.means.size)

    def transform(self, features) -> np.ndarray:
        S = np.asarray(features, dtype=float)
        if S.shape[-1] != self.dim:
            raise InvalidInput(f"expected {self.dim} feature dimensions, got {S.shape[-1]}")
        return (S - self.means) / self.stds

    def to_dict(self) -> dict:
        d = {"means": self.means.tolist(), "stds": self.stds.tolist()}
        if self.medians is not None:
            d["medians"] = self.medians.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        medians = d.get("medians")
        return cls(
            np.asarray(d["means"], dtype=float),
            np.asarray(d["stds"], dtype=float),
            None if medians is None else np.asarray(medians, dtype=float),
        )


def _as_2d(features) -> np.ndarray:
    S = np.asarray(features, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2 or S.shape[0] == 0:
        raise InvalidInput(f"features must be a nonempty (T, d_s) array, got shape {S.shape}")
    return S


def rbf_kernel_vector(support, s, sigma: float) -> np.ndarray:
    """``k_t = exp(-||support_t - s||^2 / (2 sigma^2))`` for each support point."""
    if not sigma > 0:
        raise InvalidInput(f"sigma must be positive, got {sigma}")
    support = _as_2d(support)
    s = np.asarray(s, dtype=float).ravel()
    if s.size != support.shape[1]:
        raise InvalidInput(f"feature has dimension {s.size}, support {support.shape[1]}")
    sq = np.sum((support - s) ** 2, axis=1)
    return np.exp(-sq / (2.0 * sigma**2))


def rbf_kernel_matrix(support, points, sigma: float) -> np.ndarray:
    """Rows are :func:`rbf_kernel_vector` evaluated at each of ``points``."""
    if not sigma > 0:
        raise InvalidInput(f"sigma must be positive, got {sigma}")
    support = _as_2d(support)
    points = _as_2d(points)
    if points.shape[1] != support.shape[1]:
        raise InvalidInput(f"points have dimension {points.shape[1]}, support {support.shape[1]}")
    sq = np.sum((points[:, None, :] - support[None, :, :]) ** 2, axis=2)
    return np.exp(-sq / (2.0 * sigma**2))


@dataclass(frozen=True)
class LinearMap:
    """Affine map ``s -> F @ [s; 1]`` with ``F`` of shape (d_w, d_s + 1)."""

    F: np.ndarray
    scaler: FeatureScaler | None = None

    kind = "linear"

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        if not np.all(np.isfinite(F)):
            raise InvalidInput("linear map has non-finite entries")
        object.__setattr__(self, "F", F)

    @property
    def feature_dim(self) -> int:
        return self.F.shape[1] - 1

    def basis(self, points) -> np.ndarray:
        """Augmented features, one row ``[s, 1]`` per point."""
        P = _as_2d(points)
        if P.shape[1] != self.feature_dim:
            raise InvalidInput(f"expected {self.feature_dim} feature dimensions, got {P.shape[1]}")
        return np.column_stack([P, np.ones(P.shape[0])])

    def with_params(self, F) -> "LinearMap":
        return LinearMap(F, self.scaler)

    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.F[:, :-1], 2))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "F": self.F.tolist()}
        if self.scaler is not None:
            d["feature_stats"] = self.scaler.to_dict()
        return d


@dataclass(frozen=True)
class KernelMap:
    """RBF kernel map ``s -> F @ k(s)``; column ``t`` of ``F`` pairs with ``support[t]``."""

    F: np.ndarray
    support: np.ndarray
    sigma: float = DEFAULT_SIGMA
    scaler: FeatureScaler | None = None

    kind = "kernel"

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        support = _as_2d(self.support)
        if not self.sigma > 0:
            raise InvalidInput(f"sigma must be positive, got {self.sigma}")
        if F.shape[1] != support.shape[0]:
            raise InvalidInput(
                f"kernel weights have {F.shape[1]} columns for {support.shape[0]} support points"
            )
        if not np.all(np.isfinite(F)):
            raise InvalidInput("kernel map has non-finite entries")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "support", support)

    @property
    def feature_dim(self) -> int:
        return self.support.shape[1]

    def basis(self, points) -> np.ndarray:
        return rbf_kernel_matrix(self.support, points, self.sigma)

    def with_params(self, F) -> "KernelMap":
        return KernelMap(F, self.support, self.sigma, self.scaler)

    def lipschitz(self) -> float:
        # each RBF term has gradient norm at most 1 / (sigma * sqrt(e))
        col_norms = np.linalg.norm(self.F, axis=0)
        return float(col_norms.sum() / (self.sigma * np.sqrt(np.e)))

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "F": self.F.tolist(),
            "support": self.support.tolist(),
            "sigma": self.sigma,
        }
        if self.scaler is not None:
            d["feature_stats"] = self.scaler.to_dict()
        return d


TransportMap = LinearMap | KernelMap


def apply_map(tmap: TransportMap, s) -> np.ndarray:
    """Coefficients predicted for standardized feature vector(s) ``s``.

    A single vector gives shape (d_w,); a (n, d_s) array gives (n, d_w).
    """
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    if single and s.size != tmap.feature_dim:
        raise InvalidInput(f"expected {tmap.feature_dim} feature dimensions, got {s.size}")
    out = tmap.basis(s[None, :] if single else s) @ tmap.F.T
    return out[0] if single else out


def map_from_dict(d: dict) -> TransportMap:
    scaler = FeatureScaler.from_dict(d["feature_stats"]) if "feature_stats" in d else None
    kind = d.get("kind")
    if kind == "linear":
        return LinearMap(np.asarray(d["F"], dtype=float), scaler)
    if kind == "kernel":
        return KernelMap(
            np.asarray(d["F"], dtype=float),
            np.asarray(d["support"], dtype=float),
            float(d["sigma"]),
            scaler,
        )
    raise InvalidInput(f"unknown transport map kind {kind!r}")
