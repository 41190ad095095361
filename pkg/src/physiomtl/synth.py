"""Synthetic cosinor tasks whose rhythm parameters are affine in a scalar feature."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInput
from .ot import wasserstein_1d
from .rhythm import TaskRecord


@dataclass(frozen=True)
class SynthConfig:
    p: float = 0.0
    q: float = 10.0
    a_m: float = 50.0
    b_m: float = 2.0
    a_A: float = 10.0
    b_A: float = 1.0
    a_phi: float = 0.0
    b_phi: float = 0.1
    sigma_noise: float = 2.0
    period: float = 24.0
    n_per_task: int = 20
    n_train: int = 10
    n_test: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.p > self.q:
            raise InvalidInput(f"feature support is empty: p={self.p} > q={self.q}")
        if self.sigma_noise < 0:
            raise InvalidInput("sigma_noise must be nonnegative")
        if not self.period > 0:
            raise InvalidInput("period must be positive")
        if min(self.n_per_task, self.n_train, self.n_test) < 1:
            raise InvalidInput("task and sample counts must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInput(f"unknown SynthConfig keys: {sorted(unknown)}")
        return cls(**d)

    def params(self, s):
        """Ground-truth ``(mesor, amplitude, phase)`` at feature value(s) ``s``."""
        s = np.asarray(s, dtype=float)
        return (
            self.a_m + self.b_m * s,
            self.a_A + self.b_A * s,
            self.a_phi + self.b_phi * s,
        )

    def true_coef(self, s) -> np.ndarray:
        """Ground-truth ``(w0, w1, w2)`` at feature value(s) ``s``, shape (..., 3)."""
        m, A, phi = self.params(s)
        return np.stack([m, A * np.cos(phi), A * np.sin(phi)], axis=-1)


def _make_task(task_id, s, config: SynthConfig, rng) -> TaskRecord:
    m, A, phi = config.params(s)
    times = rng.uniform(0.0, config.period, size=config.n_per_task)
    noise = rng.normal(0.0, config.sigma_noise, size=config.n_per_task) if config.sigma_noise > 0 else 0.0
    values = m + A * np.sin(2.0 * np.pi * times / config.period + phi) + noise
    return TaskRecord(task_id, times, values, np.array([s]))


def generate_tasks(
    config: SynthConfig,
    n_tasks: int | None = None,
    shift: float = 0.0,
    rng: np.random.Generator | None = None,
    prefix: str = "task",
) -> list[TaskRecord]:
    """Draw tasks with ``s ~ U[p + shift, q + shift]``.

    Without an explicit ``rng`` the stream is seeded from ``config.seed``;
    ``n_tasks`` defaults to ``n_train + n_test``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if n_tasks is None:
        n_tasks = config.n_train + config.n_test
    if n_tasks < 1:
        raise InvalidInput("n_tasks must be positive")
    feats = rng.uniform(config.p + shift, config.q + shift, size=n_tasks)
    width = len(str(n_tasks - 1))
    return [_make_task(f"{prefix}{i:0{width}d}", s, config, rng) for i, s in enumerate(feats)]


def scalar_divergence(train, test, rng: np.random.Generator) -> float:
    """W2 between the first feature of two task groups, subsampled to equal size."""
    a = np.array([t.features[0] for t in train])
    b = np.array([t.features[0] for t in test])
    k = min(a.size, b.size)
    if a.size > k:
        a = rng.choice(a, size=k, replace=False)
    if b.size > k:
        b = rng.choice(b, size=k, replace=False)
    return wasserstein_1d(a, b)


def split_by_divergence(tasks, n_train: int, n_test: int, seed: int = 0):
    """Random disjoint train/test split plus the feature divergence between the two."""
    if n_train < 1 or n_test < 1 or n_train + n_test > len(tasks):
        raise InvalidInput(
            f"cannot draw {n_train} train + {n_test} test tasks from {len(tasks)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(tasks))
    train = [tasks[i] for i in order[:n_train]]
    test = [tasks[i] for i in order[n_train : n_train + n_test]]
    return train, test, scalar_divergence(train, test, rng)


def shifted_split(config: SynthConfig, shift: float, seed: int):
    """Training tasks on ``[p, q]`` and test tasks on ``[p + shift, q + shift]``."""
    rng = np.random.default_rng(seed)
    train = generate_tasks(config, config.n_train, 0.0, rng, prefix="train")
    test = generate_tasks(config, config.n_test, shift, rng, prefix="test")
    return train, test, scalar_divergence(train, test, rng)
