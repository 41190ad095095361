"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np

from physiomtl.ot import cost_matrix, sinkhorn
from physiomtl.rhythm import TaskRecord
from physiomtl.trainer import grad_map, grad_weights, objective
from physiomtl.transport_map import FeatureScaler, KernelMap, LinearMap


def brute_objective(W, tmap, pi, tasks, alpha, period=24.0):
    """Double loop straight from the loss definition."""
    total = 0.0
    for t, task in enumerate(tasks):
        for tau, y in zip(task.times, task.values):
            ang = 2 * np.pi * tau / period
            pred = W[t, 0] + W[t, 1] * np.sin(ang) + W[t, 2] * np.cos(ang)
            total += 0.5 * (pred - y) ** 2
    S = tmap.scaler.transform(np.vstack([t.features for t in tasks]))
    for i in range(len(tasks)):
        if isinstance(tmap, LinearMap):
            phi = np.append(S[i], 1.0)
        else:
            phi = np.exp(-np.sum((tmap.support - S[i]) ** 2, axis=1) / (2 * tmap.sigma**2))
        Fi = tmap.F @ phi
        for j in range(len(tasks)):
            total += alpha * pi[i, j] * np.sum((Fi - W[j]) ** 2)
    return total


def random_instance(seed, kind=None):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 6))
    d = int(rng.integers(1, 4))
    tasks = []
    for t in range(T):
        n = int(rng.integers(4, 11))
        times = rng.uniform(0, 24, n)
        tasks.append(TaskRecord(f"t{t}", times, 60 + 10 * rng.standard_normal(n), rng.normal(size=d)))
    scaler = FeatureScaler.fit(np.vstack([t.features for t in tasks]))
    S = scaler.transform(np.vstack([t.features for t in tasks]))
    kind = kind or ("linear" if seed % 2 == 0 else "kernel")
    if kind == "linear":
        tmap = LinearMap(rng.normal(size=(3, d + 1)) * 10, scaler)
    else:
        tmap = KernelMap(rng.normal(size=(3, T)) * 10, S, float(rng.uniform(0.5, 3.0)), scaler)
    coupling = sinkhorn(cost_matrix(S), gamma=float(rng.uniform(0.2, 2.0)))
    W = 50 + 10 * rng.normal(size=(T, 3))
    alpha = float(rng.uniform(0.05, 2.0))
    return W, tmap, coupling, tasks, alpha


def _rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def gradient_check(seed, h=1e-6):
    """Relative errors of both analytic gradients against central differences."""
    W, tmap, coupling, tasks, alpha = random_instance(seed)

    def f_W(Wp):
        return objective(Wp, tmap, coupling, tasks, alpha)

    def f_F(Fp):
        return objective(W, tmap.with_params(Fp), coupling, tasks, alpha)

    def central(f, x):
        g = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            step = h * max(1.0, abs(x[idx]))
            up, down = x.copy(), x.copy()
            up[idx] += step
            down[idx] -= step
            g[idx] = (f(up) - f(down)) / (2 * step)
        return g

    gW = grad_weights(W, tmap, coupling, tasks, alpha)
    gF = grad_map(W, tmap, coupling, tasks, alpha)
    return _rel_err(gW, central(f_W, W)), _rel_err(gF, central(f_F, tmap.F))
