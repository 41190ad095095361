import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from physiomtl.errors import InvalidInput
from physiomtl.ot import (
    Coupling,
    cost_matrix,
    exact_ot_small,
    median_offdiag,
    sinkhorn,
    wasserstein_1d,
)


def test_cost_matrix_weighted_abs_difference():
    C = cost_matrix(np.array([[0.0], [1.0], [3.0]]), m=[2.0])
    np.testing.assert_array_equal(C, [[0, 2, 6], [2, 0, 4], [6, 4, 0]])
    assert not cost_matrix(np.ones((3, 2))).any()


def test_cost_matrix_mixed_weights():
    C = cost_matrix(np.array([[0.0, 0.0], [1.0, 2.0]]), m=[1.0, 0.5])
    np.testing.assert_allclose(C, [[0.0, 2.0], [2.0, 0.0]])


def test_cost_matrix_errors():
    with pytest.raises(InvalidInput):
        cost_matrix(np.zeros((3, 2)), m=[1.0])
    with pytest.raises(InvalidInput):
        cost_matrix(np.zeros((3, 2)), m=[1.0, -1.0])


def test_median_offdiag():
    C = np.array([[0, 1, 4], [1, 0, 9], [4, 9, 0]], dtype=float)
    assert median_offdiag(C) == 4.0


def test_sinkhorn_uniform_on_constant_cost():
    P = sinkhorn(np.ones((4, 4)), gamma=0.5).plan
    np.testing.assert_allclose(P, np.full((4, 4), 1 / 16), atol=1e-12)


def test_sinkhorn_small_gamma_approaches_identity():
    C = cost_matrix(np.array([[0.0], [1.0], [3.0]]))
    cp = sinkhorn(C, gamma=1e-3)
    assert cp.converged
    np.testing.assert_allclose(cp.plan, np.eye(3) / 3, atol=1e-8)


def test_sinkhorn_rejects_nonpositive_gamma():
    with pytest.raises(InvalidInput):
        sinkhorn(np.ones((2, 2)), gamma=0.0)


def test_exact_ot_matches_brute_force():
    rng = np.random.default_rng(0)
    C = rng.uniform(size=(5, 5))
    best = min(sum(C[i, p[i]] for i in range(5)) for p in itertools.permutations(range(5))) / 5
    assert exact_ot_small(C).cost(C) == pytest.approx(best)


def test_coupling_roundtrip():
    cp = sinkhorn(cost_matrix(np.arange(4.0)[:, None]), gamma=0.3)
    back = Coupling.from_dict(cp.to_dict())
    np.testing.assert_array_equal(back.plan, cp.plan)
    assert back.n_iter == cp.n_iter and back.converged == cp.converged


def test_wasserstein_1d_examples():
    assert wasserstein_1d([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]) == 0.0
    assert wasserstein_1d([0.0, 1.0], [2.0, 3.0]) == pytest.approx(2.0)
    with pytest.raises(InvalidInput):
        wasserstein_1d([1.0], [1.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 2**32 - 1), gamma=st.sampled_from([1e-2, 0.1, 1.0]))
def test_sinkhorn_marginals_property(n, seed, gamma):
    C = np.random.default_rng(seed).uniform(size=(n, n))
    cp = sinkhorn(C, gamma=gamma)
    assert cp.marginal_violation() < 1e-8
    assert np.all(cp.plan >= 0)
    # entropic cost is never below the unregularized optimum
    assert cp.cost(C) >= exact_ot_small(C).cost(C) - 1e-12


@settings(max_examples=50, deadline=None)
@given(
    a=st.lists(st.floats(-100, 100), min_size=1, max_size=20),
    shift=st.floats(-10, 10),
)
def test_wasserstein_1d_shift_property(a, shift):
    a = np.array(a)
    assert wasserstein_1d(a, a + shift) == pytest.approx(abs(shift), abs=1e-9)
