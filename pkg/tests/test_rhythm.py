import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from physiomtl.errors import DegenerateFit, InvalidInput
from physiomtl.rhythm import (
    RhythmModel,
    TaskRecord,
    design_matrix,
    fit_rhythm,
    predict_rhythm,
    to_physio,
)


def test_design_matrix_columns():
    X = design_matrix([0.0, 6.0, 12.0], 24.0)
    expected = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [0.0, -1.0, 1.0]])
    np.testing.assert_allclose(X, expected, atol=1e-15)


def test_design_matrix_rejects_bad_input():
    with pytest.raises(InvalidInput):
        design_matrix([], 24.0)
    with pytest.raises(InvalidInput):
        design_matrix([1.0], 0.0)


def test_task_record_validation():
    with pytest.raises(InvalidInput):
        TaskRecord("a", [1.0, 2.0], [1.0], [0.0])
    with pytest.raises(InvalidInput):
        TaskRecord("a", [1.0], [np.nan], [0.0])


def test_fit_recovers_noise_free_coefficients():
    truth = RhythmModel(55.0, -4.0, 7.5)
    times = np.array([0.5, 3.0, 7.25, 11.0, 19.0])
    rec = TaskRecord("x", times, predict_rhythm(truth, times), [0.0])
    got = fit_rhythm(rec, ridge_eps=0.0)
    np.testing.assert_allclose(got.coef, truth.coef, atol=1e-8)


def test_degenerate_fit_names_task():
    rec = TaskRecord("lonely", [3.0, 3.0, 3.0], [1.0, 2.0, 3.0], [0.0])
    with pytest.raises(DegenerateFit, match="lonely"):
        fit_rhythm(rec, ridge_eps=0.0)
    # the ridge term makes the same data solvable
    assert np.all(np.isfinite(fit_rhythm(rec, ridge_eps=1e-8).coef))


def test_to_physio_examples():
    assert to_physio(RhythmModel(50.0, 0.0, 0.0)) == (50.0, 0.0, 0.0)
    M, A, phase = to_physio(RhythmModel(0.0, 3.0, 4.0))
    assert M == 0.0 and A == pytest.approx(5.0)
    assert phase == pytest.approx(np.arctan2(4.0, 3.0))


@settings(max_examples=50, deadline=None)
@given(
    coef=st.tuples(*[st.floats(-100, 100, allow_nan=False)] * 3),
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(3, 30),
)
def test_recovery_property(coef, seed, n):
    rng = np.random.default_rng(seed)
    # distinct times at least 0.1 h apart keep the design well conditioned
    times = rng.choice(np.arange(0, 24, 0.1), size=n, replace=False)
    truth = RhythmModel(*coef)
    rec = TaskRecord("p", times, predict_rhythm(truth, times), [0.0])
    np.testing.assert_allclose(fit_rhythm(rec, ridge_eps=0.0).coef, truth.coef, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(
    mesor=st.floats(-50, 50),
    amp=st.floats(0.01, 50),
    phase=st.floats(-3.1, 3.1),
)
def test_physio_roundtrip(mesor, amp, phase):
    M, A, p = to_physio(RhythmModel.from_physio(mesor, amp, phase))
    assert M == pytest.approx(mesor)
    assert A == pytest.approx(amp)
    assert p == pytest.approx(phase, abs=1e-9)
