from dataclasses import replace

import numpy as np
import pytest

from physiomtl.errors import InvalidInput
from physiomtl.harness import (
    GlobalAverageMethod,
    KnnTransferMethod,
    PhysioMTLMethod,
    counterfactual_sweep,
    divergence_sweep,
    make_method,
    repeat_splits,
    rmse,
    run_split_experiment,
    split_sizes,
    summarize_sweep,
    sweep_slopes,
    training_scaler_matches,
)
from physiomtl.rhythm import RhythmModel, to_physio
from physiomtl.synth import SynthConfig, generate_tasks
from physiomtl.trainer import FitConfig, fit


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    with pytest.raises(InvalidInput):
        rmse([], [])


def test_split_sizes():
    assert split_sizes(21, 0.8) == (17, 4)
    assert split_sizes(21, 0.2) == (4, 17)
    assert split_sizes(3, 0.01) == (1, 2)
    with pytest.raises(InvalidInput):
        split_sizes(10, 1.0)


def test_repeat_splits_disjoint_and_reproducible():
    a = list(repeat_splits(15, 0.6, 4, seed=2))
    b = list(repeat_splits(15, 0.6, 4, seed=2))
    assert len(a) == 4
    for (tr, te), (tr2, te2) in zip(a, b):
        np.testing.assert_array_equal(tr, tr2)
        assert set(tr).isdisjoint(te) and len(tr) + len(te) == 15


def test_report_counts_and_statistics(synth_tasks):
    rep = run_split_experiment(synth_tasks, GlobalAverageMethod(), 0.6, repeats=5, seed=1)
    assert rep.repeats == 5 and (rep.n_train, rep.n_test) == (9, 6)
    vals = np.array(rep.rmses)
    assert rep.mean == np.mean(vals) and rep.std == np.std(vals)
    again = run_split_experiment(synth_tasks, GlobalAverageMethod(), 0.6, repeats=5, seed=1)
    assert again.to_dict() == rep.to_dict()


def test_pooled_rmse_against_manual_split(synth_tasks):
    method = KnnTransferMethod(k=3)
    rep = run_split_experiment(synth_tasks, method, 0.8, repeats=1, seed=0)
    tr, te = next(repeat_splits(len(synth_tasks), 0.8, 1, 0))
    predict = method.fit([synth_tasks[i] for i in tr])
    pred = np.concatenate([predict(synth_tasks[i].features, synth_tasks[i].times) for i in te])
    actual = np.concatenate([synth_tasks[i].values for i in te])
    assert rep.rmses[0] == pytest.approx(np.sqrt(np.mean((pred - actual) ** 2)))


def test_scaler_uses_training_tasks_only(synth_tasks):
    method = PhysioMTLMethod(FitConfig(map_kind="linear"))
    tr, _ = next(repeat_splits(len(synth_tasks), 0.6, 1, 3))
    train = [synth_tasks[i] for i in tr]
    method.fit(train)
    assert training_scaler_matches(method.last_model, train)
    assert not training_scaler_matches(method.last_model, synth_tasks)


def test_make_method_names():
    assert make_method("single-lasso").l1_penalty == 0.9
    assert make_method("physiomtl-linear").fit_config.map_kind == "linear"
    with pytest.raises(InvalidInput):
        make_method("oracle")


def test_divergence_sweep_table():
    methods = [GlobalAverageMethod(), make_method("physiomtl-linear")]
    rows = divergence_sweep(SynthConfig(), [0.0, 4.0, 8.0], methods, seed=0, n_seeds=2)
    assert len(rows) == 3 * 2 * 2
    assert all(r.rmse >= 0 for r in rows)
    summary = summarize_sweep(rows)
    divs = [p[1] for p in summary["global-average"]]
    assert summary["global-average"][0][0] == 0.0 and divs[0] == min(divs)
    assert set(sweep_slopes(rows)) == {"global-average", "physiomtl-linear"}


@pytest.fixture(scope="module")
def linear_model():
    cfg = SynthConfig(a_phi=0.7, b_phi=0.0, sigma_noise=0.5, n_per_task=30, seed=2)
    return fit(generate_tasks(cfg, n_tasks=30), FitConfig(map_kind="linear"))


def test_counterfactual_counts(linear_model):
    curves = counterfactual_sweep(linear_model, "s0", [1.0, 2.0, 3.0])
    assert len(curves) == 4 and curves[0].label == "baseline"
    assert curves[0].value == pytest.approx(float(linear_model.scaler.medians[0]))
    with pytest.raises(InvalidInput):
        counterfactual_sweep(linear_model, "age", [1.0])


def test_counterfactual_zero_sensitivity(linear_model):
    F = linear_model.map.F.copy()
    F[:, 0] = 0.0
    flat = replace(linear_model, map=linear_model.map.with_params(F))
    curves = counterfactual_sweep(flat, "s0", [0.0, 5.0, 10.0])
    for c in curves[1:]:
        np.testing.assert_array_equal(c.values, curves[0].values)


def test_counterfactual_reproduces_generator_trends(linear_model):
    grid = np.linspace(0, 10, 6)
    curves = counterfactual_sweep(linear_model, "s0", grid)[1:]
    params = []
    for c in curves:
        X = np.column_stack([np.ones_like(c.times), np.sin(2 * np.pi * c.times / 24), np.cos(2 * np.pi * c.times / 24)])
        coef = np.linalg.lstsq(X, c.values, rcond=None)[0]
        params.append(to_physio(RhythmModel.from_coef(coef))[:2])
    mesor, amp = np.array(params).T
    # both slopes of the generator are positive
    assert np.all(np.diff(mesor) > 0) and np.all(np.diff(amp) > 0)
