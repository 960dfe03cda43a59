import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsparse.basis import Dictionary, default_dictionary
from dynsparse.mho import (
    DiscoveredModel,
    DiscretizationConfig,
    MovingHorizonConfig,
    run_discovery,
    threshold_round,
    widen,
    window_indices,
)
from dynsparse.preprocess import prune_and_bound
from dynsparse.coefficients import CoefficientMatrix


def test_window_indices_examples():
    assert len(window_indices(5000, 3000, 100)) == 21
    assert window_indices(9, 3, 3) == [(0, 3), (3, 6), (6, 9)]
    assert window_indices(50, 50, 7) == [(0, 50)]
    assert window_indices(10, 11, 1) == []


@given(st.integers(1, 500), st.integers(1, 500), st.integers(1, 100))
def test_window_indices_properties(m, h, step):
    w = window_indices(m, h, step)
    if h > m:
        assert w == []
        return
    assert len(w) == (m - h) // step + 1
    assert all(e - s == h and e <= m and s == i * step for i, (s, e) in enumerate(w))


def test_window_samples():
    assert MovingHorizonConfig(horizon=6.0).window_samples(1 / 500) == 3000
    with pytest.raises(ValueError):
        MovingHorizonConfig(horizon=6.0001).window_samples(1 / 500)


D2 = Dictionary([["1", "x1", "x2"], ["1", "x2", "x1"]])


def _estimates(values_by_window):
    return [np.asarray(v, dtype=float) for v in values_by_window]


def test_threshold_equal_estimates_kept():
    est = _estimates([[[0.5, 1.0], [2.0, -3.0], [1.0, 1.0]]] * 10)
    res = threshold_round(est, D2, D2.mask(), 1.0, 5)
    assert res.mask.all()
    assert np.all(res.cv == 0)


def test_threshold_high_cv_pruned():
    r = np.random.default_rng(0)
    base = np.array([[0.0, 1.0], [1.0, 1.0], [0.1, 1.0]])
    est = []
    for _ in range(10):
        e = base.copy()
        e[2, 0] = 0.1 + r.normal()
        est.append(e)
    # force mean 0.1, std 0.5 exactly on entry (2, 0)
    vals = np.array([e[2, 0] for e in est])
    vals = 0.1 + 0.5 * (vals - vals.mean()) / vals.std()
    for e, v in zip(est, vals):
        e[2, 0] = v
    res = threshold_round(est, D2, D2.mask(), 1.0, 5)
    assert res.cv[2, 0] == pytest.approx(5.0)
    assert not res.mask[2, 0]


def test_protected_terms_survive_early_rounds():
    est = []
    for k in range(10):
        e = np.ones((3, 2))
        e[0, 0] = 0.1 + (0.5 if k % 2 else -0.5)  # constant term, CV = 5
        est.append(e)
    assert threshold_round(est, D2, D2.mask(), 1.0, 1).mask[0, 0]
    assert threshold_round(est, D2, D2.mask(), 1.0, 2).mask[0, 0]
    assert not threshold_round(est, D2, D2.mask(), 1.0, 3).mask[0, 0]


def test_zero_mean_is_pruned():
    est = [np.ones((3, 2)) for _ in range(4)]
    for e in est:
        e[1, 1] = 0.0
    assert not threshold_round(est, D2, D2.mask(), 1.0, 5).mask[1, 1]


def test_tie_at_gamma_pruned():
    est = [np.ones((3, 2)) for _ in range(2)]
    est[0][2, 1], est[1][2, 1] = 0.0, 2.0  # mean 1, population std 1
    assert not threshold_round(est, D2, D2.mask(), 1.0, 5).mask[2, 1]


def test_negligible_contribution_pruned():
    est = [np.ones((3, 2)) for _ in range(3)]
    scale = np.ones((3, 2))
    scale[2, 0] = 1e-4
    res = threshold_round(est, D2, D2.mask(), 1.0, 5, contribution_scale=scale, negligible=1e-3)
    assert not res.mask[2, 0] and res.mask[1, 0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_threshold_never_revives_terms(seed, rnd):
    r = np.random.default_rng(seed)
    active = r.random((3, 2)) < 0.7
    est = [r.normal(1.0, r.uniform(0, 2), (3, 2)) for _ in range(5)]
    res = threshold_round(est, D2, active, 1.0, rnd)
    assert not np.any(res.mask & ~active)


def test_widen_floor():
    cm = CoefficientMatrix(np.array([[2.0]]), [[1.99]], [[2.01]], [[True]])
    w = widen(cm, 1.0)
    assert (w.lower[0, 0], w.upper[0, 0]) == (0.0, 4.0)
    assert widen(cm, 0.0) is cm


def test_model_json_round_trip_and_equations():
    d = default_dictionary(2)
    coef = np.zeros((d.n_max, 2))
    mask = np.zeros_like(coef, bool)
    for j, terms in enumerate([{"x1": 1.0002, "x1*x2": -0.01}, {"x2": -1.0, "x1*x2": 0.02}]):
        for label, c in terms.items():
            coef[d.index(j, label), j] = c
            mask[d.index(j, label), j] = True
    m = DiscoveredModel(d, coef, mask, "converged", {"config_hash": "abc"})
    assert m.equations().splitlines()[0] == "dx1/dt = 1.0002*x1 - 0.0100*x1*x2"
    back = DiscoveredModel.from_json(m.to_json())
    assert back.to_json() == m.to_json()
    assert back.terms() == m.terms()


def _truth_dictionary_run(lv_clean, **mh):
    d = Dictionary([["x1", "x1*x2"], ["x2", "x1*x2"]])
    report = prune_and_bound(lv_clean, d, None, 0.9, 1e-6)
    cfg = MovingHorizonConfig(**mh)
    return run_discovery(lv_clean, report, d, mh_cfg=cfg, disc_cfg=DiscretizationConfig(n_elements=50))


@pytest.fixture(scope="module")
def truth_run(lv_clean):
    return _truth_dictionary_run(lv_clean, omega=4, data_step=200)


def test_truth_dictionary_converges_in_minimum_rounds(truth_run):
    model, trace = truth_run
    assert model.status == "converged"
    assert trace.kept_counts == [4, 4]
    assert model.provenance["thresholding_rounds"] == 2
    np.testing.assert_allclose([model.terms()[0]["x1"], model.terms()[0]["x1*x2"]], [1.0, -0.01], rtol=1e-3)


def test_averaged_coefficients_audit(truth_run):
    model, trace = truth_run
    used = model.provenance["averaged_windows"]
    assert len(used) == 4 * 2
    est = [trace.estimates[trace.window_index.index(w)] for w in used]
    np.testing.assert_allclose(model.coefficients, np.mean(est, axis=0), rtol=0, atol=1e-15)


def test_kept_counts_non_increasing(truth_run):
    _, trace = truth_run
    assert all(b <= a for a, b in zip(trace.kept_counts, trace.kept_counts[1:]))


def test_true_terms_cv_small_on_noiseless_data(truth_run):
    _, trace = truth_run
    for cv in trace.cv_tables:
        assert np.nanmax(cv) < 0.05


def test_not_converged_when_data_run_out(lv_clean):
    short = lv_clean.slice(0, 3601)
    model, trace = _truth_dictionary_run(short, omega=4, data_step=200)
    assert model.status == "not converged"
    assert "larger data set" in trace.message and "dictionary" in trace.message


def test_discovery_is_deterministic(lv_clean):
    a = _truth_dictionary_run(lv_clean.slice(0, 4001), omega=2, data_step=200)
    b = _truth_dictionary_run(lv_clean.slice(0, 4001), omega=2, data_step=200)
    assert a[0].to_json() == b[0].to_json()
    assert a[1].to_json() == b[1].to_json()
    json.loads(a[1].to_json())
