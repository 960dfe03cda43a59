import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsparse.bench import NoiseSpec, contaminate
from dynsparse.smoothing import (
    SmoothingConfig,
    SmoothingError,
    first_difference,
    iterative_smooth,
    minmax_scale,
    odd_window,
    savgol,
    smooth_column,
)
from dynsparse.timeseries import TimeSeries


def test_minmax_scale_examples():
    np.testing.assert_allclose(minmax_scale(np.array([0.0, 5.0, 10.0]))[0], [0, 0.5, 1])
    np.testing.assert_allclose(minmax_scale(np.array([-2.0, 0.0, 2.0]))[0], [0, 0.5, 1])
    y = np.array([0.0, 0.3, 1.0])
    scaled, lo, hi = minmax_scale(y)
    np.testing.assert_array_equal(scaled, y)
    assert (lo, hi) == (0.0, 1.0)


def test_minmax_scale_degenerate():
    with pytest.raises(SmoothingError, match="degenerate"):
        minmax_scale(np.ones(5))


def test_first_difference_examples():
    np.testing.assert_array_equal(first_difference(np.arange(4.0)), [1, 1, 1])
    np.testing.assert_array_equal(first_difference(np.full(4, 2.0)), [0, 0, 0])


def test_first_difference_of_white_noise():
    sigma = 0.7
    e = np.random.default_rng(3).normal(0, sigma, 100_000)
    ratio = np.std(first_difference(e)) / (sigma * np.sqrt(2))
    assert abs(ratio - 1.0) <= 0.05


def _savgol_weights_oracle(window, order):
    # centre row of the least-squares projector through the normal equations
    half = window // 2
    V = np.vander(np.arange(-half, half + 1, dtype=float), order + 1, increasing=True)
    return np.linalg.solve(V.T @ V, V.T)[0]


def test_savgol_weights_window5_order2():
    expected = np.array([-3, 12, 17, 12, -3]) / 35
    np.testing.assert_allclose(_savgol_weights_oracle(5, 2), expected, atol=1e-14)
    y = np.zeros(21)
    y[10] = 1.0
    # the response to a unit impulse at the centre reads the weights back
    got = savgol(y, 5, 2)[8:13]
    np.testing.assert_allclose(got, expected[::-1], atol=1e-12)


@pytest.mark.parametrize("window,order", [(7, 2), (11, 3), (21, 4)])
def test_savgol_interior_weights_match_oracle(window, order):
    y = np.zeros(4 * window)
    c = 2 * window
    y[c] = 1.0
    half = window // 2
    got = savgol(y, window, order)[c - half : c + half + 1][::-1]
    np.testing.assert_allclose(got, _savgol_weights_oracle(window, order), atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_savgol_reproduces_polynomials(order):
    t = np.linspace(-1, 1, 101)
    p = np.polynomial.Polynomial(np.arange(1, order + 2, dtype=float))(t)
    np.testing.assert_allclose(savgol(p, 11, order), p, atol=1e-10)


def test_savgol_parameter_errors():
    y = np.arange(20.0)
    with pytest.raises(ValueError):
        savgol(y, 6, 2)
    with pytest.raises(ValueError):
        savgol(y, 3, 3)
    with pytest.raises(ValueError):
        savgol(y, 21, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-5, 5))
def test_savgol_is_linear(seed, a, b):
    r = np.random.default_rng(seed)
    y1, y2 = r.normal(size=(2, 60))
    lhs = savgol(a * y1 + b * y2, 11, 2)
    rhs = a * savgol(y1, 11, 2) + b * savgol(y2, 11, 2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_odd_window():
    assert odd_window(10) == 11 and odd_window(11) == 11


def _series(sigma, seed=0, m=3000):
    t = np.arange(m) * 0.01
    clean = np.column_stack([np.sin(t), np.cos(0.5 * t) * 3])
    return contaminate(TimeSeries(t, clean), NoiseSpec(sigma, seed))


def test_noiseless_signal_keeps_initial_window():
    ts = _series(0.0)
    out, windows = iterative_smooth(ts, SmoothingConfig())
    assert windows == [11, 11]
    np.testing.assert_allclose(out.values[:, 0], savgol(ts.values[:, 0], 11, 2))


def test_window_grows_with_noise(lv_clean):
    w2 = iterative_smooth(contaminate(lv_clean, NoiseSpec(2.0, 0)))[1]
    w10 = iterative_smooth(contaminate(lv_clean, NoiseSpec(10.0, 0)))[1]
    assert all(b >= a for a, b in zip(w2, w10)) and sum(w10) > sum(w2)


def test_returned_filter_uses_raw_data_and_previous_window():
    ts = _series(0.05)
    out, windows = iterative_smooth(ts)
    for j, w in enumerate(windows):
        np.testing.assert_allclose(out.values[:, j], savgol(ts.values[:, j], w, 2))


def test_state_permutation_commutes():
    ts = _series(0.05)
    out, w = iterative_smooth(ts)
    perm = TimeSeries(ts.times, ts.values[:, ::-1])
    out_p, w_p = iterative_smooth(perm)
    np.testing.assert_array_equal(out_p.values, out.values[:, ::-1])
    assert w_p == w[::-1]


def test_noise_proxy_sequence_non_increasing():
    ts = _series(0.2)
    cfg = SmoothingConfig()
    _, _, history = smooth_column(ts.values[:, 0], cfg)
    assert len(history) >= 2
    assert all(b <= a * 1.05 for a, b in zip(history, history[1:]))


def test_insufficient_data():
    t = np.arange(15) * 0.1
    with pytest.raises(SmoothingError, match="insufficient data"):
        iterative_smooth(TimeSeries(t, np.sin(t)))
    r = np.random.default_rng(0)
    t = np.arange(40) * 0.1
    with pytest.raises(SmoothingError, match="insufficient data"):
        iterative_smooth(TimeSeries(t, r.normal(size=40)), SmoothingConfig(threshold=1e-9))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_iterative_smooth_terminates_on_bounded_series(seed, amp):
    r = np.random.default_rng(seed)
    t = np.arange(400) * 0.05
    y = np.sin(t) + amp * r.normal(size=t.size)
    try:
        _, windows = iterative_smooth(TimeSeries(t, y))
    except SmoothingError as exc:
        assert "insufficient data" in str(exc)
    else:
        assert all(w % 2 == 1 and w <= t.size for w in windows)


def test_config_validation():
    with pytest.raises(ValueError):
        SmoothingConfig(initial_window=2, poly_order=3)
    with pytest.raises(ValueError):
        SmoothingConfig(threshold=0)
