import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as L

from dynsparse.discretize import (
    build_grid,
    collocation_solve,
    lagrange_derivative_matrix,
    lagrange_values,
    legendre_points,
    radau_points,
    spline_to_grid,
)
from dynsparse.timeseries import TimeSeries


def radau_oracle(K):
    """Right Radau points on (0, 1]: roots of P_K - P_{K-1} through the
    eigenvalues of the Legendre companion matrix, mapped from [-1, 1]."""
    c = np.zeros(K + 1)
    c[K], c[K - 1] = 1.0, -1.0
    roots = np.linalg.eigvals(L.legcompanion(c)).real
    return np.sort(0.5 * (roots + 1.0))


@pytest.mark.parametrize("K", range(1, 8))
def test_radau_points_match_companion_oracle(K):
    got = radau_points(K)
    np.testing.assert_allclose(got, radau_oracle(K), atol=1e-12)
    assert got[-1] == 1.0
    assert np.all(np.diff(got) > 0) and got[0] > 0


def test_radau_known_values():
    np.testing.assert_array_equal(radau_points(1), [1.0])
    np.testing.assert_allclose(radau_points(2), [1 / 3, 1.0], atol=1e-15)
    s6 = np.sqrt(6.0)
    np.testing.assert_allclose(radau_points(3), [(4 - s6) / 10, (4 + s6) / 10, 1.0], atol=1e-15)


@pytest.mark.parametrize("K", [0, 16])
def test_radau_range(K):
    with pytest.raises(ValueError):
        radau_points(K)


def test_radau_fifteen_points_supported():
    tau = radau_points(15)
    assert tau.size == 15 and tau[-1] == 1.0
    np.testing.assert_allclose(tau, radau_oracle(15), atol=1e-10)


def test_legendre_points_symmetric():
    tau = legendre_points(4)
    np.testing.assert_allclose(tau + tau[::-1], 1.0, atol=1e-14)


@pytest.mark.parametrize("K", [1, 2, 3])
def test_derivative_matrix_exact_for_polynomials(K):
    nodes = np.concatenate([[0.0], radau_points(K)])
    D = lagrange_derivative_matrix(nodes)
    np.testing.assert_allclose(D.sum(axis=1), 0.0, atol=1e-12)
    r = np.random.default_rng(K)
    for deg in range(K + 1):
        c = r.normal(size=deg + 1)
        p = np.polynomial.Polynomial(c)
        np.testing.assert_allclose(D @ p(nodes), p.deriv()(nodes), atol=1e-10)


def test_derivative_matrix_squares():
    nodes = np.concatenate([[0.0], radau_points(3)])
    np.testing.assert_allclose(lagrange_derivative_matrix(nodes) @ nodes**2, 2 * nodes, atol=1e-12)


@pytest.mark.parametrize("K", [1, 2, 3, 5])
def test_derivative_matrix_matches_finite_differences(K):
    nodes = np.concatenate([[0.0], radau_points(K)])
    D = lagrange_derivative_matrix(nodes)
    h = 1e-6
    for j in range(nodes.size):
        for k, tk in enumerate(nodes):
            fd = (lagrange_values(nodes, tk + h)[j] - lagrange_values(nodes, tk - h)[j]) / (2 * h)
            assert abs(fd - D[k, j]) <= 1e-6 * max(1.0, abs(D[k, j]))


def test_duplicate_nodes_rejected():
    with pytest.raises(ValueError):
        lagrange_derivative_matrix(np.array([0.0, 0.5, 0.5]))


@settings(max_examples=30)
@given(st.integers(1, 6), st.sampled_from(["radau", "legendre"]))
def test_continuity_weights_partition_of_unity(K, scheme):
    g = build_grid(0.0, 1.0, 2, K, scheme)
    assert g.continuity_weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_build_grid_lotka_volterra_widths():
    g = build_grid(0.0, 6.0, 50, 3)
    np.testing.assert_allclose(g.h, 0.12, rtol=1e-12)
    assert g.n_stamps == 50 * 3 + 1
    t = g.times()
    assert np.all(np.diff(t) > 0)
    for i in range(g.n_elements):
        np.testing.assert_allclose(t[g.element_stamps(i)[1:]], g.element_bounds[i] + g.tau * g.h[i])


def test_single_element_single_point():
    g = build_grid(2.0, 3.0, 1, 1)
    np.testing.assert_allclose(g.times(), [2.0, 5.0])


def test_grid_errors():
    with pytest.raises(ValueError):
        build_grid(0.0, 0.0, 5, 3)
    with pytest.raises(ValueError):
        build_grid(0.0, 1.0, 0, 3)


def _sampled(f, t):
    return TimeSeries(t, np.column_stack([f(t), 2 * f(t)]))


def test_spline_reproduces_cubic_interior():
    t = np.linspace(0, 1, 401)
    p = np.polynomial.Polynomial([1.0, -2.0, 0.5, 3.0])
    g = build_grid(0.3, 0.4, 10, 3)
    vals = spline_to_grid(_sampled(p, t), g)
    np.testing.assert_allclose(vals[:, 0], p(g.times()), atol=1e-9)


def test_spline_exact_at_samples():
    t = np.arange(0, 2.0001, 0.1)
    ts = _sampled(np.exp, t)
    g = build_grid(0.0, 2.0, 20, 1)
    np.testing.assert_allclose(spline_to_grid(ts, g), ts.values, rtol=1e-13)


def test_spline_error_for_sine_at_lotka_volterra_rate():
    t = np.arange(0, 6.0001, 0.002)
    g = build_grid(0.5, 5.0, 50, 3)
    vals = spline_to_grid(_sampled(np.sin, t), g)
    assert np.max(np.abs(vals[:, 0] - np.sin(g.times()))) <= 1e-9


def test_spline_refuses_extrapolation():
    t = np.linspace(0, 1, 11)
    with pytest.raises(ValueError, match="beyond the data"):
        spline_to_grid(_sampled(np.sin, t), build_grid(0.5, 1.0, 4, 3))


@pytest.mark.parametrize("K", [1, 2, 3])
def test_radau_superconvergence(K):
    lam = -1.0
    T = 1.0

    def err(n):
        g = build_grid(0.0, T, n, K)
        X = collocation_solve(lambda x: lam * x, lambda x: np.array([[lam]]), np.array([1.0]), g)
        return abs(X[-1, 0] - np.exp(lam * T))

    n = {1: 32, 2: 8, 3: 4}[K]
    ratio = err(n) / err(2 * n)
    assert ratio >= 2 ** (2 * K - 1) * 0.5
