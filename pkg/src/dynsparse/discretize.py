"""Orthogonal collocation on finite elements.

Each element ``[t_{i-1}, t_i]`` of width ``h`` carries a Lagrange polynomial
through the element start (``tau_0 = 0``) and ``K`` collocation points
``tau_1..tau_K``.  The ODE is enforced at the collocation points::

    sum_j x_{i,j} * dl_j/dtau (tau_k) = h * f(x_{i,k}),   k = 1..K

and element starts are linked by continuity ``x_{i+1,0} = sum_j l_j(1) x_{i,j}``.
With right Radau points ``tau_K = 1`` and continuity reduces to sharing the
last collocation value, which is how :class:`CollocationGrid` numbers stamps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.special
from scipy.interpolate import CubicSpline

from .timeseries import TimeSeries

MAX_POINTS = 15
SCHEMES = ("radau", "legendre")


def _polish_roots(coef_fn, x: np.ndarray, iters: int = 3) -> np.ndarray:
    for _ in range(iters):
        p, dp = coef_fn(x)
        x = x - p / dp
    return x


def radau_points(K: int) -> np.ndarray:
    """Right Radau abscissae on (0, 1], ascending, last point exactly 1.

    The interior points are the zeros of the Jacobi polynomial
    ``P_{K-1}^{(1,0)}`` mapped from [-1, 1].
    """
    K = int(K)
    if not 1 <= K <= MAX_POINTS:
        raise ValueError(f"number of collocation points must be in [1, {MAX_POINTS}], got {K}")
    if K == 1:
        return np.array([1.0])
    x, _ = scipy.special.roots_jacobi(K - 1, 1.0, 0.0)

    def f(z):
        p = scipy.special.eval_jacobi(K - 1, 1.0, 0.0, z)
        # d/dz P_n^(a,b) = (n + a + b + 1)/2 * P_{n-1}^(a+1,b+1)
        dp = 0.5 * (K + 1) * scipy.special.eval_jacobi(K - 2, 2.0, 1.0, z)
        return p, dp

    x = np.sort(_polish_roots(f, x))
    return np.append(0.5 * (x + 1.0), 1.0)


def legendre_points(K: int) -> np.ndarray:
    """Gauss-Legendre abscissae on (0, 1)."""
    K = int(K)
    if not 1 <= K <= MAX_POINTS:
        raise ValueError(f"number of collocation points must be in [1, {MAX_POINTS}], got {K}")
    x, _ = np.polynomial.legendre.leggauss(K)
    return 0.5 * (np.sort(x) + 1.0)


def _bary_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def lagrange_derivative_matrix(nodes: np.ndarray) -> np.ndarray:
    """``D[k, j] = dl_j/dtau`` at ``nodes[k]`` for the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    if np.unique(nodes).size != nodes.size:
        raise ValueError("collocation nodes must be distinct")
    w = _bary_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def lagrange_values(nodes: np.ndarray, tau: float) -> np.ndarray:
    """``l_j(tau)`` for the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    out = np.empty(nodes.size)
    for j in range(nodes.size):
        others = np.delete(nodes, j)
        out[j] = np.prod((tau - others) / (nodes[j] - others))
    return out


@dataclass(frozen=True)
class CollocationGrid:
    """Uniform finite elements with ``K`` collocation points each.

    Stamps are numbered globally.  For Radau: stamp 0 is the horizon start and
    element ``i`` owns stamps ``i*K + 1 .. i*K + K``, the last of which is the
    element end.  For Legendre each element additionally owns an explicit end
    stamp, tied to the interior values by continuity.
    """

    element_bounds: np.ndarray
    tau: np.ndarray
    deriv_matrix: np.ndarray
    continuity_weights: np.ndarray
    scheme: str = "radau"

    @property
    def n_elements(self) -> int:
        return self.element_bounds.size - 1

    @property
    def K(self) -> int:
        return self.tau.size

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.element_bounds)

    @property
    def per_element(self) -> int:
        return self.K if self.scheme == "radau" else self.K + 1

    @property
    def n_stamps(self) -> int:
        return self.n_elements * self.per_element + 1

    def element_stamps(self, i: int) -> np.ndarray:
        """Global indices of ``x_{i,0}, x_{i,1}, ..., x_{i,K}``."""
        base = i * self.per_element
        return base + np.arange(self.K + 1)

    def end_stamp(self, i: int) -> int:
        return (i + 1) * self.per_element

    def boundary_indices(self) -> np.ndarray:
        return np.arange(self.n_elements + 1) * self.per_element

    def times(self) -> np.ndarray:
        t = np.empty(self.n_stamps)
        t[0] = self.element_bounds[0]
        h = self.h
        for i in range(self.n_elements):
            idx = self.element_stamps(i)[1:]
            t[idx] = self.element_bounds[i] + self.tau * h[i]
            t[self.end_stamp(i)] = self.element_bounds[i + 1]
        return t

    def shifted(self, dt: float) -> CollocationGrid:
        return CollocationGrid(self.element_bounds + dt, self.tau, self.deriv_matrix,
                               self.continuity_weights, self.scheme)


def build_grid(horizon_start: float, horizon_length: float, n_elements: int, K: int = 3,
               scheme: str = "radau") -> CollocationGrid:
    if horizon_length <= 0:
        raise ValueError("horizon length must be positive")
    if n_elements < 1:
        raise ValueError("need at least one finite element")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown collocation scheme {scheme!r}")
    tau = radau_points(K) if scheme == "radau" else legendre_points(K)
    nodes = np.concatenate([[0.0], tau])
    bounds = horizon_start + horizon_length * np.arange(n_elements + 1) / n_elements
    bounds[-1] = horizon_start + horizon_length
    return CollocationGrid(
        element_bounds=bounds,
        tau=tau,
        deriv_matrix=lagrange_derivative_matrix(nodes),
        continuity_weights=lagrange_values(nodes, 1.0),
        scheme=scheme,
    )


def spline_to_grid(ts: TimeSeries, grid: CollocationGrid, times: np.ndarray | None = None) -> np.ndarray:
    """Natural cubic-spline interpolation of every state at the grid stamps."""
    t = grid.times() if times is None else np.asarray(times, dtype=float)
    lo, hi = ts.times[0], ts.times[-1]
    slack = 1e-9 * max(abs(ts.dt), 1e-300)
    if t.min() < lo - slack or t.max() > hi + slack:
        raise ValueError(
            f"grid [{t.min():.6g}, {t.max():.6g}] extends beyond the data [{lo:.6g}, {hi:.6g}]"
        )
    t = np.clip(t, lo, hi)
    spline = CubicSpline(ts.times, ts.values, axis=0, bc_type="natural", extrapolate=False)
    return spline(t)


def collocation_solve(rhs, jac, x0: np.ndarray, grid: CollocationGrid, tol: float = 1e-13,
                      max_newton: int = 50) -> np.ndarray:
    """Integrate ``x' = rhs(x)`` through the collocation equations, element by
    element with Newton's method.  Returns states at every stamp, shape
    ``(n_stamps, n_x)``.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    K = grid.K
    D = grid.deriv_matrix
    out = np.empty((grid.n_stamps, n))
    out[0] = x0
    start = x0
    eye = np.eye(n)
    for i, h in enumerate(grid.h):
        X = np.tile(start, (K, 1))
        for _ in range(max_newton):
            F = D[1:, 0][:, None] * start + D[1:, 1:] @ X - h * np.array([rhs(x) for x in X])
            J = np.kron(D[1:, 1:], eye)
            for k in range(K):
                J[k * n:(k + 1) * n, k * n:(k + 1) * n] -= h * jac(X[k])
            step = np.linalg.solve(J, -F.ravel()).reshape(K, n)
            X = X + step
            if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(X))):
                break
        idx = grid.element_stamps(i)
        out[idx[1:]] = X
        nodes_vals = np.vstack([start[None], X])
        end = grid.continuity_weights @ nodes_vals
        if grid.scheme != "radau":
            out[grid.end_stamp(i)] = end
        start = end
    return out
