"""Windowed dynamic estimation problem and its solver.

Decision variables are the states at every collocation stamp of one horizon
window plus the active dictionary coefficients.  The problem is::

    min   1/(2M) * sum_{element ends b} ||x_b - data_b||^2 + lam * reg(xi)
    s.t.  collocation equations on every element
          x(start) = data(start)
          lower <= xi <= upper

It is solved with a generalized Gauss-Newton method: at every iterate the
linearized constraints are solved for the state update (the state block of
the constraint Jacobian is square and banded), which leaves a small
bound-constrained linear least-squares problem in the coefficients.  A
Levenberg-Marquardt damping term and an exact-penalty merit function
globalize the iteration.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import lsq_linear

from .basis import BasisFunction, Dictionary
from .coefficients import CoefficientMatrix
from .discretize import CollocationGrid, spline_to_grid
from .timeseries import TimeSeries

log = logging.getLogger(__name__)

REGULARIZERS = ("none", "l2", "l1_smooth")
L1_EPS = 1e-8
# early-stopped solutions up to this feasibility still count as estimates
USABLE_FEAS = 1e-6


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class DNLPConfig:
    lam: float = 0.0
    regularizer: str = "none"
    tol_feas: float = 1e-8
    tol_opt: float = 1e-6
    max_iter: int = 100

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")


class _Terms:
    """Active terms of each state with their offsets in the coefficient vector."""

    def __init__(self, d: Dictionary, mask: np.ndarray):
        self.n_x = d.n_x
        self.terms: list[list[BasisFunction]] = []
        self.offsets = [0]
        for j in range(d.n_x):
            keep = [bf for k, bf in enumerate(d.per_state[j]) if mask[k, j]]
            self.terms.append(keep)
            self.offsets.append(self.offsets[-1] + len(keep))
        self.n_xi = self.offsets[-1]

    def theta(self, X: np.ndarray) -> list[np.ndarray]:
        return [np.stack([bf.evaluate(X) for bf in ts], axis=-1) if ts else np.empty((X.shape[0], 0))
                for ts in self.terms]

    def dtheta(self, X: np.ndarray) -> list[np.ndarray]:
        return [np.stack([bf.gradient(X) for bf in ts], axis=1) if ts else np.empty((X.shape[0], 0, self.n_x))
                for ts in self.terms]

    def split(self, xi: np.ndarray) -> list[np.ndarray]:
        return [xi[self.offsets[j]:self.offsets[j + 1]] for j in range(self.n_x)]


@dataclass(frozen=True)
class WindowProblem:
    """One assembled window.  Variable vector ``z = [X.ravel(), xi]`` with
    ``X`` of shape ``(n_stamps, n_x)`` (stamp-major) and ``xi`` the active
    coefficients in state-by-state order."""

    grid: CollocationGrid
    data_at_grid: np.ndarray
    dictionary: Dictionary
    active_mask: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    lam: float = 0.0
    regularizer: str = "none"
    _terms: _Terms = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_terms", _Terms(self.dictionary, self.active_mask))

    # -- sizes and layout -----------------------------------------------------

    @property
    def n_x(self) -> int:
        return self.dictionary.n_x

    @property
    def n_states(self) -> int:
        return self.grid.n_stamps * self.n_x

    @property
    def n_xi(self) -> int:
        return self._terms.n_xi

    @property
    def n_vars(self) -> int:
        return self.n_states + self.n_xi

    @property
    def fit_indices(self) -> np.ndarray:
        """Stamps entering the mismatch term: the element boundaries."""
        return self.grid.boundary_indices()

    @property
    def n_boundary(self) -> int:
        return self.fit_indices.size

    @property
    def state_scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.data_at_grid))))

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return z[: self.n_states].reshape(self.grid.n_stamps, self.n_x), z[self.n_states:]

    def pack(self, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(X, float).ravel(), np.asarray(xi, float)])

    def initial_point(self, xi0: np.ndarray) -> np.ndarray:
        return self.pack(self.data_at_grid, xi0)

    def coefficient_matrix(self, xi: np.ndarray) -> CoefficientMatrix:
        cm = CoefficientMatrix(np.zeros(self.active_mask.shape), self.lower, self.upper, self.active_mask)
        return cm.with_active_values(xi)

    def active_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower.T[self.active_mask.T], self.upper.T[self.active_mask.T]

    # -- collocation index tables ------------------------------------------------

    def _colloc_index(self):
        g = self.grid
        K = g.K
        starts = np.array([g.element_stamps(i)[0] for i in range(g.n_elements)])
        # stamps[e, l] = global stamp of x_{e,l}, l = 0..K
        stamps = starts[:, None] + np.arange(K + 1)[None, :]
        return stamps, np.repeat(g.h, K)

    # -- objective ------------------------------------------------------------------

    def _reg_residual(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Residual vector ``q`` with ``lam * reg(xi) = 0.5 ||q||^2`` and its diagonal Jacobian."""
        if self.lam == 0.0 or self.regularizer == "none":
            return np.empty(0), np.empty(0)
        s = np.sqrt(2.0 * self.lam)
        if self.regularizer == "l2":
            return s * xi, np.full(xi.size, s)
        root = (xi**2 + L1_EPS**2) ** 0.25
        return s * root, s * 0.5 * xi / root**3

    def objective(self, z: np.ndarray) -> float:
        X, xi = self.split(z)
        b = self.fit_indices
        diff = X[b] - self.data_at_grid[b]
        q, _ = self._reg_residual(xi)
        return float(0.5 * np.sum(diff**2) / self.n_boundary + 0.5 * q @ q)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        X, xi = self.split(z)
        b = self.fit_indices
        gX = np.zeros_like(X)
        gX[b] = (X[b] - self.data_at_grid[b]) / self.n_boundary
        q, dq = self._reg_residual(xi)
        gxi = q * dq if q.size else np.zeros(xi.size)
        return self.pack(gX, gxi)

    # -- constraints ------------------------------------------------------------------

    @property
    def n_constraints(self) -> int:
        g = self.grid
        n = self.n_x * (1 + g.n_elements * g.K)
        if g.scheme != "radau":
            n += self.n_x * g.n_elements
        return n

    def constraints(self, z: np.ndarray) -> np.ndarray:
        """``[x(start) - data(start), collocation residuals, continuity residuals]``.

        Collocation rows are scaled by the element width (state units).
        """
        X, xi = self.split(z)
        g = self.grid
        n = self.n_x
        stamps, hrep = self._colloc_index()
        D = g.deriv_matrix[1:]  # (K, K+1)
        Xe = X[stamps]  # (E, K+1, n)
        lhs = np.einsum("kl,eln->ekn", D, Xe).reshape(-1, n)
        Xc = Xe[:, 1:, :].reshape(-1, n)
        thetas = self._terms.theta(Xc)
        f = np.column_stack([th @ c for th, c in zip(thetas, self._terms.split(xi))])
        colloc = lhs - hrep[:, None] * f
        parts = [X[0] - self.data_at_grid[0], colloc.ravel()]
        if g.scheme != "radau":
            ends = np.array([g.end_stamp(i) for i in range(g.n_elements)])
            cont = X[ends] - np.einsum("l,eln->en", g.continuity_weights, Xe)
            parts.append(cont.ravel())
        return np.concatenate(parts)

    def constraint_jacobian(self, z: np.ndarray) -> sp.csr_matrix:
        X, xi = self.split(z)
        g = self.grid
        K, n = g.K, self.n_x
        E = g.n_elements
        stamps, hrep = self._colloc_index()
        D = g.deriv_matrix[1:]
        Xc = X[stamps[:, 1:]].reshape(-1, n)  # (E*K, n)
        thetas = self._terms.theta(Xc)
        dthetas = self._terms.dtheta(Xc)
        coefs = self._terms.split(xi)
        rows, cols, vals = [], [], []
        # initial condition
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(np.ones(n))
        # collocation: row index 1 + ((e*K + k) * n + j) in units of state blocks
        ek = np.arange(E * K)
        e_idx, k_idx = np.divmod(ek, K)
        base_row = n + ek * n
        for j in range(n):
            r = base_row + j
            # linear part: sum_l D[k, l] x_{e,l,j}
            for l in range(K + 1):
                rows.append(r)
                cols.append(stamps[e_idx, l] * n + j)
                vals.append(D[k_idx, l])
            # model part: -h * sum_t xi_t dtheta_t/dx_i at the collocation stamp
            if coefs[j].size:
                dfj = np.einsum("mti,t->mi", dthetas[j], coefs[j])  # (E*K, n)
                stamp_c = stamps[e_idx, k_idx + 1]
                for i in range(n):
                    rows.append(r)
                    cols.append(stamp_c * n + i)
                    vals.append(-hrep * dfj[:, i])
                off = self.n_states + self._terms.offsets[j]
                nt = coefs[j].size
                rows.append(np.repeat(r, nt))
                cols.append(np.tile(off + np.arange(nt), r.size))
                vals.append((-hrep[:, None] * thetas[j]).ravel())
        if g.scheme != "radau":
            r0 = n + E * K * n
            w = g.continuity_weights
            for e in range(E):
                for j in range(n):
                    r = r0 + e * n + j
                    rows.append(np.array([r]))
                    cols.append(np.array([g.end_stamp(e) * n + j]))
                    vals.append(np.array([1.0]))
                    rows.append(np.full(K + 1, r))
                    cols.append(stamps[e] * n + j)
                    vals.append(-w)
        J = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_constraints, self.n_vars),
        )
        return J.tocsr()

    def feasibility(self, z: np.ndarray) -> float:
        return float(np.max(np.abs(self.constraints(z)))) / self.state_scale

    def continuity_residual(self, z: np.ndarray) -> float:
        """Largest mismatch between each element end and its Lagrange extrapolation."""
        X, _ = self.split(z)
        stamps, _ = self._colloc_index()
        ext = np.einsum("l,eln->en", self.grid.continuity_weights, X[stamps])
        ends = np.array([self.grid.end_stamp(i) for i in range(self.grid.n_elements)])
        return float(np.max(np.abs(X[ends] - ext)))

    def to_debug_dict(self, z: np.ndarray) -> dict:
        X, xi = self.split(z)
        lo, hi = self.active_bounds()
        c = self.constraints(z)
        return {
            "n_vars": self.n_vars,
            "n_states": self.n_states,
            "n_coefficients": self.n_xi,
            "n_constraints": self.n_constraints,
            "grid": {
                "scheme": self.grid.scheme,
                "n_elements": self.grid.n_elements,
                "K": self.grid.K,
                "start": float(self.grid.element_bounds[0]),
                "end": float(self.grid.element_bounds[-1]),
            },
            "terms": [[bf.label for bf in ts] for ts in self._terms.terms],
            "xi": xi.tolist(),
            "lower": lo.tolist(),
            "upper": hi.tolist(),
            "objective": self.objective(z),
            "max_constraint_residual": float(np.max(np.abs(c))),
            "constraint_residual_by_element": np.abs(
                c[self.n_x:self.n_x * (1 + self.grid.n_elements * self.grid.K)]
            ).reshape(self.grid.n_elements, -1).max(axis=1).tolist(),
        }

    def dump_debug(self, z: np.ndarray, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_debug_dict(z), fh, indent=2)


def assemble(window: TimeSeries, dictionary: Dictionary, bounds: CoefficientMatrix,
             grid: CollocationGrid, lam: float = 0.0, regularizer: str = "none") -> WindowProblem:
    """Build the window problem; the active terms are ``bounds.active_mask``."""
    mask = np.asarray(bounds.active_mask, dtype=bool) & dictionary.mask()
    for j in range(dictionary.n_x):
        if not mask[:, j].any():
            raise AssemblyError(f"no active terms for state x{j + 1}")
    lo, hi = bounds.lower[mask], bounds.upper[mask]
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise AssemblyError("bounds must be finite on every active coefficient")
    if np.any(lo > hi):
        raise AssemblyError("lower bound exceeds upper bound")
    data = spline_to_grid(window, grid)
    if not np.all(np.isfinite(data[0])):
        raise AssemblyError("initial data point is not finite")
    if regularizer not in REGULARIZERS:
        raise AssemblyError(f"unknown regularizer {regularizer!r}")
    return WindowProblem(grid, data, dictionary, mask, bounds.lower.copy(), bounds.upper.copy(),
                         float(lam), regularizer)


# -- solver -----------------------------------------------------------------------

@dataclass
class WindowSolution:
    xi_hat: CoefficientMatrix
    objective: float
    feasibility: float
    optimality: float
    status: str
    iterations: int
    states: np.ndarray = field(repr=False)
    message: str = ""

    @property
    def ok(self) -> bool:
        """Usable estimate: converged, or stopped early at a feasible point."""
        return self.status in ("converged", "max_iter") and np.isfinite(self.objective)


class _Infeasible(Exception):
    pass


def _element_diagnostic(p: WindowProblem, z: np.ndarray) -> str:
    J = p.constraint_jacobian(z)[:, : p.n_states].toarray()
    n, K = p.n_x, p.grid.K
    worst, worst_e = np.inf, -1
    for e in range(p.grid.n_elements):
        rows = slice(n + e * K * n, n + (e + 1) * K * n)
        stamp_cols = p.grid.element_stamps(e)[1:]
        cols = (stamp_cols[:, None] * n + np.arange(n)).ravel()
        s = np.linalg.svd(J[rows][:, cols], compute_uv=False)
        ratio = s[-1] / max(s[0], 1e-300)
        if ratio < worst:
            worst, worst_e = ratio, e
    return f"state Jacobian block of element {worst_e} is near singular (sigma_min/sigma_max={worst:.3g})"


def solve(p: WindowProblem, xi_init: CoefficientMatrix | np.ndarray, tol_feas: float = 1e-8,
          tol_opt: float = 1e-6, max_iter: int = 100) -> WindowSolution:
    """Generalized Gauss-Newton with Levenberg-Marquardt damping.

    ``feasibility`` is the largest collocation residual relative to the data
    scale; ``optimality`` is the largest projected reduced-gradient entry
    divided by the product of the residual norm and the column norm of the
    reduced Jacobian, a scale-free measure that vanishes at stationary points.
    """
    lo, hi = p.active_bounds()
    if isinstance(xi_init, CoefficientMatrix):
        xi0 = xi_init.values.T[p.active_mask.T]
    else:
        xi0 = np.asarray(xi_init, dtype=float)
    if np.any(xi0 < lo) or np.any(xi0 > hi):
        warnings.warn("initial coefficients outside their bounds; clipping", RuntimeWarning, stacklevel=2)
        xi0 = np.clip(xi0, lo, hi)
    width = hi - lo
    pinned = width <= 0
    width_safe = np.where(pinned, 1.0, width)
    sqrtM = np.sqrt(p.n_boundary)
    bidx = p.fit_indices
    n = p.n_x
    brow = (bidx[:, None] * n + np.arange(n)).ravel()
    scale = p.state_scale

    def residuals(z):
        X, xi = p.split(z)
        r = (X[bidx] - p.data_at_grid[bidx]).ravel() / sqrtM
        q, dq = p._reg_residual(xi)
        return np.concatenate([r, q]), dq

    def merit(z, nu):
        with np.errstate(all="ignore"):
            try:
                c = p.constraints(z)
                r, _ = residuals(z)
            except Exception:
                return np.inf, np.inf, np.inf
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(r))):
            return np.inf, np.inf, np.inf
        f = 0.5 * float(r @ r)
        cn = float(np.abs(c).sum())
        return f + nu * cn, f, cn

    z = p.initial_point(xi0)
    mu = 1e-8
    nu = 0.0
    best = None
    status, message = "max_iter", ""
    it = 0
    opt = np.inf
    feas = np.inf
    for it in range(1, max_iter + 1):
        with np.errstate(all="ignore"):
            c = p.constraints(z)
            J = p.constraint_jacobian(z)
        feas = float(np.max(np.abs(c))) / scale
        Jx = J[:, : p.n_states].tocsc()
        Jxi = J[:, p.n_states:].toarray()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                lu = spla.splu(Jx)
            rhs = np.column_stack([c, Jxi])
            sol = lu.solve(rhs)
            if not np.all(np.isfinite(sol)):
                raise RuntimeError("non-finite sensitivities")
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            status = "infeasible"
            message = f"constraint Jacobian rank collapse: {exc}; " + _element_diagnostic(p, z)
            break
        a = -sol[:, 0]
        S = -sol[:, 1:]
        r, dq = residuals(z)
        X, xi = p.split(z)
        # reduced residual model: r_lin(du) = r0 + G du, du in box-scaled units
        nb = brow.size
        r0 = r.copy()
        r0[:nb] += a[brow] / sqrtM
        G = np.zeros((r.size, p.n_xi))
        G[:nb] = S[brow] / sqrtM * width_safe
        if dq.size:
            G[nb:] = np.diag(dq * width_safe)
        G[:, pinned] = 0.0
        u = np.where(pinned, 0.0, (xi - lo) / width_safe)
        g = G.T @ r0
        pg = g.copy()
        pg[(u <= 1e-12) & (g > 0)] = 0.0
        pg[(u >= 1 - 1e-12) & (g < 0)] = 0.0
        pg[pinned] = 0.0
        colnorm = np.linalg.norm(G, axis=0)
        rn = np.linalg.norm(r0)
        opt = float(np.max(np.abs(pg) / (rn * colnorm + 1e-300))) if p.n_xi else 0.0
        if rn == 0.0 or not np.any(colnorm):
            opt = 0.0
        f_now = 0.5 * float(r @ r)
        if best is None or (feas <= tol_feas and f_now < best[1]) or best[2] > tol_feas:
            best = (z.copy(), f_now, feas, opt)
        if feas <= tol_feas and opt <= tol_opt:
            status = "converged"
            break
        lb = np.where(pinned, 0.0, -u)
        ub = np.maximum(np.where(pinned, 0.0, 1.0 - u), lb)
        A = np.vstack([G, np.sqrt(mu) * np.eye(p.n_xi)])
        bvec = np.concatenate([-r0, np.zeros(p.n_xi)])
        if p.n_xi:
            du = np.clip(lsq_linear(A, bvec, bounds=(lb, ub + 1e-300), method="bvls").x, lb, ub)
        else:
            du = np.zeros(0)
        dxi = du * width_safe
        dz = np.concatenate([a + S @ dxi, dxi])
        model_f = 0.5 * float(np.sum((r0 + G @ du) ** 2))
        cn0 = float(np.abs(c).sum())
        if cn0 > 0.0:
            # penalty large enough that the step is a descent direction for the merit
            nu = max(nu, 2.0 * (model_f - f_now) / cn0 + 1e-8)
        phi0, _, _ = merit(z, nu)
        pred = phi0 - model_f
        if pred <= 1e-14 * max(phi0, 1e-300) and feas <= tol_feas:
            message = "stalled: no predicted decrease"
            break
        alpha = 1.0
        accepted = False
        for _ in range(40):
            z_try = z + alpha * dz
            z_try[p.n_states:] = np.clip(z_try[p.n_states:], lo, hi)
            phi1, _, _ = merit(z_try, nu)
            if np.isfinite(phi1) and phi1 <= phi0 - 1e-4 * alpha * max(pred, 0.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            message = "line search failed to reduce the merit function"
            break
        log.debug("it %d f=%.6e feas=%.2e opt=%.2e mu=%.1e alpha=%.3g nu=%.2e pred=%.3e", it, f_now, feas, opt, mu, alpha, nu, pred)
        z = z_try
        mu = max(mu / 4.0, 1e-12) if alpha == 1.0 else min(mu * min(10.0, 2.0 / alpha), 1e12)
    else:
        it = max_iter
    if status not in ("converged", "infeasible"):
        with np.errstate(all="ignore"):
            feas = p.feasibility(z) if np.all(np.isfinite(z)) else np.inf
        if feas > tol_feas and best is not None and best[2] <= tol_feas:
            z = best[0]
            feas = best[2]
        if feas > USABLE_FEAS:
            status = "infeasible"
            message = (message + "; " if message else "") + f"no feasible iterate (feasibility {feas:.2e})"
        else:
            status = "max_iter"
    X, xi = p.split(z)
    with np.errstate(all="ignore"):
        obj = p.objective(z) if np.all(np.isfinite(z)) else np.inf
    return WindowSolution(
        xi_hat=p.coefficient_matrix(np.clip(xi, lo, hi)),
        objective=obj,
        feasibility=feas,
        optimality=opt,
        status=status,
        iterations=it,
        states=X.copy(),
        message=message,
    )
