"""Benchmark data generation, the elastic-net regression baseline and
validation of discovered models."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .basis import Dictionary, default_dictionary, model_rhs
from .coefficients import CoefficientMatrix
from .preprocess import column_norms, ols_fit
from .systems import SYSTEMS, SystemSpec
from .timeseries import TimeSeries


class IntegrationError(RuntimeError):
    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last valid time {last_time:.6g})")
        self.last_time = last_time


@dataclass(frozen=True)
class BenchmarkSystem:
    name: str
    dictionary: Dictionary
    coefficients: np.ndarray
    initial_condition: np.ndarray
    dt: float
    spec: SystemSpec | None = None

    @property
    def n_x(self) -> int:
        return self.dictionary.n_x

    @property
    def support(self) -> list[list[str]]:
        d = self.dictionary
        return [[d.per_state[j][k].label for k in np.nonzero(self.coefficients[:, j])[0]]
                for j in range(d.n_x)]

    def rhs(self, x: np.ndarray) -> np.ndarray:
        return model_rhs(self.dictionary, self.coefficients, x)


def get_system(name: str) -> BenchmarkSystem:
    try:
        spec = SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None
    d = default_dictionary(spec.n_x)
    xi = np.zeros((d.n_max, d.n_x))
    for j, terms in enumerate(spec.truth):
        for label, c in terms.items():
            xi[d.index(j, label), j] = c
    return BenchmarkSystem(name, d, xi, np.array(spec.initial_condition, float), spec.dt, spec)


def _model_functions(d: Dictionary, xi):
    if isinstance(xi, CoefficientMatrix):
        values = xi.values * xi.active_mask
    else:
        values = np.asarray(xi, dtype=float)
    # only terms with a nonzero coefficient enter the right-hand side
    terms = []
    for j in range(d.n_x):
        ks = [k for k in range(len(d.per_state[j])) if values[k, j] != 0.0]
        terms.append(([d.per_state[j][k] for k in ks], values[ks, j]))
    n = d.n_x

    def f(_t, x):
        out = np.zeros(n)
        for j, (bfs, c) in enumerate(terms):
            for bf, ck in zip(bfs, c):
                out[j] += ck * bf.evaluate(x)
        return out

    def jac(_t, x):
        out = np.zeros((n, n))
        for j, (bfs, c) in enumerate(terms):
            for bf, ck in zip(bfs, c):
                out[j] += ck * bf.gradient(x)
        return out

    return f, jac


def integrate(d: Dictionary, xi, x0, times: np.ndarray, rtol: float = 1e-10, atol: float = 1e-12) -> TimeSeries:
    """Integrate a dictionary model with an implicit Radau IIA integrator."""
    f, jac = _model_functions(d, xi)
    times = np.asarray(times, dtype=float)
    limit = 1e12

    def blowup(_t, x):
        return limit - np.max(np.abs(x))

    blowup.terminal = True
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            sol = solve_ivp(
                f, (times[0], times[-1]), np.asarray(x0, float), method="Radau",
                t_eval=times, rtol=rtol, atol=atol, jac=jac, events=blowup,
            )
        except Exception as exc:  # domain errors inside the right-hand side
            raise IntegrationError(f"integration failed: {exc}", float(times[0])) from exc
    if sol.status != 0 or sol.y.shape[1] != times.size or not np.all(np.isfinite(sol.y)):
        last = float(sol.t[-1]) if sol.t.size else float(times[0])
        raise IntegrationError(f"integration failed: {sol.message}", last)
    return TimeSeries(times, sol.y.T)


def simulate(system: BenchmarkSystem, t_span: tuple[float, float], dt_sample: float | None = None) -> TimeSeries:
    dt = system.dt if dt_sample is None else dt_sample
    if dt <= 0:
        raise ValueError("dt_sample must be positive")
    n = int(round((t_span[1] - t_span[0]) / dt)) + 1
    times = t_span[0] + dt * np.arange(n)
    return integrate(system.dictionary, system.coefficients, system.initial_condition, times)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: tuple[float, ...] | float
    seed: int = 0

    def sigmas(self, n_x: int) -> np.ndarray:
        s = np.broadcast_to(np.asarray(self.sigma, dtype=float), (n_x,)).copy()
        if np.any(s < 0):
            raise ValueError("sigma must be non-negative")
        return s


def rng(seed: int) -> np.random.Generator:
    """Platform-stable counter-based generator."""
    return np.random.Generator(np.random.Philox(seed))


def contaminate(ts: TimeSeries, spec: NoiseSpec) -> TimeSeries:
    sig = spec.sigmas(ts.n_x)
    noise = rng(spec.seed).standard_normal(ts.values.shape) * sig
    return ts.with_values(ts.values + noise)


# -- sparse-regression baseline -------------------------------------------------

class BaselineConvergenceError(RuntimeError):
    def __init__(self, message: str, gap: float):
        super().__init__(f"{message} (stationarity gap {gap:.3e})")
        self.gap = gap


def _kkt_gap(G, c, beta, m, l1, l2) -> np.ndarray:
    g = (G @ beta - c) / m + l2 * beta
    gap = np.where(beta != 0, np.abs(g + l1 * np.sign(beta)), np.maximum(np.abs(g) - l1, 0.0))
    return gap


def elastic_net(theta_data: np.ndarray, y: np.ndarray, lam: float, rho: float,
                tol: float = 1e-8, max_sweeps: int = 100_000) -> np.ndarray:
    """Coordinate descent for
    ``(1/2m)||theta xi - y||^2 + lam*rho*||xi||_1 + lam*(1-rho)/2*||xi||_2^2``.

    Columns are normalised internally (the penalty is transformed so the
    optimum is that of the raw problem).  Every few sweeps the current
    support is polished by solving its optimality system exactly.  The
    stopping test is the largest subgradient-optimality violation relative to
    ``max|theta^T y|/m``.
    """
    X = np.asarray(theta_data, dtype=float)
    y = np.asarray(y, dtype=float)
    m, p = X.shape
    s = column_norms(X)
    Z = X / s
    G = Z.T @ Z
    c = Z.T @ y
    # penalties in normalised coordinates beta = s * xi
    l1 = lam * rho / s
    with np.errstate(over="ignore"):
        l2 = lam * (1.0 - rho) / s**2
    ref = max(float(np.max(np.abs(c))) / m, 1e-300)
    beta = np.zeros(p)
    diag = np.diag(G) / m + l2
    gap = np.inf
    for sweep in range(1, max_sweeps + 1):
        for k in range(p):
            r_k = (c[k] - G[k] @ beta + G[k, k] * beta[k]) / m
            beta[k] = np.sign(r_k) * max(abs(r_k) - l1[k], 0.0) / diag[k]
        for _ in range(p):
            beta, full_step = _polish(G, c, beta, m, l1, l2)
            if full_step:
                break
        gap = float(np.max(_kkt_gap(G, c, beta, m, l1, l2))) / ref
        if gap <= tol:
            return beta / s + 0.0
    raise BaselineConvergenceError(f"coordinate descent did not converge in {max_sweeps} sweeps", gap)


def _polish(G, c, beta, m, l1, l2):
    """Feature-sign step: minimise the smooth problem on the current support
    with the current signs, moving only as far as the first sign change."""
    S = np.nonzero(beta)[0]
    if S.size == 0:
        return beta, True
    sgn = np.sign(beta[S])
    A = G[np.ix_(S, S)] / m + np.diag(l2[S])
    rhs = c[S] / m - l1[S] * sgn
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return beta, True
    step = sol - beta[S]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_cross = np.where(np.sign(sol) != sgn, -beta[S] / step, np.inf)
    t = min(1.0, float(np.min(t_cross)))
    cand = beta.copy()
    cand[S] = beta[S] + t * step
    if t < 1.0:
        cand[S[np.argmin(t_cross)]] = 0.0
    return cand, t >= 1.0


def baseline_sparse_regression(theta_data, xdot, lam: float, rho: float, **kw) -> np.ndarray:
    """Elastic-net regression of one derivative column on its library.

    ``lam == 0`` is ordinary least squares and is delegated to
    :func:`~dynsparse.preprocess.ols_fit`.
    """

    if lam < 0:
        raise ValueError("lam must be non-negative")
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must be in [0, 1)")
    if lam == 0.0:
        return ols_fit(theta_data, np.asarray(xdot, dtype=float)).coef
    return elastic_net(theta_data, xdot, lam, rho, **kw)


def baseline_model(ts: TimeSeries, d: Dictionary, lam: float, rho: float) -> np.ndarray:
    """Padded coefficient array from the derivative-regression route on ``ts``."""
    from .preprocess import central_differences, interior_theta

    xdot = central_differences(ts).values
    out = np.zeros((d.n_max, d.n_x))
    for j in range(d.n_x):
        theta = interior_theta(ts, d, j)
        out[: theta.shape[1], j] = baseline_sparse_regression(theta, xdot[:, j], lam, rho)
    return out


# -- validation -----------------------------------------------------------------

@dataclass
class ValidationReport:
    system: str
    mse: list[float]
    coefficient_error_pct: float
    spurious_terms: list[list[str]]
    missing_terms: list[list[str]]
    blow_up: bool = False
    blow_up_time: float | None = None
    phase_plane: str = ""

    @property
    def support_correct(self) -> bool:
        return not any(self.spurious_terms) and not any(self.missing_terms)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "mse": [v if np.isfinite(v) else "inf" for v in self.mse],
            "coefficient_error_pct": self.coefficient_error_pct,
            "spurious_terms": self.spurious_terms,
            "missing_terms": self.missing_terms,
            "support_correct": self.support_correct,
            "blow_up": self.blow_up,
            "blow_up_time": self.blow_up_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rp, cp = out / "validation.json", out / "phase_plane.csv"
        rp.write_text(self.to_json())
        cp.write_text(self.phase_plane)
        return rp, cp


def coefficient_error(terms: list[dict[str, float]], truth: list[dict[str, float]]):
    """Cumulative percent error over the true support, plus spurious/missing labels."""
    err = 0.0
    spurious, missing = [], []
    for est, ref in zip(terms, truth):
        for label, c in ref.items():
            err += abs(est.get(label, 0.0) - c) / abs(c) * 100.0
        spurious.append(sorted(set(est) - set(ref)))
        missing.append(sorted(set(ref) - set(est)))
    return err, spurious, missing


def true_terms(system: BenchmarkSystem) -> list[dict[str, float]]:
    d = system.dictionary
    return [{d.per_state[j][k].label: float(system.coefficients[k, j])
             for k in np.nonzero(system.coefficients[:, j])[0]} for j in range(d.n_x)]


def _phase_csv(times, truth_vals, model_vals, n_x) -> str:
    head = ["t"] + [f"x{i + 1}_true" for i in range(n_x)] + [f"x{i + 1}_model" for i in range(n_x)]
    lines = [",".join(head)]
    for k, t in enumerate(times):
        row = [t, *truth_vals[k], *model_vals[k]]
        lines.append(",".join("nan" if not np.isfinite(v) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def validate(model, reference: BenchmarkSystem, t_span: tuple[float, float],
             dt_sample: float | None = None) -> ValidationReport:
    """Simulate ``model`` (a :class:`~dynsparse.mho.DiscoveredModel`) and the
    reference system from the reference initial condition and compare."""
    truth_ts = simulate(reference, t_span, dt_sample)
    times = truth_ts.times
    err, spurious, missing = coefficient_error(model.terms(), true_terms(reference))
    blow_up, blow_time = False, None
    try:
        model_ts = integrate(model.dictionary, model.coefficient_matrix(),
                             reference.initial_condition, times)
        model_vals = model_ts.values
        mse = np.mean((model_vals - truth_ts.values) ** 2, axis=0).tolist()
    except IntegrationError as exc:
        blow_up, blow_time = True, exc.last_time
        model_vals = np.full_like(truth_ts.values, np.nan)
        mse = [float("inf")] * reference.n_x
    return ValidationReport(
        system=reference.name,
        mse=[float(v) for v in mse],
        coefficient_error_pct=float(err),
        spurious_terms=spurious,
        missing_terms=missing,
        blow_up=blow_up,
        blow_up_time=blow_time,
        phase_plane=_phase_csv(times, truth_ts.values, model_vals, reference.n_x),
    )
