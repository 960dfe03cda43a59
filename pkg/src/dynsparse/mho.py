"""Moving-horizon discovery loop and coefficient-of-variation thresholding.

Windows of ``H`` samples slide over the smoothed data by ``data_step``
samples.  Each window solves one dynamic estimation problem; every ``omega``
windows the spread of the estimates decides which terms survive.  The run
stops once the number of surviving terms has been stable for
``stable_rounds`` consecutive thresholding rounds.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import Dictionary, eval_matrix
from .coefficients import CoefficientMatrix
from .discretize import SCHEMES, build_grid
from .dnlp import DNLPConfig, assemble, solve
from .preprocess import PreprocessReport, central_differences, ols_bounds
from .timeseries import TimeSeries

log = logging.getLogger(__name__)

REMEDIATION = (
    "data exhausted before the library stabilised; try collecting a larger data set, "
    "extending the dictionary of basis functions, or deriving tighter coefficient bounds"
)


class DiscoveryAborted(RuntimeError):
    """Too many window solves failed within one thresholding span."""

    def __init__(self, message: str, trace: DiscoveryTrace | None = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class DiscretizationConfig:
    scheme: str = "radau"
    n_elements: int = 50
    K: int = 3

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.n_elements < 1 or self.K < 1:
            raise ValueError("n_elements and K must be positive")


@dataclass(frozen=True)
class MovingHorizonConfig:
    """``horizon`` is in time units and converted with the sampling step."""

    horizon: float = 6.0
    data_step: int = 100
    omega: int = 10
    stable_rounds: int = 2
    gamma: float = 1.0
    protected_terms: tuple[str, ...] = ("1", "x_j")
    protected_steps: int = 2
    interval_alpha: float = 1e-6
    interval_floor: float = 1.0
    negligible_contribution: float = 1e-3

    def __post_init__(self):
        if self.omega < 1 or self.stable_rounds < 1:
            raise ValueError("omega and stable_rounds must be at least 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.data_step < 1:
            raise ValueError("data_step must be at least 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    def window_samples(self, dt: float) -> int:
        n = self.horizon / dt
        if abs(n - round(n)) > 1e-6 * max(n, 1.0):
            raise ValueError(f"horizon {self.horizon} is not a whole number of samples at dt={dt}")
        return int(round(n))


def window_indices(m: int, h_samples: int, data_step: int) -> list[tuple[int, int]]:
    """Half-open sample ranges ``[i*step, i*step + h)`` that fit in ``m``."""
    if h_samples > m:
        return []
    return [(s, s + h_samples) for s in range(0, m - h_samples + 1, data_step)]


def protected_labels(cfg_terms, j: int) -> set[str]:
    return {f"x{j + 1}" if t == "x_j" else t for t in cfg_terms}


@dataclass
class ThresholdResult:
    mask: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    cv: np.ndarray


def threshold_round(estimates, d: Dictionary, active_mask: np.ndarray, gamma: float,
                    round_index: int, protected_terms=("1", "x_j"),
                    protected_steps: int = 2, contribution_scale: np.ndarray | None = None,
                    negligible: float = 0.0) -> ThresholdResult:
    """Keep a term iff the coefficient of variation of its estimates is
    below ``gamma``.

    ``estimates`` are padded ``(n_max, n_x)`` arrays.  ``round_index`` counts
    from 1; protected terms survive rounds ``1..protected_steps``.  A zero
    mean counts as an infinite CV.  With ``contribution_scale`` (typical
    ``|theta_k| / |dx_j/dt|`` per entry) a mean whose relative contribution
    is at most ``negligible`` is treated as zero as well.
    """
    E = np.asarray([np.asarray(e, dtype=float) for e in estimates])
    if E.ndim != 3 or E.shape[0] == 0:
        raise ValueError("need at least one coefficient estimate")
    active = np.asarray(active_mask, dtype=bool)
    mean = E.mean(axis=0)
    std = E.std(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.abs(std / mean)
    zero = mean == 0
    if contribution_scale is not None and negligible > 0:
        with np.errstate(invalid="ignore"):
            zero |= np.abs(mean) * np.asarray(contribution_scale) <= negligible
    cv[zero] = np.inf
    keep = active & (cv < gamma)
    if round_index <= protected_steps:
        for j in range(d.n_x):
            for label in protected_labels(protected_terms, j):
                if label in d.labels(j):
                    k = d.index(j, label)
                    keep[k, j] |= active[k, j]
    cv = np.where(active, cv, np.nan)
    return ThresholdResult(keep, np.where(active, mean, np.nan), np.where(active, std, np.nan), cv)


# -- outputs ------------------------------------------------------------------

def _arr(a):
    a = np.asarray(a)
    if a.dtype == bool:
        return a.tolist()
    return [[None if not np.isfinite(v) else float(v) for v in row] for row in a]


@dataclass
class DiscoveryTrace:
    estimates: list[np.ndarray] = field(default_factory=list)
    window_index: list[int] = field(default_factory=list)
    window_status: list[dict] = field(default_factory=list)
    kept_counts: list[int] = field(default_factory=list)
    cv_tables: list[np.ndarray] = field(default_factory=list)
    converged: bool = False
    converged_iteration: int | None = None
    status: str = "running"
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "converged": self.converged,
            "converged_iteration": self.converged_iteration,
            "message": self.message,
            "kept_counts": list(self.kept_counts),
            "cv_tables": [_arr(c) for c in self.cv_tables],
            "window_index": list(self.window_index),
            "estimates": [_arr(e) for e in self.estimates],
            "windows": self.window_status,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class DiscoveredModel:
    dictionary: Dictionary
    coefficients: np.ndarray
    active_mask: np.ndarray
    status: str = "converged"
    provenance: dict = field(default_factory=dict)

    @property
    def n_x(self) -> int:
        return self.dictionary.n_x

    def terms(self) -> list[dict[str, float]]:
        d = self.dictionary
        return [{d.per_state[j][k].label: float(self.coefficients[k, j])
                 for k in range(len(d.per_state[j])) if self.active_mask[k, j]}
                for j in range(d.n_x)]

    def coefficient_matrix(self) -> CoefficientMatrix:
        return CoefficientMatrix.unbounded(self.coefficients, self.active_mask)

    def equations(self, digits: int = 4) -> str:
        lines = []
        for j, terms in enumerate(self.terms()):
            parts = []
            for label, c in terms.items():
                mag = f"{abs(c):.{digits}f}"
                body = mag if label == "1" else f"{mag}*{label}"
                if not parts:
                    parts.append(("-" if c < 0 else "") + body)
                else:
                    parts.append(("- " if c < 0 else "+ ") + body)
            lines.append(f"dx{j + 1}/dt = " + (" ".join(parts) if parts else "0"))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "n_x": self.n_x,
            "terms": self.terms(),
            "equations": self.equations().splitlines(),
            "dictionary": [self.dictionary.labels(j) for j in range(self.n_x)],
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> DiscoveredModel:
        d = Dictionary(data["dictionary"])
        coef = np.zeros((d.n_max, d.n_x))
        mask = np.zeros_like(coef, dtype=bool)
        for j, terms in enumerate(data["terms"]):
            for label, c in terms.items():
                k = d.index(j, label)
                coef[k, j] = c
                mask[k, j] = True
        return cls(d, coef, mask, data.get("status", "converged"), data.get("provenance", {}))

    @classmethod
    def from_json(cls, text: str) -> DiscoveredModel:
        return cls.from_dict(json.loads(text))


def config_hash(*configs) -> str:
    blob = json.dumps([asdict(c) for c in configs], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- main loop ------------------------------------------------------------------

def _restrict(values: np.ndarray, bounds: CoefficientMatrix) -> CoefficientMatrix:
    return CoefficientMatrix(values, bounds.lower, bounds.upper, bounds.active_mask).clipped()


def run_discovery(ts: TimeSeries, report: PreprocessReport, d: Dictionary,
                  dnlp_cfg: DNLPConfig = DNLPConfig(),
                  mh_cfg: MovingHorizonConfig = MovingHorizonConfig(),
                  disc_cfg: DiscretizationConfig = DiscretizationConfig()):
    """Run the moving-horizon loop on smoothed data.

    Returns ``(DiscoveredModel, DiscoveryTrace)``.  When the data run out
    before the library stabilises the model carries status ``"not converged"``
    and the average of the estimates since the last library change.
    """
    ts.require_uniform()
    h = mh_cfg.window_samples(ts.dt)
    windows = window_indices(ts.m, h, mh_cfg.data_step)
    if not windows:
        raise ValueError(f"horizon of {h} samples exceeds the {ts.m} available")
    scale = contribution_scale(ts, d)
    bounds = report.coefficient_matrix()
    bounds = widen(bounds, mh_cfg.interval_floor)
    mask = bounds.active_mask.copy()
    trace = DiscoveryTrace()
    span: list[np.ndarray] = []
    stable: list[np.ndarray] = []
    stable_windows: list[int] = []
    span_windows: list[int] = []
    failures = 0
    in_span = 0
    rounds = 0
    j_stable = 0
    warm = None
    max_fail = math.ceil(mh_cfg.omega / 2)
    for i, (s, e) in enumerate(windows):
        win = ts.slice(s, e)
        grid = build_grid(win.times[0], win.times[-1] - win.times[0], disc_cfg.n_elements,
                          disc_cfg.K, disc_cfg.scheme)
        p = assemble(win, d, bounds, grid, dnlp_cfg.lam, dnlp_cfg.regularizer)
        init = bounds if warm is None else _restrict(warm, bounds)
        sol = solve(p, init, dnlp_cfg.tol_feas, dnlp_cfg.tol_opt, dnlp_cfg.max_iter)
        trace.window_status.append({
            "window": i, "start": s, "status": sol.status, "iterations": sol.iterations,
            "objective": float(sol.objective), "feasibility": float(sol.feasibility),
            "optimality": float(sol.optimality),
        })
        in_span += 1
        if sol.ok:
            est = np.where(mask, sol.xi_hat.values, 0.0)
            trace.estimates.append(est)
            trace.window_index.append(i)
            span.append(est)
            span_windows.append(i)
            warm = est
        else:
            failures += 1
            log.warning("window %d failed (%s): %s", i, sol.status, sol.message)
            if failures >= max_fail:
                trace.status = "aborted"
                trace.message = (f"{failures} of {in_span} window solves failed in thresholding "
                                 f"round {rounds + 1}; last failure at window {i}: {sol.message}")
                raise DiscoveryAborted(trace.message, trace)
        log.debug("window %d status=%s it=%d obj=%.4g", i, sol.status, sol.iterations, sol.objective)
        if in_span < mh_cfg.omega:
            continue
        rounds += 1
        res = threshold_round(span, d, mask, mh_cfg.gamma, rounds, mh_cfg.protected_terms,
                              mh_cfg.protected_steps, scale, mh_cfg.negligible_contribution)
        trace.cv_tables.append(res.cv)
        new_count = int(res.mask.sum())
        trace.kept_counts.append(new_count)
        log.info("round %d: kept %d of %d terms", rounds, new_count, int(mask.sum()))
        if new_count != int(mask.sum()):
            empty = [k for k in range(d.n_x) if not res.mask[:, k].any()]
            mask = res.mask
            if empty:
                trace.status = "not converged"
                trace.message = ("thresholding removed every term of state(s) "
                                 + ", ".join(f"x{k + 1}" for k in empty) + "; " + REMEDIATION)
                break
            bounds = widen(ols_bounds(ts, d, mask, mh_cfg.interval_alpha), mh_cfg.interval_floor)
            j_stable = 0
            stable, stable_windows = [], []
        else:
            j_stable += 1
            stable.extend(span)
            stable_windows.extend(span_windows)
        span, span_windows = [], []
        in_span = 0
        failures = 0
        if j_stable == mh_cfg.stable_rounds:
            trace.converged = True
            trace.converged_iteration = i
            trace.status = "converged"
            break
    else:
        trace.status = "not converged"
        trace.message = REMEDIATION
    if trace.converged:
        used, used_windows = stable, stable_windows
    else:
        used = stable + span
        used_windows = stable_windows + span_windows
        if not used and trace.estimates:
            used, used_windows = trace.estimates[-1:], trace.window_index[-1:]
    coef = np.mean(used, axis=0) if used else np.zeros(mask.shape)
    coef = np.where(mask, coef, 0.0)
    model = DiscoveredModel(
        d, coef, mask.copy(), trace.status,
        {
            "config_hash": config_hash(dnlp_cfg, mh_cfg, disc_cfg),
            "averaged_windows": [int(w) for w in used_windows],
            "thresholding_rounds": rounds,
            "message": trace.message,
        },
    )
    return model, trace


def contribution_scale(ts: TimeSeries, d: Dictionary) -> np.ndarray:
    """``rms(theta_k) / rms(dx_j/dt)`` over the data, padded like the dictionary mask."""
    xdot = central_differences(ts).values
    out = np.zeros((d.n_max, d.n_x))
    with np.errstate(all="ignore"):
        for j in range(d.n_x):
            th = eval_matrix(d, j, ts.values[1:-1])
            ref = np.sqrt(np.mean(xdot[:, j] ** 2))
            out[: th.shape[1], j] = np.sqrt(np.mean(th**2, axis=0)) / max(ref, 1e-300)
    return np.nan_to_num(out, nan=np.inf, posinf=np.inf)


def widen(bounds: CoefficientMatrix, floor: float) -> CoefficientMatrix:
    """Enforce a minimum half-width of ``floor * |value|`` around each bound centre."""
    if floor <= 0:
        return bounds
    a = bounds.active_mask
    half = floor * np.abs(bounds.values)
    lo = np.where(a, np.minimum(bounds.lower, bounds.values - half), np.nan)
    hi = np.where(a, np.maximum(bounds.upper, bounds.values + half), np.nan)
    return CoefficientMatrix(bounds.values, lo, hi, a)
