"""Statistical pre-processing: derivative estimates, Granger screening and
OLS pruning/bounding of the candidate library."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats

from .basis import Dictionary, eval_matrix
from .coefficients import CoefficientMatrix
from .timeseries import TimeSeries

log = logging.getLogger(__name__)


class DictionaryExhaustedError(RuntimeError):
    pass


class SingularRegressionError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class DerivativeMatrix:
    times: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class PreprocessConfig:
    granger_significance: float = 0.1
    restricted_lag: int = 1
    ols_significance: float = 0.9
    interval_alpha: float = 1e-6
    difference_nonstationary: bool = False


def central_differences(ts: TimeSeries) -> DerivativeMatrix:
    if ts.m < 3:
        raise ValueError("central differences need at least three samples")
    t, x = ts.times, ts.values
    vals = (x[2:] - x[:-2]) / (t[2:] - t[:-2])[:, None]
    return DerivativeMatrix(t[1:-1].copy(), vals)


def interior_theta(ts: TimeSeries, d: Dictionary, j: int) -> np.ndarray:
    """Library of state ``j`` on the samples aligned with :func:`central_differences`."""
    return eval_matrix(d, j, ts.values[1:-1])


# -- Granger causality ------------------------------------------------------

def column_norms(X: np.ndarray) -> np.ndarray:
    """Euclidean column norms computed without overflow; zero columns map to 1."""
    peak = np.max(np.abs(X), axis=0)
    peak[peak == 0] = 1.0
    return peak * np.linalg.norm(X / peak, axis=0)


def _lagmat(y: np.ndarray, lags: int) -> np.ndarray:
    n = y.shape[0]
    return np.column_stack([y[lags - l : n - l] for l in range(1, lags + 1)])


def _ssr(X: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    scale = column_norms(X)
    Q, R, _ = scipy.linalg.qr(X / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > diag[0] * max(X.shape) * np.finfo(float).eps * 10))
    if rank < X.shape[1]:
        raise SingularRegressionError("design matrix is rank deficient")
    resid = y - Q @ (Q.T @ y)
    return float(resid @ resid), rank


def granger_pvalues(y: np.ndarray, z: np.ndarray, restricted_lag: int = 1) -> tuple[float, float]:
    """F-test and chi-squared p-values for whether ``z(t-1)`` helps predict ``y(t)``
    beyond ``y(t-1)..y(t-restricted_lag)`` and an intercept.

    Raises :class:`SingularRegressionError` when either regression is singular
    (for example a constant ``z``).
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    L = int(restricted_lag)
    if L < 1:
        raise ValueError("restricted_lag must be >= 1")
    target = y[L:]
    n = target.shape[0]
    own = _lagmat(y, L)
    ones = np.ones((n, 1))
    restricted = np.hstack([ones, own])
    full = np.hstack([restricted, z[L - 1 : -1, None]])
    if n <= full.shape[1] + 1:
        raise ValueError("series too short for the autoregressive fits")
    if np.ptp(full[:, -1]) == 0.0:
        raise SingularRegressionError("lagged regressor has zero variance")
    ssr_r, _ = _ssr(restricted, target)
    ssr_u, k_u = _ssr(full, target)
    df_resid = n - k_u
    if ssr_u <= 0.0:
        raise SingularRegressionError("augmented model fits exactly")
    gain = max(ssr_r - ssr_u, 0.0)
    fstat = gain / ssr_u * df_resid
    chi2 = n * gain / ssr_u
    return float(stats.f.sf(fstat, 1, df_resid)), float(stats.chi2.sf(chi2, 1))


def _stationarize(y: np.ndarray) -> np.ndarray:
    from statsmodels.tsa.stattools import adfuller

    out = y
    for _ in range(2):
        if adfuller(out, maxlag=1, autolag=None)[1] < 0.05:
            break
        out = np.diff(out)
    return out


def granger_prune(
    ts: TimeSeries,
    d: Dictionary,
    significance: float = 0.1,
    restricted_lag: int = 1,
    difference_nonstationary: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Screen each (state, term) pair with a one-lag Granger test.

    Returns ``(kept_mask, pvalues)`` in dictionary layout; ``pvalues`` holds
    the mean of the F and chi-squared p-values and NaN where the test was
    skipped (constant term) or singular (kept, with a warning).
    """
    if not 0.0 < significance < 1.0:
        raise ValueError("significance must be in (0, 1)")
    keep = np.zeros((d.n_max, d.n_x), dtype=bool)
    pvals = np.full((d.n_max, d.n_x), np.nan)
    for j in range(d.n_x):
        theta = eval_matrix(d, j, ts.values)
        y = ts.values[:, j]
        for k, bf in enumerate(d.per_state[j]):
            if bf.kind == "constant":
                keep[k, j] = True
                continue
            yy, zz = y, theta[:, k]
            if difference_nonstationary:
                yy, zz = _stationarize(yy), _stationarize(zz)
                n = min(len(yy), len(zz))
                yy, zz = yy[-n:], zz[-n:]
            try:
                pf, pc = granger_pvalues(yy, zz, restricted_lag)
            except SingularRegressionError:
                warnings.warn(
                    f"Granger regression singular for {bf.label} -> x{j + 1}; keeping term",
                    RuntimeWarning,
                    stacklevel=2,
                )
                keep[k, j] = True
                continue
            pvals[k, j] = 0.5 * (pf + pc)
            keep[k, j] = pvals[k, j] < significance
    return keep, pvals


# -- OLS ----------------------------------------------------------------------

@dataclass
class OLSResult:
    coef: np.ndarray
    pvalues: np.ndarray
    stderr: np.ndarray
    df_resid: int
    collinear: np.ndarray
    residuals: np.ndarray = field(repr=False)

    def conf_int(self, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        q = stats.t.ppf(1.0 - alpha / 2.0, max(self.df_resid, 1))
        half = q * self.stderr
        # a perfect fit has zero standard error; keep the box non-degenerate
        half = np.maximum(half, 1e-9 * np.maximum(np.abs(self.coef), 1e-300))
        return self.coef - half, self.coef + half


def ols_fit(theta_data: np.ndarray, xdot, state_index: int | None = None) -> OLSResult:
    """Least-squares coefficients with normal-theory standard errors and
    two-sided t-test p-values.

    Columns are scaled to unit norm and factored with a column-pivoted QR.
    A rank-deficient design falls back to the minimum-norm solution and the
    trailing pivoted columns are flagged in ``collinear``.
    """
    X = np.asarray(theta_data, dtype=float)
    if isinstance(xdot, DerivativeMatrix):
        xdot = xdot.values
    y = np.asarray(xdot, dtype=float)
    if y.ndim == 2:
        if state_index is None:
            if y.shape[1] != 1:
                raise ValueError("state_index required for multi-column derivatives")
            state_index = 0
        y = y[:, state_index]
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError("theta_data and xdot row counts differ")
    if p < 1:
        raise ValueError("need at least one column")
    scale = column_norms(X)
    Xs = X / scale
    Q, R, piv = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > diag[0] * max(n, p) * np.finfo(float).eps))
    collinear = np.zeros(p, dtype=bool)
    if rank == p:
        cs = np.empty(p)
        cs[piv] = scipy.linalg.solve_triangular(R, Q.T @ y)
        Rinv = scipy.linalg.solve_triangular(R, np.eye(p))
        cov_s = np.empty((p, p))
        cov_s[np.ix_(piv, piv)] = Rinv @ Rinv.T
    else:
        # minimum-norm solution in the caller's coordinates
        collinear[piv[rank:]] = True
        cond = max(n, p) * np.finfo(float).eps
        cs = scipy.linalg.lstsq(X, y, cond=cond)[0] * scale
        cov_s = scale[:, None] * np.linalg.pinv(X.T @ X, rcond=cond) * scale[None, :]
    resid = y - Xs @ cs
    df = n - rank
    sigma2 = float(resid @ resid) / df if df > 0 else np.nan
    se_s = np.sqrt(np.maximum(np.diag(cov_s), 0.0) * sigma2)
    coef = cs / scale
    se = se_s / scale
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, coef / se, np.where(coef == 0, 0.0, np.inf))
    pvals = 2.0 * stats.t.sf(np.abs(tstat), max(df, 1))
    return OLSResult(coef, pvals, se, df, collinear, resid)


# -- pruning and bounds ---------------------------------------------------------

@dataclass
class PreprocessReport:
    granger_pvalues: np.ndarray
    ols_coefficients: np.ndarray
    ols_pvalues: np.ndarray
    kept_mask: np.ndarray
    bounds_lower: np.ndarray
    bounds_upper: np.ndarray
    collinear: np.ndarray
    labels: list[list[str]]

    def coefficient_matrix(self) -> CoefficientMatrix:
        return CoefficientMatrix(
            self.ols_coefficients, self.bounds_lower, self.bounds_upper, self.kept_mask
        )

    def to_dict(self) -> dict:
        def arr(a):
            a = np.asarray(a)
            if a.dtype == bool:
                return a.tolist()
            return [[None if not np.isfinite(v) else float(v) for v in row] for row in a]

        return {
            "labels": self.labels,
            "granger_pvalues": arr(self.granger_pvalues),
            "ols_coefficients": arr(self.ols_coefficients),
            "ols_pvalues": arr(self.ols_pvalues),
            "kept_mask": arr(self.kept_mask),
            "bounds_lower": arr(self.bounds_lower),
            "bounds_upper": arr(self.bounds_upper),
            "collinear": arr(self.collinear),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> PreprocessReport:
        def arr(a, dtype=float):
            return np.array([[np.nan if v is None else v for v in row] for row in a], dtype=dtype)

        return cls(
            granger_pvalues=arr(data["granger_pvalues"]),
            ols_coefficients=arr(data["ols_coefficients"]),
            ols_pvalues=arr(data["ols_pvalues"]),
            kept_mask=np.array(data["kept_mask"], dtype=bool),
            bounds_lower=arr(data["bounds_lower"]),
            bounds_upper=arr(data["bounds_upper"]),
            collinear=np.array(data["collinear"], dtype=bool),
            labels=data["labels"],
        )


def _fit_masked(ts: TimeSeries, xdot: DerivativeMatrix, d: Dictionary, mask: np.ndarray, j: int):
    cols = np.nonzero(mask[: len(d.per_state[j]), j])[0]
    theta = interior_theta(ts, d, j)[:, cols]
    return cols, ols_fit(theta, xdot, j)


def ols_bounds(
    ts: TimeSeries, d: Dictionary, mask: np.ndarray, interval_alpha: float
) -> CoefficientMatrix:
    """OLS estimates and confidence-interval bounds restricted to ``mask``."""
    xdot = central_differences(ts)
    shape = (d.n_max, d.n_x)
    coef = np.zeros(shape)
    lo = np.full(shape, np.nan)
    hi = np.full(shape, np.nan)
    mask = np.asarray(mask, dtype=bool) & d.mask()
    for j in range(d.n_x):
        cols, res = _fit_masked(ts, xdot, d, mask, j)
        if cols.size == 0:
            continue
        lo_j, hi_j = res.conf_int(interval_alpha)
        coef[cols, j] = res.coef
        lo[cols, j] = lo_j
        hi[cols, j] = hi_j
    return CoefficientMatrix(coef, lo, hi, mask)


def prune_and_bound(
    ts: TimeSeries,
    d: Dictionary,
    granger_mask: np.ndarray | None = None,
    ols_significance: float = 0.9,
    interval_alpha: float = 1e-6,
    granger_pvals: np.ndarray | None = None,
) -> PreprocessReport:
    """Drop terms whose OLS p-value exceeds ``ols_significance`` and bound the
    survivors by the ``1 - interval_alpha`` confidence interval.

    The p-values come from one OLS fit over the Granger survivors; the bounds
    and reported coefficients from a refit over the final survivors.
    """
    if not 0.0 < ols_significance < 1.0:
        raise ValueError("ols_significance must be in (0, 1)")
    if not 0.0 < interval_alpha < 1.0:
        raise ValueError("interval_alpha must be in (0, 1)")
    full = d.mask()
    gmask = full.copy() if granger_mask is None else (np.asarray(granger_mask, bool) & full)
    xdot = central_differences(ts)
    shape = (d.n_max, d.n_x)
    pvals = np.full(shape, np.nan)
    collinear = np.zeros(shape, dtype=bool)
    kept = np.zeros(shape, dtype=bool)
    empty = []
    for j in range(d.n_x):
        cols, res = _fit_masked(ts, xdot, d, gmask, j)
        if cols.size == 0:
            empty.append(j)
            continue
        pvals[cols, j] = res.pvalues
        collinear[cols, j] = res.collinear
        kept[cols, j] = res.pvalues <= ols_significance
        if not kept[:, j].any():
            empty.append(j)
    if empty:
        raise DictionaryExhaustedError(
            "dictionary exhausted before optimization for states "
            + ", ".join(f"x{j + 1}" for j in empty)
            + f" (granger survivors per state: {gmask.sum(axis=0).tolist()}, "
            f"ols p-values: {np.round(pvals, 4).tolist()})"
        )
    bounded = ols_bounds(ts, d, kept, interval_alpha)
    return PreprocessReport(
        granger_pvalues=np.full(shape, np.nan) if granger_pvals is None else np.asarray(granger_pvals, float),
        ols_coefficients=bounded.values,
        ols_pvalues=pvals,
        kept_mask=kept,
        bounds_lower=bounded.lower,
        bounds_upper=bounded.upper,
        collinear=collinear,
        labels=[d.labels(j) for j in range(d.n_x)],
    )


def preprocess(ts: TimeSeries, d: Dictionary, cfg: PreprocessConfig = PreprocessConfig()) -> PreprocessReport:
    """Granger screening followed by OLS pruning and bounding."""
    gmask, gp = granger_prune(
        ts, d, cfg.granger_significance, cfg.restricted_lag, cfg.difference_nonstationary
    )
    log.info("granger kept %d of %d terms", int(gmask.sum()), len(d))
    report = prune_and_bound(ts, d, gmask, cfg.ols_significance, cfg.interval_alpha, gp)
    log.info("ols kept %d terms", int(report.kept_mask.sum()))
    return report
