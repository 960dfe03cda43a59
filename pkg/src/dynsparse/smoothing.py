"""Savitzky-Golay smoothing with iterative window-size selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .timeseries import TimeSeries


class SmoothingError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothingConfig:
    """Window search parameters.

    ``initial_window`` and every grown window are rounded up to the next odd
    integer before use (10 becomes 11).
    """

    initial_window: int = 10
    step: int = 10
    poly_order: int = 2
    threshold: float = 0.1

    def __post_init__(self):
        if self.initial_window < 1 or self.step < 1 or self.poly_order < 1:
            raise ValueError("window, step and polynomial order must be positive")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if odd_window(self.initial_window) <= self.poly_order:
            raise ValueError("initial window must exceed the polynomial order")


def odd_window(w: int) -> int:
    w = int(w)
    return w if w % 2 else w + 1


def minmax_scale(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    y = np.asarray(y, dtype=float)
    lo, hi = float(y.min()), float(y.max())
    if not hi > lo:
        raise SmoothingError("degenerate signal: max equals min")
    return (y - lo) / (hi - lo), lo, hi


def first_difference(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[0] < 2:
        raise ValueError("need at least two samples to difference")
    return y[1:] - y[:-1]


def savgol(y: np.ndarray, window: int, poly_order: int) -> np.ndarray:
    """Savitzky-Golay smoothing.

    Interior points take the centre value of the local least-squares
    polynomial; the first and last half-windows are evaluated from the
    polynomial fitted to the first/last full window.
    """
    y = np.asarray(y, dtype=float)
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    if window <= poly_order:
        raise ValueError("window must be larger than the polynomial order")
    if window > y.shape[0]:
        raise ValueError(f"window {window} longer than the signal ({y.shape[0]})")
    return savgol_filter(y, window, poly_order, mode="interp")


def _noise_proxy(y: np.ndarray) -> float:
    return float(np.std(first_difference(y), ddof=1))


def smooth_column(y: np.ndarray, cfg: SmoothingConfig) -> tuple[np.ndarray, int, list[float]]:
    """Window search for one signal.

    Returns the smoothed raw signal, the selected window and the recorded
    differenced-std sequence (scaled units).
    """
    y = np.asarray(y, dtype=float)
    scaled, _, _ = minmax_scale(y)
    sigma_prev = _noise_proxy(scaled)
    history = [sigma_prev]
    ws_prev = 0
    ws = odd_window(cfg.initial_window)
    while True:
        if ws > y.shape[0]:
            raise SmoothingError(
                f"insufficient data for smoothing: window {ws} exceeds {y.shape[0]} samples"
            )
        sigma = _noise_proxy(savgol(scaled, ws, cfg.poly_order))
        history.append(sigma)
        if abs(sigma_prev - sigma) / abs(sigma_prev) < cfg.threshold:
            # converged on the first pass: fall back to the initial window
            chosen = ws_prev if ws_prev else ws
            return savgol(y, chosen, cfg.poly_order), chosen, history
        sigma_prev = sigma
        ws_prev, ws = ws, odd_window(ws + cfg.step)


def iterative_smooth(ts: TimeSeries, cfg: SmoothingConfig = SmoothingConfig()) -> tuple[TimeSeries, list[int]]:
    """Smooth each state column independently with its own selected window."""
    ts.require_uniform()
    if ts.m < 2 * odd_window(cfg.initial_window) + 1:
        raise SmoothingError(
            f"insufficient data for smoothing: {ts.m} samples for initial window "
            f"{odd_window(cfg.initial_window)}"
        )
    out = np.empty_like(ts.values)
    windows = []
    for j in range(ts.n_x):
        out[:, j], w, _ = smooth_column(ts.values[:, j], cfg)
        windows.append(w)
    return ts.with_values(out), windows
