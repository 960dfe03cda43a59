"""End-to-end runs: data generation, smoothing, pre-processing and discovery."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .basis import Dictionary, default_dictionary
from .bench import NoiseSpec, baseline_model, contaminate, get_system, simulate
from .config import RunConfig
from .mho import DiscoveredModel, DiscoveryTrace, run_discovery
from .preprocess import PreprocessReport, preprocess
from .smoothing import iterative_smooth
from .timeseries import TimeSeries

log = logging.getLogger(__name__)


@dataclass
class DiscoveryRun:
    model: DiscoveredModel
    trace: DiscoveryTrace
    report: PreprocessReport
    smoothed: TimeSeries
    windows: list[int]


def clean_data(cfg: RunConfig) -> TimeSeries:
    system = get_system(cfg.system)
    t_final = cfg.t_final if cfg.t_final is not None else system.spec.t_final
    return simulate(system, (0.0, t_final))


def noisy_data(cfg: RunConfig, seed: int, clean: TimeSeries | None = None) -> TimeSeries:
    clean = clean_data(cfg) if clean is None else clean
    return contaminate(clean, NoiseSpec(cfg.noise.sigma, seed))


def dictionary_for(ts: TimeSeries, cfg: RunConfig) -> Dictionary:
    if cfg.system is not None:
        return get_system(cfg.system).dictionary
    return default_dictionary(ts.n_x)


def discover(ts: TimeSeries, cfg: RunConfig, d: Dictionary | None = None) -> DiscoveryRun:
    """Smooth, pre-process and run the moving-horizon loop on raw data ``ts``."""
    d = dictionary_for(ts, cfg) if d is None else d
    smoothed, windows = iterative_smooth(ts, cfg.smoothing)
    log.info("smoothing windows %s", windows)
    report = preprocess(smoothed, d, cfg.preprocess)
    model, trace = run_discovery(smoothed, report, d, cfg.dnlp, cfg.moving_horizon, cfg.discretization)
    return DiscoveryRun(model, trace, report, smoothed, windows)


def baseline(ts: TimeSeries, cfg: RunConfig, d: Dictionary | None = None):
    d = dictionary_for(ts, cfg) if d is None else d
    smoothed, _ = iterative_smooth(ts, cfg.smoothing)
    coef = baseline_model(smoothed, d, cfg.baseline.lam, cfg.baseline.rho)
    return DiscoveredModel(d, coef, (coef != 0) & d.mask(), "baseline",
                           {"lam": cfg.baseline.lam, "rho": cfg.baseline.rho})
