import time
from dataclasses import dataclass, replace

import numpy as np
import pytest

from dynsparse.bench import coefficient_error, get_system, true_terms
from dynsparse.config import RunConfig
from dynsparse.mho import DiscoveryAborted
from dynsparse.pipeline import clean_data, discover, noisy_data

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@dataclass
class RunOutcome:
    system: str
    sigma: float
    seed: int
    status: str
    terms: list
    error_pct: float
    support_correct: bool
    rounds: int
    window_statuses: list
    seconds: float
    model_json: str | None


class RunCache:
    """Discovery runs keyed by (system, sigma, seed, overrides), computed once per session."""

    def __init__(self):
        self._runs = {}
        self._clean = {}

    def clean(self, cfg: RunConfig):
        key = (cfg.system, cfg.t_final)
        if key not in self._clean:
            self._clean[key] = clean_data(cfg)
        return self._clean[key]

    def get(self, system: str, sigma: float, seed: int, **overrides) -> RunOutcome:
        key = (system, sigma, seed, tuple(sorted(overrides.items())))
        if key in self._runs:
            return self._runs[key]
        cfg = RunConfig.for_system(system, **overrides)
        cfg = replace(cfg, noise=replace(cfg.noise, sigma=sigma, seed=seed))
        ts = noisy_data(cfg, seed, self.clean(cfg)) if sigma > 0 else self.clean(cfg)
        ref = get_system(system)
        t0 = time.perf_counter()
        try:
            run = discover(ts, cfg)
        except DiscoveryAborted as exc:
            out = RunOutcome(system, sigma, seed, "aborted", [], np.inf, False, 0,
                             exc.trace.window_status if exc.trace else [],
                             time.perf_counter() - t0, None)
        else:
            err, spurious, missing = coefficient_error(run.model.terms(), true_terms(ref))
            out = RunOutcome(
                system, sigma, seed, run.model.status, run.model.terms(), err,
                not any(spurious) and not any(missing),
                run.model.provenance["thresholding_rounds"], run.trace.window_status,
                time.perf_counter() - t0, run.model.to_json(),
            )
        self._runs[key] = out
        return out


@pytest.fixture(scope="session")
def runs():
    return RunCache()


@pytest.fixture(scope="session")
def lv_clean():
    return clean_data(RunConfig.for_system("lotka_volterra"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
