"""Benchmark system definitions and their desk-scale run settings.

Lotka-Volterra coefficients and every initial condition, sampling rate,
horizon, element count and OLS significance follow the published setups.
The van der Pol (mu = 5), Brusselator (a = 1, b = 3) and Lorenz
(10, 28, 8/3) parameters are chosen here; they are not printed in the
source tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class SystemSpec:
    name: str
    n_x: int
    # per state: {term label: coefficient}
    truth: tuple[dict, ...]
    initial_condition: tuple[float, ...]
    dt: float
    horizon: float
    n_elements: int
    ols_significance: float
    data_step: int
    t_final: float
    sigma_levels: tuple[float, ...] = field(default=(0.0,))


SYSTEMS: dict[str, SystemSpec] = {
    "lotka_volterra": SystemSpec(
        name="lotka_volterra",
        n_x=2,
        truth=({"x1": 1.0, "x1*x2": -0.01}, {"x2": -1.0, "x1*x2": 0.02}),
        initial_condition=(100.0, 15.0),
        dt=1 / 500,
        horizon=6.0,
        n_elements=50,
        ols_significance=0.9,
        data_step=100,
        t_final=30.0,
        sigma_levels=(0.0, 2.0, 10.0),
    ),
    "van_der_pol": SystemSpec(
        name="van_der_pol",
        n_x=2,
        truth=({"x2": 1.0}, {"x2": 5.0, "x1": -1.0, "x1^2*x2": -5.0}),
        initial_condition=(1.0, -2.0),
        dt=1 / 500,
        horizon=20.0,
        n_elements=80,
        ols_significance=0.8,
        data_step=50,
        t_final=32.0,
        sigma_levels=(0.0, 0.1),
    ),
    "brusselator": SystemSpec(
        name="brusselator",
        n_x=2,
        truth=({"1": 1.0, "x1^2*x2": 1.0, "x1": -4.0}, {"x1": 3.0, "x1^2*x2": -1.0}),
        initial_condition=(1.0, 1.0),
        dt=1 / 1000,
        horizon=10.0,
        n_elements=60,
        ols_significance=0.8,
        data_step=100,
        t_final=22.0,
        sigma_levels=(0.0, 0.1),
    ),
    "lorenz": SystemSpec(
        name="lorenz",
        n_x=3,
        truth=(
            {"x1": -10.0, "x2": 10.0},
            {"x1": 28.0, "x1*x3": -1.0, "x2": -1.0},
            {"x1*x2": 1.0, "x3": -8.0 / 3.0},
        ),
        initial_condition=(-8.0, 8.0, 27.0),
        dt=1 / 1000,
        horizon=2.0,
        n_elements=50,
        ols_significance=0.7,
        data_step=100,
        t_final=14.0,
        sigma_levels=(0.0, 0.5),
    ),
}
