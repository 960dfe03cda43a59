"""Run configuration: one JSON document per experiment.

Every section is a frozen dataclass; :meth:`RunConfig.for_system` fills in the
per-system settings (sampling step, horizon, element count, OLS level).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .dnlp import DNLPConfig
from .mho import DiscretizationConfig, MovingHorizonConfig
from .preprocess import PreprocessConfig
from .smoothing import SmoothingConfig
from .systems import SYSTEMS


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float | tuple[float, ...] = 0.0
    seed: int = 0
    replications: int = 1

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.replications)]


@dataclass(frozen=True)
class BaselineConfig:
    lam: float = 1e-3
    rho: float = 0.9


_SECTIONS = {
    "smoothing": SmoothingConfig,
    "preprocess": PreprocessConfig,
    "discretization": DiscretizationConfig,
    "moving_horizon": MovingHorizonConfig,
    "dnlp": DNLPConfig,
    "noise": NoiseConfig,
    "baseline": BaselineConfig,
}


def _build(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return cls(**kw)


@dataclass(frozen=True)
class RunConfig:
    system: str | None = "lotka_volterra"
    input_csv: str | None = None
    t_final: float | None = None
    out_dir: str = "runs"
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    moving_horizon: MovingHorizonConfig = field(default_factory=MovingHorizonConfig)
    dnlp: DNLPConfig = field(default_factory=DNLPConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    @classmethod
    def for_system(cls, name: str, **overrides) -> RunConfig:
        if name not in SYSTEMS:
            raise ValueError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}")
        spec = SYSTEMS[name]
        cfg = cls(
            system=name,
            t_final=spec.t_final,
            preprocess=PreprocessConfig(ols_significance=spec.ols_significance),
            discretization=DiscretizationConfig(n_elements=spec.n_elements),
            moving_horizon=MovingHorizonConfig(horizon=spec.horizon, data_step=spec.data_step),
        )
        return replace(cfg, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        data = dict(data)
        base = cls.for_system(data["system"]) if data.get("system") in SYSTEMS else cls()
        kw = {}
        for name, sub in _SECTIONS.items():
            if name in data:
                merged = {**asdict(getattr(base, name)), **data.pop(name)}
                kw[name] = _build(sub, merged)
        top = {f.name for f in fields(cls)} - set(_SECTIONS)
        unknown = set(data) - top
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return replace(base, **data, **kw)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())
