"""Experiment configuration: nested dataclasses read from and written to YAML."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_type_hints

import yaml

DEFAULT_CONFIG = Path(__file__).with_name("default_config.yaml")


class ConfigError(ValueError):
    """A config value failed validation; ``field`` names it as section.key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class GeometryConfig:
    n_triples: int = 100_000
    n_pairs: int = 100_000
    shrink_trials: int = 10_000


@dataclass
class CoverConfig:
    domains: list = field(default_factory=lambda: ["interval", "square"])
    r0s: list = field(default_factory=lambda: [0.08, 0.04])
    beta: float = 0.5
    svg_r0: float = 0.04


@dataclass
class WeightsConfig:
    p: float = 2.0
    beta: float = 0.5
    alphas: list = field(default_factory=lambda: [-2.0, -1.0, 1.0, 2.0])
    levels: list = field(default_factory=lambda: [0, 1, 2])
    centers_per_axis: int = 32
    radius_levels: int = 6
    counterexample_power: float = 2.0


@dataclass
class PotentialConfig:
    q: float = 2.0
    rh_levels: list = field(default_factory=lambda: [0, 1, 2])
    rough_power: float = -0.9
    fit_window: list = field(default_factory=lambda: [-4.0, 4.0])
    fit_points: int = 41
    fit_k_max: int = 8
    growth_radii_log2: list = field(default_factory=lambda: [-6, 6])


@dataclass
class MaximalConfig:
    p: float = 2.0
    beta: float = 0.5
    log2_h: list = field(default_factory=lambda: [6, 7, 8, 9, 10])
    counterexample_power: float = 3.0
    fs_functions: int = 20
    fs_log2_h: int = 8


@dataclass
class OperatorConfig:
    q: float = 2.0
    k: int | None = None
    J_max: int = 20
    duality_nodes: int = 16
    domination_levels: list = field(default_factory=lambda: [12, 16, 24])
    vmo_r0s: list = field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005])
    nodes_per_radius: int = 8
    flat_tolerance: float = 0.10


@dataclass
class EstimateConfig:
    q: float = 3.0
    ps: list = field(default_factory=lambda: [1.5, 2.0, 3.0])
    weights: list = field(default_factory=lambda: ["1", "delta", "delta2"])
    elliptic_meshes: list = field(default_factory=lambda: [20, 40, 80])
    parabolic_meshes: list = field(default_factory=lambda: [64, 128, 256])
    T: float = 1 / 64
    interpolation_log2_h: int = 8
    local_meshes: list = field(default_factory=lambda: [16, 32, 64])
    drift_tolerance: float = 0.10


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "results"
    jobs: int = 1
    fixtures: str | None = None
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    cover: CoverConfig = field(default_factory=CoverConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    maximal: MaximalConfig = field(default_factory=MaximalConfig)
    operators: OperatorConfig = field(default_factory=OperatorConfig)
    estimate: EstimateConfig = field(default_factory=EstimateConfig)

    def validate(self) -> "ExperimentConfig":
        if self.jobs < 1:
            raise ConfigError("jobs", "must be at least 1")
        for name in ("weights", "maximal", "cover"):
            b = getattr(self, name).beta
            if not 0 < b < 1:
                raise ConfigError(f"{name}.beta", f"{b} is not in (0, 1)")
        for name in ("weights", "maximal"):
            p = getattr(self, name).p
            if not p > 1:
                raise ConfigError(f"{name}.p", f"{p} must exceed 1")
        for d in self.cover.domains:
            if d not in ("interval", "square"):
                raise ConfigError("cover.domains", f"unknown domain {d!r}")
        for r0 in self.cover.r0s:
            if not r0 > 0:
                raise ConfigError("cover.r0s", f"{r0} must be positive")
        if not self.potential.q > 1:
            raise ConfigError("potential.q", "must exceed 1")
        if not self.operators.q > 1:
            raise ConfigError("operators.q", "must exceed 1")
        if self.operators.k is not None and self.operators.k < 1:
            raise ConfigError("operators.k", "must be a positive integer")
        e = self.estimate
        for p in e.ps:
            if not p > 1:
                raise ConfigError("estimate.ps", f"p={p} must exceed 1")
            if p > e.q:
                raise ConfigError("estimate.ps", f"p={p} exceeds q={e.q}; the estimates need p in (1, q]")
        for w in e.weights:
            if w not in ("1", "delta", "delta2"):
                raise ConfigError("estimate.weights", f"unknown weight {w!r}")
        if not e.T > 0:
            raise ConfigError("estimate.T", "must be positive")
        for key in ("elliptic_meshes", "parabolic_meshes", "local_meshes"):
            if len(getattr(e, key)) < 2:
                raise ConfigError(f"estimate.{key}", "need at least two mesh levels")
        return self


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def from_dict(data: dict | None, cls=ExperimentConfig, prefix: str = ""):
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a mapping")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(prefix + sorted(unknown)[0], "unknown key")
    kwargs: dict[str, Any] = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        t = hints[f.name]
        if dataclasses.is_dataclass(t):
            kwargs[f.name] = from_dict(v, t, prefix + f.name + ".")
        else:
            kwargs[f.name] = _coerce(v, t, prefix + f.name)
    return cls(**kwargs)


def _coerce(v, t, name: str):
    if v is None:
        return None
    if t is float or t == (float | None):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(name, f"expected a number, got {v!r}")
        return float(v)
    if t is int or t == (int | None):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(name, f"expected an integer, got {v!r}")
        return v
    if t is list and not isinstance(v, list):
        raise ConfigError(name, f"expected a list, got {v!r}")
    if t is str and not isinstance(v, str):
        raise ConfigError(name, f"expected a string, got {v!r}")
    return v


def dump(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def parse(text: str) -> ExperimentConfig:
    return from_dict(yaml.safe_load(text)).validate()


def load(path: str | Path | None = None) -> ExperimentConfig:
    return parse(Path(path or DEFAULT_CONFIG).read_text())
