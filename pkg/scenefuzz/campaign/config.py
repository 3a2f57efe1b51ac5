"""Campaign configuration: one JSON file with nested per-concern sections."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from ..baselines.methods import BASELINE_METHODS, BaselineParams
from ..constants import (
    GRAD_STEP_SIZE,
    GRAD_STEPS,
    SEED_BUDGET,
    SEED_METHOD,
    TH1,
    TH2,
    TH_CONF2,
)
from ..evolve import GaParams, parse_method
from ..objectives import MODES, OBJECT_METRICS, WRONGLANE_METRICS, FitnessWeights
from ..sim.kernel import SimConfig
from ..surrogate import SurrogateParams

ACCOUNTING_MODES = ("exclude_seed_stage", "include_seed_stage")
DEFAULT_ACCOUNTING = ACCOUNTING_MODES[0]


class ConfigError(ValueError):
    """Raised for unknown keys or invalid values in a campaign config."""


@dataclass(frozen=True)
class SeedCollection:
    method: str = SEED_METHOD
    budget: int = SEED_BUDGET


@dataclass(frozen=True)
class GradientSettings:
    """Gradient-mutation settings other than the bound, which the method name carries."""

    th_conf2: float = TH_CONF2
    n: int = GRAD_STEPS
    lam: float = GRAD_STEP_SIZE
    stop_on_drop: bool = False


@dataclass(frozen=True)
class CampaignConfig:
    schema_path: Optional[str] = None
    method: str = "GA-UN-NN-GRAD"
    violation_mode: str = "collision"
    budget: int = 500
    seed_collection: SeedCollection = field(default_factory=SeedCollection)
    th1: float = TH1
    th2: float = TH2
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    repetitions: int = 1
    rng_seed: int = 0
    accounting: str = DEFAULT_ACCOUNTING
    workers: int = 1
    rep_workers: int = 1
    wronglane_metric: str = "distance"
    object_metric: str = "box"
    log_wall_time: bool = False
    ga: GaParams = field(default_factory=GaParams)
    surrogate: SurrogateParams = field(default_factory=SurrogateParams)
    gradient: GradientSettings = field(default_factory=GradientSettings)
    baselines: BaselineParams = field(default_factory=BaselineParams)
    simulation: SimConfig = field(default_factory=SimConfig)

    def validate(self) -> "CampaignConfig":
        if self.method not in BASELINE_METHODS:
            _check_method(self.method, "method")
        _check_method(self.seed_collection.method, "seed_collection.method")
        if self.violation_mode not in MODES:
            raise ConfigError(f"violation_mode must be one of {MODES}")
        if self.budget <= 0:
            raise ConfigError("budget must be > 0")
        if self.seed_collection.budget < 0:
            raise ConfigError("seed_collection.budget must be >= 0")
        if self.repetitions < 1 or self.workers < 1 or self.rep_workers < 1:
            raise ConfigError("repetitions, workers and rep_workers must be >= 1")
        if self.accounting not in ACCOUNTING_MODES:
            raise ConfigError(f"accounting must be one of {ACCOUNTING_MODES}")
        if self.wronglane_metric not in WRONGLANE_METRICS:
            raise ConfigError(f"wronglane_metric must be one of {WRONGLANE_METRICS}")
        if self.object_metric not in OBJECT_METRICS:
            raise ConfigError(f"object_metric must be one of {OBJECT_METRICS}")
        for name in ("th1", "th2"):
            if not 0.0 < getattr(self, name) <= 100.0:
                raise ConfigError(f"{name} must be in (0, 100]")
        try:
            FitnessWeights(self.weights)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["weights"] = list(self.weights)
        data["simulation"] = self.simulation.to_dict()
        data["simulation"]["ego_half_extents"] = list(self.simulation.ego_half_extents)
        return data


def _check_method(name: str, key: str) -> None:
    try:
        parse_method(name)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _section(cls, raw: Any, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {unknown}")
    try:
        if cls is SimConfig:
            return SimConfig.from_dict(raw)
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from exc


_SECTIONS = {
    "seed_collection": SeedCollection,
    "ga": GaParams,
    "surrogate": SurrogateParams,
    "gradient": GradientSettings,
    "baselines": BaselineParams,
    "simulation": SimConfig,
}


def parse_config(data: dict[str, Any]) -> CampaignConfig:
    """Build a config from a decoded JSON object; ``{}`` gives every default."""
    if not isinstance(data, dict):
        raise ConfigError("campaign config must be a JSON object")
    known = {f.name for f in fields(CampaignConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    values: dict[str, Any] = {}
    for key, raw in data.items():
        if key in _SECTIONS:
            values[key] = _section(_SECTIONS[key], raw, key)
        elif key == "weights":
            values[key] = tuple(float(w) for w in raw)
        else:
            values[key] = raw
    try:
        config = CampaignConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()


def load_config(path: str | Path) -> CampaignConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data)


def with_overrides(config: CampaignConfig, **overrides: Any) -> CampaignConfig:
    """Apply CLI overrides; ``None`` values leave the file setting in place."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return config
    return replace(config, **changes).validate()
