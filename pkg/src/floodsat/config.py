"""Configuration loading and validation for scenarios and runs.

One YAML format drives everything. Files carry a config_version and a kind
(scenario or run); unknown keys are rejected with their full field path so
typos fail fast. All randomness flows from the scenario's root seed through
named substreams, so individual components can be regenerated independently.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any

import yaml

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid or malformed configuration; message carries the field path."""


def substream_seed(root_seed: int, name: str) -> int:
    """Derived 63-bit seed for a named substream of the root seed."""
    digest = hashlib.blake2b(
        f"{root_seed}:{name}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") >> 1


@dataclass
class RegionConfig:
    center_lat: float
    center_lon: float
    extent_km: float = 80.0
    resolution_km: float = 0.9
    n_watersheds: int = 4


@dataclass
class TruthConfig:
    n_bumps_per_region: int = 3
    bump_amplitude_mm: float = 10.0
    bump_sigma_km: float = 25.0
    bump_sigma_s: float = 3600.0
    bump_drift_km_s: float = 0.0
    target_peak: float = 2.0


@dataclass
class KernelConfig:
    lag_slots: int = 1
    shape_slots: float = 2.0
    length_slots: int = 8


@dataclass
class PerturbationConfig:
    correlation_length_km: float = 20.0
    sigma: float = 0.3
    bias: float = 1.0


@dataclass
class ScenarioConfig:
    seed: int
    horizon_s: float
    regions: list[RegionConfig]
    slot_s: float = 900.0
    truth: TruthConfig = field(default_factory=TruthConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    value_table: list[list[float]] = field(
        default_factory=lambda: [[0, 0], [0.5, 10], [1, 100], [2, 200], [3, 255]]
    )


@dataclass
class ConstellationConfig:
    n_sats: int = 8
    n_planes: int = 1
    altitude_km: float = 710.0
    inclination_deg: float = 98.5
    phasing: int = 1
    raan0_deg: float = 0.0


@dataclass
class SlewConfig:
    max_rate_deg_s: float = 2.0
    max_accel_deg_s2: float = 1.0
    settle_time_s: float = 5.0


@dataclass
class ExecutiveSection:
    mode: str = "onboard"
    plan_horizon_s: float = 600.0
    replan_interval_s: float = 300.0
    plan_lead_time_s: float = 60.0
    gs_contact_cadence_s: float = 5940.0
    plan_resolution_s: float = 1.0
    bundle_interval_s: float = 60.0
    bundle_size_bits: float = 2000.0
    rate_bps: float = 1000.0
    ttl_cap_s: float = 5940.0
    agility: bool = True
    footprint_km: float = 8.0
    for_half_angle_deg: float = 55.0
    suppression_window_s: float = 900.0
    permutation_cap: int = 10_000
    hardware_slowdown: float = 4.0
    scheduler_cost_per_unit_s: float = 2e-8


@dataclass
class EvaluationConfig:
    category_thresholds: dict[str, float] = field(
        default_factory=lambda: {"action": 1.0, "minor": 1.5, "moderate": 2.0}
    )


@dataclass
class RunConfig:
    seed: int
    scenario_dir: str
    sim_duration_s: float
    label: str = ""
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    slew: SlewConfig = field(default_factory=SlewConfig)
    executive: ExecutiveSection = field(default_factory=ExecutiveSection)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)


_SCALARS = (int, float, str, bool)


def _coerce(cls, data: dict, path: str):
    """Build a dataclass from a dict, rejecting unknown keys with field paths."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in cls.__dataclass_fields__.values()}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        sub_path = f"{path}.{name}"
        target = fields[name].type
        if name == "regions":
            if not isinstance(value, list) or not value:
                raise ConfigError(f"{sub_path}: expected a non-empty list")
            kwargs[name] = [
                _coerce(RegionConfig, v, f"{sub_path}[{i}]") for i, v in enumerate(value)
            ]
        elif isinstance(value, dict) and name in _NESTED:
            kwargs[name] = _coerce(_NESTED[name], value, sub_path)
        elif name == "value_table":
            if not isinstance(value, list):
                raise ConfigError(f"{sub_path}: expected a list of [magnitude, value] pairs")
            kwargs[name] = [list(map(float, row)) for row in value]
        elif name == "category_thresholds":
            if not isinstance(value, dict):
                raise ConfigError(f"{sub_path}: expected a mapping")
            kwargs[name] = {str(k): float(v) for k, v in value.items()}
        elif isinstance(value, _SCALARS):
            kwargs[name] = value
        else:
            raise ConfigError(f"{sub_path}: unsupported value {value!r}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_NESTED = {
    "truth": TruthConfig,
    "kernel": KernelConfig,
    "perturbation": PerturbationConfig,
    "constellation": ConstellationConfig,
    "slew": SlewConfig,
    "executive": ExecutiveSection,
    "evaluation": EvaluationConfig,
}


def _load_yaml(path: str) -> dict:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    version = data.pop("config_version", None)
    if version != CONFIG_VERSION:
        raise ConfigError(
            f"{path}: config_version must be {CONFIG_VERSION}, got {version!r}"
        )
    return data


def load_scenario_config(path: str, seed_override: int | None = None) -> ScenarioConfig:
    data = _load_yaml(path)
    kind = data.pop("kind", None)
    if kind != "scenario":
        raise ConfigError(f"{path}: kind must be 'scenario', got {kind!r}")
    if seed_override is not None:
        data["seed"] = seed_override
    if "seed" not in data:
        raise ConfigError(f"{path}: seed is mandatory")
    cfg = _coerce(ScenarioConfig, data, "scenario")
    if cfg.horizon_s <= 0:
        raise ConfigError("scenario.horizon_s: must be positive")
    return cfg


def load_run_config(
    path: str,
    seed_override: int | None = None,
    scenario_override: str | None = None,
) -> RunConfig:
    data = _load_yaml(path)
    kind = data.pop("kind", None)
    if kind != "run":
        raise ConfigError(f"{path}: kind must be 'run', got {kind!r}")
    if seed_override is not None:
        data["seed"] = seed_override
    if scenario_override is not None:
        data["scenario_dir"] = scenario_override
    for required in ("seed", "scenario_dir", "sim_duration_s"):
        if required not in data:
            raise ConfigError(f"{path}: {required} is mandatory")
    cfg = _coerce(RunConfig, data, "run")
    if cfg.executive.mode not in ("onboard", "ground"):
        raise ConfigError(f"run.executive.mode: unknown mode {cfg.executive.mode!r}")
    if cfg.executive.replan_interval_s > cfg.executive.plan_horizon_s:
        raise ConfigError(
            "run.executive: replan_interval_s must not exceed plan_horizon_s"
        )
    return cfg


def config_digest(data: dict) -> str:
    """Stable hash of a config mapping, for manifests."""
    canonical = yaml.safe_dump(data, sort_keys=True)
    return hashlib.blake2b(canonical.encode(), digest_size=16).hexdigest()
