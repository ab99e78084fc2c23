"""Scenario files: loading, validation and the canned setups shipped with the package."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .engine import EngineConfig
from .scheduler import PolicyConfig
from .workload import ConfigError, WorkloadConfig

_TOP_LEVEL = {"name", "seed", "arrival_rate", "horizon_ms", "num_requests", "trials",
              "output_dir", "workload", "engine", "policy"}
_POLICY_KEYS = {"name", "N", "M", "alpha", "beta", "aggregation"}


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    seed: int = 0
    arrival_rate: float = 1.0
    horizon_ms: int = 60_000
    num_requests: int | None = None
    trials: int = 1
    output_dir: str | None = None
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    policy: PolicyConfig = field(default_factory=lambda: PolicyConfig.make("sart", 8))

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "scenario must be a mapping")
        for k in d:
            if k not in _TOP_LEVEL:
                raise ConfigError(k, "unknown field")
        pol = dict(d.get("policy") or {})
        for k in pol:
            if k not in _POLICY_KEYS:
                raise ConfigError(f"policy.{k}", "unknown field")
        policy = PolicyConfig.make(
            pol.get("name", "sart"), _as_int(pol.get("N", 8), "policy.N"),
            M=_opt_int(pol.get("M"), "policy.M"), alpha=_as_float(pol.get("alpha", 0.5), "policy.alpha"),
            beta=_opt_int(pol.get("beta"), "policy.beta"), aggregation=pol.get("aggregation"),
        )
        sc = cls(
            name=str(d.get("name", "scenario")),
            seed=_as_int(d.get("seed", 0), "seed"),
            arrival_rate=_as_float(d.get("arrival_rate", 1.0), "arrival_rate"),
            horizon_ms=_as_int(d.get("horizon_ms", 60_000), "horizon_ms"),
            num_requests=_opt_int(d.get("num_requests"), "num_requests"),
            trials=_as_int(d.get("trials", 1), "trials"),
            output_dir=d.get("output_dir"),
            workload=WorkloadConfig.from_dict(d.get("workload")),
            engine=EngineConfig.from_dict(d.get("engine")),
            policy=policy,
        )
        return sc.validate()

    def validate(self) -> "Scenario":
        if self.arrival_rate <= 0:
            raise ConfigError("arrival_rate", "must be > 0")
        if self.horizon_ms < 0:
            raise ConfigError("horizon_ms", "must be >= 0")
        if self.num_requests is not None and self.num_requests < 0:
            raise ConfigError("num_requests", "must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        return self

    def replace(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw).validate()

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "arrival_rate": self.arrival_rate,
            "horizon_ms": self.horizon_ms,
            "num_requests": self.num_requests,
            "trials": self.trials,
            "workload": dataclasses.asdict(self.workload),
            "engine": dataclasses.asdict(self.engine),
            "policy": self.policy.as_dict(),
        }


def _as_int(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            return int(v)
        raise ConfigError(name, f"expected an integer, got {v!r}")
    return v


def _opt_int(v, name):
    return None if v is None else _as_int(v, name)


def _as_float(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {v!r}")
    return float(v)


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("<file>", f"cannot parse {path}: {e}") from e
    return Scenario.from_dict(data or {})


CANNED = ("rate1_small", "rate1_large", "rate4_small", "rate4_large")


def canned_path(name: str) -> Path:
    if name not in CANNED:
        raise KeyError(f"unknown canned scenario {name!r}; choose from {CANNED}")
    return Path(str(resources.files("sartsim") / "scenarios" / f"{name}.yaml"))


def canned(name: str) -> Scenario:
    return load_scenario(canned_path(name))
