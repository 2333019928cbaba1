"""Run configuration: one JSON document with a section per pipeline stage.

Every field has a default, so ``{}`` is a valid config that reproduces the
full-scale protocol (5000 models, k = 100, population 40, 60 generations).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .design_space import (BaseRobotSpec, FeasibilityRules, JointSpec, LinkPrimitive,
                           ParameterRange, Segment, TABLE_I_RANGES, ThrusterSpec, validate_ranges)
from .mpc import MpcConfig
from .nsga2 import GaConfig
from .trajectory import Waypoint, default_waypoints

STAGES = ("models", "clusters", "trajectory", "optimize")


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def base_spec_from_dict(d: dict) -> BaseRobotSpec:
    d = dict(d)
    kinds = {"segments": Segment, "primitives": LinkPrimitive, "thrusters": ThrusterSpec, "joints": JointSpec}
    kwargs: dict[str, Any] = {}
    for key, value in d.items():
        if key in kinds:
            kwargs[key] = tuple(kinds[key](**{k: _tuplify(v) for k, v in item.items()}) for item in value)
        else:
            kwargs[key] = _tuplify(value)
    return BaseRobotSpec(**kwargs)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # design space
    ranges: tuple[ParameterRange, ...] = TABLE_I_RANGES
    n_models: int = 5000
    base: BaseRobotSpec = field(default_factory=BaseRobotSpec)
    feasibility: FeasibilityRules = field(default_factory=FeasibilityRules)
    # clustering
    k: int = 100
    cluster_restarts: int = 10
    cluster_max_iter: int = 300
    cluster_tol: float = 1e-8
    # trajectory
    waypoints: tuple[Waypoint, ...] | None = None
    cruise_speed: float = 1.0
    min_segment_duration: float = 1.0
    # control and search
    mpc: MpcConfig = field(default_factory=MpcConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    penalty: float = 1e6

    def validate(self):
        validate_ranges(self.ranges)
        self.base.validate()
        if self.n_models < 1:
            raise ValueError("n_models must be positive")
        if self.k < 1:
            raise ValueError("k must be positive")
        if not self.mpc.error_threshold > 0:
            raise ValueError("error_threshold must be positive")
        if not self.mpc.dt > 0 or not self.cruise_speed > 0:
            raise ValueError("dt and cruise_speed must be positive")
        if self.waypoints is not None and len(self.waypoints) < 2:
            raise ValueError("need at least two waypoints")
        self.ga_config().validate()

    def resolved_waypoints(self) -> list[Waypoint]:
        return list(self.waypoints) if self.waypoints is not None else default_waypoints(self.cruise_speed)

    def stage_seed(self, stage: str) -> int:
        """Independent 32-bit seed per stage, derived from the master seed."""
        return int(np.random.SeedSequence([self.seed, STAGES.index(stage)]).generate_state(1)[0])

    def ga_config(self) -> GaConfig:
        return dataclasses.replace(self.ga, k=self.k, seed=self.stage_seed("optimize"))

    # ---- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "design_space": {
                "n_models": self.n_models,
                "ranges": [r.to_dict() for r in self.ranges],
                "base": dataclasses.asdict(self.base),
                "feasibility": dataclasses.asdict(self.feasibility),
            },
            "clustering": {"k": self.k, "restarts": self.cluster_restarts,
                           "max_iter": self.cluster_max_iter, "tol": self.cluster_tol},
            "trajectory": {
                "waypoints": None if self.waypoints is None else [w.to_dict() for w in self.waypoints],
                "cruise_speed": self.cruise_speed,
                "min_segment_duration": self.min_segment_duration,
            },
            "mpc": self.mpc.to_dict(),
            "nsga2": {k: v for k, v in self.ga.to_dict().items() if k not in ("k", "seed")},
            "evaluation": {"penalty": self.penalty},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"seed", "design_space", "clustering", "trajectory", "mpc", "nsga2", "evaluation"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kw: dict[str, Any] = {}
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        ds = d.get("design_space", {})
        if "n_models" in ds:
            kw["n_models"] = int(ds["n_models"])
        if "ranges" in ds:
            kw["ranges"] = tuple(ParameterRange(**r) for r in ds["ranges"])
        if "base" in ds:
            kw["base"] = base_spec_from_dict(ds["base"])
        if "feasibility" in ds:
            kw["feasibility"] = FeasibilityRules(**{k: _tuplify(v) for k, v in ds["feasibility"].items()})
        cl = d.get("clustering", {})
        for src, dst in (("k", "k"), ("restarts", "cluster_restarts"), ("max_iter", "cluster_max_iter"),
                         ("tol", "cluster_tol")):
            if src in cl:
                kw[dst] = cl[src]
        tr = d.get("trajectory", {})
        if tr.get("waypoints") is not None:
            kw["waypoints"] = tuple(Waypoint.from_dict(w) for w in tr["waypoints"])
        for key in ("cruise_speed", "min_segment_duration"):
            if key in tr:
                kw[key] = float(tr[key])
        if "mpc" in d:
            kw["mpc"] = MpcConfig(**d["mpc"])
        if "nsga2" in d:
            kw["ga"] = GaConfig.from_dict(d["nsga2"])
        if "penalty" in d.get("evaluation", {}):
            kw["penalty"] = float(d["evaluation"]["penalty"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    # ---- provenance -----------------------------------------------------

    def config_hash(self) -> str:
        return _digest(self.to_dict())

    def stage_hash(self, stage: str) -> str:
        """Hash of exactly the settings a stage's output depends on."""
        d = self.to_dict()
        parts: dict[str, Any] = {"seed": self.seed, "design_space": d["design_space"]}
        if stage == "models":
            pass
        elif stage == "clusters":
            parts["clustering"] = d["clustering"]
        elif stage == "trajectory":
            parts = {"trajectory": d["trajectory"], "dt": self.mpc.dt}
        elif stage == "optimize":
            parts = d
        else:
            raise ValueError(f"unknown stage {stage}")
        return _digest(parts)

    def provenance(self, stage: str) -> dict:
        return {"stage": stage, "seed": self.seed, "config_hash": self.config_hash(),
                "stage_hash": self.stage_hash(stage)}


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
