"""Typed run configuration.

Every stochastic stage takes an explicit seed; configs are dumped into the run
manifests, so their JSON form doubles as the reproducibility record.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

PROJECT_ENV = "CAPCYCLE_PROJECT"


class _Config(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    def config_hash(self) -> str:
        return config_hash(self)


def config_hash(cfg: BaseModel) -> str:
    payload = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


class SimConfig(_Config):
    """Discrete-time execution loop settings."""

    dt: float = Field(0.02, gt=0.0)
    horizon: float = Field(4.0, gt=0.0)
    integrator: Literal["forward-euler"] = "forward-euler"

    @model_validator(mode="after")
    def _horizon_is_multiple_of_step(self) -> "SimConfig":
        steps = round(self.horizon / self.dt)
        if steps < 1 or abs(steps * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"horizon {self.horizon} is not a positive multiple of dt {self.dt}")
        return self

    @property
    def steps(self) -> int:
        return round(self.horizon / self.dt)


class ExplorationConfig(_Config):
    samples: int = Field(10_000, ge=1)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    arm_coefficients: int = Field(5, ge=2)
    wheel_coefficients: int = Field(3, ge=2)
    arm_bound: float = Field(math.pi, gt=0.0)
    wheel_bound: float = Field(2 * math.pi, gt=0.0)
    sim: SimConfig = SimConfig()


class ValidatorConfig(_Config):
    hidden_layers: int = Field(4, ge=1)
    width: int = Field(32, ge=1)
    learning_rate: float = Field(0.05, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    patience: int = Field(10, ge=1)
    epochs: int = Field(60, ge=1)
    batch_size: int = Field(100, ge=1)
    split: float = Field(0.8, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)


class ClusterConfig(_Config):
    spaces: tuple[str, ...] = ("start", "end", "dir")
    ks: tuple[int, ...] = (50, 50, 5)
    components: int = Field(3, ge=1)
    restarts: int = Field(5, ge=1)
    seed: int = Field(0, ge=0)
    covariance_floor: float = Field(1e-6, gt=0.0)
    max_em_iterations: int = Field(200, ge=1)
    accuracy_draws: int = Field(100, ge=1)
    floor_percentile: float = Field(1.0, ge=0.0, le=100.0)

    @model_validator(mode="after")
    def _one_k_per_space(self) -> "ClusterConfig":
        if len(self.spaces) != len(self.ks):
            raise ValueError("spaces and ks must have the same length")
        if any(k < 1 for k in self.ks):
            raise ValueError("every k must be positive")
        return self


class SamplerConfig(_Config):
    """Particle swarm settings for core sampling."""

    particles: int = Field(64, ge=1)
    iterations: int = Field(200, ge=1)
    inertia: float = Field(0.7, gt=0.0)
    cognitive: float = Field(1.5, gt=0.0)
    social: float = Field(1.5, gt=0.0)
    seed: int = Field(0, ge=0)
    alternates: int = Field(8, ge=0)
    weights: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _weights_positive(self) -> "SamplerConfig":
        bad = {space: w for space, w in self.weights.items() if not w > 0.0}
        if bad:
            raise ValueError(f"constraint weights must be positive: {bad}")
        return self

    def weight(self, space_id: str) -> float:
        return self.weights.get(space_id, 1.0)


class ProjectSettings(_Config):
    root: Path

    @classmethod
    def resolve(cls, override: str | os.PathLike[str] | None = None) -> "ProjectSettings":
        root = override or os.environ.get(PROJECT_ENV) or os.getcwd()
        return cls(root=Path(root))
