"""Goal-agnostic exploration and the feasibility validation model."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from tqdm import tqdm

from capcycle.cfm import ParameterSpace, rollout
from capcycle.config import ExplorationConfig, SimConfig, ValidatorConfig
from capcycle.errors import DimensionMismatch, IoFailure, SingleClassData
from capcycle.log import progress_disabled
from capcycle.network import FeedForwardNetwork
from capcycle.simkin import Capability, RobotSpec

logger = logging.getLogger(__name__)

_CHUNKS_PER_WORKER = 4
_TRAJECTORIES = ("q", "qdot", "ee", "base")


@dataclass
class CapabilitySet:
    """Simulated capabilities, stored as stacked trajectory arrays."""

    robot: str
    space: ParameterSpace
    config: ExplorationConfig
    theta: np.ndarray        # (S, dim)
    feasible: np.ndarray     # (S,) bool
    t: np.ndarray            # (K+1,)
    q: np.ndarray            # (S, K+1, n)
    qdot: np.ndarray         # (S, K+1, n)
    ee: np.ndarray           # (S, K+1, 3)
    base: np.ndarray         # (S, K+1, 3)
    joint_names: tuple[str, ...]
    wheels: tuple[bool, ...]
    has_base: bool = False
    violation_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return len(self.theta)

    def capability(self, i: int) -> Capability:
        return Capability(
            t=self.t, q=self.q[i], qdot=self.qdot[i], ee=self.ee[i], base=self.base[i],
            joint_names=self.joint_names, wheels=self.wheels, has_base=self.has_base,
            feasible=bool(self.feasible[i]),
            theta=self.theta[i],
        )

    def subset(self, indices: np.ndarray) -> "CapabilitySet":
        return CapabilitySet(
            robot=self.robot, space=self.space, config=self.config,
            theta=self.theta[indices], feasible=self.feasible[indices], t=self.t,
            q=self.q[indices], qdot=self.qdot[indices], ee=self.ee[indices], base=self.base[indices],
            joint_names=self.joint_names, wheels=self.wheels, has_base=self.has_base,
            violation_counts=self.violation_counts[indices] if self.violation_counts.size else self.violation_counts,
        )

    # ----------------------------------------------------------- persistence

    def manifest(self) -> dict[str, Any]:
        return {
            "robot": self.robot,
            "samples": len(self),
            "seed": self.config.seed,
            "config": self.config.model_dump(mode="json"),
            "config_hash": self.config.config_hash(),
            "space": self.space.to_dict(),
            "joint_names": list(self.joint_names),
            "wheels": list(self.wheels),
            "has_base": self.has_base,
            "feasible_count": int(self.feasible.sum()),
        }

    def save(self, directory: str | Path) -> list[Path]:
        out = Path(directory)
        written: list[Path] = []
        try:
            out.mkdir(parents=True, exist_ok=True)
            manifest = out / "manifest.json"
            manifest.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
            written.append(manifest)
            theta_path = out / "theta.tsv"
            np.savetxt(
                theta_path, self.theta, delimiter="\t", fmt="%.17g", comments="",
                header="\t".join(self.space.column_names()),
            )
            feasible_path = out / "feasible.tsv"
            np.savetxt(
                feasible_path, np.column_stack([self.feasible.astype(int), self.violation_counts])
                if self.violation_counts.size else self.feasible.astype(int)[:, None],
                delimiter="\t", fmt="%d", comments="",
                header="feasible\tviolations" if self.violation_counts.size else "feasible",
            )
            written += [theta_path, feasible_path]
            for name in ("t",) + _TRAJECTORIES:
                path = out / f"{name}.npy"
                np.save(path, getattr(self, name), allow_pickle=False)
                written.append(path)
        except OSError as exc:
            raise IoFailure(f"cannot write capability set to {out}: {exc}", path=str(out)) from exc
        logger.info("saved %d capabilities to %s", len(self), out)
        return written

    @classmethod
    def load(cls, directory: str | Path) -> "CapabilitySet":
        src = Path(directory)
        try:
            manifest = json.loads((src / "manifest.json").read_text(encoding="utf-8"))
            theta = np.loadtxt(src / "theta.tsv", delimiter="\t", skiprows=1, ndmin=2)
            labels = np.loadtxt(src / "feasible.tsv", delimiter="\t", skiprows=1, ndmin=2, dtype=int)
            arrays = {name: np.load(src / f"{name}.npy", allow_pickle=False) for name in ("t",) + _TRAJECTORIES}
        except (OSError, ValueError, KeyError) as exc:
            raise IoFailure(f"cannot read capability set from {src}: {exc}", path=str(src)) from exc
        return cls(
            robot=manifest["robot"],
            space=ParameterSpace.from_dict(manifest["space"]),
            config=ExplorationConfig.model_validate(manifest["config"]),
            theta=theta,
            feasible=labels[:, 0].astype(bool),
            violation_counts=labels[:, 1] if labels.shape[1] > 1 else np.zeros(0, dtype=int),
            joint_names=tuple(manifest["joint_names"]),
            wheels=tuple(manifest["wheels"]),
            has_base=bool(manifest["has_base"]),
            **arrays,
        )


def _simulate_rows(spec: RobotSpec, space: ParameterSpace, sim: SimConfig, rows: np.ndarray) -> list[Capability]:
    return [rollout(space, theta, spec, sim) for theta in rows]


def explore(spec: RobotSpec, config: ExplorationConfig, space: ParameterSpace | None = None) -> CapabilitySet:
    """Uniformly sample the parameter space and simulate every draw.

    All draws come from one seeded stream before any simulation starts, so the
    set does not depend on the worker count.
    """
    space = space or ParameterSpace.from_robot(
        spec, config.arm_coefficients, config.wheel_coefficients, config.arm_bound, config.wheel_bound
    )
    rng = np.random.default_rng(config.seed)
    theta = space.sample_uniform(rng, config.samples)
    chunks = np.array_split(theta, max(1, min(len(theta), config.workers * _CHUNKS_PER_WORKER)))
    logger.info("exploring %s: %d samples, %d parameters, %d worker(s)", spec.name, config.samples, space.dim, config.workers)

    progress = tqdm(total=len(theta), desc=f"explore {spec.name}", disable=progress_disabled(logger))
    capabilities: list[Capability] = []
    if config.workers == 1:
        for chunk in chunks:
            capabilities += _simulate_rows(spec, space, config.sim, chunk)
            progress.update(len(chunk))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_simulate_rows, spec, space, config.sim, chunk) for chunk in chunks]
            for future, chunk in zip(futures, chunks):
                capabilities += future.result()
                progress.update(len(chunk))
    progress.close()

    feasible = np.array([cap.feasible for cap in capabilities], dtype=bool)
    logger.info("explored %s: %d of %d feasible", spec.name, int(feasible.sum()), len(feasible))
    return CapabilitySet(
        robot=spec.name,
        space=space,
        config=config,
        theta=theta,
        feasible=feasible,
        t=capabilities[0].t,
        q=np.stack([c.q for c in capabilities]),
        qdot=np.stack([c.qdot for c in capabilities]),
        ee=np.stack([c.ee for c in capabilities]),
        base=np.stack([c.base for c in capabilities]),
        joint_names=tuple(spec.joint_names),
        wheels=tuple(bool(w) for w in spec.wheel_mask),
        has_base=spec.base is not None,
        violation_counts=np.array([len(c.violations) for c in capabilities], dtype=int),
    )


# ---------------------------------------------------------------- validator

@dataclass
class ValidationModel:
    network: FeedForwardNetwork
    lower: np.ndarray
    upper: np.ndarray
    config: ValidatorConfig
    log: list[dict[str, float]] = field(default_factory=list)
    accuracy: float = float("nan")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def scale(self, theta: np.ndarray) -> np.ndarray:
        return 2.0 * (theta - self.lower) / (self.upper - self.lower) - 1.0

    def predict_proba(self, theta: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(theta, dtype=float))
        if rows.shape[1] != self.dim:
            raise DimensionMismatch(f"theta has {rows.shape[1]} entries, validator expects {self.dim}", expected=self.dim)
        return self.network.predict(self.scale(rows))

    def to_dict(self) -> dict[str, Any]:
        return {
            "network": self.network.to_dict(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "config": self.config.model_dump(mode="json"),
            "log": self.log,
            "accuracy": self.accuracy,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ValidationModel":
        return cls(
            network=FeedForwardNetwork.from_dict(data["network"]),
            lower=np.asarray(data["lower"], dtype=float),
            upper=np.asarray(data["upper"], dtype=float),
            config=ValidatorConfig.model_validate(data["config"]),
            log=list(data["log"]),
            accuracy=float(data["accuracy"]),
        )

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write validator {path}: {exc}", path=str(path)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ValidationModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise IoFailure(f"cannot read validator {path}: {exc}", path=str(path)) from exc


def validate(model: ValidationModel, theta: np.ndarray) -> float:
    """Feasibility probability of one parameter vector; feasible when > 0.5."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise DimensionMismatch("validate expects a single parameter vector")
    return float(model.predict_proba(theta)[0])


def _split(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    cut = min(max(1, int(round(fraction * n))), n - 1)
    return order[:cut], order[cut:]


def train_validator(capset: CapabilitySet, config: ValidatorConfig) -> ValidationModel:
    """Fit the feasibility classifier by mini-batch gradient descent with momentum.

    Training stops early after ``patience`` epochs without a held-out
    improvement and keeps the best weights seen.
    """
    labels = capset.feasible.astype(float)
    if len(labels) < 2 or labels.min() == labels.max():
        raise SingleClassData("training data must contain feasible and infeasible samples", samples=len(labels))

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    split_rng, init_rng, shuffle_rng = (np.random.default_rng(s) for s in seeds)
    train_idx, held_idx = _split(len(labels), config.split, split_rng)

    sizes = [capset.space.dim] + [config.width] * config.hidden_layers + [1]
    model = ValidationModel(
        network=FeedForwardNetwork.initialize(sizes, init_rng),
        lower=capset.space.lower,
        upper=capset.space.upper,
        config=config,
    )
    x = model.scale(capset.theta)
    x_train, y_train = x[train_idx], labels[train_idx]
    x_held, y_held = x[held_idx], labels[held_idx]

    velocity = np.zeros_like(model.network.parameters())
    best_loss = model.network.loss(x_held, y_held)
    best_params = model.network.parameters()
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_idx))
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads = model.network.loss_and_gradients(x_train[batch], y_train[batch])
            velocity = config.momentum * velocity - config.learning_rate * FeedForwardNetwork.flatten(grads)
            model.network.set_parameters(model.network.parameters() + velocity)
        train_loss = model.network.loss(x_train, y_train)
        held_loss = model.network.loss(x_held, y_held)
        if held_loss < best_loss:
            best_loss, best_params, stale = held_loss, model.network.parameters(), 0
        else:
            stale += 1
        model.log.append({"epoch": epoch, "train_loss": train_loss, "heldout_loss": held_loss, "best_heldout_loss": best_loss})
        logger.debug("epoch %d: train %.4f held-out %.4f", epoch, train_loss, held_loss)
        if stale >= config.patience:
            logger.info("early stop after %d epochs", epoch)
            break
    model.network.set_parameters(best_params)
    model.accuracy = float(np.mean((model.network.predict(x_held) > 0.5) == (y_held > 0.5)))
    logger.info("validator held-out accuracy %.3f (%d held-out samples)", model.accuracy, len(held_idx))
    return model


def evaluate_validator(model: ValidationModel, capset: CapabilitySet) -> dict[str, float]:
    predicted = model.predict_proba(capset.theta) > 0.5
    actual = capset.feasible
    tp = int(np.sum(predicted & actual))
    tn = int(np.sum(~predicted & ~actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    return {
        "accuracy": (tp + tn) / len(actual),
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
        "tp": tp, "tn": tn, "fp": fp, "fn": fn,
    }
