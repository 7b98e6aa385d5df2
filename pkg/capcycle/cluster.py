"""Feature spaces, k-means and per-cluster generative models.

A feature space maps a capability to a fixed-length vector.  k-means cells of
that space become clusters; each cluster fits a density over the parameter
vectors of its members and keeps the feature value of the simulated density
mode as its centroid.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from scipy.spatial.distance import cdist
from tqdm import tqdm

from capcycle.cfm import ParameterSpace, rollout
from capcycle.config import ClusterConfig, SimConfig
from capcycle.density import DensityModel, fit_mixture
from capcycle.errors import IoFailure, KTooLarge, SchemaViolation, UnknownFeatureSpace
from capcycle.explore import CapabilitySet
from capcycle.log import progress_disabled
from capcycle.simkin import Capability, RobotSpec

logger = logging.getLogger(__name__)

FORMAT_NAME = "capcycle-clusters"
FORMAT_VERSION = 1


class Trajectories(NamedTuple):
    """Batched trajectory arrays, leading axis = capability."""

    q: np.ndarray
    qdot: np.ndarray
    ee: np.ndarray
    base: np.ndarray
    wheels: tuple[bool, ...]
    has_base: bool

    @classmethod
    def of(cls, source: Capability | CapabilitySet) -> "Trajectories":
        if isinstance(source, Capability):
            return cls(source.q[None], source.qdot[None], source.ee[None], source.base[None], source.wheels, source.has_base)
        return cls(source.q, source.qdot, source.ee, source.base, source.wheels, source.has_base)


def start_features(tr: Trajectories) -> np.ndarray:
    """Start state: arm joint positions, wheel velocities, base pose when present."""
    wheels = np.array(tr.wheels, dtype=bool) if tr.wheels else np.zeros(tr.q.shape[2], dtype=bool)
    start = np.where(wheels, tr.qdot[:, 0], tr.q[:, 0])
    return np.hstack([start, tr.base[:, 0]]) if tr.has_base else start


def end_features(tr: Trajectories) -> np.ndarray:
    return tr.ee[:, -1].copy()


def directness_features(tr: Trajectories) -> np.ndarray:
    """Chord over arc length of the end-effector path; 1 for a path that never moves."""
    chord = np.linalg.norm(tr.ee[:, -1] - tr.ee[:, 0], axis=1)
    arc = np.linalg.norm(np.diff(tr.ee, axis=1), axis=2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(arc > 0.0, chord / arc, 1.0)
    return np.minimum(ratio, 1.0)[:, None]


def velocity_features(tr: Trajectories) -> np.ndarray:
    return tr.qdot.mean(axis=1)


@dataclass(frozen=True)
class FeatureSpace:
    id: str
    label: str
    function: Callable[[Trajectories], np.ndarray]
    metric: str = "euclidean"

    def __call__(self, source: Capability | CapabilitySet) -> np.ndarray:
        return self.function(Trajectories.of(source))


FEATURE_SPACES: dict[str, FeatureSpace] = {
    space.id: space
    for space in (
        FeatureSpace("start", "start state", start_features),
        FeatureSpace("end", "end effector end state", end_features),
        FeatureSpace("dir", "directness", directness_features),
        FeatureSpace("vel", "average actuator velocity", velocity_features),
    )
}


def feature_space(space_id: str) -> FeatureSpace:
    try:
        return FEATURE_SPACES[space_id]
    except KeyError:
        raise UnknownFeatureSpace(f"unknown feature space {space_id!r}", space=space_id) from None


def feature_start(cap: Capability) -> np.ndarray:
    return FEATURE_SPACES["start"](cap)[0]


def feature_end(cap: Capability) -> np.ndarray:
    return FEATURE_SPACES["end"](cap)[0]


def feature_directness(cap: Capability) -> float:
    return float(FEATURE_SPACES["dir"](cap)[0, 0])


def features(space_id: str, capset: CapabilitySet) -> np.ndarray:
    return feature_space(space_id)(capset)


# ------------------------------------------------------------------ k-means

@dataclass
class KMeansResult:
    assignments: np.ndarray
    centers: np.ndarray
    objective: float
    objective_log: list[float] = field(default_factory=list)


def _plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        pick = rng.choice(len(points), p=closest / total) if total > 0 else rng.integers(len(points))
        centers.append(points[pick])
        closest = np.minimum(closest, np.sum((points - points[pick]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iterations: int) -> KMeansResult:
    assignments = np.full(len(points), -1)
    log: list[float] = []
    for _ in range(max_iterations):
        distances = cdist(points, centers, "sqeuclidean")
        new = np.argmin(distances, axis=1)
        log.append(float(distances[np.arange(len(points)), new].sum()))
        if np.array_equal(new, assignments):
            break
        assignments = new
        nearest = distances[np.arange(len(points)), assignments]
        centers = centers.copy()
        for j in range(len(centers)):
            members = assignments == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
            else:
                # an empty cell takes the point farthest from its own center
                far = int(np.argmax(nearest))
                centers[j] = points[far]
                nearest[far] = 0.0
    return KMeansResult(assignments, centers, log[-1], log)


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    restarts: int = 5,
    max_iterations: int = 300,
) -> KMeansResult:
    """Lloyd iterations from k-means++ starts; the best of ``restarts`` runs wins."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    distinct = len(np.unique(points, axis=0))
    if k < 1 or k > distinct:
        raise KTooLarge(f"k={k} exceeds the {distinct} distinct points", k=k, distinct=distinct)
    best: KMeansResult | None = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        result = _lloyd(points, _plus_plus(points, k, rng), max_iterations)
        if best is None or result.objective < best.objective:
            best = result
    assert best is not None
    return best


# ----------------------------------------------------------------- clusters

@dataclass
class Cluster:
    space: str
    index: int
    members: np.ndarray
    center: np.ndarray
    model: DensityModel
    mode: np.ndarray
    centroid: np.ndarray
    log_density_floor: float

    @property
    def label(self) -> str:
        return f"{self.space}-{self.index:02d}"

    def to_record(self) -> dict[str, Any]:
        return {
            "record": "cluster",
            "index": self.index,
            "members": self.members.tolist(),
            "center": self.center.tolist(),
            "mode": self.mode.tolist(),
            "centroid": self.centroid.tolist(),
            "log_density_floor": self.log_density_floor,
            "model": self.model.to_dict(),
        }


@dataclass
class FeatureClustering:
    """Clusters of one feature space for one capability set."""

    space: str
    label: str
    metric: str
    k: int
    seed: int
    robot: str
    assignments: np.ndarray
    clusters: list[Cluster]
    objective_log: list[float] = field(default_factory=list)

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.clusters])

    @property
    def centroids(self) -> np.ndarray:
        return np.array([c.centroid for c in self.clusters])

    def nearest_center(self, values: np.ndarray) -> np.ndarray:
        return np.argmin(cdist(np.atleast_2d(values), self.centers, self.metric), axis=1)

    def to_lines(self) -> list[str]:
        header = {
            "format": FORMAT_NAME, "version": FORMAT_VERSION, "space": self.space, "label": self.label,
            "metric": self.metric, "k": self.k, "seed": self.seed, "robot": self.robot,
            "objective_log": self.objective_log,
        }
        records = [header, {"record": "assignments", "values": self.assignments.tolist()}]
        records += [c.to_record() for c in self.clusters]
        return [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records]

    @classmethod
    def from_lines(cls, lines: list[str]) -> "FeatureClustering":
        try:
            rows = [json.loads(line) for line in lines if line.strip()]
            header = rows[0]
            if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
                raise SchemaViolation("not a capcycle-clusters v1 document", id="header")
            assignments = np.asarray(rows[1]["values"], dtype=int)
            clusters = [
                Cluster(
                    space=header["space"],
                    index=int(r["index"]),
                    members=np.asarray(r["members"], dtype=int),
                    center=np.asarray(r["center"], dtype=float),
                    model=DensityModel.from_dict(r["model"]),
                    mode=np.asarray(r["mode"], dtype=float),
                    centroid=np.asarray(r["centroid"], dtype=float),
                    log_density_floor=float(r["log_density_floor"]),
                )
                for r in rows[2:]
            ]
            return cls(
                space=header["space"], label=header["label"], metric=header["metric"], k=int(header["k"]),
                seed=int(header["seed"]), robot=header["robot"], assignments=assignments,
                clusters=clusters, objective_log=list(header["objective_log"]),
            )
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise SchemaViolation(f"malformed cluster document: {exc}", id="clusters") from exc


@dataclass
class ClusterStore:
    robot: str
    space: ParameterSpace
    sim: SimConfig
    spaces: dict[str, FeatureClustering]

    def clustering(self, space_id: str) -> FeatureClustering:
        if space_id not in self.spaces:
            raise UnknownFeatureSpace(f"robot {self.robot} has no clusters in {space_id!r}", space=space_id)
        return self.spaces[space_id]

    def save(self, directory: str | Path) -> list[Path]:
        out = Path(directory)
        written = []
        try:
            out.mkdir(parents=True, exist_ok=True)
            index = out / "store.json"
            index.write_text(json.dumps({
                "robot": self.robot,
                "space": self.space.to_dict(),
                "sim": self.sim.model_dump(mode="json"),
                "feature_spaces": sorted(self.spaces),
            }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            written.append(index)
            for space_id, clustering in sorted(self.spaces.items()):
                path = out / f"{space_id}.jsonl"
                path.write_text("\n".join(clustering.to_lines()) + "\n", encoding="utf-8")
                written.append(path)
        except OSError as exc:
            raise IoFailure(f"cannot write cluster store {out}: {exc}", path=str(out)) from exc
        return written

    @classmethod
    def load(cls, directory: str | Path) -> "ClusterStore":
        src = Path(directory)
        try:
            index = json.loads((src / "store.json").read_text(encoding="utf-8"))
            spaces = {
                space_id: FeatureClustering.from_lines(
                    (src / f"{space_id}.jsonl").read_text(encoding="utf-8").splitlines()
                )
                for space_id in index["feature_spaces"]
            }
        except (OSError, ValueError, KeyError) as exc:
            raise IoFailure(f"cannot read cluster store {src}: {exc}", path=str(src)) from exc
        return cls(
            robot=index["robot"],
            space=ParameterSpace.from_dict(index["space"]),
            sim=SimConfig.model_validate(index["sim"]),
            spaces=spaces,
        )


def fit_generative(theta: np.ndarray, components: int, seed: int, config: ClusterConfig | None = None) -> DensityModel:
    config = config or ClusterConfig()
    return fit_mixture(theta, components, seed, config.covariance_floor, config.max_em_iterations)


def cluster_feature_space(
    capset: CapabilitySet,
    spec: RobotSpec,
    space_id: str,
    k: int,
    seed: int,
    config: ClusterConfig,
) -> FeatureClustering:
    fs = feature_space(space_id)
    points = fs(capset)
    km_seed, *fit_seeds = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k + 1))
    result = kmeans(points, k, km_seed, config.restarts)
    sim, space = capset.config.sim, capset.space

    clusters = []
    for j in tqdm(range(k), desc=f"clusters {space_id}", disable=progress_disabled(logger)):
        members = np.flatnonzero(result.assignments == j)
        rows = capset.theta[members]
        model = fit_generative(rows, min(config.components, len(members)), fit_seeds[j], config)
        mode = model.mode(space.lower, space.upper)
        centroid = fs(rollout(space, mode, spec, sim))[0]
        clusters.append(Cluster(
            space=space_id,
            index=j,
            members=members,
            center=result.centers[j],
            model=model,
            mode=mode,
            centroid=centroid,
            log_density_floor=float(np.percentile(model.log_density(rows), config.floor_percentile)),
        ))
    logger.info("clustered %s in %s: k=%d, objective %.4g", capset.robot, space_id, k, result.objective)
    return FeatureClustering(
        space=space_id, label=fs.label, metric=fs.metric, k=k, seed=seed, robot=capset.robot,
        assignments=result.assignments, clusters=clusters, objective_log=result.objective_log,
    )


def cluster(capset: CapabilitySet, spec: RobotSpec, config: ClusterConfig) -> ClusterStore:
    """Cluster every configured feature space of one capability set."""
    seeds = np.random.SeedSequence(config.seed).spawn(len(config.spaces))
    spaces = {
        space_id: cluster_feature_space(capset, spec, space_id, k, int(s.generate_state(1)[0]), config)
        for space_id, k, s in zip(config.spaces, config.ks, seeds)
    }
    return ClusterStore(robot=capset.robot, space=capset.space, sim=capset.config.sim, spaces=spaces)


def model_accuracy(
    store: ClusterStore,
    space_id: str,
    index: int,
    spec: RobotSpec,
    draws: int,
    seed: int,
) -> float:
    """Fraction of draws from a cluster model whose simulated feature lands nearest its center."""
    clustering = store.clustering(space_id)
    if clustering.k == 1:
        return 1.0
    fs = feature_space(space_id)
    rng = np.random.default_rng(seed)
    theta = store.space.clip(clustering.clusters[index].model.sample(rng, draws))
    values = np.vstack([fs(rollout(store.space, row, spec, store.sim)) for row in theta])
    return float(np.mean(clustering.nearest_center(values) == index))


def feature_space_accuracy(store: ClusterStore, space_id: str, spec: RobotSpec, draws: int, seed: int) -> float:
    """Model accuracy averaged over the clusters of one feature space."""
    clustering = store.clustering(space_id)
    seeds = np.random.SeedSequence(seed).spawn(clustering.k)
    scores = [
        model_accuracy(store, space_id, j, spec, draws, int(s.generate_state(1)[0]))
        for j, s in tqdm(list(enumerate(seeds)), desc=f"accuracy {space_id}", disable=progress_disabled(logger))
    ]
    return float(np.mean(scores))
