import math

import numpy as np
import pytest

from capcycle.cfm import ParameterSpace
from capcycle.cluster import Cluster, ClusterStore, FeatureClustering, cluster
from capcycle.config import ClusterConfig, ExplorationConfig, SimConfig
from capcycle.density import GaussianMixture
from capcycle.explore import explore
from capcycle.fixtures import build_arm, build_cart, build_shopping_cart
from capcycle.graphstore import PropertyGraph
from capcycle.project import Project
from capcycle.simkin import Joint, Link, RobotSpec, robot_from_assembly

SMALL_SIM = SimConfig(dt=0.2, horizon=4.0)

POINTER = RobotSpec(
    name="Pointer",
    joints=(Joint("swing", (0.0, 0.0, 1.0), -math.pi, math.pi, 3.0),),
    links=(Link("rod", 1.0, "swing"),),
    chain=(("joint", 0), ("link", 0)),
    end_effector="rod",
)


def gaussian(mean, variance):
    """Single-component mixture with a diagonal covariance."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    variance = np.broadcast_to(np.asarray(variance, dtype=float), mean.shape)
    return GaussianMixture(np.ones(1), mean[None], np.diag(variance)[None])


def make_cluster(space_id, index, centroid, model, floor=-50.0):
    centroid = np.atleast_1d(np.asarray(centroid, dtype=float))
    return Cluster(
        space=space_id,
        index=index,
        members=np.zeros(0, dtype=int),
        center=centroid.copy(),
        model=model,
        mode=model.means[0].copy(),
        centroid=centroid,
        log_density_floor=floor,
    )


def make_clustering(space_id, clusters, robot="Pointer"):
    return FeatureClustering(
        space=space_id, label=space_id, metric="euclidean", k=len(clusters), seed=0, robot=robot,
        assignments=np.zeros(0, dtype=int), clusters=list(clusters),
    )


def make_store(space, clusterings, robot="Pointer", sim=SMALL_SIM):
    return ClusterStore(robot=robot, space=space, sim=sim, spaces={c.space: c for c in clusterings})


@pytest.fixture
def pointer():
    return POINTER


@pytest.fixture
def pointer_space():
    return ParameterSpace.from_robot(POINTER, arm_coefficients=2)


@pytest.fixture
def pointer_store(pointer_space):
    """Two reach directions plus a straight and a wandering directness cluster."""
    end = make_clustering("end", [
        make_cluster("end", 0, (1.0, 0.0, 0.0), gaussian((0.0, 0.0), 0.01)),
        make_cluster("end", 1, (0.0, 1.0, 0.0), gaussian((0.0, math.pi / 2), 0.01)),
    ])
    start = make_clustering("start", [
        make_cluster("start", 0, (0.0,), gaussian((0.0, 0.5), 0.25)),
    ])
    direct = make_clustering("dir", [
        make_cluster("dir", 0, (0.9,), gaussian((0.0, 1.0), 0.04)),
        make_cluster("dir", 1, (0.5,), gaussian((0.0, -1.0), 0.04)),
    ])
    return make_store(pointer_space, [end, start, direct])


@pytest.fixture(scope="session")
def robots():
    graph = PropertyGraph()
    assemblies = {
        "Arm": build_arm(graph),
        "Cart": build_cart(graph),
        "NewShoppingCart": build_shopping_cart(graph),
    }
    specs = {name: robot_from_assembly(graph, model) for name, model in assemblies.items()}
    return graph, specs


@pytest.fixture(scope="session")
def arm(robots):
    return robots[1]["Arm"]


@pytest.fixture(scope="session")
def arm_capabilities(arm):
    return explore(arm, ExplorationConfig(samples=300, seed=3, sim=SMALL_SIM))


@pytest.fixture(scope="session")
def arm_clusters(arm, arm_capabilities):
    config = ClusterConfig(ks=(4, 4, 2), components=2, restarts=2, seed=0, max_em_iterations=30)
    return cluster(arm_capabilities, arm, config)


@pytest.fixture
def project(tmp_path):
    return Project(tmp_path / "project")
