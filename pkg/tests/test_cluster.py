import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from capcycle.cluster import (
    ClusterStore,
    cluster_feature_space,
    feature_directness,
    feature_end,
    feature_space,
    feature_space_accuracy,
    feature_start,
    kmeans,
    model_accuracy,
)
from capcycle.config import ClusterConfig, SimConfig
from capcycle.errors import KTooLarge, UnknownFeatureSpace
from capcycle.simkin import (
    Capability,
    execute,
    export_capability_table,
    forward_kinematics,
    hold_position,
    initial_state,
    read_capability_table,
)


def _path(points):
    ee = np.asarray(points, dtype=float)
    k = len(ee)
    return Capability(
        t=np.arange(k, dtype=float), q=np.zeros((k, 1)), qdot=np.zeros((k, 1)), ee=ee,
        base=np.zeros((k, 3)), joint_names=("j",), wheels=(False,),
    )


def test_directness_of_a_folded_path():
    assert feature_directness(_path([(0, 0, 0), (1, 0, 0), (0.5, 0, 0)])) == pytest.approx(1 / 3)


def test_directness_of_a_straight_path_is_one():
    line = np.linspace(0.0, 1.0, 11)[:, None] * np.array([[0.2, -0.4, 0.1]])
    assert feature_directness(_path(line)) == pytest.approx(1.0)


def test_directness_of_no_motion_is_one():
    assert feature_directness(_path(np.zeros((5, 3)))) == 1.0


def test_directness_never_exceeds_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert feature_directness(_path(rng.normal(size=(8, 3)))) <= 1.0


def test_start_and_end_features(arm, tmp_path):
    sim = SimConfig(dt=0.1, horizon=1.0)
    rest = execute(arm, sim, hold_position(arm, sim.dt), initial_state(arm))
    assert_allclose(feature_start(rest), np.zeros(3))

    start = initial_state(arm, q0=np.array([0.5, 0.3, -0.7]))
    held = execute(arm, sim, hold_position(arm, sim.dt), start)
    assert_allclose(feature_start(held), held.q[-1])
    assert_allclose(feature_end(held), forward_kinematics(arm, np.array([0.5, 0.3, -0.7])))

    export_capability_table(held, tmp_path / "held.tsv")
    columns, rows = read_capability_table(tmp_path / "held.tsv")
    assert_allclose(feature_start(held), rows[0, 1:4])
    assert_allclose(feature_end(held), rows[-1, [columns.index(c) for c in ("ee_x", "ee_y", "ee_z")]])


def test_cart_start_state_includes_the_base_pose(robots):
    cart = robots[1]["Cart"]
    sim = SimConfig(dt=0.1, horizon=1.0)
    cap = execute(cart, sim, hold_position(cart, sim.dt), initial_state(cart, base_pose=(1.0, 2.0, 0.5)))
    assert_allclose(feature_start(cap), [0, 0, 0, 0, 1.0, 2.0, 0.5])


def test_kmeans_single_cluster_center_is_the_mean():
    points = np.random.default_rng(1).normal(size=(40, 2))
    result = kmeans(points, 1, seed=0)
    assert_allclose(result.centers[0], points.mean(axis=0))
    assert_array_equal(result.assignments, 0)


def test_kmeans_separates_two_blobs():
    rng = np.random.default_rng(2)
    blobs = np.vstack([rng.normal((-5.0, 0.0), 0.3, size=(30, 2)), rng.normal((5.0, 1.0), 0.3, size=(30, 2))])
    truth = np.repeat([0, 1], 30)
    result = kmeans(blobs, 2, seed=4)
    labels = result.assignments
    assert np.array_equal(labels, truth) or np.array_equal(labels, 1 - truth)


def test_kmeans_objective_is_non_increasing():
    points = np.random.default_rng(3).uniform(size=(200, 3))
    result = kmeans(points, 6, seed=1, restarts=1)
    log = np.asarray(result.objective_log)
    assert np.all(np.diff(log) <= 1e-12 * np.maximum(1.0, log[:-1]))


def test_kmeans_is_seed_deterministic():
    points = np.random.default_rng(4).uniform(size=(100, 2))
    assert_array_equal(kmeans(points, 5, seed=8).assignments, kmeans(points, 5, seed=8).assignments)


def test_k_larger_than_distinct_points():
    with pytest.raises(KTooLarge):
        kmeans(np.array([[0.0], [0.0], [1.0]]), 3, seed=0)


def test_unknown_feature_space():
    with pytest.raises(UnknownFeatureSpace):
        feature_space("speed")


def test_cluster_store_covers_every_capability(arm_clusters, arm_capabilities):
    assert sorted(arm_clusters.spaces) == ["dir", "end", "start"]
    for space_id, clustering in arm_clusters.spaces.items():
        members = np.sort(np.concatenate([c.members for c in clustering.clusters]))
        assert_array_equal(members, np.arange(len(arm_capabilities)))
        dim = {"start": 3, "end": 3, "dir": 1}[space_id]
        assert clustering.centroids.shape == (clustering.k, dim)
        assert all(np.isfinite(c.log_density_floor) for c in clustering.clusters)
        assert all(arm_clusters.space.contains(c.mode) for c in clustering.clusters)


def test_directness_centroids_lie_in_the_unit_interval(arm_clusters):
    centroids = arm_clusters.clustering("dir").centroids[:, 0]
    assert np.all((centroids > 0.0) & (centroids <= 1.0))


def test_cluster_store_round_trip(arm_clusters, tmp_path):
    arm_clusters.save(tmp_path / "clusters")
    loaded = ClusterStore.load(tmp_path / "clusters")
    assert loaded.robot == "Arm" and loaded.sim == arm_clusters.sim
    for space_id, clustering in arm_clusters.spaces.items():
        again = loaded.clustering(space_id)
        assert_array_equal(again.assignments, clustering.assignments)
        assert_array_equal(again.centroids, clustering.centroids)
        probe = clustering.clusters[0].mode[None]
        assert_allclose(again.clusters[0].model.log_density(probe), clustering.clusters[0].model.log_density(probe))
    with pytest.raises(UnknownFeatureSpace):
        loaded.clustering("vel")


def test_single_cluster_model_accuracy_is_one(arm, arm_capabilities):
    config = ClusterConfig(components=1, restarts=1)
    lone = cluster_feature_space(arm_capabilities, arm, "dir", 1, seed=0, config=config)
    store = ClusterStore("Arm", arm_capabilities.space, arm_capabilities.config.sim, {"dir": lone})
    assert model_accuracy(store, "dir", 0, arm, draws=5, seed=0) == 1.0


def test_feature_space_accuracy_is_a_fraction(arm, arm_clusters):
    score = feature_space_accuracy(arm_clusters, "start", arm, draws=5, seed=1)
    assert 0.0 <= score <= 1.0
