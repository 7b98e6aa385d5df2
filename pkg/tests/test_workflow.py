import json

import numpy as np
import pytest

from capcycle import workflow
from capcycle.config import ClusterConfig, ExplorationConfig, SamplerConfig, SimConfig, ValidatorConfig
from capcycle.cores import BehaviorModel, Constraint, save_behavior_models
from capcycle.errors import UnknownArtifact
from capcycle.project import Project
from capcycle.simkin import read_capability_table

SIM = SimConfig(dt=0.2, horizon=2.0)
CLUSTERING = ClusterConfig(ks=(2, 2, 2), components=1, restarts=1, seed=0, max_em_iterations=20)
SAMPLER = SamplerConfig(seed=0, particles=32, iterations=80)
HOLD = BehaviorModel("hold", (Constraint.variable("start"),))


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    """Arm and cart explored, clustered and grounded with a start-only behavior."""
    project = Project(tmp_path_factory.mktemp("workflow") / "project")
    workflow.assemble(project, "arm", "Arm")
    workflow.assemble(project, "cart", "Cart")
    workflow.assemble(project, "shopping-cart", "NewShoppingCart")
    save_behavior_models([HOLD], project.document("behavior_models"))
    for robot, seed in (("Arm", 1), ("Cart", 2)):
        workflow.explore_robot(project, robot, ExplorationConfig(samples=80, seed=seed, sim=SIM))
        workflow.cluster_robot(project, robot, CLUSTERING)
        workflow.create_robot_core(project, robot, "hold", SAMPLER)
    return project


def test_assembly_writes_the_graph(built):
    assert built.graph_path.exists()
    assert built.robot_spec("NewShoppingCart").base.mount_height == pytest.approx(0.3)
    with pytest.raises(UnknownArtifact):
        workflow.assemble(built, "tripod", "Tripod")


def test_artifacts_are_on_disk(built):
    assert len(built.capabilities("Arm")) == 80
    assert sorted(built.clusters("Cart").spaces) == ["dir", "end", "start"]
    assert [c.id for c in built.cores()] == ["Arm-hold", "Cart-hold"]


def test_identical_core_is_reused(built):
    core, written = workflow.create_robot_core(built, "Arm", "hold", SAMPLER)
    assert written == []
    assert core.version == 1


def test_changed_core_gets_a_new_version(built, tmp_path):
    project = Project(tmp_path / "copy")
    project.root.mkdir()
    for name in ("graph.jsonl", "behavior_models.yaml"):
        (project.root / name).write_bytes((built.root / name).read_bytes())
    store = built.clusters("Arm")
    store.save(project.clusters_dir("Arm"))
    workflow.create_robot_core(project, "Arm", "hold", SAMPLER)
    core, written = workflow.create_robot_core(project, "Arm", "hold", SAMPLER.model_copy(update={"seed": 9}))
    assert core.version == 2
    assert [p.name for p in written] == ["Arm-hold.v2.json"]


def test_sampling_writes_record_and_table(built):
    sample, written = workflow.sample_robot_core(built, "Arm-hold", {"start": [0.0, 0.0, 0.0]})
    record, table = written
    assert record.name == "Arm-hold.v1.s0.json"
    assert json.loads(record.read_text())["core"] == "Arm-hold"
    columns, rows = read_capability_table(table)
    assert columns[0] == "t"
    assert rows.shape[0] == SIM.steps + 1
    np.testing.assert_allclose(rows[-1, [columns.index(c) for c in ("ee_x", "ee_y", "ee_z")]], sample.capability.ee[-1])


def test_annotation_writes_a_second_version(built, tmp_path):
    project = Project(tmp_path / "annotate")
    (project.cores_dir).mkdir(parents=True)
    source = built.cores_dir / "Arm-hold.v1.json"
    (project.cores_dir / source.name).write_bytes(source.read_bytes())
    core, written = workflow.annotate_robot_core(project, "Arm-hold", add=["reach"])
    assert core.version == 2
    assert [p.name for p in written] == ["Arm-hold.v2.json"]
    again, written = workflow.annotate_robot_core(project, "Arm-hold", add=["reach"])
    assert again.version == 2 and written == []


def test_parallel_run_keeps_the_arm_motion(built):
    parts = [
        workflow.PartPlan("Arm-hold", {"start": [0.0, 0.0, 0.0]}),
        workflow.PartPlan("Cart-hold", {"start": [0.0] * 7}),
    ]
    result, summary, written = workflow.run_parallel(built, "NewShoppingCart", parts)
    assert summary["cores"] == ["Arm-hold", "Cart-hold"]
    assert summary["superposition_error:Arm-hold"] <= 1e-12
    assert "superposition_error:Cart-hold" not in summary
    assert len(result.capability) == SIM.steps + 1
    assert [p.name for p in written] == ["parallel-NewShoppingCart.tsv", "parallel-NewShoppingCart.json"]


def test_reach_report(built):
    summary, written = workflow.reach_report(
        built, "Arm", {"start": [0.0, 0.0, 0.0]}, samples=3, seed=5, behaviors=("hold",)
    )
    entry = summary["cores"]["Arm-hold"]
    assert entry["samples"] + entry["rejected"] == 3
    assert entry["median_target_distance"] is None
    assert summary["reach_m"] == pytest.approx(0.4)
    assert (built.reports_dir / "summary.json") in written
    assert (built.reports_dir / "Arm-hold.paths.tsv") in written


def _cycle(root):
    project = Project(root)
    project.root.mkdir(parents=True)
    save_behavior_models([HOLD], project.document("behavior_models"))
    cycle = workflow.DevelopmentCycle(
        project, "arm", "Arm",
        ExplorationConfig(samples=60, seed=4, sim=SIM),
        ValidatorConfig(seed=4, epochs=3, width=8, hidden_layers=1),
        CLUSTERING,
        SAMPLER,
        behaviors=("hold", "reach"),
    )
    return project, cycle.run()


def test_cycle_is_reproducible(tmp_path):
    first, results = _cycle(tmp_path / "one")
    second, _ = _cycle(tmp_path / "two")
    assert results["capabilities"] == 60
    assert results["clusters"] == {"dir": 2, "end": 2, "start": 2}
    assert results["cores"]["hold"]["id"] == "Arm-hold"
    assert results["notes"]
    assert first.hashes([first.root]) == second.hashes([second.root])
