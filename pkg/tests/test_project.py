import pytest

from capcycle.cores import DEFAULT_BEHAVIOR_MODELS, BehaviorModel, Constraint, save_behavior_models
from capcycle.errors import ProjectLocked, UnknownArtifact
from capcycle.project import LOCK_NAME, now
from capcycle.reason import Ontology


def test_lock_is_exclusive_and_released(project):
    with project.lock():
        assert (project.root / LOCK_NAME).exists()
        with pytest.raises(ProjectLocked):
            with project.lock():
                pass
    assert not (project.root / LOCK_NAME).exists()
    with project.lock():
        pass


def test_lock_is_released_on_error(project):
    with pytest.raises(RuntimeError):
        with project.lock():
            raise RuntimeError("boom")
    assert not (project.root / LOCK_NAME).exists()


def test_hashes_are_keyed_by_relative_path(project):
    (project.root / "sets" / "Arm").mkdir(parents=True)
    (project.root / "sets" / "Arm" / "theta.npy").write_bytes(b"abc")
    (project.root / "graph.jsonl").write_text("{}\n")
    hashes = project.hashes([project.root / "sets", project.graph_path, project.root / "missing.json"])
    assert list(hashes) == ["graph.jsonl", "sets/Arm/theta.npy"]
    assert hashes["sets/Arm/theta.npy"] == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_records_append_to_the_manifest(project):
    project.root.mkdir(parents=True)
    started = now()
    project.graph_path.write_text("{}\n")
    project.record("assemble", started, outputs=[project.graph_path])
    project.record("explore", started, config={"samples": 5}, config_hash="x", seed=3)
    manifests = project.manifests()
    assert [m["command"] for m in manifests] == ["assemble", "explore"]
    assert list(manifests[0]["outputs"]) == ["graph.jsonl"]
    assert manifests[1]["seed"] == 3 and manifests[1]["config"] == {"samples": 5}


def test_missing_artifacts(project):
    assert project.manifests() == []
    with pytest.raises(UnknownArtifact):
        project.capabilities("Arm")
    with pytest.raises(UnknownArtifact):
        project.clusters("Arm")
    with pytest.raises(UnknownArtifact):
        project.robot_spec("Arm")
    with pytest.raises(UnknownArtifact):
        project.core("Arm-reach")
    assert project.cores() == []


def test_behavior_models_can_be_overridden(project):
    assert project.behavior_models() == {m.label: m for m in DEFAULT_BEHAVIOR_MODELS}
    project.root.mkdir(parents=True)
    looser = BehaviorModel("reach", (Constraint.minmax("dir", 0.6, 1.0), Constraint.variable("end")))
    save_behavior_models([looser], project.document("behavior_models"))
    assert project.behavior_model("reach") == looser
    assert "reach-unconstrained" in project.behavior_models()
    with pytest.raises(UnknownArtifact):
        project.behavior_model("grasp")


def test_default_ontology_and_vocabulary(project):
    assert project.ontology().to_dict() == Ontology.default().to_dict()
    assert "fetch" in project.vocabulary()
    project.root.mkdir(parents=True)
    Ontology.default().with_subclass("reach-planar", "reach").save(project.document("ontology"))
    assert "reach-planar" in project.ontology()
