import json

import pytest

from capcycle.cli import main, parse_part, parse_targets
from capcycle.errors import UsageError
from capcycle.project import LOCK_NAME, Project


def _run(capsys, root, *argv):
    status = main(["--project", str(root), *argv])
    captured = capsys.readouterr()
    return status, captured.out, captured.err


def _error(err):
    return json.loads(err.strip().splitlines()[-1])


def test_unknown_command_is_a_usage_error(capsys, tmp_path):
    status, _, err = _run(capsys, tmp_path, "dance")
    assert status == 2
    assert _error(err)["code"] == "USAGE_ERROR"


def test_stochastic_commands_need_a_seed(capsys, tmp_path):
    status, _, err = _run(capsys, tmp_path, "explore", "--robot", "Arm")
    assert status == 2
    assert _error(err)["code"] == "USAGE_ERROR"


def test_assemble_records_a_manifest(capsys, tmp_path):
    status, out, _ = _run(capsys, tmp_path, "assemble", "--fixture", "arm", "--robot", "Arm")
    assert status == 0
    assert json.loads(out)["joints"] == ["pan_tilt.0", "pan_tilt.1", "elbow"]
    manifests = Project(tmp_path).manifests()
    assert len(manifests) == 1
    assert manifests[0]["command"] == "assemble --fixture arm --robot Arm"
    assert list(manifests[0]["outputs"]) == ["graph.jsonl"]
    assert not (tmp_path / LOCK_NAME).exists()


def test_duplicate_robot(capsys, tmp_path):
    _run(capsys, tmp_path, "assemble", "--fixture", "arm", "--robot", "Arm")
    status, _, err = _run(capsys, tmp_path, "assemble", "--fixture", "cart", "--robot", "Arm")
    assert status == 1
    record = _error(err)
    assert record["code"] == "DUPLICATE_NAME"
    assert record["module"] == "graphstore"
    assert len(Project(tmp_path).manifests()) == 1


def test_unknown_core(capsys, tmp_path):
    status, _, err = _run(capsys, tmp_path, "core", "sample", "--core", "Arm-reach", "--seed", "0")
    assert status == 1
    assert _error(err)["code"] == "UNKNOWN_ARTIFACT"


def test_invalid_configuration(capsys, tmp_path):
    status, _, err = _run(capsys, tmp_path, "explore", "--robot", "Arm", "--seed", "1", "--samples", "0")
    assert status == 2
    assert _error(err)["code"] == "CONFIG_INVALID"
    assert not (tmp_path / LOCK_NAME).exists()


def test_locked_project(capsys, tmp_path):
    (tmp_path / LOCK_NAME).write_text("4242")
    status, _, err = _run(capsys, tmp_path, "solve-task", "--labels", "reach")
    assert status == 1
    assert _error(err)["code"] == "PROJECT_LOCKED"
    assert (tmp_path / LOCK_NAME).exists()


def test_solve_task_without_cores(capsys, tmp_path):
    status, out, _ = _run(capsys, tmp_path, "solve-task", "--labels", "reach", "--constraint", "dir=0.8,1")
    assert status == 0
    assert json.loads(out) == {}


def test_missing_mission_file(capsys, tmp_path):
    status, _, err = _run(capsys, tmp_path, "mission", "solve", str(tmp_path / "mission.yaml"))
    assert status == 1
    assert _error(err)["code"] == "IO_FAILURE"


def test_project_from_the_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("CAPCYCLE_PROJECT", str(tmp_path / "env"))
    assert main(["assemble", "--fixture", "cart", "--robot", "Cart"]) == 0
    capsys.readouterr()
    assert (tmp_path / "env" / "graph.jsonl").exists()


def test_parse_targets():
    assert parse_targets(["end=0.1,0.2,0.3", "start=0"]) == {"end": [0.1, 0.2, 0.3], "start": [0.0]}
    with pytest.raises(UsageError):
        parse_targets(["end"])
    with pytest.raises(UsageError):
        parse_targets(["end=a,b"])


def test_parse_part():
    part = parse_part("Arm-reach:start=0,0,0;end=0.2,0,0.1")
    assert part.core == "Arm-reach"
    assert part.targets == {"start": [0.0, 0.0, 0.0], "end": [0.2, 0.0, 0.1]}
    assert parse_part("Cart-hold").targets == {}
    with pytest.raises(UsageError):
        parse_part(":start=0")
