import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from capcycle.cfm import eval_poly
from capcycle.config import ExplorationConfig, ValidatorConfig
from capcycle.errors import DimensionMismatch, SingleClassData
from capcycle.explore import CapabilitySet, ValidationModel, evaluate_validator, explore, train_validator, validate

from conftest import SMALL_SIM


def _limit_checker(spec, space, sim, theta):
    """Ground-truth feasibility straight from the polynomial commands."""
    phases = np.arange(sim.steps + 1) * sim.dt / sim.horizon
    commands = np.array([[eval_poly(block, min(phi, 1.0)) for block in space.split(theta)] for phi in phases])
    cap = spec.velocity_limit * sim.dt
    q = commands[0]
    if np.any(q < spec.lower) or np.any(q > spec.upper):
        return False
    for command in commands[1:]:
        delta = command - q
        if np.any(np.abs(delta) > cap + 1e-12):
            return False
        q = q + delta
        if np.any(q < spec.lower) or np.any(q > spec.upper):
            return False
    return True


def test_exploration_yields_both_feasibility_classes(arm_capabilities):
    assert len(arm_capabilities) == 300
    assert 0 < arm_capabilities.feasible.sum() < 300
    assert arm_capabilities.q.shape == (300, SMALL_SIM.steps + 1, 3)


def test_feasibility_labels_match_the_limit_checker(arm, arm_capabilities):
    space, sim = arm_capabilities.space, arm_capabilities.config.sim
    for i in range(60):
        expected = _limit_checker(arm, space, sim, arm_capabilities.theta[i])
        assert bool(arm_capabilities.feasible[i]) == expected


def test_exploration_is_seed_reproducible(arm):
    config = ExplorationConfig(samples=40, seed=9, sim=SMALL_SIM)
    first, second = explore(arm, config), explore(arm, config)
    assert_array_equal(first.theta, second.theta)
    assert_array_equal(first.ee, second.ee)
    other = explore(arm, config.model_copy(update={"seed": 10}))
    assert not np.array_equal(first.theta, other.theta)


def test_worker_count_does_not_change_the_set(arm):
    config = ExplorationConfig(samples=40, seed=9, sim=SMALL_SIM)
    serial = explore(arm, config)
    pooled = explore(arm, config.model_copy(update={"workers": 2}))
    assert_array_equal(serial.theta, pooled.theta)
    assert_array_equal(serial.feasible, pooled.feasible)
    assert_array_equal(serial.q, pooled.q)


def test_capability_set_round_trip(arm_capabilities, tmp_path):
    written = arm_capabilities.save(tmp_path / "set")
    assert (tmp_path / "set" / "manifest.json") in written
    loaded = CapabilitySet.load(tmp_path / "set")
    assert loaded.robot == "Arm"
    assert loaded.space == arm_capabilities.space
    assert loaded.config == arm_capabilities.config
    assert_array_equal(loaded.theta, arm_capabilities.theta)
    assert_array_equal(loaded.feasible, arm_capabilities.feasible)
    assert_array_equal(loaded.ee, arm_capabilities.ee)


def test_capability_view_of_one_sample(arm_capabilities):
    cap = arm_capabilities.capability(5)
    assert_allclose(cap.theta, arm_capabilities.theta[5])
    assert cap.feasible == bool(arm_capabilities.feasible[5])


def test_validator_training(arm_capabilities):
    config = ValidatorConfig(seed=1, epochs=8, patience=3, width=16, hidden_layers=2)
    model = train_validator(arm_capabilities, config)
    assert 0.0 <= model.accuracy <= 1.0
    best = [entry["best_heldout_loss"] for entry in model.log]
    assert all(later <= earlier for earlier, later in zip(best, best[1:]))
    assert 0.0 <= validate(model, arm_capabilities.theta[0]) <= 1.0
    metrics = evaluate_validator(model, arm_capabilities)
    assert metrics["tp"] + metrics["tn"] + metrics["fp"] + metrics["fn"] == len(arm_capabilities)


def test_validator_training_is_seeded(arm_capabilities):
    config = ValidatorConfig(seed=4, epochs=3, width=8, hidden_layers=1)
    first = train_validator(arm_capabilities, config)
    second = train_validator(arm_capabilities, config)
    assert_array_equal(first.network.parameters(), second.network.parameters())


def test_validator_needs_both_classes(arm_capabilities):
    only_feasible = arm_capabilities.subset(np.flatnonzero(arm_capabilities.feasible))
    with pytest.raises(SingleClassData):
        train_validator(only_feasible, ValidatorConfig(epochs=1))


def test_validator_save_load(arm_capabilities, tmp_path):
    model = train_validator(arm_capabilities, ValidatorConfig(seed=2, epochs=2, width=8, hidden_layers=1))
    model.save(tmp_path / "validator.json")
    again = ValidationModel.load(tmp_path / "validator.json")
    assert_allclose(again.predict_proba(arm_capabilities.theta), model.predict_proba(arm_capabilities.theta))
    with pytest.raises(DimensionMismatch):
        validate(model, np.zeros(3))
