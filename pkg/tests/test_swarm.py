import numpy as np
import pytest
from numpy.testing import assert_array_equal

from capcycle.config import SamplerConfig
from capcycle.errors import DimensionMismatch
from capcycle.swarm import ParticleSwarm


def _log_gaussian(x, mean, variance):
    return -0.5 * (x - mean) ** 2 / variance - 0.5 * np.log(2 * np.pi * variance)


@pytest.mark.parametrize("instance", range(10))
def test_product_of_two_gaussians_peaks_at_precision_weighted_mean(instance):
    rng = np.random.default_rng(100 + instance)
    (m1, m2), (v1, v2) = rng.uniform(-3.0, 3.0, size=2), rng.uniform(0.1, 4.0, size=2)
    expected = (m1 / v1 + m2 / v2) / (1 / v1 + 1 / v2)

    def objective(x):
        return _log_gaussian(x[:, 0], m1, v1) + _log_gaussian(x[:, 0], m2, v2)

    result = ParticleSwarm(SamplerConfig(seed=instance)).maximize(objective, np.array([-10.0]), np.array([10.0]))
    assert abs(result.best[0] - expected) <= 1e-3 * max(1.0, abs(expected))


def test_isotropic_gaussian_peaks_at_its_mean():
    mean = np.array([0.5, -1.0, 2.0])
    result = ParticleSwarm(SamplerConfig(seed=3)).maximize(
        lambda x: -np.sum((x - mean) ** 2, axis=1), np.full(3, -4.0), np.full(3, 4.0)
    )
    assert np.max(np.abs(result.best - mean)) < 1e-3


def test_best_value_never_gets_worse():
    result = ParticleSwarm(SamplerConfig(seed=1, iterations=50)).maximize(
        lambda x: -np.abs(x).sum(axis=1), np.full(2, -1.0), np.full(2, 1.0)
    )
    assert len(result.history) == 51
    assert all(b >= a for a, b in zip(result.history, result.history[1:]))


def test_particles_stay_inside_the_box():
    lower, upper = np.array([0.0, 1.0]), np.array([0.5, 2.0])
    result = ParticleSwarm(SamplerConfig(seed=2, iterations=30)).maximize(
        lambda x: x.sum(axis=1), lower, upper
    )
    assert np.all(result.personal_best >= lower) and np.all(result.personal_best <= upper)
    assert result.best == pytest.approx(upper, abs=1e-3)


def test_same_seed_same_result_other_seed_other_path():
    def objective(x):
        return -np.sum(x ** 2, axis=1)

    box = (np.full(2, -1.0), np.full(2, 1.0))
    first = ParticleSwarm(SamplerConfig(seed=5, iterations=10)).maximize(objective, *box)
    second = ParticleSwarm(SamplerConfig(seed=5, iterations=10)).maximize(objective, *box)
    other = ParticleSwarm(SamplerConfig(seed=6, iterations=10)).maximize(objective, *box)
    assert_array_equal(first.best, second.best)
    assert not np.array_equal(first.personal_best, other.personal_best)


def test_nan_objective_values_never_win():
    def objective(x):
        return np.where(x[:, 0] > 0.0, np.nan, -x[:, 0] ** 2)

    result = ParticleSwarm(SamplerConfig(seed=0, iterations=20)).maximize(objective, np.array([-1.0]), np.array([1.0]))
    assert result.best[0] <= 0.0
    assert np.isfinite(result.best_value)


def test_alternates_are_distinct_from_the_best():
    result = ParticleSwarm(SamplerConfig(seed=4, particles=16, iterations=5)).maximize(
        lambda x: -np.sum(x ** 2, axis=1), np.full(2, -1.0), np.full(2, 1.0)
    )
    alternates = result.alternates(4)
    assert len(alternates) == 4
    values = [v for _, v in alternates]
    assert values == sorted(values, reverse=True)
    assert all(v <= result.best_value for v in values)
    assert all(np.max(np.abs(theta - result.best)) > 0 for theta, _ in alternates)


def test_bounds_must_match():
    with pytest.raises(DimensionMismatch):
        ParticleSwarm(SamplerConfig()).maximize(lambda x: x[:, 0], np.zeros(2), np.ones(3))
