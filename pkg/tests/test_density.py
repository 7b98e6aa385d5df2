import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import multivariate_normal

from capcycle.density import DensityModel, GaussianMixture, fit_mixture
from capcycle.errors import DegenerateData


def _blob(seed=0, n=400):
    rng = np.random.default_rng(seed)
    cov = np.array([[0.5, 0.1], [0.1, 0.2]])
    return rng.multivariate_normal([1.0, -2.0], cov, size=n), cov


def test_single_component_recovers_the_mean():
    x, cov = _blob()
    model = fit_mixture(x, components=1, seed=0)
    standard_error = np.sqrt(np.diag(cov) / len(x))
    assert np.all(np.abs(model.means[0] - [1.0, -2.0]) <= 3 * standard_error)


def test_log_density_matches_closed_form():
    x, _ = _blob(1)
    model = fit_mixture(x, components=1, seed=0)
    mean, cov = model.means[0], model.covariances[0]
    probes = np.vstack([mean, x[:5]])
    assert_allclose(model.log_density(probes), multivariate_normal(mean, cov).logpdf(probes), rtol=1e-10)


def test_em_objective_is_monotone():
    rng = np.random.default_rng(2)
    x = np.vstack([rng.normal(-3.0, 0.5, size=(150, 3)), rng.normal(2.0, 1.0, size=(150, 3))])
    model = fit_mixture(x, components=3, seed=5, max_iterations=100)
    log = np.asarray(model.objective_log)
    assert len(log) > 1
    assert np.all(np.diff(log) >= -1e-9 * np.maximum(1.0, np.abs(log[:-1])))


def test_fit_is_seed_deterministic():
    x, _ = _blob(3)
    first = fit_mixture(x, components=2, seed=7)
    second = fit_mixture(x, components=2, seed=7)
    assert_allclose(first.means, second.means)
    assert first.objective_log == second.objective_log


def test_more_components_than_rows():
    with pytest.raises(DegenerateData):
        fit_mixture(np.zeros((2, 3)), components=3, seed=0)


def test_covariance_floor_keeps_repeated_rows_usable():
    model = fit_mixture(np.ones((5, 2)), components=1, seed=0, floor=1e-4)
    assert np.all(np.isfinite(model.log_density(np.ones((1, 2)))))


def test_mode_of_a_gaussian_is_its_mean():
    model = GaussianMixture(np.ones(1), np.array([[0.3, -0.4]]), np.array([np.diag([0.2, 0.5])]))
    assert_allclose(model.mode(), [0.3, -0.4], atol=1e-6)
    assert_allclose(model.mode(np.array([0.5, -1.0]), np.array([1.0, 1.0])), [0.5, -0.4], atol=1e-6)


def test_gradient_matches_finite_differences():
    x, _ = _blob(4)
    model = fit_mixture(x, components=2, seed=1)
    point = np.array([0.7, -1.5])
    eps = 1e-6
    numeric = [
        (model.log_density(point + eps * e)[0] - model.log_density(point - eps * e)[0]) / (2 * eps)
        for e in np.eye(2)
    ]
    assert_allclose(model.grad_log_density(point)[0], numeric, rtol=1e-5, atol=1e-8)


def test_samples_follow_the_model():
    model = GaussianMixture(np.array([0.25, 0.75]), np.array([[-5.0], [5.0]]), np.array([[[0.1]], [[0.1]]]))
    draws = model.sample(np.random.default_rng(0), 4000)
    assert draws.shape == (4000, 1)
    assert np.mean(draws > 0) == pytest.approx(0.75, abs=0.03)


def test_dict_round_trip():
    x, _ = _blob(5)
    model = fit_mixture(x, components=2, seed=3)
    again = DensityModel.from_dict(model.to_dict())
    assert_allclose(again.log_density(x[:10]), model.log_density(x[:10]))
    with pytest.raises(DegenerateData):
        DensityModel.from_dict({"kind": "flow"})
