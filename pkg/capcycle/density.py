"""Generative densities over parameter space.

``DensityModel`` is the seam other density families plug into; the Gaussian
mixture below is fitted by EM on the covariance-regularized likelihood

    L = sum_n log sum_k w_k N(x_n | mu_k, S_k) - 1/2 sum_k tr(Psi S_k^-1),  Psi = floor * I

whose M-step gives S_k = (scatter_k + Psi) / n_k.  EM never decreases L, so the
recorded objective is monotone.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.special import logsumexp

from capcycle.errors import DegenerateData

logger = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


class DensityModel(ABC):
    """Density over parameter vectors."""

    kind: str = ""

    @abstractmethod
    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log-density of each row of ``x``."""

    @abstractmethod
    def grad_log_density(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray: ...

    @abstractmethod
    def mode(self, lower: np.ndarray | None = None, upper: np.ndarray | None = None) -> np.ndarray: ...

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "DensityModel":
        family = _FAMILIES.get(data.get("kind", ""))
        if family is None:
            raise DegenerateData(f"unknown density family {data.get('kind')!r}")
        return family.from_dict(data)


@dataclass
class GaussianMixture(DensityModel):
    weights: np.ndarray        # (K,)
    means: np.ndarray          # (K, d)
    covariances: np.ndarray    # (K, d, d)
    objective_log: list[float] = field(default_factory=list)
    kind: str = "gaussian-mixture"

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covariances = np.asarray(self.covariances, dtype=float).reshape(
            len(self.weights), self.means.shape[1], self.means.shape[1]
        )
        try:
            self._chol = np.stack([cholesky(c, lower=True) for c in self.covariances])
        except LinAlgError as exc:
            raise DegenerateData("mixture covariance is not positive definite") from exc
        self._log_det = 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> int:
        return len(self.weights)

    def _component_log_pdf(self, x: np.ndarray) -> np.ndarray:
        """(n, K) log N(x | mu_k, S_k)."""
        out = np.empty((len(x), self.components))
        for k in range(self.components):
            z = solve_triangular(self._chol[k], (x - self.means[k]).T, lower=True)
            out[:, k] = -0.5 * (self.dim * _LOG_2PI + self._log_det[k] + np.sum(z * z, axis=0))
        return out

    def _joint(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self._component_log_pdf(x) + np.log(self.weights)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self._joint(np.atleast_2d(x)), axis=1)

    def grad_log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        joint = self._joint(x)
        resp = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
        grad = np.zeros_like(x)
        for k in range(self.components):
            grad -= resp[:, [k]] * cho_solve((self._chol[k], True), (x - self.means[k]).T).T
        return grad

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        picks = rng.choice(self.components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[picks] + np.einsum("nij,nj->ni", self._chol[picks], noise)

    def mode(self, lower: np.ndarray | None = None, upper: np.ndarray | None = None) -> np.ndarray:
        """Best component mean refined by local ascent; a local maximum in general."""
        start = self.means[int(np.argmax(self.log_density(self.means)))]
        bounds = None
        if lower is not None and upper is not None:
            start = np.clip(start, lower, upper)
            bounds = list(zip(lower, upper))
        result = minimize(
            lambda v: -float(self.log_density(v)[0]),
            start,
            jac=lambda v: -self.grad_log_density(v)[0],
            method="L-BFGS-B",
            bounds=bounds,
        )
        best = result.x if result.fun <= -self.log_density(start)[0] else start
        return np.asarray(best, dtype=float)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "objective_log": list(self.objective_log),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GaussianMixture":
        return cls(
            weights=np.asarray(data["weights"]),
            means=np.asarray(data["means"]),
            covariances=np.asarray(data["covariances"]),
            objective_log=list(data.get("objective_log", [])),
        )


_FAMILIES: dict[str, type[GaussianMixture]] = {"gaussian-mixture": GaussianMixture}


def fit_mixture(
    x: np.ndarray,
    components: int,
    seed: int,
    floor: float = 1e-6,
    max_iterations: int = 200,
    tolerance: float = 1e-10,
) -> GaussianMixture:
    """EM fit; initial means are distinct rows chosen by the seed."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    if components < 1 or n < components:
        raise DegenerateData(f"{components} components need at least as many rows, got {n}", rows=n)
    if not np.all(np.isfinite(x)):
        raise DegenerateData("rows contain non-finite values")
    rng = np.random.default_rng(seed)
    psi = floor * np.eye(d)

    spread = np.cov(x.T, bias=True).reshape(d, d) if n > 1 else np.zeros((d, d))
    means = x[rng.choice(n, size=components, replace=False)]
    covariances = np.repeat((spread + psi)[None], components, axis=0)
    weights = np.full(components, 1.0 / components)

    log: list[float] = []
    model = GaussianMixture(weights, means, covariances)
    for iteration in range(max_iterations):
        joint = model._joint(x)
        norm = logsumexp(joint, axis=1)
        penalty = sum(
            0.5 * np.trace(cho_solve((model._chol[k], True), psi)) for k in range(components)
        )
        log.append(float(norm.sum() - penalty))
        if iteration and log[-1] - log[-2] <= tolerance * max(1.0, abs(log[-2])):
            break
        resp = np.exp(joint - norm[:, None])
        counts = resp.sum(axis=0)
        # responsibilities can underflow for far-off components
        counts = np.maximum(counts, 1e-10)
        weights = counts / counts.sum()
        means = (resp.T @ x) / counts[:, None]
        covariances = np.empty((components, d, d))
        for k in range(components):
            centered = x - means[k]
            scatter = (resp[:, k, None] * centered).T @ centered
            covariances[k] = (scatter + psi) / counts[k]
            covariances[k] = 0.5 * (covariances[k] + covariances[k].T)
        model = GaussianMixture(weights, means, covariances)
    model.objective_log = log
    logger.debug("mixture fit: %d rows, %d components, %d iterations", n, components, len(log))
    return model
