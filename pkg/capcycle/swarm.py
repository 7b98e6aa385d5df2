"""Particle swarm maximizer over a box.

    V <- w V + c1 r1 (pbest - X) + c2 r2 (gbest - X)
    X <- clip(X + V, lower, upper)

The objective is evaluated on the whole swarm at once, one call per iteration.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from capcycle.config import SamplerConfig
from capcycle.errors import DimensionMismatch

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], np.ndarray]


@dataclass
class SwarmResult:
    best: np.ndarray
    best_value: float
    personal_best: np.ndarray
    personal_value: np.ndarray
    history: list[float] = field(default_factory=list)

    def alternates(self, count: int, tolerance: float = 1e-9) -> list[tuple[np.ndarray, float]]:
        """Best distinct personal bests other than the global best."""
        picked: list[tuple[np.ndarray, float]] = []
        for i in np.argsort(-self.personal_value, kind="stable"):
            candidate = self.personal_best[i]
            known = [self.best] + [p for p, _ in picked]
            if any(np.max(np.abs(candidate - p)) <= tolerance for p in known):
                continue
            picked.append((candidate.copy(), float(self.personal_value[i])))
            if len(picked) == count:
                break
        return picked


class ParticleSwarm:
    def __init__(self, config: SamplerConfig) -> None:
        self.config = config

    def maximize(
        self,
        objective: Objective,
        lower: np.ndarray,
        upper: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> SwarmResult:
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatch("swarm bounds must be matching vectors")
        cfg = self.config
        rng = rng or np.random.default_rng(cfg.seed)
        span = upper - lower
        n, d = cfg.particles, len(lower)

        x = rng.uniform(lower, upper, size=(n, d))
        v = rng.uniform(-span, span, size=(n, d)) * 0.1
        value = self._evaluate(objective, x)
        pbest, pvalue = x.copy(), value.copy()
        g = int(np.argmax(pvalue))
        history = [float(pvalue[g])]

        for _ in range(cfg.iterations):
            r1 = rng.random((n, d))
            r2 = rng.random((n, d))
            v = cfg.inertia * v + cfg.cognitive * r1 * (pbest - x) + cfg.social * r2 * (pbest[g] - x)
            x = np.clip(x + v, lower, upper)
            v = np.where((x == lower) | (x == upper), 0.0, v)
            value = self._evaluate(objective, x)
            improved = value > pvalue
            pbest[improved], pvalue[improved] = x[improved], value[improved]
            g = int(np.argmax(pvalue))
            history.append(float(pvalue[g]))

        logger.debug("swarm: %d particles, %d iterations, best %.6g", n, cfg.iterations, history[-1])
        return SwarmResult(pbest[g].copy(), float(pvalue[g]), pbest, pvalue, history)

    @staticmethod
    def _evaluate(objective: Objective, x: np.ndarray) -> np.ndarray:
        value = np.asarray(objective(x), dtype=float).reshape(len(x))
        return np.where(np.isnan(value), -np.inf, value)
