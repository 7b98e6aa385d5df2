"""Small fully connected classifier in numpy.

tanh hidden layers, one sigmoid output, binary cross-entropy on logits.  The
forward pass keeps every intermediate so the backward pass can recurse
through them layer by layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import expit

from capcycle.errors import DimensionMismatch


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray


class FeedForwardNetwork:
    def __init__(self, layers: list[Layer]) -> None:
        if not layers:
            raise DimensionMismatch("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weights.shape[1] != nxt.weights.shape[0]:
                raise DimensionMismatch("consecutive layer sizes do not chain")
        if layers[-1].weights.shape[1] != 1:
            raise DimensionMismatch("the output layer must have a single unit")
        self.layers = layers

    @classmethod
    def initialize(cls, sizes: list[int], rng: np.random.Generator) -> "FeedForwardNetwork":
        """Glorot-uniform weights, zero biases."""
        layers = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(Layer(rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [layer.weights.shape[1] for layer in self.layers]

    def forward(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Hidden activations (input first) and output logits."""
        activations = [x]
        a = x
        for layer in self.layers[:-1]:
            a = np.tanh(a @ layer.weights + layer.bias)
            activations.append(a)
        logits = (a @ self.layers[-1].weights + self.layers[-1].bias)[:, 0]
        return activations, logits

    def predict(self, x: np.ndarray) -> np.ndarray:
        return expit(self.forward(x)[1])

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        return _bce(self.forward(x)[1], y)

    def loss_and_gradients(self, x: np.ndarray, y: np.ndarray) -> tuple[float, list[Layer]]:
        activations, logits = self.forward(x)
        # d(mean bce)/d(logit)
        delta = ((expit(logits) - y) / len(y))[:, None]
        grads: list[Layer] = []
        for index in range(len(self.layers) - 1, -1, -1):
            a = activations[index]
            grads.append(Layer(a.T @ delta, delta.sum(axis=0)))
            if index:
                delta = (delta @ self.layers[index].weights.T) * (1.0 - a * a)
        return _bce(logits, y), grads[::-1]

    def parameters(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weights.ravel(), l.bias]) for l in self.layers])

    def set_parameters(self, flat: np.ndarray) -> None:
        offset = 0
        for layer in self.layers:
            size = layer.weights.size
            layer.weights = flat[offset:offset + size].reshape(layer.weights.shape).copy()
            offset += size
            layer.bias = flat[offset:offset + layer.bias.size].copy()
            offset += layer.bias.size
        if offset != flat.size:
            raise DimensionMismatch("parameter vector does not match the network")

    @staticmethod
    def flatten(grads: list[Layer]) -> np.ndarray:
        return np.concatenate([np.concatenate([g.weights.ravel(), g.bias]) for g in grads])

    def to_dict(self) -> dict[str, Any]:
        return {"layers": [{"weights": l.weights.tolist(), "bias": l.bias.tolist()} for l in self.layers]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FeedForwardNetwork":
        return cls([
            Layer(np.asarray(l["weights"], dtype=float).reshape(len(l["weights"]), -1), np.asarray(l["bias"], dtype=float))
            for l in data["layers"]
        ])


def _bce(logits: np.ndarray, y: np.ndarray) -> float:
    # log(1 + e^z) - y z, stable for large |z|
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))
