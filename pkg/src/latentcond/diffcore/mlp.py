"""Dense multilayer perceptrons evaluated on the autodiff tape."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from latentcond.errors import ShapeError

from . import tensor as T

ACTIVATIONS = {
    "identity": lambda t: t,
    "relu": T.relu,
    "tanh": T.tanh,
    "softmax": T.softmax,
    "l2norm": T.l2_normalize,
}


@dataclass(frozen=True, eq=False)
class Mlp:
    """Layers compute ``act(x @ W + b)``; ``W`` has shape (in, out)."""

    weights: tuple
    biases: tuple
    activations: tuple

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i} input {w.shape[0]} != previous output")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        """Parameters interleaved as [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "Mlp":
        arrays = [np.array(a, dtype=np.float64) for a in arrays]
        return Mlp(tuple(arrays[0::2]), tuple(arrays[1::2]), self.activations)

    def equals(self, other: "Mlp") -> bool:
        return self.activations == other.activations and all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.arrays(), other.arrays())
        ) and len(self.weights) == len(other.weights)


def init_mlp(sizes: Sequence[int], activations: Sequence[str], rng, gain: float = 1.0) -> Mlp:
    """PyTorch ``nn.Linear`` default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for W and b."""
    if len(activations) != len(sizes) - 1:
        raise ShapeError("need one activation per layer")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = gain / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=(fan_out,)))
    return Mlp(tuple(weights), tuple(biases), tuple(activations))


def mlp_apply(mlp: Mlp, x, arrays=None) -> T.Tensor:
    """Trace ``mlp`` on ``x``.  ``arrays`` optionally substitutes (tensor) parameters."""
    x = T.as_tensor(x)
    if x.shape[-1] != mlp.in_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, network expects {mlp.in_dim}")
    params = mlp.arrays() if arrays is None else arrays
    h = x
    for i, act in enumerate(mlp.activations):
        h = ACTIVATIONS[act](T.matmul(h, params[2 * i]) + params[2 * i + 1])
    return h


def mlp_forward(mlp: Mlp, x) -> np.ndarray:
    return mlp_apply(mlp, np.asarray(x, dtype=np.float64)).data
