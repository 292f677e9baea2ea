"""Momentum SGD and ADAM.  Both return fresh parameter arrays; state is owned by the instance."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from latentcond.errors import ShapeError


def _check(params, grads, buffers):
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ShapeError(f"parameter {np.shape(p)} vs gradient {np.shape(g)}")
    if buffers is not None:
        for p, b in zip(params, buffers):
            if np.shape(p) != b.shape:
                raise ShapeError(f"parameter {np.shape(p)} vs optimizer buffer {b.shape}")


class Momentum:
    """Heavy-ball update ``v <- rho*v + g; p <- p - lr*v``."""

    kind = "momentum"

    def __init__(self, lr: float = 1e-2, momentum: float = 0.99):
        self.lr = lr
        self.momentum = momentum
        self.velocity: list[np.ndarray] | None = None

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr=None):
        _check(params, grads, self.velocity)
        if self.velocity is None:
            self.velocity = [np.zeros(np.shape(p)) for p in params]
        lr = self.lr if lr is None else lr
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.velocity[i] = self.momentum * self.velocity[i] + g
            out.append(p - lr * self.velocity[i])
        return out


class Adam:
    """Bias-corrected ADAM (Kingma & Ba)."""

    kind = "adam"

    def __init__(self, lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr=None):
        _check(params, grads, self.m)
        if self.m is None:
            self.m = [np.zeros(np.shape(p)) for p in params]
            self.v = [np.zeros(np.shape(p)) for p in params]
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            out.append(p - lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out
