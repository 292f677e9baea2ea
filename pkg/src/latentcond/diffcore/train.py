"""Minibatch ADAM loop shared by every trainer in the package."""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from latentcond.errors import NonFiniteError, TrainingError

from .optim import Adam
from .tensor import value_and_grad


def cosine_lr(base: float, step: int, total: int) -> float:
    """Cosine annealing that reaches exactly 0 at ``step == total``."""
    return 0.5 * base * (1.0 + math.cos(math.pi * min(step, total) / total))


def adam_fit(
    loss_fn: Callable,
    params: Sequence[np.ndarray],
    data: Sequence[np.ndarray],
    *,
    epochs: int,
    batch_size: int,
    lr: float,
    rng,
    cosine: bool = False,
    on_epoch: Callable[[int, list, float], bool] | None = None,
) -> tuple[list[np.ndarray], list[float]]:
    """Minimize ``loss_fn(param_tensors, *batch)`` with shuffled minibatches.

    Returns the final parameters and the per-epoch mean loss.  ``on_epoch``
    may return True to stop early.  A non-finite loss aborts with
    :class:`TrainingError` naming the epoch and batch.
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    n = len(data[0])
    steps_per_epoch = math.ceil(n / batch_size)
    total = epochs * steps_per_epoch
    opt = Adam(lr=lr)
    history = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for b in range(steps_per_epoch):
            idx = order[b * batch_size:(b + 1) * batch_size]
            batch = [d[idx] for d in data]
            try:
                value, grads = value_and_grad(lambda *ps: loss_fn(ps, *batch), *params)
            except NonFiniteError as exc:
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {b}: {exc}"
                ) from exc
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
            params = opt.step(params, grads, lr=cosine_lr(lr, step, total) if cosine else lr)
            losses.append(value)
            step += 1
        history.append(float(np.mean(losses)))
        if on_epoch is not None and on_epoch(epoch, params, history[-1]):
            break
    return params, history
