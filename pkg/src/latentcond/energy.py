"""Energies E(z, c) over generator latents and their gradients.

Three families share one interface (``trace(zt, c, draws) -> per-row energies``):

* :class:`ComposedEnergy`   U(f(G(z)), c)
* :class:`AugmentedEnergy`  mean over random perturbations phi of U(f(phi[G(z)]), c)
* :class:`BayesEnergy`      beta1 * 0.5||z/scale||^2 + beta2 * U_ent(f(G(z)), c)

Latents are handled in batches: ``z`` of shape (n, d_z) yields n energies and
the gradient of their sum, which row-wise is each chain's own gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from latentcond.diffcore import tensor as T
from latentcond.diffcore.tensor import GradTape, Tensor
from latentcond.errors import DegenerateInputError, ShapeError
from latentcond.models import AuxModel, Generator, Prior

CE_CLAMP = 1e-12
SIMPLEX_TOL = 1e-6


# ---------------------------------------------------------------- discrepancies


def _check_simplex(p, name):
    p = np.asarray(p)
    if np.any(p < -SIMPLEX_TOL) or np.any(np.abs(p.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise DegenerateInputError(f"{name} is not on the probability simplex")


def trace_cross_entropy(c_pred: Tensor, c) -> Tensor:
    """-sum_j c_j log max(c_pred_j, 1e-12), row-wise."""
    return -(T.log(T.clamp_min(c_pred, CE_CLAMP)) * c).sum(axis=-1)


def trace_neg_cosine(c_pred: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    c_norm = np.linalg.norm(c, axis=-1)
    pred_sq = (c_pred * c_pred).sum(axis=-1)
    if np.any(c_norm == 0) or np.any(pred_sq.data == 0):
        raise DegenerateInputError("negative cosine of a zero vector is undefined")
    return -(c_pred * c).sum(axis=-1) / (T.sqrt(pred_sq) * c_norm)


def u_cross_entropy(c_pred, c) -> float | np.ndarray:
    _check_simplex(c_pred, "prediction")
    _check_simplex(c, "condition")
    out = trace_cross_entropy(T.as_tensor(c_pred), np.asarray(c, dtype=np.float64)).data
    return float(out) if out.ndim == 0 else out


def u_neg_cosine(c_pred, c) -> float | np.ndarray:
    out = trace_neg_cosine(T.as_tensor(c_pred), c).data
    return float(out) if out.ndim == 0 else out


DISCREPANCIES = {"cross_entropy": trace_cross_entropy, "neg_cosine": trace_neg_cosine}


# ---------------------------------------------------------------- perturbations


@dataclass(frozen=True)
class PerturbationFamily:
    """phi(x) = x * exp(s_mul * xi) + s_add * eps with xi, eps ~ N(0, I) per axis."""

    s_add: float = 0.1
    s_mul: float = 0.1

    def draw(self, rng, n_phi: int, n_rows: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
        log_scale = rng.normal(size=(n_phi, n_rows, dim)) * self.s_mul
        shift = rng.normal(size=(n_phi, n_rows, dim)) * self.s_add
        return np.exp(log_scale), shift


# ---------------------------------------------------------------- energies


def _check_cond(c, n_rows, dim):
    c = np.asarray(c, dtype=np.float64)
    if c.shape[-1] != dim:
        raise ShapeError(f"condition has {c.shape[-1]} entries, expected {dim}")
    if c.ndim == 1:
        c = np.broadcast_to(c, (n_rows, dim))
    if c.shape[0] != n_rows:
        raise ShapeError(f"{c.shape[0]} conditions for {n_rows} latents")
    return c


@dataclass(frozen=True, eq=False)
class ComposedEnergy:
    generator: Generator
    aux: AuxModel
    discrepancy: str = "cross_entropy"
    needs_rng = False

    def __post_init__(self):
        if self.discrepancy not in DISCREPANCIES:
            raise ValueError(f"unknown discrepancy {self.discrepancy!r}")

    def draw(self, rng, n_rows):
        return None

    def trace(self, zt: Tensor, c, draws=None) -> Tensor:
        c = _check_cond(c, zt.shape[0], self.aux.out_dim)
        return DISCREPANCIES[self.discrepancy](self.aux.trace(self.generator.trace(zt)), c)


@dataclass(frozen=True, eq=False)
class AugmentedEnergy:
    generator: Generator
    aux: AuxModel
    family: PerturbationFamily = PerturbationFamily()
    n_phi: int = 50
    discrepancy: str = "neg_cosine"
    needs_rng = True

    def __post_init__(self):
        if self.n_phi < 1:
            raise ValueError("n_phi must be at least 1")
        if self.discrepancy not in DISCREPANCIES:
            raise ValueError(f"unknown discrepancy {self.discrepancy!r}")

    def draw(self, rng, n_rows):
        return self.family.draw(rng, self.n_phi, n_rows, self.generator.data_dim)

    def trace(self, zt: Tensor, c, draws=None) -> Tensor:
        if draws is None:
            raise ValueError("augmented energy needs perturbation draws (pass an rng)")
        n = zt.shape[0]
        c = _check_cond(c, n, self.aux.out_dim)
        scale, shift = draws
        x = self.generator.trace(zt)                             # (n, d_x)
        xp = T.reshape(x, (1, n, -1)) * scale + shift           # (n_phi, n, d_x)
        flat = T.reshape(xp, (self.n_phi * n, -1))
        u = DISCREPANCIES[self.discrepancy](self.aux.trace(flat), np.tile(c, (self.n_phi, 1)))
        return T.reshape(u, (self.n_phi, n)).mean(axis=0)


@dataclass(frozen=True, eq=False)
class BayesEnergy:
    generator: Generator
    aux: AuxModel
    prior: Prior
    beta1: float = 1.0
    beta2: float = 1.0
    needs_rng = False

    def __post_init__(self):
        if self.aux.kind != "classifier":
            raise ValueError("Bayesian energy needs a classifier auxiliary model")

    def draw(self, rng, n_rows):
        return None

    def trace(self, zt: Tensor, c, draws=None) -> Tensor:
        c = _check_cond(c, zt.shape[0], self.aux.out_dim)
        nll = trace_cross_entropy(self.aux.trace(self.generator.trace(zt)), c)
        return self.prior.trace_neg_log_density(zt) * self.beta1 + nll * self.beta2


# ---------------------------------------------------------------- evaluation


def _as_batch(z):
    z = np.asarray(z, dtype=np.float64)
    return (z[None, :], True) if z.ndim == 1 else (z, False)


def _draws(E, rng, n_rows):
    if E.needs_rng and rng is None:
        raise ValueError("this energy needs an rng for its perturbation draws")
    return E.draw(rng, n_rows) if E.needs_rng else None


def energy_eval(E, z, c, rng=None, draws=None):
    """Per-row energies (a float for a single 1-D latent)."""
    zb, single = _as_batch(z)
    if draws is None:
        draws = _draws(E, rng, zb.shape[0])
    out = E.trace(Tensor(zb), c, draws).data
    return float(out[0]) if single else out


def energy_value_and_grad(E, z, c, rng=None, draws=None):
    """Energies and gradients from one recording, so value and gradient share draws."""
    zb, single = _as_batch(z)
    if draws is None:
        draws = _draws(E, rng, zb.shape[0])
    leaf = Tensor(zb)
    energies = E.trace(leaf, c, draws)
    grad = GradTape(energies.sum()).gradients().get(id(leaf), np.zeros_like(zb))
    if single:
        return float(energies.data[0]), grad[0]
    return energies.data, grad


def energy_grad(E, z, c, rng=None, draws=None):
    return energy_value_and_grad(E, z, c, rng, draws)[1]


def energy_callable(E, c, draws=None):
    """Plain numpy function of (n, d_z) latents, for the brute-force oracles."""
    return lambda pts: E.trace(Tensor(np.asarray(pts, dtype=np.float64)), c, draws).data
