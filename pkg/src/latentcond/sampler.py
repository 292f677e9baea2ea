"""Langevin refinement of translator proposals.

All samplers run a batch of independent chains: latents have shape
(n_chains, d_z) and conditions (n_chains, d_c) (or one shared 1-D condition).
A single 1-D latent is accepted and treated as a batch of one.

Latent step (momentum form; rho = 0 recovers plain Langevin):

    v <- rho * v + grad E(z, c)
    z <- z - (beta * lambda / 2) * v + sqrt(lambda) * eps
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from latentcond.diffcore import tensor as T
from latentcond.diffcore.optim import Adam
from latentcond.diffcore.tensor import GradTape, Tensor
from latentcond.energy import energy_eval, energy_value_and_grad
from latentcond.errors import DivergenceError, NonFiniteError
from latentcond.translator import (
    TranslatorParams,
    gmm_mean,
    gmm_sample,
    translator_forward,
    translator_predict,
)

DIVERGENCE_NORM = 1e6

INITS = ("best_of_m", "gmm_mean", "naive_best_of_m", "naive_k_best")
MODES = ("latent", "params")
OPTIMIZERS = ("langevin", "adam")


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 100
    step_size: float = 1e-4
    beta: float = 20.0
    momentum: float = 0.99
    mode: str = "latent"
    init: str = "best_of_m"
    n_candidates: int = 5
    k_best: int = 10
    optimizer: str = "langevin"
    weight_lr: float = 5e-3
    latent_adam_lr: float = 1e-2

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.step_size <= 0 or self.beta <= 0:
            raise ValueError("step_size and beta must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.n_candidates < 1 or self.k_best < 1:
            raise ValueError("candidate counts must be >= 1")
        if self.mode not in MODES or self.init not in INITS or self.optimizer not in OPTIMIZERS:
            raise ValueError(f"bad mode/init/optimizer: {self.mode}/{self.init}/{self.optimizer}")

    @property
    def drift(self) -> float:
        return 0.5 * self.beta * self.step_size


@dataclass
class Trajectory:
    """Per-step energies (steps+1, n_chains) and latents (steps+1, n_chains, d_z)."""

    energies: np.ndarray
    latents: np.ndarray
    step_seconds: list = field(default_factory=list)
    weight_logits: np.ndarray | None = None
    means: np.ndarray | None = None
    diagnostic: str = ""

    @property
    def final(self) -> np.ndarray:
        return self.latents[-1]

    @property
    def truncated(self) -> bool:
        return bool(self.diagnostic)

    def __len__(self) -> int:
        return len(self.energies)


def _batch(z):
    z = np.array(z, dtype=np.float64)
    return (z[None], True) if z.ndim == 1 else (z, False)


def _check_diverged(z, t):
    norms = np.linalg.norm(z.reshape(len(z), -1), axis=1)
    if np.any(norms > DIVERGENCE_NORM):
        raise DivergenceError(f"latent norm {norms.max():.3g} exceeds {DIVERGENCE_NORM:g} at step {t}")


def _finite_or_diag(value, grad, t):
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(grad))):
        return f"non-finite energy or gradient at step {t}"
    return ""


# ---------------------------------------------------------------- initialization


def init_best_of_m(tr: TranslatorParams, c, M: int, E, rng) -> np.ndarray:
    """Draw M translator samples per condition and keep the lowest-energy one.

    ``c`` of shape (n, d_c) gives (n, d_z); ties go to the lowest candidate index.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    cb = np.atleast_2d(np.asarray(c, dtype=np.float64))
    g = translator_forward(tr, cb)
    cand = gmm_sample(g, rng, M)                                  # (n, M, d)
    n, _, d = cand.shape
    e = energy_eval(E, cand.reshape(n * M, d), np.repeat(cb, M, axis=0), rng)
    best = np.argmin(e.reshape(n, M), axis=1)
    out = cand[np.arange(n), best]
    return out[0] if np.ndim(c) == 1 else out


def init_naive(prior, c, M: int, E, rng, k_best: int | None = None):
    """Prior-sampled candidates ranked by energy.

    ``k_best=None`` returns the single best latent per condition.  Otherwise
    returns (means, weight_logits): the ``k_best`` lowest-energy candidates,
    energy-sorted, plus standard-normal logits of shape (k_best, d_z).
    """
    if M < 1 or (k_best is not None and not 1 <= k_best <= M):
        raise ValueError("need M >= k_best >= 1")
    cb = np.atleast_2d(np.asarray(c, dtype=np.float64))
    n = len(cb)
    d = prior.latent_dim
    cand = prior.sample(rng, n * M).reshape(n, M, d)
    e = energy_eval(E, cand.reshape(n * M, d), np.repeat(cb, M, axis=0), rng).reshape(n, M)
    single = np.ndim(c) == 1
    if k_best is None:
        out = cand[np.arange(n), np.argmin(e, axis=1)]
        return out[0] if single else out
    order = np.argsort(e, axis=1, kind="stable")[:, :k_best]
    means = np.take_along_axis(cand, order[:, :, None], axis=1)
    logits = rng.normal(size=(n, k_best, d))
    return (means[0], logits[0]) if single else (means, logits)


# ---------------------------------------------------------------- latent-space chains


def langevin_latent(E, c, z0, cfg: SamplerConfig, rng, noise_rng=None) -> Trajectory:
    """Run ``cfg.steps`` Langevin (or ADAM-drift) steps from ``z0``.

    ``rng`` feeds perturbation draws of stochastic energies; Gaussian noise
    comes from ``noise_rng`` when given (tests pass a zero stream) and from
    ``rng`` otherwise.
    """
    z, single = _batch(z0)
    noise_rng = rng if noise_rng is None else noise_rng
    sqrt_lam = math.sqrt(cfg.step_size)
    v = np.zeros_like(z)
    adam = Adam(lr=cfg.latent_adam_lr) if cfg.optimizer == "adam" else None
    energies, latents, secs = [], [z.copy()], []
    diagnostic = ""
    for t in range(cfg.steps + 1):
        tic = time.perf_counter()
        try:
            value, grad = energy_value_and_grad(E, z, c, rng)
        except NonFiniteError as exc:
            diagnostic = f"step {t}: {exc}"
            break
        diagnostic = _finite_or_diag(value, grad, t)
        if diagnostic:
            break
        energies.append(value)
        if t == cfg.steps:
            break
        if adam is not None:
            (z,) = adam.step([z], [grad])
        else:
            v = cfg.momentum * v + grad
            z = z - cfg.drift * v
        z = z + sqrt_lam * noise_rng.normal(size=z.shape)
        _check_diverged(z, t + 1)
        latents.append(z.copy())
        secs.append(time.perf_counter() - tic)
    traj = Trajectory(np.array(energies), np.array(latents[: len(energies) or 1]), secs, diagnostic=diagnostic)
    if single:
        traj.energies = traj.energies[:, 0] if traj.energies.ndim == 2 else traj.energies
        traj.latents = traj.latents[:, 0]
    return traj


# ---------------------------------------------------------------- parameter-space chains


def combine(weight_logits, means):
    """z = sum_k softmax_k(logits)[k] * mu_k, with a separate softmax per latent axis."""
    w = T.softmax(weight_logits, axis=-2)
    return (w * means).sum(axis=-2)


def _param_value_and_grad(E, W, mu, c, rng):
    Wt, mut = Tensor(W), Tensor(mu)
    z = combine(Wt, mut)
    draws = E.draw(rng, W.shape[0]) if E.needs_rng else None
    energies = E.trace(z, c, draws)
    grads = GradTape(energies.sum()).gradients()
    return energies.data, z.data, grads.get(id(Wt), np.zeros_like(W)), grads.get(id(mut), np.zeros_like(mu))


def langevin_params(E, c, tr: TranslatorParams | None, cfg: SamplerConfig, rng, noise_rng=None, init=None):
    """Chains over mixture parameters (weight logits and means, both K x d_z).

    Means follow momentum Langevin on the energy gradient; weight logits take
    noise-free ADAM steps with ``cfg.weight_lr``.  Start from the translator's
    means with its K logits broadcast over axes, or from ``init=(means, logits)``.
    """
    if init is None:
        g = translator_forward(tr, c)
        means = g.means
        logits = np.broadcast_to(g.logits[..., :, None], g.means.shape)
    else:
        means, logits = init
    single = np.ndim(means) == 2
    mu = np.array(means, dtype=np.float64).reshape((1,) + np.shape(means) if single else np.shape(means))
    W = np.array(logits, dtype=np.float64).reshape(mu.shape)
    noise_rng = rng if noise_rng is None else noise_rng
    sqrt_lam = math.sqrt(cfg.step_size)
    v = np.zeros_like(mu)
    adam = Adam(lr=cfg.weight_lr)
    energies, latents, Ws, mus, secs = [], [], [W.copy()], [mu.copy()], []
    diagnostic = ""
    for t in range(cfg.steps + 1):
        tic = time.perf_counter()
        try:
            value, z, gW, gmu = _param_value_and_grad(E, W, mu, c, rng)
        except NonFiniteError as exc:
            diagnostic = f"step {t}: {exc}"
            break
        diagnostic = _finite_or_diag(value, gmu, t) or _finite_or_diag(value, gW, t)
        if diagnostic:
            break
        energies.append(value)
        latents.append(z)
        if t == cfg.steps:
            break
        v = cfg.momentum * v + gmu
        mu = mu - cfg.drift * v + sqrt_lam * noise_rng.normal(size=mu.shape)
        (W,) = adam.step([W], [gW])
        _check_diverged(mu, t + 1)
        Ws.append(W.copy())
        mus.append(mu.copy())
        secs.append(time.perf_counter() - tic)
    traj = Trajectory(np.array(energies), np.array(latents), secs, np.array(Ws), np.array(mus), diagnostic)
    if single:
        traj.energies = traj.energies[:, 0]
        traj.latents = traj.latents[:, 0]
        traj.weight_logits = traj.weight_logits[:, 0]
        traj.means = traj.means[:, 0]
    return traj


# ---------------------------------------------------------------- full pipeline


def initial_latents(tr, E, c, cfg: SamplerConfig, rng, prior=None):
    """z(0) for latent-mode chains under ``cfg.init`` (or the regression head)."""
    if tr is not None and tr.deterministic:
        return translator_predict(tr, c)
    if cfg.init == "best_of_m":
        return init_best_of_m(tr, c, cfg.n_candidates, E, rng)
    if cfg.init == "gmm_mean":
        return gmm_mean(translator_forward(tr, c))
    if cfg.init == "naive_best_of_m":
        if prior is None:
            raise ValueError("naive initialization needs the prior")
        return init_naive(prior, c, cfg.n_candidates, E, rng)
    raise ValueError(f"init {cfg.init!r} is not a latent-mode initialization")


def tr0n_sample(G, tr, E, c, cfg: SamplerConfig, rng, prior=None, noise_rng=None):
    """Initialize, refine, and decode: returns (G(z_T), trajectory)."""
    if cfg.mode == "params":
        if cfg.init == "naive_k_best":
            init = init_naive(prior, c, cfg.n_candidates, E, rng, k_best=cfg.k_best)
            traj = langevin_params(E, c, None, cfg, rng, noise_rng, init=init)
        else:
            traj = langevin_params(E, c, tr, cfg, rng, noise_rng)
    else:
        z0 = initial_latents(tr, E, c, cfg, rng, prior)
        traj = langevin_latent(E, c, z0, cfg, rng, noise_rng)
    return G(traj.final), traj


def steps_to_threshold(energies: np.ndarray, tau: float) -> np.ndarray:
    """First step index with energy <= tau per chain; inf when never reached."""
    e = np.asarray(energies)
    hit = e <= tau
    first = np.argmax(hit, axis=0).astype(np.float64)
    first[~hit.any(axis=0)] = np.inf
    return first
