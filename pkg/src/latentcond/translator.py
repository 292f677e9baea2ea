"""Stochastic translator q(z|c): an MLP emitting a Gaussian mixture over latents.

Trunk: h1 = relu(c W1 + b1); h2 = h1 + relu(h1 W2 + b2).  Heads read h2:
K concatenated means, K mixture logits and (deterministic mode) one
regressed latent.  A free vector ``nu`` gives the shared diagonal scale
sigma = exp(nu) + 1e-6.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from latentcond.diffcore import tensor as T
from latentcond.diffcore.train import adam_fit
from latentcond.errors import DegenerateInputError, ShapeError
from latentcond.models import PairDataset

SIGMA_FLOOR = 1e-6
DEFAULT_HIDDEN = 100
LOG_2PI = math.log(2 * math.pi)

TRUNK = ("W1", "b1", "W2", "b2")
GMM_HEADS = ("Wm", "bm", "Ww", "bw", "nu")
REG_HEAD = ("Wr", "br")


@dataclass(frozen=True)
class TranslatorTrainConfig:
    epochs: int = 10
    batch_size: int = 16
    lr: float = 1e-4
    loss_scale: float = 1e-4
    gamma: float | None = None  # None: 0 for classifier conditions, 0.2 for embeddings
    hidden: int | None = None     # None: 100 (the harness uses 2048 for embedding conditions)
    n_components: int = 10
    sigma_init: float = 0.01
    box: float | None = None

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr", "loss_scale", "n_components", "sigma_init"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.hidden is not None and self.hidden <= 0:
            raise ValueError("hidden must be positive")


@dataclass(frozen=True, eq=False)
class TranslatorParams:
    arrays: dict
    n_components: int
    latent_dim: int
    cond_dim: int
    deterministic: bool = False
    box: float | None = None
    history: tuple = field(default=(), compare=False)

    @property
    def names(self) -> tuple[str, ...]:
        return TRUNK + (REG_HEAD if self.deterministic else GMM_HEADS)

    def ordered(self) -> list[np.ndarray]:
        return [self.arrays[k] for k in self.names]

    def with_ordered(self, arrays, history=()) -> "TranslatorParams":
        return replace(self, arrays=dict(zip(self.names, arrays)), history=tuple(history))

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.arrays["nu"]) + SIGMA_FLOOR

    def equals(self, other: "TranslatorParams") -> bool:
        return (
            self.names == other.names
            and (self.n_components, self.latent_dim, self.cond_dim, self.box)
            == (other.n_components, other.latent_dim, other.cond_dim, other.box)
            and all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.names)
        )


def init_translator(cond_dim, latent_dim, cfg: TranslatorTrainConfig, rng, deterministic=False):
    """PyTorch-style uniform init; nu starts so that sigma = sigma_init."""
    H, K = cfg.hidden or DEFAULT_HIDDEN, cfg.n_components

    def linear(fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)

    a = {}
    a["W1"], a["b1"] = linear(cond_dim, H)
    a["W2"], a["b2"] = linear(H, H)
    if deterministic:
        a["Wr"], a["br"] = linear(H, latent_dim)
    else:
        a["Wm"], a["bm"] = linear(H, K * latent_dim)
        a["Ww"], a["bw"] = linear(H, K)
        a["nu"] = np.full(latent_dim, math.log(cfg.sigma_init - SIGMA_FLOOR))
    return TranslatorParams(a, K, latent_dim, cond_dim, deterministic, cfg.box)


def _trunk(a, c):
    h1 = T.relu(T.matmul(c, a["W1"]) + a["b1"])
    return h1 + T.relu(T.matmul(h1, a["W2"]) + a["b2"])


def _bound(t, box):
    return t if box is None else T.tanh(t * (1.0 / box)) * box


def _trace_gmm(a, c, K, d, box):
    """Returns (means (n,K,d), log-weights (n,K), log-sigma (d,)) as tensors."""
    h = _trunk(a, c)
    means = T.reshape(_bound(T.matmul(h, a["Wm"]) + a["bm"], box), (-1, K, d))
    log_w = T.log_softmax(T.matmul(h, a["Ww"]) + a["bw"], axis=-1)
    log_sigma = T.log(T.exp(a["nu"]) + SIGMA_FLOOR)
    return means, log_w, log_sigma


def _trace_regression(a, c, box):
    return _bound(T.matmul(_trunk(a, c), a["Wr"]) + a["br"], box)


@dataclass(frozen=True, eq=False)
class GmmParams:
    """Mixture with shared diagonal scale.  Batched when ``means`` is (n, K, d)."""

    means: np.ndarray
    weights: np.ndarray
    sigma: np.ndarray
    logits: np.ndarray | None = None

    def __post_init__(self):
        if self.means.shape[:-1] != self.weights.shape or self.sigma.shape != self.means.shape[-1:]:
            raise ShapeError(f"means {self.means.shape}, weights {self.weights.shape}, sigma {self.sigma.shape}")

    @property
    def batched(self) -> bool:
        return self.means.ndim == 3

    def row(self, i: int) -> "GmmParams":
        lg = None if self.logits is None else self.logits[i]
        return GmmParams(self.means[i], self.weights[i], self.sigma, lg)


def _as_cond_batch(params: TranslatorParams, c):
    c = np.asarray(c, dtype=np.float64)
    if c.shape[-1] != params.cond_dim:
        raise ShapeError(f"condition has {c.shape[-1]} entries, translator expects {params.cond_dim}")
    return (c[None], True) if c.ndim == 1 else (c, False)


def translator_forward(params: TranslatorParams, c) -> GmmParams:
    if params.deterministic:
        raise ValueError("deterministic translator has no mixture head; use translator_predict")
    cb, single = _as_cond_batch(params, c)
    a = params.arrays
    h = _trunk(a, cb)
    means = _bound(T.matmul(h, a["Wm"]) + a["bm"], params.box).data.reshape(-1, params.n_components, params.latent_dim)
    logits = (T.matmul(h, a["Ww"]) + a["bw"]).data
    weights = T.softmax(logits).data
    g = GmmParams(means, weights, params.sigma, logits)
    return g.row(0) if single else g


def translator_predict(params: TranslatorParams, c) -> np.ndarray:
    """Regression-head output S(c) of a deterministic translator."""
    if not params.deterministic:
        raise ValueError("translator has no regression head")
    cb, single = _as_cond_batch(params, c)
    out = _trace_regression(params.arrays, cb, params.box).data
    return out[0] if single else out


def gmm_log_density(g: GmmParams, z) -> float | np.ndarray:
    """log sum_k w_k N(z; mu_k, diag(sigma^2)), via log-sum-exp."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != g.means.shape[-1]:
        raise ShapeError(f"latent {z.shape} vs means {g.means.shape}")
    diff = (z[..., None, :] - g.means) / g.sigma
    comp = -0.5 * (diff**2).sum(-1) - np.log(g.sigma).sum() - 0.5 * g.sigma.size * LOG_2PI
    with np.errstate(divide="ignore"):
        terms = np.log(g.weights) + comp
    m = terms.max(axis=-1, keepdims=True)
    out = (m + np.log(np.exp(terms - m).sum(axis=-1, keepdims=True)))[..., 0]
    return float(out) if out.ndim == 0 else out


def gmm_sample(g: GmmParams, rng, n: int | None = None) -> np.ndarray:
    """Component k ~ weights, then mu_k + sigma * eps.

    Unbatched ``g``: returns one latent, or ``n`` latents (n, d).  Batched ``g``
    with ``n``: returns (rows, n, d).
    """
    w = g.weights if g.batched else g.weights[None]
    means = g.means if g.batched else g.means[None]
    m = 1 if n is None else n
    cum = np.cumsum(w, axis=-1)
    cum[:, -1] = 1.0
    u = rng.uniform(size=(w.shape[0], m))
    k = np.minimum((u[:, :, None] > cum[:, None, :]).sum(-1), w.shape[1] - 1)
    eps = rng.normal(size=(w.shape[0], m, g.sigma.size))
    z = np.take_along_axis(means, k[:, :, None], axis=1) + g.sigma * eps
    if g.batched:
        return z if n is not None else z[:, 0]
    return z[0] if n is not None else z[0, 0]


def gmm_mean(g: GmmParams) -> np.ndarray:
    return (g.weights[..., None] * g.means).sum(axis=-2)


def _nll_trace(a, c, z, K, d, box, scale):
    means, log_w, log_sigma = _trace_gmm(a, c, K, d, box)
    zt = np.asarray(z)[:, None, :]
    diff = (T.as_tensor(zt) - means) / T.exp(log_sigma)
    comp = (diff * diff).sum(axis=-1) * -0.5 - log_sigma.sum() - 0.5 * d * LOG_2PI
    logq = T.logsumexp(log_w + comp, axis=-1)
    return logq.mean() * -scale


def translator_nll(params: TranslatorParams, z, c, loss_scale: float = 1.0) -> float:
    """Scaled mean of -log q(z_i | c_i) over a batch."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    if len(z) == 0:
        raise ValueError("empty batch")
    if len(z) != len(c):
        raise ShapeError(f"{len(z)} latents vs {len(c)} conditions")
    return float(
        _nll_trace(params.arrays, c, z, params.n_components, params.latent_dim, params.box, loss_scale).data
    )


def nll_loss_fn(params: TranslatorParams, loss_scale: float):
    names, K, d, box = params.names, params.n_components, params.latent_dim, params.box

    def loss(ps, zb, cb):
        return _nll_trace(dict(zip(names, ps)), cb, zb, K, d, box, loss_scale)

    return loss


def _check_pairs(pairs: PairDataset):
    if len(pairs) == 0:
        raise ValueError("cannot train on an empty pair dataset")


def train_translator(cfg: TranslatorTrainConfig, pairs: PairDataset, rng, init: TranslatorParams | None = None):
    """Maximum likelihood with ADAM and a cosine learning rate decaying to 0."""
    _check_pairs(pairs)
    init_rng, order_rng = rng.split(2)
    params = init or init_translator(pairs.c.shape[1], pairs.z.shape[1], cfg, init_rng)
    arrays, history = adam_fit(
        nll_loss_fn(params, cfg.loss_scale), params.ordered(), (pairs.z, pairs.c),
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, rng=order_rng, cosine=True,
    )
    return params.with_ordered(arrays, history)


def train_deterministic_translator(cfg: TranslatorTrainConfig, pairs: PairDataset, rng):
    """Regressor S(c) fit with squared error ||S(c) - z||^2 (same schedule as above)."""
    _check_pairs(pairs)
    init_rng, order_rng = rng.split(2)
    params = init_translator(pairs.c.shape[1], pairs.z.shape[1], cfg, init_rng, deterministic=True)
    names, box, scale = params.names, params.box, cfg.loss_scale

    def loss(ps, zb, cb):
        pred = _trace_regression(dict(zip(names, ps)), cb, box)
        return ((pred - zb) ** 2).sum(axis=-1).mean() * scale

    arrays, history = adam_fit(
        loss, params.ordered(), (pairs.z, pairs.c),
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, rng=order_rng, cosine=True,
    )
    return params.with_ordered(arrays, history)


def slerp(c1, c2, t: float) -> np.ndarray:
    """Spherical interpolation between the directions of ``c1`` and ``c2``."""
    a = np.asarray(c1, dtype=np.float64)
    b = np.asarray(c2, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("slerp endpoints must be nonzero")
    a, b = a / na, b / nb
    omega = math.acos(float(np.clip(a @ b, -1.0, 1.0)))
    if omega >= math.pi - 1e-6:
        raise DegenerateInputError("slerp endpoints are antipodal; the arc is not unique")
    if omega == 0.0:
        return a.copy()
    s = math.sin(omega)
    out = (math.sin((1 - t) * omega) * a + math.sin(t * omega) * b) / s
    return out / np.linalg.norm(out)
