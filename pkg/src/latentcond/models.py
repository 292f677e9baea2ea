"""Pushforward models (prior + generator), auxiliary models, synthetic
(latent, condition) pairs and the built-in ``rings8`` toy task."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from latentcond._fnv import fnv1a64
from latentcond.diffcore import Mlp, init_mlp, mlp_apply
from latentcond.diffcore import tensor as T
from latentcond.diffcore.train import adam_fit
from latentcond.errors import ShapeError, TrainingError


@dataclass(frozen=True)
class Prior:
    """Diagonal Gaussian N(0, diag(scale**2)); scale 1 is the standard normal."""

    latent_dim: int
    scale: float | tuple = 1.0

    @property
    def scales(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.scale, dtype=np.float64), (self.latent_dim,)).copy()

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.normal(size=(n, self.latent_dim)) * self.scales

    def neg_log_density(self, z) -> np.ndarray:
        """-log p(z) without the z-independent constant: 0.5 * ||z / scale||^2."""
        z = np.asarray(z, dtype=np.float64)
        return 0.5 * ((z / self.scales) ** 2).sum(axis=-1)

    def log_density(self, z) -> np.ndarray:
        s = self.scales
        const = -0.5 * self.latent_dim * np.log(2 * np.pi) - np.log(s).sum()
        return const - self.neg_log_density(z)

    def trace_neg_log_density(self, zt: T.Tensor) -> T.Tensor:
        return (0.5 * (zt / self.scales) ** 2).sum(axis=-1)


def prior_sample(prior: Prior, rng, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    return prior.sample(rng, n)


@dataclass(frozen=True, eq=False)
class Generator:
    """Deterministic map G: latent -> data.  With ``box=a`` the body sees a*tanh(z/a)."""

    body: Mlp
    box: float | None = None

    @property
    def latent_dim(self) -> int:
        return self.body.in_dim

    @property
    def data_dim(self) -> int:
        return self.body.out_dim

    def trace(self, zt) -> T.Tensor:
        zt = T.as_tensor(zt)
        if zt.shape[-1] != self.latent_dim:
            raise ShapeError(f"latent has {zt.shape[-1]} dims, generator expects {self.latent_dim}")
        if self.box is not None:
            zt = T.tanh(zt * (1.0 / self.box)) * self.box
        return mlp_apply(self.body, zt)

    def __call__(self, z) -> np.ndarray:
        return self.trace(np.asarray(z, dtype=np.float64)).data


def generator_apply(G: Generator, z) -> np.ndarray:
    return G(z)


@dataclass(frozen=True, eq=False)
class AuxModel:
    """Classifier (softmax over the body's logits) or embedder (L2-normalized body output)."""

    kind: str
    body: Mlp

    def __post_init__(self):
        if self.kind not in ("classifier", "embedder"):
            raise ValueError(f"unknown auxiliary model kind {self.kind!r}")

    @property
    def in_dim(self) -> int:
        return self.body.in_dim

    @property
    def out_dim(self) -> int:
        return self.body.out_dim

    def trace(self, xt) -> T.Tensor:
        h = mlp_apply(self.body, xt)
        return T.softmax(h) if self.kind == "classifier" else T.l2_normalize(h)

    def __call__(self, x) -> np.ndarray:
        return self.trace(np.asarray(x, dtype=np.float64)).data


def aux_apply(f: AuxModel, x) -> np.ndarray:
    return f(x)


def embedder_from_classifier(clf: AuxModel) -> AuxModel:
    """Penultimate classifier features (post-ReLU), L2-normalized."""
    b = clf.body
    trunk = Mlp(b.weights[:-1], b.biases[:-1], b.activations[:-1])
    return AuxModel("embedder", trunk)


def model_checksum(*mlps: Mlp) -> str:
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for m in mlps for a in m.arrays())
    return fnv1a64(payload)


@dataclass(frozen=True, eq=False)
class PairDataset:
    z: np.ndarray
    c: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.z)


def make_pairs(prior: Prior, G: Generator, f: AuxModel, n: int, gamma: float, rng, chunk: int = 8192):
    """Synthetic training set of (z, f(G(z)) + gamma * eps) with z ~ prior."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if G.latent_dim != prior.latent_dim or f.in_dim != G.data_dim:
        raise ShapeError("prior, generator and auxiliary model shapes do not compose")
    meta = {
        "generator_checksum": model_checksum(G.body),
        "aux_checksum": model_checksum(f.body),
        "gamma": float(gamma),
        "seed_entropy": str(rng.seed_seq.entropy),
        "spawn_key": list(rng.seed_seq.spawn_key),
    }
    if n == 0:
        return PairDataset(np.zeros((0, prior.latent_dim)), np.zeros((0, f.out_dim)), meta)
    z = prior.sample(rng, n)
    c = np.concatenate([f(G(z[i:i + chunk])) for i in range(0, n, chunk)])
    if gamma > 0:
        c = c + gamma * rng.normal(size=c.shape)
    return PairDataset(z, c, meta)


# ---------------------------------------------------------------- rings8 task


@dataclass(frozen=True)
class TaskSpec:
    """Toy task definition.  ``generator`` is "decoder" (trained VAE) or "frozen" (random MLP)."""

    name: str = "rings8"
    n_modes: int = 8
    radius: float = 4.0
    mode_std: float = 0.3
    n_train: int = 8000
    latent_dim: int = 2
    generator: str = "decoder"
    prior_scale: float = 1.0
    hidden: int = 64
    classifier_epochs: int = 30
    vae_max_epochs: int = 150
    vae_obs_std: float = 0.1
    box: float | None = None
    generator_gain: float = 5.0     # init scale of the frozen generator; larger is more nonlinear

    def prior(self) -> Prior:
        return Prior(self.latent_dim, self.prior_scale)

    def centers(self) -> np.ndarray:
        ang = 2 * np.pi * np.arange(self.n_modes) / self.n_modes
        return self.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def sample(self, rng, n: int) -> tuple[np.ndarray, np.ndarray]:
        labels = rng.integers(0, self.n_modes, size=n)
        x = self.centers()[labels] + self.mode_std * rng.normal(size=(n, 2))
        return x, labels


def train_classifier(task: TaskSpec, x, labels, rng) -> AuxModel:
    body = init_mlp([2, task.hidden, task.hidden, task.n_modes], ["relu", "relu", "identity"], rng)
    onehot = np.eye(task.n_modes)[labels]

    def loss(ps, xb, yb):
        logp = T.log_softmax(mlp_apply(body, xb, ps))
        return -(logp * yb).sum() * (1.0 / len(xb))

    arrays, _ = adam_fit(
        loss, body.arrays(), (x, onehot),
        epochs=task.classifier_epochs, batch_size=128, lr=3e-3, rng=rng, cosine=True,
    )
    return AuxModel("classifier", body.with_arrays(arrays))


def classifier_accuracy(clf: AuxModel, x, labels) -> float:
    return float((clf(x).argmax(axis=1) == labels).mean())


def train_decoder(task: TaskSpec, x, x_val, rng, patience: int = 10) -> Generator:
    """Gaussian VAE; stops when validation reconstruction error stops improving."""
    d = task.latent_dim
    h = task.hidden
    enc = init_mlp([2, h, h, 2 * d], ["relu", "relu", "identity"], rng)
    dec = init_mlp([d, h, h, 2], ["relu", "relu", "identity"], rng)
    n_enc = len(enc.arrays())
    inv_var = 1.0 / task.vae_obs_std**2
    noise_rng = rng.split(1)[0]

    def loss(ps, xb):
        stats = mlp_apply(enc, xb, ps[:n_enc])
        mu_z, logvar = T.columns(stats, 0, d), T.columns(stats, d, 2 * d)
        eps = noise_rng.normal(size=mu_z.shape)
        z = mu_z + T.exp(logvar * 0.5) * eps
        xr = mlp_apply(dec, z, ps[n_enc:])
        recon = ((xr - xb) ** 2).sum(axis=1) * (0.5 * inv_var)
        kl = (T.exp(logvar) + mu_z**2 - 1.0 - logvar).sum(axis=1) * 0.5
        return (recon + kl).mean()

    best = {"err": np.inf, "epoch": 0, "arrays": None}

    def on_epoch(epoch, arrays, _):
        dec_now = dec.with_arrays(arrays[n_enc:])
        mu_val = mlp_apply(enc.with_arrays(arrays[:n_enc]), x_val).data[:, :d]
        err = float(((mlp_apply(dec_now, mu_val).data - x_val) ** 2).sum(axis=1).mean())
        if err < best["err"] * 0.99:
            best.update(err=err, epoch=epoch, arrays=[a.copy() for a in arrays])
        return epoch - best["epoch"] >= patience

    arrays, _ = adam_fit(
        loss, enc.arrays() + dec.arrays(), (x,),
        epochs=task.vae_max_epochs, batch_size=128, lr=2e-3, rng=rng, on_epoch=on_epoch,
    )
    final = best["arrays"] if best["arrays"] is not None else arrays
    return Generator(dec.with_arrays(final[n_enc:]), box=task.box)


def frozen_generator(task: TaskSpec, rng, n_ref: int = 4096) -> Generator:
    """Seeded random tanh MLP whose output is affinely rescaled (folded into the
    last layer) to zero mean and per-axis std equal to the task radius."""
    h = task.hidden
    body = init_mlp([task.latent_dim, h, h, 2], ["tanh", "tanh", "identity"], rng, gain=task.generator_gain)
    ref = mlp_apply(body, rng.normal(size=(n_ref, task.latent_dim)) * task.prior_scale).data
    mu, sd = ref.mean(axis=0), ref.std(axis=0)
    s = task.radius / sd
    w_last = body.weights[-1] * s
    b_last = (body.biases[-1] - mu) * s
    body = Mlp(body.weights[:-1] + (w_last,), body.biases[:-1] + (b_last,), body.activations)
    return Generator(body, box=task.box)


@dataclass(frozen=True, eq=False)
class TaskData:
    """Labelled training and validation draws from a task."""

    x: np.ndarray
    labels: np.ndarray
    x_val: np.ndarray
    labels_val: np.ndarray


def task_data(task: TaskSpec, rng) -> TaskData:
    x, labels = task.sample(rng, task.n_train)
    x_val, labels_val = task.sample(rng, task.n_train // 4)
    return TaskData(x, labels, x_val, labels_val)


def fit_toy_models(task: TaskSpec, rng, min_accuracy: float = 0.95, data: TaskData | None = None):
    """Returns (generator, classifier, embedder) for a built-in task.

    ``data`` defaults to a fresh :func:`task_data` draw from the first substream.
    """
    if task.name != "rings8":
        raise ValueError(f"unknown task {task.name!r}")
    data_rng, clf_rng, gen_rng = rng.split(3)
    if data is None:
        data = task_data(task, data_rng)
    clf = train_classifier(task, data.x, data.labels, clf_rng)
    acc = classifier_accuracy(clf, data.x, data.labels)
    if acc < min_accuracy:
        raise TrainingError(f"classifier reached only {acc:.3f} training accuracy")
    if task.generator == "frozen":
        G = frozen_generator(task, gen_rng)
    elif task.generator == "decoder":
        G = train_decoder(task, data.x, data.x_val, gen_rng)
    else:
        raise ValueError(f"unknown generator fixture {task.generator!r}")
    return G, clf, embedder_from_classifier(clf)
