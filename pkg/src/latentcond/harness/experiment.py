"""Experiment stages and the end-to-end driver.

Every stage reads its inputs from and writes its outputs to the run
directory, so the CLI can run stages one at a time or all at once:

    gen-data -> train-models -> gen-pairs -> train-translator -> sample -> report

Randomness: the root stream ``RngStream(cfg.seed)`` is split into one child per
training stage; each sampling run (method, condition, seed) draws from its own
``RngStream([cfg.seed, seed, condition])``, shared across methods.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
import traceback
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from latentcond import checkpoint
from latentcond.diffcore import RngStream, init_mlp
from latentcond.diffcore import tensor as T
from latentcond.energy import AugmentedEnergy, BayesEnergy, ComposedEnergy, PerturbationFamily, energy_eval
from latentcond.errors import (
    CheckpointError,
    ConfigError,
    DegenerateInputError,
    GridTooSmallError,
    NonFiniteError,
    TrainingError,
)
from latentcond.harness.config import ExperimentConfig, dump_config, resolve
from latentcond.harness.metrics import RunRecord, compute_metrics, fmt
from latentcond.harness.plots import curve_values, emit_plots
from latentcond.models import AuxModel, Generator, fit_toy_models, make_pairs, task_data
from latentcond.oracle import finite_diff_grad, relative_error
from latentcond.sampler import init_best_of_m, init_naive, langevin_latent, steps_to_threshold, tr0n_sample
from latentcond.translator import train_deterministic_translator, train_translator

STAGES = ("gen-data", "train-models", "gen-pairs", "train-translator", "sample", "report")
_STREAMS = ("data", "models", "pairs", "translator", "dt")


def stage_stream(cfg: ExperimentConfig, name: str) -> RngStream:
    return RngStream(cfg.seed).split(len(_STREAMS))[_STREAMS.index(name)]


def run_stream(cfg: ExperimentConfig, seed: int, condition: int) -> RngStream:
    return RngStream([cfg.seed, seed, condition])


# ---------------------------------------------------------------- run directory


@dataclass(frozen=True)
class RunDir:
    root: Path

    @property
    def ckpt(self) -> Path:
        return self.root / "checkpoints"

    def model(self, name: str) -> Path:
        return self.ckpt / f"{name}.json"

    @property
    def pairs(self) -> Path:
        return self.root / "pairs.json"

    def prepare(self) -> "RunDir":
        """Create the directory tree and prove it is writable before any compute."""
        for d in (self.root, self.ckpt, self.root / "plots"):
            d.mkdir(parents=True, exist_ok=True)
        fd, probe = tempfile.mkstemp(dir=self.root, prefix=".probe.")
        os.close(fd)
        os.unlink(probe)
        return self

    def load(self, path: Path):
        if not path.exists():
            raise FileNotFoundError(f"{path} is missing; run the earlier stages first")
        return checkpoint.load(path)


def write_text(path: Path, text: str) -> Path:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------- fixtures


@dataclass(frozen=True, eq=False)
class Fixture:
    prior: object
    generator: Generator
    classifier: AuxModel
    aux: AuxModel          # model the energy conditions on
    energy: object


def build_energy(cfg: ExperimentConfig, G, f, prior):
    if cfg.energy == "composed":
        disc = "cross_entropy" if f.kind == "classifier" else "neg_cosine"
        return ComposedEnergy(G, f, disc)
    if cfg.energy == "augmented":
        disc = "cross_entropy" if f.kind == "classifier" else "neg_cosine"
        return AugmentedEnergy(G, f, PerturbationFamily(cfg.s_add, cfg.s_mul), cfg.n_phi, disc)
    return BayesEnergy(G, f, prior, cfg.beta1, cfg.beta2)


def load_fixture(cfg: ExperimentConfig, rd: RunDir) -> Fixture:
    prior = rd.load(rd.model("prior"))
    G = rd.load(rd.model("generator"))
    clf = rd.load(rd.model("classifier"))
    f = clf if cfg.aux == "classifier" else rd.load(rd.model("embedder"))
    return Fixture(prior, G, clf, f, build_energy(cfg, G, f, prior))


def condition_vector(cfg: ExperimentConfig, fx: Fixture, k: int) -> np.ndarray:
    """One-hot class label, or the embedding of the class's ring center."""
    if cfg.aux == "classifier":
        return np.eye(cfg.task.n_modes)[k]
    return fx.aux(cfg.task.centers()[k:k + 1])[0]


# ---------------------------------------------------------------- stages


def stage_gen_data(cfg, rd: RunDir):
    checkpoint.save(rd.model("taskdata"), task_data(cfg.task, stage_stream(cfg, "data")))


def stage_train_models(cfg, rd: RunDir):
    data = rd.load(rd.model("taskdata"))
    G, clf, emb = fit_toy_models(cfg.task, stage_stream(cfg, "models"), data=data)
    checkpoint.save(rd.model("prior"), cfg.task.prior())
    checkpoint.save(rd.model("generator"), G)
    checkpoint.save(rd.model("classifier"), clf)
    checkpoint.save(rd.model("embedder"), emb)


def stage_gen_pairs(cfg, rd: RunDir):
    prior = rd.load(rd.model("prior"))
    G = rd.load(rd.model("generator"))
    f = rd.load(rd.model("classifier" if cfg.aux == "classifier" else "embedder"))
    pairs = make_pairs(prior, G, f, cfg.n_pairs, cfg.resolved_gamma, stage_stream(cfg, "pairs"))
    checkpoint.save(rd.pairs, pairs)


def stage_train_translator(cfg, rd: RunDir):
    pairs = rd.load(rd.pairs)
    checkpoint.save(rd.model("translator"), train_translator(cfg.translator, pairs, stage_stream(cfg, "translator")))
    if "DT" in cfg.methods:
        dt = train_deterministic_translator(cfg.translator, pairs, stage_stream(cfg, "dt"))
        checkpoint.save(rd.model("translator_dt"), dt)


def sample_runs(cfg: ExperimentConfig, fx: Fixture, translators: dict) -> list[RunRecord]:
    """All (method, condition, seed) runs in deterministic key order."""
    records = []
    for method in cfg.methods:
        scfg = cfg.method_samplers.get(method) or resolve(cfg).method_samplers[method]
        tr = translators["DT" if method == "DT" else "full"]
        for k in cfg.conditions:
            c = np.tile(condition_vector(cfg, fx, k), (cfg.n_samples, 1))
            for s in cfg.seeds:
                tic = time.perf_counter()
                x, traj = tr0n_sample(fx.generator, tr, fx.energy, c, scfg, run_stream(cfg, s, k), prior=fx.prior)
                wall = 1000 * (time.perf_counter() - tic) if cfg.record_wall_time else None
                if traj.truncated:
                    raise NonFiniteError("sample", f"{method} condition {k} seed {s}: {traj.diagnostic}")
                records.append(RunRecord(method, k, s, x, traj.energies, wall))
    return records


def records_to_csv(records) -> tuple[str, str]:
    """(samples.csv, energies.csv) text.  Energies hold one space-separated trajectory per chain."""
    sbuf, ebuf = io.StringIO(), io.StringIO()
    sw, ew = csv.writer(sbuf, lineterminator="\n"), csv.writer(ebuf, lineterminator="\n")
    d = records[0].samples.shape[1] if records else 0
    sw.writerow(["method", "condition", "seed", "chain"] + [f"x{i}" for i in range(d)])
    ew.writerow(["method", "condition", "seed", "chain", "wall_ms", "energies"])
    for r in records:
        wall = "" if r.wall_ms is None else fmt(r.wall_ms)
        for j, x in enumerate(r.samples):
            sw.writerow([r.method, r.condition, r.seed, j] + [fmt(v) for v in x])
            ew.writerow([r.method, r.condition, r.seed, j, wall, " ".join(fmt(v) for v in r.energies[:, j])])
    return sbuf.getvalue(), ebuf.getvalue()


def records_from_csv(samples_text: str, energies_text: str) -> list[RunRecord]:
    groups: dict = {}
    for row in csv.DictReader(io.StringIO(samples_text)):
        key = (row["method"], int(row["condition"]), int(row["seed"]))
        xs = [float(row[k]) for k in row if k.startswith("x")]
        groups.setdefault(key, {"x": [], "e": [], "wall": None})["x"].append(xs)
    for row in csv.DictReader(io.StringIO(energies_text)):
        key = (row["method"], int(row["condition"]), int(row["seed"]))
        g = groups[key]
        g["e"].append([float(v) for v in row["energies"].split()])
        g["wall"] = float(row["wall_ms"]) if row["wall_ms"] else None
    return [
        RunRecord(m, c, s, np.array(g["x"]), np.array(g["e"]).T, g["wall"])
        for (m, c, s), g in groups.items()
    ]


def stage_sample(cfg, rd: RunDir):
    translators = {"full": rd.load(rd.model("translator"))}
    if "DT" in cfg.methods:
        translators["DT"] = rd.load(rd.model("translator_dt"))
    records = sample_runs(cfg, load_fixture(cfg, rd), translators)
    samples, energies = records_to_csv(records)
    write_text(rd.root / "samples.csv", samples)
    write_text(rd.root / "energies.csv", energies)


def stage_report(cfg, rd: RunDir):
    records = records_from_csv((rd.root / "samples.csv").read_text(), (rd.root / "energies.csv").read_text())
    clf = rd.load(rd.model("classifier"))
    report = compute_metrics(records, clf, cfg.tau)
    write_text(rd.root / "metrics.csv", report.to_csv())
    curves = curve_values(records)
    lines = ["method,step,mean_energy"]
    for m, vals in curves.items():
        lines += [f"{m},{t},{fmt(v)}" for t, v in enumerate(vals)]
    write_text(rd.root / "curves.csv", "\n".join(lines) + "\n")
    emit_plots(records, rd.root / "plots", curves)
    return report


STAGE_FUNCS = {
    "gen-data": stage_gen_data,
    "train-models": stage_train_models,
    "gen-pairs": stage_gen_pairs,
    "train-translator": stage_train_translator,
    "sample": stage_sample,
    "report": stage_report,
}


# ---------------------------------------------------------------- driver


def error_kind(exc: BaseException) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, (CheckpointError, OSError)):
        return "io"
    if isinstance(exc, (FloatingPointError, TrainingError, DegenerateInputError, GridTooSmallError)):
        return "numeric"
    return "internal"


def write_error(rd: RunDir, stage: str, exc: BaseException):
    info = {
        "stage": stage,
        "kind": error_kind(exc),
        "type": type(exc).__name__,
        "message": str(exc),
        "traceback": traceback.format_exception_only(type(exc), exc),
    }
    try:
        write_text(rd.root / "error.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
    except OSError:
        pass


def run_stages(cfg: ExperimentConfig, stages=STAGES, out_dir=None) -> Path:
    """Run ``stages`` in order against ``out_dir`` (default ``cfg.out_dir``)."""
    cfg = resolve(cfg)
    rd = RunDir(Path(out_dir or cfg.out_dir)).prepare()
    write_text(rd.root / "resolved-config.json", dump_config(cfg))
    stale = rd.root / "error.json"
    if stale.exists():
        stale.unlink()
    for stage in stages:
        try:
            STAGE_FUNCS[stage](cfg, rd)
        except Exception as exc:
            write_error(rd, stage, exc)
            raise
    return rd.root


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Every stage end to end; returns the artifacts directory."""
    return run_stages(cfg, STAGES, out_dir)


# ---------------------------------------------------------------- standalone checks


def random_composed_energy(rng: RngStream, case: int):
    """A small random composed energy with smooth (tanh) networks, plus a latent and condition."""
    d_z, d_x, h, k = (int(rng.integers(2, 7)), int(rng.integers(2, 6)), int(rng.integers(4, 17)), int(rng.integers(2, 7)))
    G = Generator(init_mlp([d_z, h, d_x], ("tanh", "identity"), rng, gain=2.0))
    body = init_mlp([d_x, h, k], ("tanh", "identity"), rng, gain=2.0)
    if case % 2 == 0:
        f = AuxModel("classifier", body)
        logits = rng.normal(size=k)
        c = np.exp(logits) / np.exp(logits).sum()
        E = ComposedEnergy(G, f, "cross_entropy")
    else:
        f = AuxModel("embedder", body)
        c = rng.normal(size=k)
        E = ComposedEnergy(G, f, "neg_cosine")
    return E, rng.normal(size=d_z), c


def gradient_fidelity(n_cases: int = 100, seed: int = 0) -> np.ndarray:
    """Relative error between the tape gradient and central differences per random case."""
    errs = []
    for i in range(n_cases):
        E, z, c = random_composed_energy(RngStream([seed, i]), i)
        _, g = T.grad_scalar(lambda zt: E.trace(T.reshape(zt, (1, -1)), c).sum(), z)
        fd = finite_diff_grad(lambda zz: energy_eval(E, zz, c), z)
        errs.append(relative_error(g, fd))
    return np.array(errs)


def init_speedup(cfg: ExperimentConfig, fx: Fixture, tr, n_conditions: int = 100, steps: int = 100,
                 n_candidates: int | None = None, seed: int = 0) -> dict:
    """Steps to reach ``cfg.tau`` from translator best-of-M versus prior best-of-M starts.

    Condition j asks for class j mod n_modes; both arms use the same M and
    step settings and one chain per condition; chain noise is shared.
    """
    M = n_candidates or cfg.sampler.n_candidates
    scfg = replace(cfg.sampler, steps=steps, mode="latent")
    C = np.stack([condition_vector(cfg, fx, j % cfg.task.n_modes) for j in range(n_conditions)])
    out = {}
    for name, idx in (("translator", 0), ("naive", 1)):
        init_rng, chain_rng = RngStream([seed, idx]), RngStream([seed, 2])
        if name == "translator":
            z0 = init_best_of_m(tr, C, M, fx.energy, init_rng)
        else:
            z0 = init_naive(fx.prior, C, M, fx.energy, init_rng)
        traj = langevin_latent(fx.energy, C, z0, scfg, chain_rng)
        out[name] = steps_to_threshold(traj.energies, cfg.tau)
    return out
