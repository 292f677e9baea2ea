"""Experiment configuration: nested dataclasses with a strict JSON round trip."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from latentcond.errors import ConfigError
from latentcond.models import TaskSpec
from latentcond.sampler import SamplerConfig
from latentcond.translator import TranslatorTrainConfig

METHODS = ("full", "no-EC", "no-T", "DT", "ADAM")
ENERGIES = ("composed", "augmented", "bayes")


def desk_task() -> TaskSpec:
    return TaskSpec(generator="frozen", latent_dim=16)


def desk_sampler() -> SamplerConfig:
    # class-label setting: beta 20, 25 steps, best of 5 translator draws
    return SamplerConfig(steps=25, beta=20.0, n_candidates=5)


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskSpec = field(default_factory=desk_task)
    aux: str = "classifier"
    energy: str = "composed"
    n_phi: int = 50
    s_add: float = 0.1
    s_mul: float = 0.1
    beta1: float = 1.0
    beta2: float = 1.0
    n_pairs: int = 50_000
    translator: TranslatorTrainConfig = field(default_factory=TranslatorTrainConfig)
    sampler: SamplerConfig = field(default_factory=desk_sampler)
    methods: tuple = METHODS
    seeds: tuple = (0, 1, 2, 3, 4)
    conditions: tuple = tuple(range(8))
    n_samples: int = 64
    tau: float = 0.35
    seed: int = 0
    out_dir: str = "runs/default"
    record_wall_time: bool = False
    method_samplers: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.aux not in ("classifier", "embedder"):
            raise ConfigError(f"aux must be classifier or embedder, got {self.aux!r}")
        if self.energy not in ENERGIES:
            raise ConfigError(f"energy must be one of {ENERGIES}, got {self.energy!r}")
        if self.energy == "bayes" and self.aux != "classifier":
            raise ConfigError("the Bayesian energy needs the classifier auxiliary model")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown or empty methods {bad or list(self.methods)}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.n_samples < 1 or self.n_pairs < 1:
            raise ConfigError("n_samples and n_pairs must be positive")
        if any(not 0 <= c < self.task.n_modes for c in self.conditions):
            raise ConfigError("condition indices must name task classes")

    @property
    def resolved_gamma(self) -> float:
        if self.translator.gamma is not None:
            return self.translator.gamma
        return 0.0 if self.aux == "classifier" else 0.2


def method_sampler(base: SamplerConfig, method: str) -> SamplerConfig:
    """Sampler settings for one ablation row."""
    if method == "full":
        return base
    if method == "no-EC":
        return replace(base, steps=0, n_candidates=1)
    if method == "no-T":
        if base.mode == "params":
            return replace(base, init="naive_k_best")
        return replace(base, init="naive_best_of_m", n_candidates=1)
    if method == "DT":
        return replace(base, mode="latent")
    if method == "ADAM":
        return replace(base, optimizer="adam")
    raise ConfigError(f"unknown method {method!r}")


def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    samplers = {m: method_sampler(cfg.sampler, m) for m in cfg.methods}
    sampler = samplers[cfg.methods[0]] if len(cfg.methods) == 1 else cfg.sampler
    hidden = cfg.translator.hidden or (100 if cfg.aux == "classifier" else 2048)
    translator = replace(cfg.translator, gamma=cfg.resolved_gamma, hidden=hidden)
    return replace(cfg, sampler=sampler, method_samplers=samplers, translator=translator)


# ---------------------------------------------------------------- (de)serialization

_NESTED = {"task": TaskSpec, "translator": TranslatorTrainConfig, "sampler": SamplerConfig}


def to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _NESTED:
            v = dataclasses.asdict(v)
        elif f.name == "method_samplers":
            v = {m: dataclasses.asdict(s) for m, s in v.items()}
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    for key, cls in _NESTED.items():
        if key in data:
            data[key] = _build(cls, data[key], key)
    if "method_samplers" in data:
        data["method_samplers"] = {
            m: _build(SamplerConfig, s, f"method_samplers.{m}") for m, s in data["method_samplers"].items()
        }
    for key in ("methods", "seeds", "conditions"):
        if key in data:
            data[key] = tuple(data[key])
    return _build(ExperimentConfig, data, "config")


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True, indent=2) + "\n"
