"""Command-line entry point: ``python -m latentcond.harness <subcommand>``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from latentcond.errors import ConfigError
from latentcond.harness.config import ExperimentConfig, load_config
from latentcond.harness.experiment import (
    STAGES,
    RunDir,
    error_kind,
    gradient_fidelity,
    run_stages,
    write_error,
    write_text,
)
from latentcond.harness.metrics import fmt

EXIT = {"config": 2, "numeric": 3, "io": 4, "internal": 1}
GRAD_TOL = 1e-4


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed (overrides the config)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="run directory (overrides the config)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="latentcond", parents=[common], description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen-data": "sample the toy task's training data",
        "train-models": "fit generator and classifier fixtures",
        "gen-pairs": "build the synthetic (latent, condition) training set",
        "train-translator": "train the stochastic (and deterministic) translator",
        "sample": "run every configured method over conditions and seeds",
        "report": "write metrics.csv, curves.csv and plots from saved samples",
    }
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=helps[name])
    ab = sub.add_parser("ablate", parents=[common], help="all stages end to end")
    ab.add_argument("--methods", help="comma-separated subset of methods")
    gc = sub.add_parser("gradcheck", parents=[common], help="tape gradients versus finite differences")
    gc.add_argument("--cases", type=int, default=100)
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    over = {}
    if hasattr(args, "seed"):
        if args.seed < 0:
            raise ConfigError("--seed must be a non-negative integer")
        over["seed"] = args.seed
    if hasattr(args, "out"):
        over["out_dir"] = args.out
    if getattr(args, "methods", None):
        over["methods"] = tuple(m.strip() for m in args.methods.split(","))
    try:
        return replace(cfg, **over)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def gradcheck(cfg: ExperimentConfig, cases: int) -> int:
    rd = RunDir(Path(cfg.out_dir)).prepare()
    errs = gradient_fidelity(cases, cfg.seed)
    lines = ["case,rel_error"] + [f"{i},{fmt(e)}" for i, e in enumerate(errs)]
    write_text(rd.root / "gradcheck.csv", "\n".join(lines) + "\n")
    worst = float(np.max(errs))
    print(f"gradcheck: {cases} cases, max relative error {worst:.3g} (tolerance {GRAD_TOL:g})")
    return 0 if worst < GRAD_TOL else EXIT["numeric"]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.command
    cfg = None
    try:
        cfg = config_from_args(args)
        if stage == "gradcheck":
            return gradcheck(cfg, args.cases)
        stages = STAGES if stage == "ablate" else (stage,)
        out = run_stages(cfg, stages)
        print(f"{stage}: wrote {out}")
        return 0
    except Exception as exc:
        kind = error_kind(exc)
        if cfg is not None and kind != "config":
            root = Path(cfg.out_dir)
            if root.is_dir() and not (root / "error.json").exists():
                write_error(RunDir(root), stage, exc)
        print(f"error ({kind}) in {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT[kind]


if __name__ == "__main__":
    sys.exit(main())
