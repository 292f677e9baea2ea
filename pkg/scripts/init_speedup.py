"""Steps to the energy threshold from translator versus prior starts.

Trains (or reuses) the desk fixtures in --out, then runs 100 conditions for
each candidate count and prints median steps for both starts.

    python3 scripts/init_speedup.py --out runs/speedup --candidates 1 5 10
"""
import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from latentcond.harness import ExperimentConfig, init_speedup, resolve, run_stages
from latentcond.harness.experiment import STAGES, RunDir, load_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/speedup")
    ap.add_argument("--candidates", type=int, nargs="+", default=[1, 5])
    ap.add_argument("--conditions", type=int, default=100)
    ap.add_argument("--steps", type=int, default=100)
    args = ap.parse_args()
    cfg = resolve(replace(ExperimentConfig(), out_dir=args.out, methods=("full",)))
    rd = RunDir(Path(args.out))
    if not rd.model("translator").exists():
        run_stages(cfg, STAGES[:4])
    fx, tr = load_fixture(cfg, rd), rd.load(rd.model("translator"))
    for m in args.candidates:
        res = init_speedup(cfg, fx, tr, args.conditions, args.steps, n_candidates=m)
        t, n = (np.median(res[k]) for k in ("translator", "naive"))
        never = float(np.mean(np.isinf(res["naive"])))
        print(f"M={m:<3d} translator {t:g} steps, prior {n:g} steps ({never:.0%} of prior starts never reach tau)")


if __name__ == "__main__":
    main()
