"""Run the five-method ablation end to end and print the aggregate table.

    python3 scripts/run_ablation.py --out runs/ablation [--config cfg.json] [--seed 0]
"""
import argparse

from latentcond.harness import ExperimentConfig, load_config, read_metrics, run_experiment
from dataclasses import replace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    root = run_experiment(replace(cfg, seed=args.seed, out_dir=args.out))
    rows = [r for r in read_metrics((root / "metrics.csv").read_text()) if r["condition"] == "ALL"]
    print(f"{'method':<8}{'avg_prob':>10}{'final_E':>12}{'steps':>8}{'diversity':>11}")
    for r in rows:
        print(f"{r['method']:<8}{r['avg_prob']:>10.4f}{r['final_energy']:>12.4g}"
              f"{r['steps_to_threshold']:>8g}{r['diversity']:>11.3f}")
    print(f"artifacts in {root}")


if __name__ == "__main__":
    main()
