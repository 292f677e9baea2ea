"""Compare long Langevin runs with grid-normalized densities.

Runs the 1-D double well and the 1-D Bayesian posterior over several seeds
and prints the histogram total-variation distance for each.

    python3 scripts/stationarity.py --seeds 20
"""
import argparse

import numpy as np

from latentcond.diffcore import Mlp, RngStream
from latentcond.energy import BayesEnergy, energy_callable
from latentcond.models import AuxModel, Generator, Prior
from latentcond.oracle import Grid1D, empirical_tv, grid_ebm_density
from latentcond.sampler import SamplerConfig, langevin_latent


class DoubleWell:
    needs_rng = False

    def draw(self, rng, n):
        return None

    def trace(self, zt, c, draws=None):
        return ((zt * zt - 1.0) ** 2).sum(axis=-1)


def tv(energy, grid, c, seed, chains=64, kept=3000):
    cfg = SamplerConfig(steps=kept * 3 // 2, step_size=1e-3, beta=1.0, momentum=0.0)
    cdf = np.cumsum(grid.mass)
    z0 = grid.centers[np.searchsorted(cdf, (np.arange(chains) + 0.5) / chains)][:, None]
    traj = langevin_latent(energy, c, z0, cfg, RngStream(seed))
    return empirical_tv(traj.latents[cfg.steps // 3 + 1:, :, 0].ravel(), grid.coarsen(64))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    dw_grid = grid_ebm_density(lambda p: (p[:, 0] ** 2 - 1) ** 2, 1.0, Grid1D(-3, 3))
    G = Generator(Mlp((np.eye(1),), (np.zeros(1),), ("identity",)))
    f = AuxModel("classifier", Mlp((np.array([[1.5, -1.5]]),), (np.array([0.5, -0.5]),), ("identity",)))
    bayes, c = BayesEnergy(G, f, Prior(1)), np.array([1.0, 0.0])
    post_grid = grid_ebm_density(energy_callable(bayes, np.tile(c, (4096, 1))), 1.0, Grid1D(-8, 8))
    for name, E, grid, cond in (("double well", DoubleWell(), dw_grid, np.zeros(1)),
                                ("posterior", bayes, post_grid, c)):
        vals = np.array([tv(E, grid, cond, s) for s in range(args.seeds)])
        print(f"{name:<12} TV median {np.median(vals):.4f}, max {vals.max():.4f} over {len(vals)} seeds")


if __name__ == "__main__":
    main()
