"""Conditional sampling from unconditional latent-variable generators.

A translator network proposes latents for a condition; Langevin dynamics on
an energy over the latent space then corrects the proposals.
"""
from latentcond.energy import AugmentedEnergy, BayesEnergy, ComposedEnergy, PerturbationFamily
from latentcond.models import AuxModel, Generator, PairDataset, Prior, make_pairs
from latentcond.sampler import SamplerConfig, Trajectory, tr0n_sample
from latentcond.translator import TranslatorParams, TranslatorTrainConfig, train_translator

__all__ = [
    "AugmentedEnergy", "AuxModel", "BayesEnergy", "ComposedEnergy", "Generator", "PairDataset",
    "PerturbationFamily", "Prior", "SamplerConfig", "TranslatorParams", "TranslatorTrainConfig",
    "Trajectory", "make_pairs", "tr0n_sample", "train_translator",
]
