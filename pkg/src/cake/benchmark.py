"""Shipped seeded benchmark: a 3-domain, 7-class synthetic corpus whose
latent geometry needs all three dimensions.

Class prototypes sit on a pentagonal bipyramid of radius R in the 3-d latent
space: two poles on the z axis plus five equatorial pentagon vertices. Every
2-d linear view of that layout must squeeze some pair of classes together
(the poles, or a pentagon chord), while in 3-d all pairwise distances stay
large against the noise, so a 3-d embedding beats any 2-d one by a stable
margin and dimensions past 3 add nothing.

The arousal-valence channel is tanh of the first two latent coordinates, so
the two poles share av = (0, 0): the AV-only model cannot tell them apart,
by construction.
"""

from __future__ import annotations

import numpy as np

from .data import SynthConfig
from .model import ModelConfig
from .trainer import TrainConfig

BENCHMARK_SEED = 2030
BENCHMARK_DIM = 64
BENCHMARK_DOMAINS = 3
BENCHMARK_KS = [2, 3, 4, 6]

_RADIUS = 2.0
_NOISE_SIGMA = 0.55
_SHIFT_SIGMA = 0.25


def benchmark_prototypes(radius: float = _RADIUS) -> np.ndarray:
    """Pentagonal bipyramid: poles at ±radius·z, pentagon in the xy plane."""
    protos = np.zeros((7, 3))
    protos[0] = (0.0, 0.0, radius)
    protos[1] = (0.0, 0.0, -radius)
    ang = 2.0 * np.pi * np.arange(5) / 5.0
    protos[2:, 0] = radius * np.cos(ang)
    protos[2:, 1] = radius * np.sin(ang)
    return protos


def benchmark_synth_config(seed: int = BENCHMARK_SEED) -> SynthConfig:
    # mild class imbalance, different per domain, so the loss weights matter
    imbalance = np.array(
        [
            [3.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0],
            [1.0, 3.0, 1.0, 2.0, 1.0, 2.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 2.0],
        ]
    )
    return SynthConfig(
        n_domains=BENCHMARK_DOMAINS,
        seed=seed,
        n_classes=7,
        dim=BENCHMARK_DIM,
        latent_dim=3,
        prototypes=benchmark_prototypes(),
        noise_sigma=_NOISE_SIGMA,
        domain_shift_sigma=_SHIFT_SIGMA,
        imbalance=imbalance,
        train_counts=[1000, 600, 400],
        test_counts=[300, 250, 150],
        domain_names=["synthA", "synthB", "synthC"],
        with_av=True,
    )


def benchmark_model_config(variant: str = "cake", k: int = 3, seed: int = BENCHMARK_SEED) -> ModelConfig:
    return ModelConfig(
        variant=variant,
        k=k,
        dim=BENCHMARK_DIM,
        n_domains=BENCHMARK_DOMAINS,
        n_classes=7,
        dropout_rate=0.1,
        seed=seed,
    )


def benchmark_train_config(
    variant: str = "cake", k: int = 3, seed: int = BENCHMARK_SEED
) -> TrainConfig:
    return TrainConfig(
        model=benchmark_model_config(variant, k, seed),
        seed=seed,
        batch_size=32,
        max_epochs=40,
        patience=0,
        eval_every=2,
        lr=5e-3,
    )
