"""Canonical synthetic benchmark with one dominant and one subordinate modality.

The dominant modality observes the full latent with light noise; the
subordinate one observes a rank-deficient projection (4 of 8 latent
dimensions) with unit noise, so part of its samples are irreducibly
ambiguous. Joint concatenation training leaves the subordinate encoder
underfit, which is the contrast the acceptance experiments measure.
"""

from __future__ import annotations

from .altopt import TrainConfig
from .data import ModalityGen, MultimodalDataset, SplitSpec, SyntheticSpec, generate_synthetic
from .evaluation import masked_splits

BENCHMARK_SEEDS = (0, 1, 2)

LAZINESS_SPEC = SyntheticSpec(
    latent_dim=8,
    class_count=4,
    samples=6000,
    modalities=(ModalityGen(16, 1.0, 0.1), ModalityGen(4, 1.0, 1.0)),
    seed=17,
)

BENCHMARK_SPLIT = SplitSpec(0.7, 0.1, 0.2)


def benchmark_dataset() -> MultimodalDataset:
    return generate_synthetic(LAZINESS_SPEC)


def benchmark_config(seed: int) -> TrainConfig:
    return TrainConfig(total_steps=60, seed=seed)


def benchmark_splits(base: MultimodalDataset, seed: int, eta: float = 0.0):
    """(train, val, test) for one benchmark run; masking applies to every split."""
    return masked_splits(base, BENCHMARK_SPLIT, eta, seed)
