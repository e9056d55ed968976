"""Seed handling.

Every random draw in a run comes from ``make_rng(seed, stream)``, which feeds
``SeedSequence([seed, stream])`` to PCG64.  Distinct streams of one seed are
statistically independent, so environment sampling and instance construction
never share a generator.
"""
import numpy as np

ENV_STREAM = 0
INSTANCE_STREAM = 1


def make_rng(seed: int, stream: int = ENV_STREAM) -> np.random.Generator:
    seed = int(seed)
    if seed < 0:
        raise ValueError("seeds must be nonnegative integers")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))
