"""Deterministic seed derivation for parallel-safe Monte Carlo sampling.

Every randomized stage of the engine derives its RNG seed through ``mix64``
so that serial and parallel executions of the same run agree bit for bit.
The mixing function is the splitmix64 finalizer applied once per component;
it is part of the on-disk/reproducibility contract and must not change.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream tags. Keep values stable: they are baked into every recorded run.
PHASE_SELECTION = 1  # certify: class-selection draws
PHASE_ESTIMATION = 2  # certify/predict: estimation draws
PHASE_ADAPT = 3  # test-time prompt adaptation
PHASE_SHUFFLE = 4  # few-shot epoch shuffling
PHASE_SIGMA = 5  # noise-scale sampling
PHASE_NOISE = 6  # gradient-step noise draws
PHASE_CLEAN = 7  # reserved: clean evaluation


def splitmix64(x: int) -> int:
    """One round of the splitmix64 output function (Steele et al.)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix64(*parts: int) -> int:
    """Fold integer components into a single 64-bit seed.

    ``mix64(seed, phase, index)`` is the published derivation rule: the
    result depends on every component and on their order, and negative
    inputs are reduced modulo 2**64 first.
    """
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK64))
    return h


def rng_for(*parts: int) -> np.random.Generator:
    """PCG64 generator seeded from the mixed components."""
    return np.random.Generator(np.random.PCG64(mix64(*parts)))
