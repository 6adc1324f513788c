"""Soundness harness: certify against the analytic linear oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..seeds import rng_for
from ..smoothing import NoiseSpec, certify
from ..toymodel import LinearBinaryClassifier, linear_oracle


@dataclass(frozen=True)
class OracleCheckResult:
    samples: int
    non_abstain: int
    label_mismatches: int
    radius_overshoots: int
    tight_fraction: float  # share of non-abstains with radius >= 0.5 * truth

    @property
    def sound(self) -> bool:
        return self.label_mismatches == 0 and self.radius_overshoots == 0


def run_oracle_check(
    samples: int = 200,
    sigma: float = 0.25,
    n0: int = 100,
    n: int = 10_000,
    alpha: float = 0.001,
    seed: int = 0,
    dim: int = 8,
) -> OracleCheckResult:
    """Certify points at distances in [0, 3 sigma] from a hyperplane.

    Every non-abstaining certificate must name the analytic majority class
    and stay below the true radius; certificates within half the truth are
    counted as tight.
    """
    rng = rng_for(seed, 0x0C)
    w = rng.standard_normal(dim)
    w /= np.linalg.norm(w)
    b = 0.0
    classifier = LinearBinaryClassifier(w, b)

    non_abstain = 0
    mismatches = 0
    overshoots = 0
    tight = 0
    for index in range(samples):
        # signed distance sampled uniformly in [-3 sigma, 3 sigma]
        distance = rng.uniform(-3.0 * sigma, 3.0 * sigma)
        direction = rng.standard_normal(dim)
        direction -= (direction @ w) * w  # in-plane component
        x = distance * w + direction
        spec = NoiseSpec(sigma=sigma, n0=n0, n=n, alpha=alpha, seed=seed + index)
        outcome = certify(classifier, x, spec)
        if outcome.is_abstain:
            continue
        non_abstain += 1
        _, true_radius, majority = linear_oracle(w, b, x, sigma)
        if outcome.label != majority:
            mismatches += 1
        if outcome.radius > true_radius + 1e-9:
            overshoots += 1
        if outcome.radius >= 0.5 * true_radius:
            tight += 1
    return OracleCheckResult(
        samples=samples,
        non_abstain=non_abstain,
        label_mismatches=mismatches,
        radius_overshoots=overshoots,
        tight_fraction=tight / non_abstain if non_abstain else 1.0,
    )
