"""Randomized-smoothing core: noisy sampling, CERTIFY and PREDICT.

The smoothed classifier g(x) returns the class the base classifier f picks
most often over Gaussian perturbations x + delta, delta ~ N(0, sigma^2 I).
``certify`` lower-bounds the top-class probability from Monte Carlo counts
and converts the bound into an L2 radius inside which g provably does not
change; ``predict`` is the abstaining point-prediction companion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .seeds import PHASE_ESTIMATION, PHASE_SELECTION, mix64, rng_for
from .stats import (
    binom_two_sided_pvalue,
    clopper_pearson_lower,
    std_normal_quantile,
)

ABSTAIN = -1

# Noise is always generated in canonical chunks of this many rows, with the
# chunk index folded into the seed.  The classifier-eval batch size only
# groups rows for evaluate() calls, so counts are bit-identical no matter
# which batch size is chosen.
NOISE_CHUNK = 256


@runtime_checkable
class BaseClassifier(Protocol):
    """Deterministic label-producing classifier evaluated under noise.

    Implementations declare via ``concurrent_safe`` whether evaluate()
    may be called from several threads at once; the engine serializes
    calls to classifiers that declare False.  Undeclared means safe.
    """

    num_classes: int
    concurrent_safe: bool

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        """Map a [B x D] batch to a length-B vector of labels in [0, K)."""
        ...


class ClassifierError(RuntimeError):
    """Base-classifier evaluation failed; carries sample context."""


@dataclass(frozen=True)
class NoiseSpec:
    """Smoothing noise parameters for one certification run."""

    sigma: float
    n0: int = 100
    n: int = 10_000
    alpha: float = 0.001
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma!r}")
        if self.n0 < 1 or self.n < 1:
            raise ValueError("sample counts n0 and n must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")


@dataclass(frozen=True)
class CertifyOutcome:
    """Certified class and L2 radius, or an explicit abstention.

    ``counts`` holds the estimation-phase per-class counts and ``pa_lower``
    the Clopper-Pearson bound that produced the decision, for both outcomes.
    """

    label: int
    radius: float
    pa_lower: float
    counts: np.ndarray = field(repr=False, compare=False)

    @property
    def is_abstain(self) -> bool:
        return self.label == ABSTAIN


def sample_under_noise(
    f: BaseClassifier,
    x: np.ndarray,
    sigma: float,
    count: int,
    seed: int,
    batch_size: int = 1_000,
    phase: int = 0,
) -> np.ndarray:
    """Count the base classifier's predictions over noisy copies of x.

    :param f: base classifier
    :param x: the input [D]
    :param sigma: Gaussian noise scale
    :param count: number of noisy samples to draw
    :param seed: stream seed; chunk b uses mix64(seed, phase, b)
    :param batch_size: rows per evaluate() call (does not affect counts)
    :param phase: stream tag separating selection/estimation draws
    :return: int64 per-class counts of length f.num_classes, summing to count
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    x = np.asarray(x, dtype=np.float64).ravel()
    counts = np.zeros(f.num_classes, dtype=np.int64)

    pending: list[np.ndarray] = []
    pending_rows = 0
    done = 0
    chunk_index = 0

    def flush() -> None:
        nonlocal counts, pending, pending_rows
        if not pending:
            return
        block = np.concatenate(pending, axis=0)
        first = done - block.shape[0]
        pending = []
        pending_rows = 0
        for start in range(0, block.shape[0], batch_size):
            batch = block[start : start + batch_size]
            try:
                labels = np.asarray(f.evaluate(batch))
            except Exception as exc:  # attach sample-range context
                raise ClassifierError(
                    f"base classifier failed on noisy samples "
                    f"[{first + start}, {first + start + batch.shape[0]}) "
                    f"of {count}: {exc}"
                ) from exc
            if labels.shape != (batch.shape[0],):
                raise ClassifierError(
                    f"classifier returned {labels.shape} labels for a "
                    f"{batch.shape[0]}-row batch"
                )
            counts += np.bincount(
                labels.astype(np.int64), minlength=f.num_classes
            )

    while done < count:
        rows = min(NOISE_CHUNK, count - done)
        rng = rng_for(seed, phase, chunk_index)
        noise = rng.standard_normal((rows, x.size)) * sigma
        pending.append(x[None, :] + noise)
        pending_rows += rows
        done += rows
        chunk_index += 1
        if pending_rows >= batch_size:
            flush()
    flush()
    return counts


def certify(
    f: BaseClassifier,
    x: np.ndarray,
    spec: NoiseSpec,
    batch_size: int = 1_000,
) -> CertifyOutcome:
    """Certify g's prediction at x within an L2 ball, or abstain.

    Draws n0 samples to select the candidate top class, n fresh samples to
    lower-bound its probability p_A at confidence 1 - alpha, and returns
    radius sigma * Phi^-1(p_A_lower) when the bound clears 1/2.  This equals
    the two-sided radius formula under p_B_upper = 1 - p_A_lower.
    """
    counts0 = sample_under_noise(
        f, x, spec.sigma, spec.n0, spec.seed, batch_size, phase=PHASE_SELECTION
    )
    c_a = int(np.argmax(counts0))  # ties resolve to the lowest class index
    counts = sample_under_noise(
        f, x, spec.sigma, spec.n, spec.seed, batch_size, phase=PHASE_ESTIMATION
    )
    pa_lower = clopper_pearson_lower(int(counts[c_a]), spec.n, spec.alpha)
    if pa_lower > 0.5:
        radius = spec.sigma * std_normal_quantile(pa_lower)
        return CertifyOutcome(label=c_a, radius=radius, pa_lower=pa_lower, counts=counts)
    return CertifyOutcome(label=ABSTAIN, radius=0.0, pa_lower=pa_lower, counts=counts)


def predict(
    f: BaseClassifier,
    x: np.ndarray,
    sigma: float,
    n: int,
    alpha: float,
    seed: int,
    batch_size: int = 1_000,
) -> int:
    """Predict g(x) with error probability at most alpha, or ABSTAIN.

    Uses the exact two-sided binomial test on the top-two counts.  Shares
    the estimation-phase noise stream with ``certify`` so that, for one
    (x, seed) pair, both procedures decide from the same draws and can
    never return conflicting labels.
    """
    if n < 2:
        raise ValueError(f"predict requires n >= 2, got {n}")
    counts = sample_under_noise(
        f, x, sigma, n, seed, batch_size, phase=PHASE_ESTIMATION
    )
    order = np.argsort(-counts, kind="stable")  # ties -> lowest class index
    top, second = int(order[0]), int(order[1])
    n_a, n_b = int(counts[top]), int(counts[second])
    if binom_two_sided_pvalue(n_a, n_a + n_b, 0.5) <= alpha:
        return top
    return ABSTAIN


def certified_radius(sigma: float, pa_lower: float, pb_upper: float) -> float:
    """Two-sided certified L2 radius sigma/2 * (Phi^-1(pA) - Phi^-1(pB)).

    Clamped at zero when the bounds cross; raises for bounds at 0 or 1
    where the quantile diverges.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    qa = std_normal_quantile(pa_lower)
    qb = std_normal_quantile(pb_upper)
    return max(0.0, 0.5 * sigma * (qa - qb))


def derive_task_seed(run_seed: int, sample_index: int, sigma_index: int) -> int:
    """Per-(sample, sigma) seed used by the certification harness."""
    return mix64(run_seed, sample_index, sigma_index)
