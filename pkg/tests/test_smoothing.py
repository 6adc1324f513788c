"""Monte Carlo certification against the analytic linear-classifier oracle."""

import numpy as np
import pytest

from certsmooth.seeds import mix64, splitmix64
from certsmooth.smoothing import (
    ABSTAIN,
    ClassifierError,
    NoiseSpec,
    certified_radius,
    certify,
    predict,
    sample_under_noise,
)
from certsmooth.stats import std_normal_quantile
from certsmooth.toymodel import LinearBinaryClassifier, linear_oracle

# frozen quantile-oracle goldens (mpmath bisection, 50 digits)
RADIUS_TWO_SIDED = 0.21040530839322855  # 0.125 * (q(0.8) - q(0.2))
RADIUS_ONE_SIDED = 0.6407757827723002  # 0.5 * q(0.9)
CONST_RADIUS_N1000 = 2.4632626147808088  # q(0.001 ** (1/1000))


class ConstantClassifier:
    num_classes = 3

    def __init__(self, label: int = 0):
        self.label = label

    def evaluate(self, batch):
        return np.full(np.atleast_2d(batch).shape[0], self.label, dtype=np.int64)


class FailingClassifier:
    num_classes = 2

    def evaluate(self, batch):
        raise RuntimeError("backend exploded")


@pytest.fixture
def boundary_classifier():
    return LinearBinaryClassifier(np.array([1.0, 0.0]), 0.0)


class TestSampleUnderNoise:
    def test_constant_counts(self):
        counts = sample_under_noise(
            ConstantClassifier(), np.zeros(4), sigma=1.0, count=500, seed=3
        )
        assert counts.tolist() == [500, 0, 0]

    def test_counts_partition_samples(self, boundary_classifier):
        counts = sample_under_noise(
            boundary_classifier, np.array([0.2, 0.1]), 0.5, count=777, seed=5
        )
        assert counts.sum() == 777

    def test_linear_fraction_matches_gaussian_projection(self, boundary_classifier):
        # P[class 1] = Phi(2) for x=(0.5, 0), sigma=0.25
        p_true, _, _ = linear_oracle(
            np.array([1.0, 0.0]), 0.0, np.array([0.5, 0.0]), 0.25
        )
        counts = sample_under_noise(
            boundary_classifier, np.array([0.5, 0.0]), 0.25, count=10_000, seed=11
        )
        se = np.sqrt(p_true * (1 - p_true) / 10_000)
        assert abs(counts[1] / 10_000 - p_true) <= 3 * se

    def test_bit_identical_across_batch_sizes(self, boundary_classifier):
        x = np.array([0.1, -0.2])
        reference = sample_under_noise(
            boundary_classifier, x, 0.3, count=2_111, seed=9, batch_size=1_000
        )
        for batch_size in (64, 256, 300, 2_111, 10_000):
            counts = sample_under_noise(
                boundary_classifier, x, 0.3, count=2_111, seed=9, batch_size=batch_size
            )
            assert np.array_equal(counts, reference)

    def test_classifier_failure_has_sample_context(self):
        with pytest.raises(ClassifierError, match=r"\[0, .*\) of 100"):
            sample_under_noise(FailingClassifier(), np.zeros(2), 1.0, 100, seed=0)

    def test_rejects_bad_arguments(self, boundary_classifier):
        with pytest.raises(ValueError):
            sample_under_noise(boundary_classifier, np.zeros(2), 0.0, 10, seed=0)
        with pytest.raises(ValueError):
            sample_under_noise(boundary_classifier, np.zeros(2), 1.0, 0, seed=0)


class TestCertify:
    def test_linear_point_certificate(self, boundary_classifier):
        spec = NoiseSpec(sigma=0.25, n0=100, n=10_000, alpha=0.001, seed=42)
        outcome = certify(boundary_classifier, np.array([0.5, 0.0]), spec)
        assert not outcome.is_abstain
        assert outcome.label == 1
        # true radius 0.5; the estimate must stay below it but close
        assert outcome.radius <= 0.5 + 1e-9
        assert outcome.radius >= 0.8 * 0.5

    def test_boundary_point_abstains(self, boundary_classifier):
        abstained = 0
        for seed in range(40):
            spec = NoiseSpec(sigma=0.25, n0=50, n=2_000, alpha=0.001, seed=seed)
            outcome = certify(boundary_classifier, np.array([0.0, 0.0]), spec)
            abstained += outcome.is_abstain
        assert abstained >= 38  # >= 95% abstention at the decision boundary

    def test_constant_classifier_closed_form_radius(self):
        spec = NoiseSpec(sigma=0.25, n0=20, n=1_000, alpha=0.001, seed=1)
        outcome = certify(ConstantClassifier(), np.zeros(6), spec)
        assert outcome.label == 0
        assert outcome.radius == pytest.approx(0.25 * CONST_RADIUS_N1000, abs=1e-9)
        assert outcome.pa_lower > 0.5
        assert outcome.counts.sum() == 1_000

    def test_deterministic_across_runs_and_batch_sizes(self, boundary_classifier):
        spec = NoiseSpec(sigma=0.5, n0=64, n=3_000, alpha=0.01, seed=77)
        x = np.array([0.3, 0.4])
        first = certify(boundary_classifier, x, spec, batch_size=1_000)
        again = certify(boundary_classifier, x, spec, batch_size=1_000)
        small = certify(boundary_classifier, x, spec, batch_size=77)
        assert first == again
        assert first.label == small.label
        assert first.radius == small.radius
        assert np.array_equal(first.counts, small.counts)

    def test_soundness_over_seeded_runs(self, boundary_classifier):
        # certified label must match the analytic majority and certified
        # radius must not exceed the true radius (alpha-rate failures allowed)
        w, b = np.array([1.0, 0.0]), 0.0
        rng = np.random.default_rng(5)
        bad = 0
        runs = 0
        for seed in range(60):
            x = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-1, 1)])
            spec = NoiseSpec(sigma=0.25, n0=50, n=1_500, alpha=0.001, seed=seed)
            outcome = certify(boundary_classifier, x, spec)
            runs += 1
            if outcome.is_abstain:
                continue
            _, true_radius, majority = linear_oracle(w, b, x, 0.25)
            if outcome.label != majority or outcome.radius > true_radius + 1e-9:
                bad += 1
        assert bad <= max(1, int(0.01 * runs))

    def test_abstain_outcome_shape(self, boundary_classifier):
        spec = NoiseSpec(sigma=1.0, n0=30, n=300, alpha=0.001, seed=3)
        outcome = certify(boundary_classifier, np.zeros(2), spec)
        assert outcome.is_abstain
        assert outcome.label == ABSTAIN
        assert outcome.radius == 0.0


class TestPredict:
    def test_constant_never_abstains_from_eleven_samples(self):
        for n in (11, 25, 100):
            label = predict(ConstantClassifier(), np.zeros(3), 1.0, n, 0.001, seed=4)
            assert label == 0

    def test_boundary_mostly_abstains(self, boundary_classifier):
        abstained = sum(
            predict(boundary_classifier, np.zeros(2), 0.25, 500, 0.001, seed=s)
            == ABSTAIN
            for s in range(40)
        )
        assert abstained >= 36  # >= 90%

    def test_never_contradicts_certify(self, boundary_classifier):
        rng = np.random.default_rng(17)
        for seed in range(30):
            x = rng.uniform(-0.5, 0.5, size=2)
            spec = NoiseSpec(sigma=0.3, n0=40, n=800, alpha=0.001, seed=seed)
            outcome = certify(boundary_classifier, x, spec)
            if outcome.is_abstain:
                continue
            label = predict(boundary_classifier, x, 0.3, 800, 0.001, seed=seed)
            assert label in (outcome.label, ABSTAIN)

    def test_requires_two_samples(self):
        with pytest.raises(ValueError):
            predict(ConstantClassifier(), np.zeros(3), 1.0, 1, 0.001, seed=0)


class TestCertifiedRadius:
    def test_two_sided_golden(self):
        assert certified_radius(0.25, 0.8, 0.2) == pytest.approx(
            RADIUS_TWO_SIDED, abs=1e-10
        )

    def test_equal_bounds_collapse_to_zero(self):
        for sigma, p in [(0.1, 0.3), (1.0, 0.5), (2.5, 0.9)]:
            assert certified_radius(sigma, p, p) == 0.0

    def test_one_sided_equivalence(self):
        assert certified_radius(0.5, 0.9, 0.1) == pytest.approx(
            RADIUS_ONE_SIDED, abs=1e-10
        )
        assert certified_radius(0.5, 0.9, 0.1) == pytest.approx(
            0.5 * std_normal_quantile(0.9), abs=1e-10
        )

    def test_clamped_when_bounds_cross(self):
        assert certified_radius(0.5, 0.3, 0.7) == 0.0

    def test_strictly_monotone_before_clamping(self):
        ps = np.linspace(0.55, 0.99, 23)
        radii = [certified_radius(1.0, float(p), 0.2) for p in ps]
        assert all(a < b for a, b in zip(radii, radii[1:]))
        qs = np.linspace(0.01, 0.45, 23)
        radii = [certified_radius(1.0, 0.8, float(q)) for q in qs]
        assert all(a > b for a, b in zip(radii, radii[1:]))

    def test_stricter_alpha_never_raises_radius(self):
        # fixed counts, tighter confidence -> smaller bound -> smaller radius
        from certsmooth.stats import clopper_pearson_lower

        k, n = 9_000, 10_000
        for sigma in (0.1, 0.5):
            loose = clopper_pearson_lower(k, n, 0.01)
            strict = clopper_pearson_lower(k, n, 0.0001)
            assert sigma * std_normal_quantile(strict) <= sigma * std_normal_quantile(
                loose
            )

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            certified_radius(0.0, 0.8, 0.2)
        with pytest.raises(ValueError):
            certified_radius(0.5, 1.0, 0.2)
        with pytest.raises(ValueError):
            certified_radius(0.5, 0.8, 0.0)


class TestSeedDerivation:
    def test_published_mix_function_is_pinned(self):
        # regression anchors: parallel/serial agreement depends on these
        assert splitmix64(0) == 16294208416658607535
        assert mix64(0) == 16294208416658607535
        assert mix64(1, 2, 3) != mix64(3, 2, 1)
        assert mix64(42, 0, 0) != mix64(42, 0, 1)
        assert 0 <= mix64(-5, 7) < 2**64
