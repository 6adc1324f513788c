"""Zero-shot head: cosine scoring, temperature softmax, adapter purity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from certsmooth.vlmhead import (
    ClassPromptSet,
    ZeroShotClassifier,
    cosine_similarities,
    l2_normalize,
    render_prompt,
    zero_shot_classify,
    zero_shot_probs,
)


def prompt_set(embeddings, names=None, template="{}"):
    embeddings = np.asarray(embeddings, dtype=np.float64)
    names = names or tuple(f"c{i}" for i in range(embeddings.shape[0]))
    return ClassPromptSet(embeddings=embeddings, class_names=tuple(names), template=template)


def unit(v):
    return np.asarray(v, dtype=np.float64) / np.linalg.norm(v)


class TestPromptSet:
    def test_template_substitution(self):
        assert (
            render_prompt("An H&E image patch of {}", "Tumor")
            == "An H&E image patch of Tumor"
        )

    def test_prompt_list(self):
        ps = prompt_set(np.eye(3), names=("a", "b", "c"), template="photo of {}")
        assert ps.prompts() == ["photo of a", "photo of b", "photo of c"]

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            prompt_set(np.ones((1, 4)))
        with pytest.raises(ValueError):
            ClassPromptSet(embeddings=np.eye(3), class_names=("a",), template="{}")


class TestZeroShotProbs:
    def test_identical_embeddings_uniform(self):
        ps = prompt_set(np.tile(unit([1.0, 2.0, 0.5]), (4, 1)))
        probs = zero_shot_probs(unit([0.3, -1.0, 0.2]), ps, tau=100.0)
        assert np.allclose(probs, 0.25, atol=1e-15)

    def test_two_class_scalar_value(self):
        # cosines 0.3 and 0.1 against v = e1; tau 100 -> logistic gap 20
        v = np.array([1.0, 0.0])
        ps = prompt_set(
            [[0.3, math.sqrt(1 - 0.09)], [0.1, math.sqrt(1 - 0.01)]]
        )
        probs = zero_shot_probs(v, ps, tau=100.0)
        assert probs[0] == pytest.approx(1.0 / (1.0 + math.exp(-20.0)), abs=1e-15)

    def test_sums_to_one_and_positive_at_extreme_tau(self):
        ps = prompt_set([unit([1, 0, 0]), unit([-1, 0, 0]), unit([0, 1, 0])])
        for tau in (1e-3, 1.0, 100.0, 1e4):
            probs = zero_shot_probs(unit([0.9, 0.1, 0.4]), ps, tau)
            assert abs(probs.sum() - 1.0) <= 1e-12
            assert np.all(probs > 0.0)
            assert np.all(np.isfinite(probs))

    @given(tau=st.floats(min_value=1e-3, max_value=1e4))
    @settings(max_examples=40, deadline=None)
    def test_argmax_invariant_to_temperature(self, tau):
        rng = np.random.default_rng(7)
        ps = prompt_set([unit(rng.standard_normal(5)) for _ in range(4)])
        v = unit(rng.standard_normal(5))
        assert np.argmax(zero_shot_probs(v, ps, tau)) == np.argmax(
            cosine_similarities(v, ps)
        )

    def test_zero_norm_rejected(self):
        ps = prompt_set(np.eye(3))
        with pytest.raises(ValueError):
            zero_shot_probs(np.zeros(3), ps, tau=100.0)
        with pytest.raises(ValueError):
            zero_shot_probs(np.ones(3), prompt_set([[0, 0, 0], [1, 0, 0]]), 100.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            zero_shot_probs(np.ones(4), prompt_set(np.eye(3)), 100.0)


class TestCosine:
    def test_range_and_self_similarity(self):
        rng = np.random.default_rng(3)
        vecs = [unit(rng.standard_normal(8)) for _ in range(5)]
        ps = prompt_set(vecs)
        for v in vecs:
            sims = cosine_similarities(v, ps)
            assert np.all(sims <= 1.0 + 1e-9)
            assert np.all(sims >= -1.0 - 1e-9)
        assert cosine_similarities(vecs[2], ps)[2] == pytest.approx(1.0, abs=1e-12)

    def test_normalize_contract(self):
        v = l2_normalize(np.array([3.0, 4.0]))
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(ValueError):
            l2_normalize(np.zeros(3))


class TestZeroShotClassify:
    def test_uniform_ties_break_low(self):
        ps = prompt_set(np.tile(unit([1.0, 1.0]), (3, 1)))
        assert zero_shot_classify(unit([0.2, 0.9]), ps, tau=10.0) == 0

    def test_exact_match_wins(self):
        ps = prompt_set(np.eye(4))
        assert zero_shot_classify(np.eye(4)[2], ps, tau=50.0) == 2

    def test_matches_raw_similarity_argmax(self):
        rng = np.random.default_rng(11)
        ps = prompt_set([unit(rng.standard_normal(6)) for _ in range(5)])
        for _ in range(20):
            v = unit(rng.standard_normal(6))
            expected = int(np.argmax(cosine_similarities(v, ps)))
            for tau in (0.5, 100.0, 3e3):
                assert zero_shot_classify(v, ps, tau) == expected


class TestClassifierAdapter:
    def test_pure_and_consistent_with_classify(self):
        rng = np.random.default_rng(23)
        ps = prompt_set([unit(rng.standard_normal(6)) for _ in range(4)])
        encode = lambda batch: np.stack([unit(row[:6]) for row in np.atleast_2d(batch)])
        clf = ZeroShotClassifier(encode, ps, tau=100.0)
        batch = rng.standard_normal((10, 6))
        labels1 = clf.evaluate(batch)
        labels2 = clf.evaluate(batch)
        assert np.array_equal(labels1, labels2)
        for row, label in zip(batch, labels1):
            assert label == zero_shot_classify(unit(row), ps, tau=100.0)
        assert clf.num_classes == 4
