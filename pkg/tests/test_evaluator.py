from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ezblender.errors import (
    DimensionMismatch,
    EmbeddingProviderError,
    EmptyTrialSet,
    ZeroVector,
)
from ezblender.evaluator import (
    Embedding,
    FailingEmbeddingProvider,
    LookupEmbeddingProvider,
    SubTaskOutcome,
    SubTaskSpec,
    classify,
    clip_text_score,
    clip_visual_sim,
    tcr,
)
from ezblender.model import Domain


def emb(*values, normalized=False) -> Embedding:
    return Embedding(tuple(float(v) for v in values), normalized=normalized)


finite = st.floats(min_value=-100, max_value=100, allow_nan=False, allow_infinity=False)


class TestEmbedding:
    def test_normalized_flag_checked(self):
        emb(0.6, 0.8, normalized=True)
        with pytest.raises(ValueError):
            emb(1.0, 1.0, normalized=True)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            Embedding(())
        with pytest.raises(ValueError):
            emb(float("nan"), 0.0)


class TestClipTextScore:
    def test_orthogonal_is_zero(self):
        assert clip_text_score(emb(1, 0), emb(0, 1)) == 0.0

    def test_unit_self_product(self):
        assert clip_text_score(emb(0.6, 0.8), emb(0.6, 0.8)) == pytest.approx(1.0, abs=1e-12)

    def test_raw_inner_product_no_renormalization(self):
        assert clip_text_score(emb(3, 4), emb(1, 0)) == 3.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            clip_text_score(emb(1, 0), emb(1, 0, 0))

    @given(finite, st.lists(finite, min_size=1, max_size=8),
           st.lists(finite, min_size=1, max_size=8))
    def test_bilinearity_in_first_argument(self, alpha, u, v):
        # pad to matching dims
        n = max(len(u), len(v))
        u = (u + [0.0] * n)[:n]
        v = (v + [0.0] * n)[:n]
        scaled = clip_text_score(Embedding(tuple(alpha * x for x in u)), Embedding(tuple(v)))
        base = clip_text_score(Embedding(tuple(u)), Embedding(tuple(v)))
        assert scaled == pytest.approx(alpha * base, abs=1e-6, rel=1e-9)

    def test_oracle_equivalence_1000_random_vectors(self):
        rng = np.random.default_rng(20_240)
        for _ in range(1000):
            dim = int(rng.integers(2, 16))
            a = rng.normal(size=dim)
            b = rng.normal(size=dim)
            expected = float(np.dot(a, b))
            actual = clip_text_score(Embedding(tuple(a)), Embedding(tuple(b)))
            assert abs(actual - expected) <= 1e-9


class TestClipVisualSim:
    def test_identical_vectors(self):
        assert clip_visual_sim(emb(0.3, 0.4, 0.5), emb(0.3, 0.4, 0.5)) == \
            pytest.approx(1.0, abs=1e-9)

    def test_positive_scale_invariance(self):
        assert clip_visual_sim(emb(1, 2, 3), emb(2, 4, 6)) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        assert clip_visual_sim(emb(1, 0), emb(0, 1)) == 0.0

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            clip_visual_sim(emb(0, 0), emb(1, 0))

    def test_bounded_and_clamped(self):
        value = clip_visual_sim(emb(1e-8, 1e8), emb(1e-8, 1e8))
        assert -1.0 <= value <= 1.0

    @given(st.floats(min_value=0.01, max_value=50), st.floats(min_value=0.01, max_value=50),
           st.lists(finite, min_size=2, max_size=8))
    def test_scale_invariance_property(self, alpha, beta, v):
        if all(abs(x) < 1e-6 for x in v):
            return
        a = Embedding(tuple(v))
        b = Embedding(tuple(x * 0.7 + 0.1 for x in v))
        base = clip_visual_sim(a, b)
        scaled = clip_visual_sim(Embedding(tuple(alpha * x for x in a.vector)),
                                 Embedding(tuple(beta * x for x in b.vector)))
        assert scaled == pytest.approx(base, abs=1e-7)

    def test_oracle_equivalence_1000_random_vectors(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            dim = int(rng.integers(2, 16))
            a = rng.normal(size=dim)
            b = rng.normal(size=dim)
            expected = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
            actual = clip_visual_sim(Embedding(tuple(a)), Embedding(tuple(b)))
            assert abs(actual - expected) <= 1e-9


def lookup_fixture():
    return LookupEmbeddingProvider(
        text_vectors={
            "red lighting": (1.0, 0.0, 0.0),
            "blue lighting": (0.0, 1.0, 0.0),
            "green lighting": (0.0, 0.0, 1.0),
            "tie-a": (1.0, 0.0, 0.0),
            "tie-b": (1.0, 0.0, 0.0),
        },
        image_vectors={
            "render-blue": (0.1, 0.9, 0.2),
            "render-even": (0.5, 0.5, 0.0),
        })


def spec(target, candidates, key="render-blue"):
    return SubTaskSpec(domain=Domain.LIGHT, target_label=target,
                       candidate_labels=tuple(candidates), render_key=key)


class TestClassify:
    def test_blue_lighting_fixture(self):
        provider = lookup_fixture()
        predicted = classify("render-blue",
                             spec("blue lighting",
                                  ["red lighting", "blue lighting", "green lighting"]),
                             provider)
        assert predicted == "blue lighting"

    def test_matches_brute_force_on_all_fixtures(self):
        provider = lookup_fixture()
        candidates = ["red lighting", "blue lighting", "green lighting"]
        for key in ("render-blue", "render-even"):
            image = provider.embed_image(key)
            scores = [clip_text_score(image, provider.embed_text(c)) for c in candidates]
            best = candidates[scores.index(max(scores))]  # index() takes first max: tie rule
            assert classify(key, spec(candidates[0], candidates, key), provider) == best

    def test_exact_tie_takes_lowest_index(self):
        provider = lookup_fixture()
        predicted = classify("render-even", spec("tie-b", ["tie-a", "tie-b"], "render-even"),
                             provider)
        assert predicted == "tie-a"

    def test_single_candidate_rejected(self):
        with pytest.raises(ValueError):
            spec("blue lighting", ["blue lighting"])

    def test_provider_error_propagates(self):
        with pytest.raises(EmbeddingProviderError):
            classify("render-blue",
                     spec("blue lighting", ["red lighting", "blue lighting"]),
                     FailingEmbeddingProvider())

    def test_argmax_invariant_under_shift_and_positive_scale(self):
        rng = random.Random(5)
        base_candidates = ["red lighting", "blue lighting", "green lighting"]
        for _ in range(50):
            image = [rng.uniform(-1, 1) for _ in range(3)]
            texts = {c: [rng.uniform(-1, 1) for _ in range(3)] for c in base_candidates}
            shift = rng.uniform(-5, 5)
            scale = rng.uniform(0.1, 10)

            def argmax(vectors):
                provider = LookupEmbeddingProvider(vectors, {"img": image})
                return classify("img", spec(base_candidates[0], base_candidates, "img"),
                                provider)

            plain = argmax(texts)
            # scaling every text vector by a positive constant scales all
            # scores; shifting scores by a constant comes from adding a
            # shared component along the image direction
            norm_sq = sum(x * x for x in image)
            shifted = {c: [x * scale + shift * i / norm_sq
                           for x, i in zip(v, image)] for c, v in texts.items()}
            assert argmax(shifted) == plain


class TestTcr:
    def _outcomes(self, bits):
        return [SubTaskOutcome(domain=Domain.GEO, target_label="t",
                               predicted_label="t" if b else "x",
                               correct=bool(b)) for b in bits]

    def test_all_hits(self):
        assert tcr(self._outcomes([1, 1, 1, 1, 1])) == 1.0

    def test_three_of_five(self):
        assert tcr(self._outcomes([1, 1, 1, 0, 0])) == 0.6

    def test_render_failure_counts_as_miss(self):
        outcomes = self._outcomes([1, 1, 1, 1])
        outcomes.insert(2, SubTaskOutcome(domain=Domain.CAM, target_label="t",
                                          predicted_label=None, correct=True,
                                          render_failed=True))
        assert tcr(outcomes) == 0.8

    def test_plain_bits_accepted(self):
        assert tcr([1, 0, 1, 0]) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(EmptyTrialSet):
            tcr([])

    @given(st.lists(st.booleans(), min_size=1, max_size=200))
    def test_equals_count_divide_oracle(self, bits):
        expected = sum(1 for b in bits if b) / len(bits)
        assert abs(tcr(bits) - expected) <= 1e-12


class TestProviders:
    def test_lookup_is_pure_and_total_on_fixture_keys(self):
        provider = lookup_fixture()
        a = provider.embed_text("red lighting")
        b = provider.embed_text("red lighting")
        assert a == b
        with pytest.raises(EmbeddingProviderError):
            provider.embed_text("unknown label")
        with pytest.raises(EmbeddingProviderError):
            provider.embed_image("unknown render")
