from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planmix.errors import (
    DimensionMismatch,
    EmptyInput,
    IndexOutOfRange,
    InsufficientData,
    MalformedToken,
    ShapeMismatch,
)
from planmix.tokens import (
    AcousticTokenSequence,
    Codebook,
    FrameSequence,
    VocabularyMap,
    codebook_inertia,
    decode_token_string,
    dequantize,
    encode_token_string,
    fit_codebook,
    mean_pool_frame,
    nll_loss,
    quantize,
    temporal_aggregate,
    tokens_for_duration,
    wrap_vta_prompt,
)


def nearest_oracle(frame: np.ndarray, centroids: np.ndarray) -> int:
    """Brute force per-frame distance scan, ties to the lowest index."""
    d2 = np.sum((centroids - frame) ** 2, axis=1)
    return int(np.argmin(d2))


def frames_of(array, rate=50.0) -> FrameSequence:
    return FrameSequence(np.asarray(array, dtype=float), rate)


@pytest.fixture(scope="module")
def small_codebook():
    rng = np.random.default_rng(17)
    return Codebook(rng.standard_normal((16, 4)))


class TestQuantize:
    def test_exact_centroid_hit(self, small_codebook):
        frame = small_codebook.centroids[7]
        tokens = quantize(frames_of([frame]), small_codebook)
        assert tokens.indices == (7,)

    def test_tie_breaks_to_lowest_index(self):
        centroids = np.array([[0.0], [2.0], [4.0]])
        codebook = Codebook(centroids)
        # 1.0 and 3.0 are exactly between neighbors.
        tokens = quantize(frames_of([[1.0], [3.0]]), codebook)
        assert tokens.indices == (0, 1)

    def test_empty_sequence(self, small_codebook):
        tokens = quantize(frames_of(np.empty((0, 4))), small_codebook)
        assert tokens.indices == ()

    def test_dimension_mismatch(self, small_codebook):
        with pytest.raises(DimensionMismatch):
            quantize(frames_of(np.zeros((3, 5))), small_codebook)

    def test_matches_brute_force_oracle(self, small_codebook):
        rng = np.random.default_rng(23)
        frames = rng.standard_normal((500, 4))
        tokens = quantize(frames_of(frames), small_codebook)
        for i, frame in enumerate(frames):
            assert tokens.indices[i] == nearest_oracle(frame, small_codebook.centroids)

    def test_indices_in_range_property(self, small_codebook):
        rng = np.random.default_rng(29)
        tokens = quantize(frames_of(rng.standard_normal((200, 4)) * 10), small_codebook)
        assert all(0 <= i < small_codebook.size for i in tokens.indices)


class TestDequantize:
    def test_lookup(self, small_codebook):
        seq = AcousticTokenSequence(indices=(0, 1, 0))
        frames = dequantize(seq, small_codebook)
        assert np.array_equal(frames.frames[0], small_codebook.centroids[0])
        assert np.array_equal(frames.frames[1], small_codebook.centroids[1])
        assert np.array_equal(frames.frames[2], small_codebook.centroids[0])

    def test_round_trip_on_lattice(self, small_codebook):
        seq = AcousticTokenSequence(indices=(3, 1, 4, 1, 5))
        assert quantize(dequantize(seq, small_codebook), small_codebook).indices == seq.indices

    def test_dequantize_idempotence(self, small_codebook):
        seq = AcousticTokenSequence(indices=(2, 7, 2))
        once = dequantize(seq, small_codebook)
        again = dequantize(quantize(once, small_codebook), small_codebook)
        assert np.array_equal(once.frames, again.frames)

    def test_out_of_range(self, small_codebook):
        with pytest.raises(IndexOutOfRange):
            dequantize(AcousticTokenSequence(indices=(16,)), small_codebook)


class TestRateArithmetic:
    def test_ten_seconds_at_50hz(self):
        assert tokens_for_duration(10, 50) == 500

    def test_zero(self):
        assert tokens_for_duration(0) == 0

    def test_fractional(self):
        assert tokens_for_duration(2.3, 50) == 115

    def test_visual_rate_differs(self):
        assert tokens_for_duration(10, 21.5) == 215


class TestTokenStrings:
    def test_single(self):
        assert encode_token_string([42]) == "<AUD_42>"

    def test_decode_rejects_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            decode_token_string("<AUD_500>", num_codes=500)

    def test_decode_rejects_malformed(self):
        with pytest.raises(MalformedToken):
            decode_token_string("<AUD_1> trailing")
        with pytest.raises(MalformedToken):
            decode_token_string("<VID_1>")

    def test_empty_round_trip(self):
        assert decode_token_string("") == ()

    @given(st.lists(st.integers(0, 499), max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_bijection_property(self, indices):
        assert decode_token_string(encode_token_string(indices)) == tuple(indices)


class TestVocabularyMap:
    def test_layout_contiguous(self):
        vocab = VocabularyMap(text_vocab_size=1000, num_codes=500)
        assert vocab.acoustic_offset == 1000
        assert vocab.total_size == 1000 + 5 + 500
        assert vocab.id_to_token(1000) == "<Video>"
        assert vocab.id_to_token(1004) == "<eos>"
        assert vocab.id_to_token(1005) == "<AUD_0>"
        assert vocab.id_to_token(1005 + 499) == "<AUD_499>"

    def test_bijection_over_acoustic_range(self):
        vocab = VocabularyMap(text_vocab_size=32, num_codes=20)
        seen = set()
        for token_id in range(vocab.acoustic_offset, vocab.total_size):
            token = vocab.id_to_token(token_id)
            assert vocab.token_to_id(token) == token_id
            seen.add(token)
        assert len(seen) == vocab.total_size - vocab.acoustic_offset

    def test_text_ids(self):
        vocab = VocabularyMap(text_vocab_size=10, num_codes=5)
        assert vocab.is_text_id(9) and not vocab.is_text_id(10)
        with pytest.raises(IndexOutOfRange):
            vocab.id_to_token(9)

    def test_rejections(self):
        vocab = VocabularyMap(text_vocab_size=10, num_codes=5)
        with pytest.raises(MalformedToken):
            vocab.token_to_id("hello")
        with pytest.raises(IndexOutOfRange):
            vocab.token_to_id("<AUD_5>")


class TestVtaPrompt:
    def test_caption_wrapped(self):
        text = wrap_vta_prompt("[EMB]", "dog barking")
        assert "<Caption>dog barking</Caption>" in text

    def test_placeholder_once_inside_video_tags(self):
        text = wrap_vta_prompt("[EMB]", "dog barking")
        assert text.count("[EMB]") == 1
        assert "<Video>[EMB]</Video>" in text

    def test_turn_markers_present(self):
        text = wrap_vta_prompt("[EMB]", "x")
        assert "<start_of_turn>user" in text
        assert "<start_of_turn>model" in text

    def test_empty_caption_rejected(self):
        with pytest.raises(ValueError):
            wrap_vta_prompt("[EMB]", "   ")


def naive_nll(logits, targets):
    """Direct softmax summation without the stability trick (small scale)."""
    logits = np.asarray(logits, dtype=float)
    total = 0.0
    for row, t in zip(logits, targets):
        p = np.exp(row) / np.exp(row).sum()
        total += -math.log(p[t])
    return total


class TestNll:
    def test_uniform_logits(self):
        logits = np.zeros((3, 504))
        assert nll_loss(logits, [0, 100, 503]) == pytest.approx(3 * math.log(504), abs=1e-9)

    def test_concentrated_mass(self):
        logits = np.zeros((1, 10))
        logits[0, 4] = 50.0
        assert nll_loss(logits, [4]) == pytest.approx(0.0, abs=1e-9)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(31)
        logits = rng.standard_normal((4, 10)) * 3
        targets = rng.integers(0, 10, size=4)
        assert nll_loss(logits, targets) == pytest.approx(
            naive_nll(logits, targets), abs=1e-9
        )

    def test_shift_invariance(self):
        rng = np.random.default_rng(37)
        logits = rng.standard_normal((5, 12))
        targets = rng.integers(0, 12, size=5)
        shifted = logits + 123.456
        assert nll_loss(logits, targets) == pytest.approx(
            nll_loss(shifted, targets), abs=1e-9
        )

    def test_non_negative(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            logits = rng.standard_normal((3, 7)) * 5
            targets = rng.integers(0, 7, size=3)
            assert nll_loss(logits, targets) >= 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            nll_loss(np.zeros((3, 4)), [0, 1])
        with pytest.raises(IndexOutOfRange):
            nll_loss(np.zeros((2, 4)), [0, 4])


class TestTemporalAggregate:
    def test_delta_kernel_identity(self):
        rng = np.random.default_rng(43)
        frames = frames_of(rng.standard_normal((6, 3)), rate=21.5)
        out = temporal_aggregate(frames, [0, 1, 0], np.eye(3))
        assert np.allclose(out.frames, frames.frames)
        assert out.frame_rate == 21.5

    def test_box_kernel_boundary_scaling(self):
        frames = frames_of(np.ones((5, 2)))
        out = temporal_aggregate(frames, [1 / 3, 1 / 3, 1 / 3], np.eye(2))
        assert np.allclose(out.frames[1:-1], 1.0)
        assert np.allclose(out.frames[0], 2 / 3)
        assert np.allclose(out.frames[-1], 2 / 3)

    def test_single_frame_center_weight(self):
        frames = frames_of([[2.0, -1.0]])
        out = temporal_aggregate(frames, [0.2, 0.5, 0.3], np.eye(2))
        assert np.allclose(out.frames, [[1.0, -0.5]])

    def test_projection_applied(self):
        frames = frames_of([[1.0, 2.0]])
        projection = np.array([[1.0], [10.0]])
        out = temporal_aggregate(frames, [0, 1, 0], projection)
        assert out.frames.shape == (1, 1)
        assert out.frames[0, 0] == pytest.approx(21.0)

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeMismatch):
            temporal_aggregate(frames_of(np.ones((3, 2))), [0.5, 0.5], np.eye(2))

    def test_order_preserved(self):
        frames = frames_of([[0.0], [1.0], [2.0], [3.0]])
        out = temporal_aggregate(frames, [0, 1, 0], np.eye(1))
        assert np.array_equal(out.frames[:, 0], [0, 1, 2, 3])


class TestMeanPool:
    def test_identical_patches(self):
        v = np.array([1.0, 2.0, 3.0])
        assert np.allclose(mean_pool_frame(np.stack([v, v, v])), v)

    def test_symmetric_cancellation(self):
        v = np.array([1.0, -2.0])
        assert np.allclose(mean_pool_frame(np.stack([v, -v])), 0.0)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(47)
        patches = rng.standard_normal((4, 6))
        direct = patches.sum(axis=0) / 4
        assert np.allclose(mean_pool_frame(patches), direct, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            mean_pool_frame(np.empty((0, 3)))


class TestFitCodebook:
    def blobs(self, k=4, per=50, dim=3, spread=0.05, seed=53):
        rng = np.random.default_rng(seed)
        means = rng.uniform(-5, 5, size=(k, dim))
        points = np.concatenate(
            [mean + spread * rng.standard_normal((per, dim)) for mean in means]
        )
        return means, frames_of(points)

    def test_recovers_blob_means(self):
        means, data = self.blobs()
        codebook = fit_codebook(data, k=4, iterations=50, seed=7)
        for mean in means:
            nearest = np.min(np.linalg.norm(codebook.centroids - mean, axis=1))
            assert nearest < 0.15  # within blob radius (3*spread)

    def test_k_equals_n_zero_inertia(self):
        rng = np.random.default_rng(59)
        data = frames_of(rng.standard_normal((8, 2)))
        codebook = fit_codebook(data, k=8, iterations=10, seed=1)
        assert codebook_inertia(data, codebook) == pytest.approx(0.0, abs=1e-18)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            fit_codebook(frames_of(np.zeros((3, 2))), k=4)

    def test_deterministic_for_seed(self):
        _, data = self.blobs(seed=61)
        a = fit_codebook(data, k=4, iterations=20, seed=9)
        b = fit_codebook(data, k=4, iterations=20, seed=9)
        assert np.array_equal(a.centroids, b.centroids)

    def test_inertia_non_increasing(self):
        _, data = self.blobs(k=5, per=40, seed=67)
        inertias = [
            codebook_inertia(data, fit_codebook(data, k=5, iterations=i, seed=3))
            for i in range(1, 12)
        ]
        for a, b in zip(inertias, inertias[1:]):
            assert b <= a + 1e-9


class TestCodebookInvariants:
    def test_duplicate_rows_rejected(self):
        with pytest.raises(ValueError):
            Codebook(np.zeros((2, 3)))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Codebook(np.array([[np.inf, 0.0]]))
