from __future__ import annotations

import math

import numpy as np
import pytest

from planmix.attention import (
    AttentionParams,
    GuidanceConfig,
    cross_attention,
    diffusion_noise_loss,
    dual_cross_attention,
    guided_attention,
)
from planmix.errors import ShapeMismatch


def loop_attention_oracle(z, c, w_q, w_k, w_v, d):
    """Naive per-row, per-key implementation (no vectorization)."""
    q = np.asarray(z) @ np.asarray(w_q)
    k = np.asarray(c) @ np.asarray(w_k)
    v = np.asarray(c) @ np.asarray(w_v)
    out = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        logits = [float(q[i] @ k[j]) / math.sqrt(d) for j in range(k.shape[0])]
        m = max(logits)
        weights = [math.exp(l - m) for l in logits]
        total = sum(weights)
        for j in range(k.shape[0]):
            out[i] += (weights[j] / total) * v[j]
    return out


@pytest.fixture
def params():
    rng = np.random.default_rng(97)
    dz, dc, d, dv = 3, 4, 5, 6
    return AttentionParams(
        w_query=rng.standard_normal((dz, d)),
        w_key_text=rng.standard_normal((dc, d)),
        w_value_text=rng.standard_normal((dc, dv)),
        w_key_visual=rng.standard_normal((dc, d)),
        w_value_visual=rng.standard_normal((dc, dv)),
        key_dim=d,
    )


@pytest.fixture
def contexts():
    rng = np.random.default_rng(101)
    z = rng.standard_normal((2, 3))
    text = rng.standard_normal((4, 4))
    visual = rng.standard_normal((5, 4))
    return z, text, visual


class TestCrossAttention:
    def test_single_context_vector_passthrough(self, params):
        rng = np.random.default_rng(103)
        z = rng.standard_normal((3, 3))
        c = rng.standard_normal((1, 4))
        out = cross_attention(z, c, params.w_query, params.w_key_text,
                              params.w_value_text, params.key_dim)
        expected = np.repeat(c @ params.w_value_text, 3, axis=0)
        assert np.allclose(out, expected, atol=1e-12)

    def test_duplicate_context_rows_equal_single(self, params):
        rng = np.random.default_rng(107)
        z = rng.standard_normal((2, 3))
        c1 = rng.standard_normal((1, 4))
        c2 = np.repeat(c1, 2, axis=0)
        a = cross_attention(z, c1, params.w_query, params.w_key_text,
                            params.w_value_text, params.key_dim)
        b = cross_attention(z, c2, params.w_query, params.w_key_text,
                            params.w_value_text, params.key_dim)
        assert np.allclose(a, b, atol=1e-12)

    def test_matches_loop_oracle(self, params, contexts):
        z, text, _ = contexts
        out = cross_attention(z, text, params.w_query, params.w_key_text,
                              params.w_value_text, params.key_dim)
        ref = loop_attention_oracle(z, text, params.w_query, params.w_key_text,
                                    params.w_value_text, params.key_dim)
        assert np.allclose(out, ref, atol=1e-9)

    def test_rows_are_convex_combinations(self, params, contexts):
        z, text, _ = contexts
        out = cross_attention(z, text, params.w_query, params.w_key_text,
                              params.w_value_text, params.key_dim)
        values = text @ params.w_value_text
        lo = values.min(axis=0) - 1e-12
        hi = values.max(axis=0) + 1e-12
        assert np.all(out >= lo) and np.all(out <= hi)

    def test_permutation_invariance(self, params, contexts):
        z, text, _ = contexts
        base = cross_attention(z, text, params.w_query, params.w_key_text,
                               params.w_value_text, params.key_dim)
        perm = np.random.default_rng(109).permutation(text.shape[0])
        shuffled = cross_attention(z, text[perm], params.w_query, params.w_key_text,
                                   params.w_value_text, params.key_dim)
        assert np.allclose(base, shuffled, atol=1e-12)

    def test_key_scale_compensation(self, params, contexts):
        # Scaling keys by s and d by s^2 leaves logits unchanged.
        z, text, _ = contexts
        s = 2.0
        base = cross_attention(z, text, params.w_query, params.w_key_text,
                               params.w_value_text, params.key_dim)
        scaled = cross_attention(z, text, params.w_query, params.w_key_text * s,
                                 params.w_value_text, int(params.key_dim * s * s))
        assert np.allclose(base, scaled, atol=1e-12)

    def test_shape_mismatch(self, params):
        with pytest.raises(ShapeMismatch):
            cross_attention(np.zeros((2, 7)), np.zeros((3, 4)), params.w_query,
                            params.w_key_text, params.w_value_text, params.key_dim)
        with pytest.raises(ShapeMismatch):
            cross_attention(np.zeros((2, 3)), np.zeros((0, 4)), params.w_query,
                            params.w_key_text, params.w_value_text, params.key_dim)


class TestDualAttention:
    def test_zero_visual_values_leave_text_branch(self, params, contexts):
        z, text, visual = contexts
        zeroed = AttentionParams(
            w_query=params.w_query,
            w_key_text=params.w_key_text,
            w_value_text=params.w_value_text,
            w_key_visual=params.w_key_visual,
            w_value_visual=np.zeros_like(params.w_value_visual),
            key_dim=params.key_dim,
        )
        out = dual_cross_attention(z, text, visual, zeroed)
        text_only = cross_attention(z, text, params.w_query, params.w_key_text,
                                    params.w_value_text, params.key_dim)
        assert np.allclose(out, text_only, atol=1e-12)

    def test_identical_branches_double(self, params, contexts):
        z, text, _ = contexts
        twin = AttentionParams(
            w_query=params.w_query,
            w_key_text=params.w_key_text,
            w_value_text=params.w_value_text,
            w_key_visual=params.w_key_text,
            w_value_visual=params.w_value_text,
            key_dim=params.key_dim,
        )
        out = dual_cross_attention(z, text, text, twin)
        single = cross_attention(z, text, params.w_query, params.w_key_text,
                                 params.w_value_text, params.key_dim)
        assert np.allclose(out, 2 * single, atol=1e-12)

    def test_compositional_oracle(self, params, contexts):
        z, text, visual = contexts
        out = dual_cross_attention(z, text, visual, params)
        expected = cross_attention(
            z, text, params.w_query, params.w_key_text, params.w_value_text, params.key_dim
        ) + cross_attention(
            z, visual, params.w_query, params.w_key_visual, params.w_value_visual, params.key_dim
        )
        assert np.allclose(out, expected, atol=1e-12)


class TestGuidedAttention:
    def test_zero_weight_is_text_only(self, params, contexts):
        z, text, visual = contexts
        out = guided_attention(z, text, visual, params, GuidanceConfig(visual_weight=0.0))
        text_only = cross_attention(z, text, params.w_query, params.w_key_text,
                                    params.w_value_text, params.key_dim)
        assert np.allclose(out, text_only, atol=1e-12)

    def test_unit_weight_is_dual(self, params, contexts):
        z, text, visual = contexts
        out = guided_attention(z, text, visual, params, GuidanceConfig(visual_weight=1.0))
        assert np.allclose(out, dual_cross_attention(z, text, visual, params), atol=1e-12)

    def test_default_half_weight(self, params, contexts):
        z, text, visual = contexts
        out = guided_attention(z, text, visual, params)  # default 0.5
        text_branch = cross_attention(z, text, params.w_query, params.w_key_text,
                                      params.w_value_text, params.key_dim)
        visual_branch = cross_attention(z, visual, params.w_query, params.w_key_visual,
                                        params.w_value_visual, params.key_dim)
        assert np.allclose(out, text_branch + 0.5 * visual_branch, atol=1e-12)

    def test_affine_in_weight(self, params, contexts):
        z, text, visual = contexts
        at_zero = guided_attention(z, text, visual, params, GuidanceConfig(0.0))
        at_one = guided_attention(z, text, visual, params, GuidanceConfig(1.0))
        for weight in (0.25, 0.5, 0.75, 2.0):
            out = guided_attention(z, text, visual, params, GuidanceConfig(weight))
            expected = at_zero + weight * (at_one - at_zero)
            assert np.allclose(out, expected, atol=1e-12)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            GuidanceConfig(visual_weight=-0.1)


class TestNoiseLoss:
    def test_identical_zero(self):
        x = np.random.default_rng(113).standard_normal((3, 4))
        assert diffusion_noise_loss(x, x) == 0.0

    def test_constant_offset(self):
        true = np.zeros(5)
        pred = np.ones(5)
        assert diffusion_noise_loss(true, pred, "sum") == pytest.approx(5.0)
        assert diffusion_noise_loss(true, pred, "mean") == pytest.approx(1.0)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(127)
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((2, 3, 4))
        expected = sum(
            (float(x) - float(y)) ** 2 for x, y in zip(a.ravel(), b.ravel())
        )
        assert diffusion_noise_loss(a, b) == pytest.approx(expected, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            diffusion_noise_loss(np.zeros(3), np.zeros(4))

    def test_bad_reduction(self):
        with pytest.raises(ValueError):
            diffusion_noise_loss(np.zeros(3), np.zeros(3), "max")
