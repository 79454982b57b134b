"""Invariant suites for the math modules, runnable from the CLI.

Each check is a named callable that raises AssertionError on failure; the
runner prints one line per invariant and reports overall success. Seeds are
fixed so the suite is reproducible.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .attention import (
    AttentionParams,
    GuidanceConfig,
    cross_attention,
    diffusion_noise_loss,
    dual_cross_attention,
    guided_attention,
)
from .tokens import (
    Codebook,
    FrameSequence,
    codebook_inertia,
    decode_token_string,
    dequantize,
    encode_token_string,
    fit_codebook,
    nll_loss,
    quantize,
    temporal_aggregate,
    tokens_for_duration,
)


def _attention_fixture():
    rng = np.random.default_rng(2024)
    params = AttentionParams(
        w_query=rng.standard_normal((3, 5)),
        w_key_text=rng.standard_normal((4, 5)),
        w_value_text=rng.standard_normal((4, 6)),
        w_key_visual=rng.standard_normal((4, 5)),
        w_value_visual=rng.standard_normal((4, 6)),
        key_dim=5,
    )
    z = rng.standard_normal((2, 3))
    text = rng.standard_normal((4, 4))
    visual = rng.standard_normal((5, 4))
    return params, z, text, visual


def check_softmax_rows_sum_to_one():
    params, z, text, _ = _attention_fixture()
    q = z @ params.w_query
    k = text @ params.w_key_text
    logits = q @ k.T / math.sqrt(params.key_dim)
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    assert np.allclose(weights.sum(axis=1), 1.0, atol=1e-12)


def check_guided_weight_zero_is_text_only():
    params, z, text, visual = _attention_fixture()
    out = guided_attention(z, text, visual, params, GuidanceConfig(0.0))
    text_only = cross_attention(
        z, text, params.w_query, params.w_key_text, params.w_value_text, params.key_dim
    )
    assert np.allclose(out, text_only, atol=1e-12)


def check_guided_weight_one_is_dual():
    params, z, text, visual = _attention_fixture()
    out = guided_attention(z, text, visual, params, GuidanceConfig(1.0))
    assert np.allclose(out, dual_cross_attention(z, text, visual, params), atol=1e-12)


def check_guided_affine_in_weight():
    params, z, text, visual = _attention_fixture()
    at_zero = guided_attention(z, text, visual, params, GuidanceConfig(0.0))
    at_one = guided_attention(z, text, visual, params, GuidanceConfig(1.0))
    for w in (0.25, 0.5, 0.75):
        out = guided_attention(z, text, visual, params, GuidanceConfig(w))
        assert np.allclose(out, at_zero + w * (at_one - at_zero), atol=1e-12)


def check_attention_permutation_invariance():
    params, z, text, _ = _attention_fixture()
    base = cross_attention(
        z, text, params.w_query, params.w_key_text, params.w_value_text, params.key_dim
    )
    perm = np.random.default_rng(7).permutation(text.shape[0])
    shuffled = cross_attention(
        z, text[perm], params.w_query, params.w_key_text, params.w_value_text, params.key_dim
    )
    assert np.allclose(base, shuffled, atol=1e-12)


def check_attention_key_scale_compensation():
    params, z, text, _ = _attention_fixture()
    base = cross_attention(
        z, text, params.w_query, params.w_key_text, params.w_value_text, params.key_dim
    )
    scaled = cross_attention(
        z, text, params.w_query, params.w_key_text * 2.0, params.w_value_text,
        params.key_dim * 4,
    )
    assert np.allclose(base, scaled, atol=1e-12)


def check_noise_loss_elementwise():
    rng = np.random.default_rng(11)
    a = rng.standard_normal(12)
    b = rng.standard_normal(12)
    assert abs(diffusion_noise_loss(a, b) - float(((a - b) ** 2).sum())) < 1e-12
    assert diffusion_noise_loss(a, a) == 0.0


def check_quantize_round_trip():
    rng = np.random.default_rng(13)
    codebook = Codebook(rng.standard_normal((32, 4)))
    frames = FrameSequence(rng.standard_normal((100, 4)), 50.0)
    tokens = quantize(frames, codebook)
    assert all(0 <= i < 32 for i in tokens.indices)
    once = dequantize(tokens, codebook)
    again = dequantize(quantize(once, codebook), codebook)
    assert np.array_equal(once.frames, again.frames)


def check_token_string_bijection():
    rng = np.random.default_rng(17)
    for _ in range(50):
        seq = tuple(int(i) for i in rng.integers(0, 500, size=rng.integers(0, 40)))
        assert decode_token_string(encode_token_string(seq)) == seq


def check_nll_uniform_and_shift():
    logits = np.zeros((3, 504))
    assert abs(nll_loss(logits, [0, 5, 503]) - 3 * math.log(504)) < 1e-9
    rng = np.random.default_rng(19)
    random_logits = rng.standard_normal((4, 12))
    targets = rng.integers(0, 12, size=4)
    assert abs(
        nll_loss(random_logits, targets) - nll_loss(random_logits + 55.5, targets)
    ) < 1e-9
    assert nll_loss(random_logits, targets) >= 0


def check_kmeans_inertia_monotone():
    rng = np.random.default_rng(23)
    means = rng.uniform(-4, 4, size=(4, 3))
    points = np.concatenate([m + 0.05 * rng.standard_normal((40, 3)) for m in means])
    data = FrameSequence(points, 50.0)
    inertias = [
        codebook_inertia(data, fit_codebook(data, k=4, iterations=i, seed=3))
        for i in range(1, 8)
    ]
    assert all(b <= a + 1e-9 for a, b in zip(inertias, inertias[1:]))


def check_temporal_delta_identity():
    rng = np.random.default_rng(29)
    frames = FrameSequence(rng.standard_normal((6, 3)), 21.5)
    out = temporal_aggregate(frames, [0, 1, 0], np.eye(3))
    assert np.allclose(out.frames, frames.frames, atol=1e-15)


def check_rate_arithmetic():
    assert tokens_for_duration(10, 50) == 500
    assert tokens_for_duration(10, 21.5) == 215


CHECKS: list[tuple[str, Callable[[], None]]] = [
    ("softmax rows sum to one", check_softmax_rows_sum_to_one),
    ("guidance 0 reduces to text-only attention", check_guided_weight_zero_is_text_only),
    ("guidance 1 recovers dual attention", check_guided_weight_one_is_dual),
    ("guided attention is affine in the weight", check_guided_affine_in_weight),
    ("attention is permutation invariant", check_attention_permutation_invariance),
    ("key scaling compensates in logits", check_attention_key_scale_compensation),
    ("noise loss matches elementwise oracle", check_noise_loss_elementwise),
    ("quantize/dequantize idempotent on lattice", check_quantize_round_trip),
    ("token strings are a bijection", check_token_string_bijection),
    ("NLL uniform value and shift invariance", check_nll_uniform_and_shift),
    ("k-means inertia non-increasing", check_kmeans_inertia_monotone),
    ("temporal delta kernel is identity", check_temporal_delta_identity),
    ("token/frame rate arithmetic", check_rate_arithmetic),
]


def run_selftest(echo: Callable[[str], None] = print) -> bool:
    """Run every invariant; returns True when all pass."""
    all_ok = True
    for name, check in CHECKS:
        try:
            check()
        except AssertionError as exc:
            all_ok = False
            echo(f"FAIL {name}: {exc}")
        else:
            echo(f"ok   {name}")
    return all_ok
