"""Reference implementations of the conditioning math.

Dense, double-precision, single-head: these functions exist to pin down the
numerics (softmax cross-attention, the dual text+visual combination, the
lambda-guided variant, and the noise-prediction loss) for tests and
documentation, not to train anything. The dual form shares one query
projection across both branches; the guided form scales only the visual
branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class AttentionParams:
    """Projection matrices for the text and visual branches.

    w_query maps queries (shared by both branches); w_key_*/w_value_* map
    each branch's context. key_dim is the scaled-dot-product denominator's d.
    """

    w_query: np.ndarray
    w_key_text: np.ndarray
    w_value_text: np.ndarray
    w_key_visual: np.ndarray
    w_value_visual: np.ndarray
    key_dim: int

    def __post_init__(self):
        for name in ("w_query", "w_key_text", "w_value_text", "w_key_visual", "w_value_visual"):
            matrix = np.asarray(getattr(self, name), dtype=np.float64)
            if matrix.ndim != 2 or not np.all(np.isfinite(matrix)):
                raise ShapeMismatch(f"{name} must be a finite 2-D matrix")
            object.__setattr__(self, name, matrix)
        if self.key_dim <= 0:
            raise ShapeMismatch("key_dim must be positive")


@dataclass(frozen=True)
class GuidanceConfig:
    """Weight on the visual branch at inference time."""

    visual_weight: float = 0.5

    def __post_init__(self):
        if not np.isfinite(self.visual_weight) or self.visual_weight < 0:
            raise ValueError("visual_weight must be finite and >= 0")


def _as_matrix(name: str, value) -> np.ndarray:
    matrix = np.asarray(value, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {matrix.shape}")
    return matrix


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=1, keepdims=True)


def cross_attention(queries, context, w_query, w_key, w_value, key_dim: int) -> np.ndarray:
    """softmax(Q K^T / sqrt(d)) V for a single branch."""
    z = _as_matrix("queries", queries)
    c = _as_matrix("context", context)
    w_q = _as_matrix("w_query", w_query)
    w_k = _as_matrix("w_key", w_key)
    w_v = _as_matrix("w_value", w_value)
    if z.shape[1] != w_q.shape[0]:
        raise ShapeMismatch(f"queries dim {z.shape[1]} vs w_query rows {w_q.shape[0]}")
    if c.shape[1] != w_k.shape[0] or c.shape[1] != w_v.shape[0]:
        raise ShapeMismatch(f"context dim {c.shape[1]} does not match projections")
    if w_q.shape[1] != w_k.shape[1]:
        raise ShapeMismatch("query and key projections must share the key dimension")
    if c.shape[0] == 0:
        raise ShapeMismatch("context must contain at least one row")
    if key_dim <= 0:
        raise ShapeMismatch("key_dim must be positive")
    q = z @ w_q
    k = c @ w_k
    v = c @ w_v
    weights = _softmax_rows(q @ k.T / np.sqrt(float(key_dim)))
    return weights @ v


def dual_cross_attention(queries, text_context, visual_context, params: AttentionParams) -> np.ndarray:
    """Sum of the text and visual branches, sharing the text-side query."""
    text = cross_attention(
        queries, text_context, params.w_query, params.w_key_text,
        params.w_value_text, params.key_dim,
    )
    visual = cross_attention(
        queries, visual_context, params.w_query, params.w_key_visual,
        params.w_value_visual, params.key_dim,
    )
    return text + visual


def guided_attention(
    queries,
    text_context,
    visual_context,
    params: AttentionParams,
    guidance: GuidanceConfig = GuidanceConfig(),
) -> np.ndarray:
    """Text branch plus visual_weight times the visual branch."""
    text = cross_attention(
        queries, text_context, params.w_query, params.w_key_text,
        params.w_value_text, params.key_dim,
    )
    visual = cross_attention(
        queries, visual_context, params.w_query, params.w_key_visual,
        params.w_value_visual, params.key_dim,
    )
    return text + guidance.visual_weight * visual


def diffusion_noise_loss(eps_true, eps_pred, reduction: str = "sum") -> float:
    """Squared error between true and predicted noise; sum or mean reduced."""
    a = np.asarray(eps_true, dtype=np.float64)
    b = np.asarray(eps_pred, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    if reduction not in ("sum", "mean"):
        raise ValueError("reduction must be 'sum' or 'mean'")
    difference = (a - b) ** 2
    return float(difference.sum() if reduction == "sum" else difference.mean())
