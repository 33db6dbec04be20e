"""Attention kernels: dense reference paths, a block-streaming masked kernel
with online softmax, and relational cross-attention with the level mask
scaled by a pooled query-key similarity estimate.

All kernels follow the dtype of their inputs (float32 in production, float64
when tests want oracle precision) and are deterministic for fixed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .layout import LayoutSpec
from .masks import Block, CsamMask, McamMask


@dataclass(frozen=True)
class AttnConfig:
    """Cross-attention knobs: level-mask strength ``r``, spatial pooling
    factor ``d``, and an optional logit scale override (default 1/sqrt(d_K))."""

    r: float = 0.5
    d: int = 8
    scale: float | None = None

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"r must be >= 0, got {self.r}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")


def _as_matrix(name: str, x: np.ndarray, require_finite: bool = True) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    if require_finite and x.size and not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite entries")
    return x


def _default_scale(k_cols: int) -> float:
    return 1.0 / math.sqrt(k_cols)


def _attend(Q, K, V, additive, scale, return_weights):
    """softmax((Q K^T [+ additive]) * scale) V with row-max stabilization.

    ``additive=None`` is plain attention; an all-zero additive gives
    bit-identical results to it.
    """
    logits = Q @ K.T
    if additive is not None:
        logits = logits + additive
    logits = logits * logits.dtype.type(scale)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    out = w @ V
    return (out, w) if return_weights else out


def standard_attention(Q, K, V, scale: float | None = None, return_weights: bool = False):
    """Unmasked scaled-dot-product attention (baseline for equivalence tests)."""
    Q, K, V = _as_matrix("Q", Q, False), _as_matrix("K", K, False), _as_matrix("V", V, False)
    if Q.shape[1] != K.shape[1] or K.shape[0] != V.shape[0]:
        raise ValueError(f"incompatible shapes Q{Q.shape} K{K.shape} V{V.shape}")
    if K.shape[0] == 0:
        raise ValueError("attention requires at least one key")
    return _attend(Q, K, V, None, scale if scale is not None else _default_scale(K.shape[1]), return_weights)


def masked_self_attention_naive(
    Q, K, V, mask: CsamMask, scale: float | None = None, return_weights: bool = False
):
    """Dense masked self-attention; masked keys get exactly zero weight.

    Masked logits become -inf, and after row-max subtraction the -inf
    sentinel is clamped to the most-negative finite value so exp underflows
    to an exact 0 without producing NaN.
    """
    Q, K, V = _as_matrix("Q", Q), _as_matrix("K", K), _as_matrix("V", V)
    if not (Q.shape[0] == K.shape[0] == V.shape[0] == mask.n):
        raise ValueError(
            f"Q/K/V must each have {mask.n} rows, got {Q.shape[0]}/{K.shape[0]}/{V.shape[0]}"
        )
    if Q.shape[1] != K.shape[1]:
        raise ValueError(f"Q and K feature dims differ: {Q.shape[1]} vs {K.shape[1]}")
    if not mask.bits.any(axis=1).all():
        raise ValueError("mask has a query row with no admissible key")

    if scale is None:
        scale = _default_scale(K.shape[1])
    logits = (Q @ K.T) * Q.dtype.type(scale)
    logits = np.where(mask.bits, logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    np.maximum(logits, np.finfo(logits.dtype).min, out=logits)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    out = w @ V
    return (out, w) if return_weights else out


def _validate_blocks(blocks: Sequence[Block], n: int) -> None:
    covered = np.zeros(n, dtype=bool)
    for blk in blocks:
        if blk.q1 > n or blk.k1 > n:
            raise ValueError(f"{blk} exceeds sequence length {n}")
        covered[blk.q0 : blk.q1] = True
    for i, a in enumerate(blocks):
        for b in blocks[i + 1 :]:
            if a.q0 < b.q1 and b.q0 < a.q1 and a.k0 < b.k1 and b.k0 < a.k1:
                raise ValueError(f"overlapping blocks: {a} and {b}")
    if not covered.all():
        raise ValueError(f"query row {int(np.flatnonzero(~covered)[0])} covered by no block")


def masked_self_attention_blockwise(Q, K, V, blocks: Sequence[Block], scale: float | None = None):
    """Streaming masked self-attention over a disjoint block cover.

    Keeps a running max and normalizer per query row (online softmax), so the
    result matches the dense masked kernel for any block visit order.
    """
    Q, K, V = _as_matrix("Q", Q), _as_matrix("K", K), _as_matrix("V", V)
    n = Q.shape[0]
    if K.shape[0] != n or V.shape[0] != n:
        raise ValueError(f"K/V must have {n} rows, got {K.shape[0]}/{V.shape[0]}")
    if Q.shape[1] != K.shape[1]:
        raise ValueError(f"Q and K feature dims differ: {Q.shape[1]} vs {K.shape[1]}")
    _validate_blocks(blocks, n)
    if scale is None:
        scale = _default_scale(K.shape[1])

    dt = Q.dtype
    running_max = np.full(n, -np.inf, dtype=dt)
    normalizer = np.zeros(n, dtype=dt)
    acc = np.zeros((n, V.shape[1]), dtype=dt)
    for blk in blocks:
        qs, ks = slice(blk.q0, blk.q1), slice(blk.k0, blk.k1)
        logits = (Q[qs] @ K[ks].T) * dt.type(scale)
        new_max = np.maximum(running_max[qs], logits.max(axis=1))
        carry = np.exp(running_max[qs] - new_max)
        p = np.exp(logits - new_max[:, None])
        acc[qs] = acc[qs] * carry[:, None] + p @ V[ks]
        normalizer[qs] = normalizer[qs] * carry + p.sum(axis=1)
        running_max[qs] = new_max
    return acc / normalizer[:, None]


def _patch_edges(extent: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Start offsets and cell counts of the d-sized patches along one axis;
    the last patch may be ragged."""
    starts = np.arange(0, extent, d)
    counts = np.diff(np.append(starts, extent))
    return starts, counts


def compute_scaling_s(Q, K_text, spec: LayoutSpec, d: int) -> np.ndarray:
    """Position-wise |Q K^T| estimate from spatially average-pooled queries.

    Each frame's H x W query grid is mean-pooled over d x d patches (ragged
    edges average their actual cells), the pooled queries are scored against
    the text keys, and each patch's |similarity| row is repeated over every
    token of the patch.  d=1 reduces to the exact |Q K^T|.
    """
    Q, K_text = _as_matrix("Q", Q), _as_matrix("K_text", K_text)
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if Q.shape[0] != spec.n_tokens:
        raise ValueError(f"Q must have {spec.n_tokens} rows (z' layout), got {Q.shape[0]}")
    if Q.shape[1] != K_text.shape[1]:
        raise ValueError(f"Q and K_text feature dims differ: {Q.shape[1]} vs {K_text.shape[1]}")

    frames = spec.T + spec.n_entities
    grid = Q.reshape(frames, spec.H, spec.W, Q.shape[1])
    row_starts, row_counts = _patch_edges(spec.H, d)
    col_starts, col_counts = _patch_edges(spec.W, d)
    sums = np.add.reduceat(grid, row_starts, axis=1)
    sums = np.add.reduceat(sums, col_starts, axis=2)
    cells = (row_counts[:, None] * col_counts[None, :]).astype(Q.dtype)
    pooled = sums / cells[None, :, :, None]

    n_text = K_text.shape[0]
    sim = np.abs(pooled.reshape(-1, Q.shape[1]) @ K_text.T)
    sim = sim.reshape(frames, len(row_starts), len(col_starts), n_text)
    full = np.repeat(np.repeat(sim, row_counts, axis=1), col_counts, axis=2)
    return full.reshape(spec.n_tokens, n_text)


def relational_cross_attention(
    Q, K, V, mcam: McamMask, s, cfg: AttnConfig, return_weights: bool = False
):
    """Cross-attention with the level mask injected additively as M*s*r.

    The full sum (logits plus the mask term) is scaled by 1/sqrt(d_K); with
    r=0 the additive term vanishes and the kernel is bit-identical to
    :func:`standard_attention`.
    """
    Q, K, V = _as_matrix("Q", Q, False), _as_matrix("K", K, False), _as_matrix("V", V, False)
    s = _as_matrix("s", s)
    levels = mcam.levels
    if Q.shape[0] != levels.shape[0] or s.shape[0] != levels.shape[0]:
        raise ValueError(
            f"Q/s must have {levels.shape[0]} rows, got {Q.shape[0]}/{s.shape[0]}"
        )
    if K.shape[0] != levels.shape[1] or s.shape[1] != levels.shape[1] or V.shape[0] != K.shape[0]:
        raise ValueError(
            f"K/V/s must span {levels.shape[1]} text tokens, got {K.shape[0]}/{V.shape[0]}/{s.shape[1]}"
        )
    if Q.shape[1] != K.shape[1]:
        raise ValueError(f"Q and K feature dims differ: {Q.shape[1]} vs {K.shape[1]}")
    if K.shape[0] == 0:
        raise ValueError("cross-attention requires at least one text token")

    additive = levels.astype(Q.dtype) * s * Q.dtype.type(cfg.r)
    scale = cfg.scale if cfg.scale is not None else _default_scale(K.shape[1])
    return _attend(Q, K, V, additive, scale, return_weights)
