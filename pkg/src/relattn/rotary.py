"""Relational 3D rotary positions.

Video tokens keep the standard raster ``(i, j, k)`` triple (frame, width,
height).  Condition frames are stacked past the video along the temporal
axis: every background/object entity gets its own ``i``, while the face and
attributes of one subject group share a single ``i`` and are pushed apart by
diagonal ``(W*m, H*m)`` offsets in the spatial plane.  The rotation itself is
the usual interleaved-pair construction, applied independently per axis
sub-band.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .layout import SUBJECT_KINDS, LayoutSpec


@dataclass(frozen=True)
class Position3:
    i: int
    j: int
    k: int


@dataclass(frozen=True)
class RotaryConfig:
    """Per-head rotary parameters.

    ``split`` gives the channel widths for the (i, j, k) sub-bands; each must
    be even and >= 2 and they must sum to ``head_dim``.  Pairs are interleaved:
    channels (2m, 2m+1) inside a band rotate together.
    """

    head_dim: int
    split: tuple[int, int, int]
    base: float = 10000.0

    def __post_init__(self):
        if sum(self.split) != self.head_dim:
            raise ValueError(f"split {self.split} must sum to head_dim {self.head_dim}")
        for d in self.split:
            if d < 2 or d % 2 != 0:
                raise ValueError(f"each sub-band width must be even and >= 2, got {self.split}")
        if self.base <= 0:
            raise ValueError("base must be positive")


def default_split(head_dim: int) -> tuple[int, int, int]:
    """Largest even split with d_i >= d_j = d_k summing to head_dim."""
    if head_dim < 6 or head_dim % 2 != 0:
        raise ValueError(f"head_dim must be an even integer >= 6, got {head_dim}")
    dj = (head_dim // 3) // 2 * 2
    dj = max(dj, 2)
    return head_dim - 2 * dj, dj, dj


def default_config(head_dim: int, base: float = 10000.0) -> RotaryConfig:
    return RotaryConfig(head_dim=head_dim, split=default_split(head_dim), base=base)


def assign_positions(spec: LayoutSpec) -> list[Position3]:
    """One position triple per token of the concatenated sequence.

    Triples are pairwise distinct across the whole sequence: condition
    branches live at dedicated temporal indices and group members are
    separated by the diagonal spatial offsets.
    """
    positions: list[Position3] = []
    for frame in range(spec.T):
        for row in range(spec.H):
            for col in range(spec.W):
                positions.append(Position3(i=frame, j=col, k=row))

    group_of = {m: g for g, members in enumerate(spec.groups) for m in members}
    member_of = {m: n for members in spec.groups for n, m in enumerate(members)}
    bgobj_ordinal = 0
    for e, ent in enumerate(spec.entities):
        if ent.kind in SUBJECT_KINDS:
            i = group_of[e] + spec.T + spec.n_bgobj
            m = member_of[e]
            dj, dk = spec.W * m, spec.H * m
        else:
            i = bgobj_ordinal + spec.T
            bgobj_ordinal += 1
            dj = dk = 0
        for row in range(spec.H):
            for col in range(spec.W):
                positions.append(Position3(i=i, j=col + dj, k=row + dk))
    return positions


def positions_as_array(positions: Sequence[Position3]) -> np.ndarray:
    """(n, 3) int64 array of (i, j, k) rows."""
    return np.array([(p.i, p.j, p.k) for p in positions], dtype=np.int64)


def _band_angles(coord: np.ndarray, d_axis: int, base: float) -> np.ndarray:
    """(n, d_axis/2) angles theta_m * coord with theta_m = base^(-2m/d_axis)."""
    m = np.arange(d_axis // 2, dtype=np.float64)
    theta = base ** (-2.0 * m / d_axis)
    return coord[:, None] * theta[None, :]


def apply_rotary(
    x: np.ndarray,
    positions: Sequence[Position3],
    cfg: RotaryConfig,
    inverse: bool = False,
) -> np.ndarray:
    """Rotate each row of ``x`` by its position's per-band angles.

    Row norms are preserved (pure rotation); ``inverse=True`` applies the
    transpose rotation, which undoes the forward one.  Computation follows
    the dtype of ``x``.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != cfg.head_dim:
        raise ValueError(f"x must be (tokens, {cfg.head_dim}), got {x.shape}")
    if x.shape[0] != len(positions):
        raise ValueError(f"{x.shape[0]} rows but {len(positions)} positions")

    pos = positions_as_array(positions).astype(np.float64)
    angles = np.concatenate(
        [_band_angles(pos[:, axis], d_axis, cfg.base) for axis, d_axis in enumerate(cfg.split)],
        axis=1,
    )
    if inverse:
        angles = -angles
    cos = np.cos(angles).astype(x.dtype, copy=False)
    sin = np.sin(angles).astype(x.dtype, copy=False)

    even = x[:, 0::2]
    odd = x[:, 1::2]
    out = np.empty_like(x)
    out[:, 0::2] = even * cos - odd * sin
    out[:, 1::2] = even * sin + odd * cos
    return out
