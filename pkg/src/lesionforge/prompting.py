"""Deterministic tensor front-end for region-guided report generation:
mask downsampling to feature resolution, masked regional pooling, and
dimension-wise concatenation + token flattening.

The learned encoder/projector/decoder are external; this module fixes the
array contracts they plug into (identity projection by default).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .grid import BinaryMask, _freeze


@dataclass(frozen=True)
class FeatureGrid:
    """A (h, w, d, channels) real-valued feature map."""

    dims: tuple
    channels: int
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        vals = np.asarray(self.values, dtype=np.float32)
        want = dims + (int(self.channels),)
        if vals.shape != want:
            if vals.size == int(np.prod(want)):
                vals = vals.reshape(want)
            else:
                raise ValueError(f"values shape {vals.shape} incompatible with {want}")
        if not np.isfinite(vals).all():
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "channels", int(self.channels))
        object.__setattr__(self, "values", _freeze(vals, self.values))


@dataclass(frozen=True)
class TokenSequence:
    """A flattened (P, channels) token sequence with its pre-flatten dims."""

    length: int
    channels: int
    grid_dims: tuple
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.grid_dims)
        if int(np.prod(dims)) != int(self.length):
            raise ValueError(f"length {self.length} != product of grid dims {dims}")
        vals = np.asarray(self.values, dtype=np.float32)
        want = (int(self.length), int(self.channels))
        if vals.shape != want:
            raise ValueError(f"values shape {vals.shape} != {want}")
        object.__setattr__(self, "grid_dims", dims)
        object.__setattr__(self, "values", _freeze(vals, self.values))


def _block_edges(size: int, target: int) -> list[int]:
    # leading blocks take ceil(size/target), trailing ones the floor;
    # never produces an empty block
    q, r = divmod(size, target)
    edges = [0]
    for i in range(target):
        edges.append(edges[-1] + q + (1 if i < r else 0))
    return edges


def downsample_mask(m: BinaryMask, target_dims, rule: str = "any") -> BinaryMask:
    """Reduce a mask to feature resolution by block aggregation.

    Non-divisible axes split into leading ceiling-size blocks and smaller
    trailing ones, so every target cell aggregates at least one source
    voxel. ``any`` marks a cell when any source voxel is set, ``majority``
    when more than half are.
    """
    if rule not in ("any", "majority"):
        raise ValueError(f"rule must be 'any' or 'majority', got {rule!r}")
    target = tuple(int(t) for t in target_dims)
    if any(t < 1 for t in target):
        raise ValueError("target dims must be positive")
    if any(t > s for t, s in zip(target, m.dims)):
        raise ValueError(f"target dims {target} exceed source dims {m.dims}")
    ex, ey, ez = (_block_edges(s, t) for s, t in zip(m.dims, target))
    out = np.zeros(target, dtype=bool)
    for i in range(target[0]):
        for j in range(target[1]):
            for k in range(target[2]):
                sub = m.bits[ex[i]:ex[i + 1], ey[j]:ey[j + 1], ez[k]:ez[k + 1]]
                out[i, j, k] = sub.any() if rule == "any" else sub.sum() * 2 > sub.size
    return BinaryMask(target, out)


def mask_pool(f_g: FeatureGrid, m: BinaryMask) -> FeatureGrid:
    """Regional features: keep channels where the mask is set, zero elsewhere."""
    if tuple(m.dims) != tuple(f_g.dims):
        raise ValueError(f"mask dims {tuple(m.dims)} != feature dims {tuple(f_g.dims)}")
    pooled = np.where(m.bits[..., None], f_g.values, np.float32(0.0))
    return FeatureGrid(f_g.dims, f_g.channels, pooled)


def concat_flatten(f_g: FeatureGrid, f_l: FeatureGrid) -> TokenSequence:
    """Concatenate global and regional channels, flatten to visual tokens.

    Token order is row-major over (h, w, d); each token carries the global
    channels followed by the regional channels (2 * channels total).
    """
    if tuple(f_g.dims) != tuple(f_l.dims) or f_g.channels != f_l.channels:
        raise ValueError("feature grids must share dims and channels")
    con = np.concatenate([f_g.values, f_l.values], axis=-1)
    P = int(np.prod(f_g.dims))
    return TokenSequence(P, 2 * f_g.channels, f_g.dims, con.reshape(P, 2 * f_g.channels))


def unflatten(tokens: TokenSequence) -> tuple[FeatureGrid, FeatureGrid]:
    """Inverse of concat_flatten: recover the (global, regional) grids."""
    if tokens.channels % 2 != 0:
        raise ValueError("token channels must be even (global + regional halves)")
    dim = tokens.channels // 2
    grid = tokens.values.reshape(tokens.grid_dims + (tokens.channels,))
    return (
        FeatureGrid(tokens.grid_dims, dim, grid[..., :dim]),
        FeatureGrid(tokens.grid_dims, dim, grid[..., dim:]),
    )


_GRID_MAGIC = b"LFG1"
_TOKEN_MAGIC = b"LFT1"


def write_feature_grid(f: FeatureGrid, path) -> None:
    """Raw little-endian float32 dump with a dims header, for interop."""
    from .nifti import _atomic_write

    head = _GRID_MAGIC + struct.pack("<4i", *f.dims, f.channels)
    _atomic_write(path, head + f.values.astype("<f4").tobytes())


def read_feature_grid(path) -> FeatureGrid:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _GRID_MAGIC:
        raise ValueError("not a feature grid dump")
    h, w, d, c = struct.unpack_from("<4i", blob, 4)
    values = np.frombuffer(blob[20:], dtype="<f4").reshape(h, w, d, c)
    return FeatureGrid((h, w, d), c, values)


def write_token_sequence(t: TokenSequence, path) -> None:
    from .nifti import _atomic_write

    head = _TOKEN_MAGIC + struct.pack("<5i", t.length, t.channels, *t.grid_dims)
    _atomic_write(path, head + t.values.astype("<f4").tobytes())


def read_token_sequence(path) -> TokenSequence:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _TOKEN_MAGIC:
        raise ValueError("not a token sequence dump")
    p, c, h, w, d = struct.unpack_from("<5i", blob, 4)
    values = np.frombuffer(blob[24:], dtype="<f4").reshape(p, c)
    return TokenSequence(p, c, (h, w, d), values)
