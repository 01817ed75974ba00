"""3D grid primitives: dilation/erosion, morphological gradient, Gaussian
blur, connected components, and seeded elastic deformation.

All functions are pure; randomness is confined to `elastic_deform`, which
uses a fixed-algorithm generator (PCG64) so outputs are bit-stable across
runs and platforms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import BinaryMask, Volume, _freeze


@dataclass(frozen=True)
class StructuringElement:
    """Neighborhood shape for the binary morphology ops.

    ``ball`` is the Euclidean ball (offsets with |dx|^2+|dy|^2+|dz|^2 <= r^2),
    ``cube`` the Chebyshev ball ((2r+1)^3 box).
    """

    kind: str = "ball"
    radius: int = 1

    def __post_init__(self):
        if self.kind not in ("ball", "cube"):
            raise ValueError(f"kind must be 'ball' or 'cube', got {self.kind!r}")
        if int(self.radius) < 1:
            raise ValueError("radius must be >= 1")
        object.__setattr__(self, "radius", int(self.radius))

    def footprint(self) -> np.ndarray:
        r = self.radius
        if self.kind == "cube":
            return np.ones((2 * r + 1,) * 3, dtype=bool)
        ax = np.arange(-r, r + 1)
        dx, dy, dz = np.meshgrid(ax, ax, ax, indexing="ij")
        return dx * dx + dy * dy + dz * dz <= r * r


BALL_1 = StructuringElement("ball", 1)
BALL_2 = StructuringElement("ball", 2)


@dataclass(frozen=True)
class DisplacementField:
    """Per-voxel 3-component displacement, in voxel units."""

    dims: tuple
    vectors: np.ndarray  # shape dims + (3,)

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float32)
        dims = tuple(int(d) for d in self.dims)
        if vec.shape != dims + (3,):
            raise ValueError(f"vectors shape {vec.shape} != {dims + (3,)}")
        if not np.isfinite(vec).all():
            raise ValueError("displacement components must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "vectors", _freeze(vec, self.vectors))


def dilate(m: BinaryMask, se: StructuringElement = BALL_1) -> BinaryMask:
    """Minkowski sum of the voxel set with the structuring element."""
    return BinaryMask(m.dims, ndimage.binary_dilation(m.bits, structure=se.footprint()))


def erode(m: BinaryMask, se: StructuringElement = BALL_1) -> BinaryMask:
    """Minkowski erosion; outside the grid counts as background."""
    return BinaryMask(m.dims, ndimage.binary_erosion(m.bits, structure=se.footprint()))


def morphological_gradient(m: BinaryMask, se: StructuringElement = BALL_1) -> BinaryMask:
    """dilate(m) minus erode(m): the boundary shell of a solid region."""
    grown = ndimage.binary_dilation(m.bits, structure=se.footprint())
    shrunk = ndimage.binary_erosion(m.bits, structure=se.footprint())
    return BinaryMask(m.dims, grown & ~shrunk)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian kernel truncated at 4 sigma."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return np.ones(1, dtype=np.float64)
    radius = max(1, int(4.0 * sigma + 0.5))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur_array(data: np.ndarray, sigmas) -> np.ndarray:
    """Separable Gaussian blur of a 3D array, reflect boundary handling.

    ``sigmas`` is a scalar or per-axis triple in voxel units; sigma 0 on an
    axis leaves that axis untouched.
    """
    if np.isscalar(sigmas):
        sigmas = (float(sigmas),) * 3
    sigmas = tuple(float(s) for s in sigmas)
    if any(s < 0 for s in sigmas):
        raise ValueError(f"sigmas must be >= 0, got {sigmas}")
    out = np.asarray(data, dtype=np.float64)
    for axis, s in enumerate(sigmas):
        if s == 0:
            continue
        out = ndimage.convolve1d(out, gaussian_kernel_1d(s), axis=axis, mode="reflect")
    return out


def gaussian_blur(v: Volume, sigma) -> Volume:
    """Gaussian blur of a Volume with per-axis sigma in voxels."""
    return v.with_data(blur_array(v.data, sigma).astype(np.float32))


_CONNECTIVITY = {
    6: ndimage.generate_binary_structure(3, 1),
    26: ndimage.generate_binary_structure(3, 3),
}


def connected_components(m: BinaryMask, connectivity: int = 26) -> list[BinaryMask]:
    """Split a mask into maximal connected components.

    Ordering is deterministic: decreasing voxel count, ties broken by the
    smallest row-major linear index of any member voxel.
    """
    if connectivity not in _CONNECTIVITY:
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    labeled, n = ndimage.label(m.bits, structure=_CONNECTIVITY[connectivity])
    if n == 0:
        return []
    flat = labeled.ravel()
    ids, first_idx, counts = np.unique(flat, return_index=True, return_counts=True)
    order = []
    for cid, first, count in zip(ids, first_idx, counts):
        if cid == 0:
            continue
        order.append((-int(count), int(first), int(cid)))
    order.sort()
    return [BinaryMask(m.dims, labeled == cid) for _neg, _first, cid in order]


def elastic_displacement_field(dims, alpha: float, sigma: float, seed: int) -> DisplacementField:
    """Random smooth displacement: uniform [-1,1] noise, per-axis Gaussian
    smoothing with ``sigma``, then rescaled so the largest component
    magnitude equals ``alpha`` voxels (smoothing alone would shrink the
    noise amplitude ~30x and make alpha meaningless as a magnitude)."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in dims)
    noise = rng.uniform(-1.0, 1.0, size=(3,) + dims)
    vec = np.empty(dims + (3,), dtype=np.float32)
    for c in range(3):
        smooth = blur_array(noise[c], sigma)
        peak = np.abs(smooth).max()
        if peak > 0:
            smooth = smooth / peak
        vec[..., c] = (smooth * alpha).astype(np.float32)
    return DisplacementField(dims, vec)


def trilinear_sample(data: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of ``data`` at fractional voxel coordinates.

    ``coords`` has shape (..., 3); samples outside the grid read 0.
    """
    H, W, D = data.shape
    x, y, z = coords[..., 0], coords[..., 1], coords[..., 2]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    z0 = np.floor(z).astype(np.int64)
    fx, fy, fz = x - x0, y - y0, z - z0

    def at(ix, iy, iz):
        inside = (ix >= 0) & (ix < H) & (iy >= 0) & (iy < W) & (iz >= 0) & (iz < D)
        ixc = np.clip(ix, 0, H - 1)
        iyc = np.clip(iy, 0, W - 1)
        izc = np.clip(iz, 0, D - 1)
        return np.where(inside, data[ixc, iyc, izc], 0.0)

    c000 = at(x0, y0, z0)
    c100 = at(x0 + 1, y0, z0)
    c010 = at(x0, y0 + 1, z0)
    c110 = at(x0 + 1, y0 + 1, z0)
    c001 = at(x0, y0, z0 + 1)
    c101 = at(x0 + 1, y0, z0 + 1)
    c011 = at(x0, y0 + 1, z0 + 1)
    c111 = at(x0 + 1, y0 + 1, z0 + 1)

    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def warp_mask(m: BinaryMask, field: DisplacementField) -> BinaryMask:
    """Backward-warp a mask through a displacement field.

    Each output voxel samples the input at (voxel - displacement) with
    trilinear interpolation and thresholds at 0.5; out-of-grid samples
    read as background.
    """
    if tuple(field.dims) != tuple(m.dims):
        raise ValueError("displacement field dims do not match mask dims")
    H, W, D = m.dims
    gx, gy, gz = np.meshgrid(
        np.arange(H, dtype=np.float64),
        np.arange(W, dtype=np.float64),
        np.arange(D, dtype=np.float64),
        indexing="ij",
    )
    coords = np.stack([gx, gy, gz], axis=-1) - field.vectors.astype(np.float64)
    values = trilinear_sample(m.bits.astype(np.float64), coords)
    return BinaryMask(m.dims, values >= 0.5)


def elastic_deform(m: BinaryMask, alpha: float, sigma: float, seed: int) -> BinaryMask:
    """Seeded random elastic deformation of a mask; alpha 0 is the identity."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if alpha == 0:
        return m
    field = elastic_displacement_field(m.dims, alpha, sigma, seed)
    return warp_mask(m, field)
