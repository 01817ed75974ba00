"""Deterministic synthetic brain phantoms for tests and demos.

A phantom is an ellipsoidal "brain" partitioned into named structures by
a seeded Voronoi tessellation, with smoothly varying positive intensities
so every structure has a usable intensity range.
"""
from __future__ import annotations

import numpy as np

from .grid import LabelVolume, Volume
from .morphology import blur_array

STRUCTURE_NAMES = (
    "left frontal lobe",
    "right frontal lobe",
    "left parietal lobe",
    "right parietal lobe",
    "brainstem",
    "cerebellum",
    "left temporal lobe",
    "right temporal lobe",
    "left thalamus",
    "right thalamus",
)


def make_phantom(dims=(48, 48, 40), n_structures: int = 5,
                 seed: int = 0) -> tuple[Volume, LabelVolume]:
    """Build a (Volume, LabelVolume) pair, deterministic in the seed."""
    if not 1 <= n_structures <= len(STRUCTURE_NAMES):
        raise ValueError(f"n_structures must be in [1, {len(STRUCTURE_NAMES)}]")
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in dims)
    H, W, D = dims
    ax = [np.arange(n, dtype=np.float64) for n in dims]
    gx, gy, gz = np.meshgrid(*ax, indexing="ij")
    center = np.array([(n - 1) / 2.0 for n in dims])
    radii = np.array([n * 0.42 for n in dims])
    brain = (((gx - center[0]) / radii[0]) ** 2
             + ((gy - center[1]) / radii[1]) ** 2
             + ((gz - center[2]) / radii[2]) ** 2) <= 1.0

    # Voronoi partition of the brain into structures
    sites = center + (rng.uniform(-0.55, 0.55, size=(n_structures, 3)) * radii)
    coords = np.stack([gx, gy, gz], axis=-1)
    dist = np.linalg.norm(coords[..., None, :] - sites[None, None, None, :, :], axis=-1)
    labels = np.where(brain, dist.argmin(axis=-1) + 1, 0).astype(np.int32)

    base = rng.uniform(0.35, 0.85, size=n_structures + 1)
    base[0] = 0.0
    data = base[labels]
    texture = blur_array(rng.uniform(-1.0, 1.0, size=dims), 3.0) * 0.6
    noise = rng.normal(0.0, 0.015, size=dims)
    data = np.where(brain, np.clip(data + texture + noise, 0.02, None), 0.0)

    table = {i + 1: STRUCTURE_NAMES[i] for i in range(n_structures)}
    spacing = (1.0, 1.0, 1.0)
    volume = Volume(dims, spacing, data.astype(np.float32))
    return volume, LabelVolume(dims, spacing, labels, table)
