"""Core 3D grid types: scalar volumes, labelled atlases, binary masks.

All types are immutable after construction (backing arrays are marked
read-only) and safe to share across threads. Voxel order follows the
on-disk layout of the source file; no reorientation is performed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError

Dims = tuple[int, int, int]
Spacing = tuple[float, float, float]


def _freeze(arr: np.ndarray, source=None) -> np.ndarray:
    """Contiguous read-only array; copies if it would alias caller memory."""
    arr = np.ascontiguousarray(arr)
    if source is not None and isinstance(source, np.ndarray) \
            and np.shares_memory(arr, source):
        arr = arr.copy()
    arr.flags.writeable = False
    return arr


def _check_dims(dims) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"dims must be three positive voxel counts, got {dims}")
    return dims


def _check_spacing(spacing) -> Spacing:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise ValueError(f"spacing must be three positive finite values, got {spacing}")
    return spacing


@dataclass(frozen=True)
class Volume:
    """A 3D scalar voxel grid with millimeter spacing metadata.

    ``data`` is float32 with shape ``dims`` and must be entirely finite.
    ``affine`` is an optional 4x4 voxel-to-world transform carried as
    opaque metadata.
    """

    dims: Dims
    spacing: Spacing
    data: np.ndarray
    affine: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        data = np.asarray(self.data, dtype=np.float32)
        if data.shape != self.dims:
            if data.size == int(np.prod(self.dims)):
                data = data.reshape(self.dims)
            else:
                raise ValueError(
                    f"data has {data.size} values, dims {self.dims} need {int(np.prod(self.dims))}"
                )
        if not np.isfinite(data).all():
            raise ValidationError("volume intensities must be finite (no NaN/Inf)")
        object.__setattr__(self, "data", _freeze(data, self.data))
        if self.affine is not None:
            aff = np.asarray(self.affine, dtype=np.float64)
            if aff.shape != (4, 4):
                raise ValueError("affine must be a 4x4 matrix")
            object.__setattr__(self, "affine", _freeze(aff, self.affine))

    def with_data(self, data: np.ndarray) -> "Volume":
        """New Volume sharing this volume's metadata."""
        return Volume(self.dims, self.spacing, data, self.affine)


@dataclass(frozen=True)
class LabelVolume:
    """A 3D integer grid plus a table mapping label ids to structure names.

    Label 0 is reserved for background. Every nonzero id present in the
    grid must have a table entry, and structure names must be unique.
    """

    dims: Dims
    spacing: Spacing
    labels: np.ndarray
    table: dict[int, str]
    affine: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        labels = np.asarray(self.labels)
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValidationError(f"label grid must be integer-typed, got {labels.dtype}")
        labels = labels.astype(np.int32, copy=False)
        if labels.shape != self.dims:
            if labels.size == int(np.prod(self.dims)):
                labels = labels.reshape(self.dims)
            else:
                raise ValueError("label grid size does not match dims")
        if labels.min(initial=0) < 0:
            raise ValidationError("label ids must be non-negative")
        table = {int(k): str(v) for k, v in self.table.items()}
        if any(k <= 0 for k in table):
            raise ValidationError("label table ids must be positive (> 0)")
        names = list(table.values())
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"structure names must be unique, duplicated: {dupes}")
        present = set(int(v) for v in np.unique(labels)) - {0}
        missing = sorted(present - set(table))
        if missing:
            raise ValidationError(f"label ids present in grid but absent from table: {missing}")
        object.__setattr__(self, "labels", _freeze(labels, self.labels))
        object.__setattr__(self, "table", dict(sorted(table.items())))
        if self.affine is not None:
            aff = np.asarray(self.affine, dtype=np.float64)
            if aff.shape != (4, 4):
                raise ValueError("affine must be a 4x4 matrix")
            object.__setattr__(self, "affine", _freeze(aff, self.affine))

    def present_ids(self) -> list[int]:
        """Sorted nonzero label ids that actually occur in the grid."""
        return [int(v) for v in np.unique(self.labels) if v != 0]

    def structure_mask(self, label_id: int) -> "BinaryMask":
        """Binary mask of one labelled structure."""
        if label_id not in self.table:
            raise KeyError(f"unknown label id {label_id}")
        return BinaryMask(self.dims, self.labels == label_id)

    def foreground(self) -> "BinaryMask":
        """Union of all labelled structures (everything that is not background)."""
        return BinaryMask(self.dims, self.labels != 0)

    def id_for_name(self, name: str) -> Optional[int]:
        """Case-insensitive exact lookup of a structure name; None if absent."""
        wanted = name.strip().lower()
        for k, v in self.table.items():
            if v.lower() == wanted:
                return k
        return None


@dataclass(frozen=True)
class BinaryMask:
    """A 3D boolean grid annotating a volume of identical dims."""

    dims: Dims
    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        bits = np.asarray(self.bits)
        if bits.dtype != np.bool_:
            bits = bits.astype(bool)
        if bits.shape != self.dims:
            if bits.size == int(np.prod(self.dims)):
                bits = bits.reshape(self.dims)
            else:
                raise ValueError("mask size does not match dims")
        object.__setattr__(self, "bits", _freeze(bits, self.bits))

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        require_same_dims(self, other)
        return BinaryMask(self.dims, self.bits | other.bits)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        require_same_dims(self, other)
        return BinaryMask(self.dims, self.bits & other.bits)

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(self.dims, ~self.bits)


def require_same_dims(a, b) -> None:
    """Reject dimension-mismatched pairings instead of broadcasting."""
    if tuple(a.dims) != tuple(b.dims):
        raise ValueError(f"dimension mismatch: {tuple(a.dims)} vs {tuple(b.dims)}")


def zscore_normalize(v: Volume, foreground: Optional[BinaryMask] = None) -> Volume:
    """Zero-mean / unit-variance normalization over the foreground voxels.

    Statistics (population std) are computed over ``foreground`` when given,
    otherwise over the whole grid, and the affine transform is applied to
    every voxel. A constant region (std 0) degenerates to a pure shift, which
    zeroes the foreground.
    """
    if foreground is not None:
        require_same_dims(v, foreground)
        if foreground.is_empty():
            raise ValueError("foreground mask is empty")
        sel = v.data[foreground.bits]
    else:
        sel = v.data.reshape(-1)
    mean = float(np.mean(sel, dtype=np.float64))
    std = float(np.std(sel, dtype=np.float64))
    scale = std if std > 0 else 1.0
    out = (v.data.astype(np.float64) - mean) / scale
    return v.with_data(out.astype(np.float32))
