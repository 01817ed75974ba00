"""Signal-aware synthetic anomaly generation.

Pipeline per lesion: pick a host structure and a center voxel (edge or
interior), grow an initial shape (random ellipsoid or a copy of an atlas
structure) and elastically deform it, measure the intensity statistics of
the covered region, sample a peak intensity above or below the regional
mean, and inpaint a radial Gaussian profile with a feathered rim.

Everything is driven by one PCG64 stream seeded from the config, so a
given (volume, labels, config) triple always produces bit-identical
output.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateIntervalError, SynthesisError
from .grid import BinaryMask, LabelVolume, Volume, require_same_dims
from .morphology import (
    BALL_1,
    BALL_2,
    blur_array,
    dilate,
    elastic_deform,
    erode,
    morphological_gradient,
)

HYPER = "hyper"
HYPO = "hypo"

# attempts per lesion before synthesis gives up
_MAX_PLACEMENTS = 25
_MAX_DEFORM_RETRIES = 5


@dataclass(frozen=True)
class SynthConfig:
    """Free parameters of the synthetic anomaly procedure.

    ``epsilon`` shifts the sampling interval away from the regional mean;
    None selects the relative default 0.1 * (i_max - i_min) per region.
    Shape sources are weighted between random ellipsoids and copies of
    atlas structures. All randomness derives from ``seed``.
    """

    epsilon: Optional[float] = None
    sigma_b: float = 2.0
    lesion_count_range: tuple[int, int] = (1, 3)
    edge_probability: float = 0.2
    shape_source_weights: tuple[float, float] = (0.5, 0.5)
    ellipsoid_axes_range: tuple[float, float] = (2.0, 6.0)
    elastic_alpha: float = 4.0
    elastic_sigma: float = 2.0
    polarity_weights: tuple[float, float] = (0.5, 0.5)
    seed: int = 0

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.sigma_b <= 0:
            raise ValueError("sigma_b must be > 0")
        lo, hi = self.lesion_count_range
        if lo < 1 or hi < lo:
            raise ValueError(f"lesion_count_range {self.lesion_count_range} is empty or < 1")
        if not 0.0 <= self.edge_probability <= 1.0:
            raise ValueError("edge_probability must be in [0, 1]")
        ew, sw = self.shape_source_weights
        if ew < 0 or sw < 0 or ew + sw == 0:
            raise ValueError("shape_source_weights must be non-negative and not both zero")
        alo, ahi = self.ellipsoid_axes_range
        if alo <= 0 or ahi < alo:
            raise ValueError(f"ellipsoid_axes_range {self.ellipsoid_axes_range} is empty")
        if self.elastic_alpha < 0:
            raise ValueError("elastic_alpha must be >= 0")
        if self.elastic_sigma <= 0:
            raise ValueError("elastic_sigma must be > 0")
        hw, pw = self.polarity_weights
        if hw < 0 or pw < 0 or hw + pw == 0:
            raise ValueError("polarity_weights must be non-negative and not both zero")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "sigma_b": self.sigma_b,
            "lesion_count_range": list(self.lesion_count_range),
            "edge_probability": self.edge_probability,
            "shape_source_weights": list(self.shape_source_weights),
            "ellipsoid_axes_range": list(self.ellipsoid_axes_range),
            "elastic_alpha": self.elastic_alpha,
            "elastic_sigma": self.elastic_sigma,
            "polarity_weights": list(self.polarity_weights),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        kwargs = {}
        for key in cls.__dataclass_fields__:
            if key in obj:
                val = obj[key]
                if isinstance(val, list):
                    val = tuple(val)
                kwargs[key] = val
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass(frozen=True)
class RegionStats:
    """Mean / min / max intensity of a target region."""

    i_avg: float
    i_min: float
    i_max: float

    def __post_init__(self):
        if not (self.i_min <= self.i_avg <= self.i_max):
            raise ValueError(
                f"need i_min <= i_avg <= i_max, got ({self.i_min}, {self.i_avg}, {self.i_max})"
            )


@dataclass
class LesionRecord:
    """Provenance of one synthesized lesion."""

    structure_id: int
    center: tuple[int, int, int]
    on_edge: bool
    polarity: str
    i_a: float
    shape_voxels: int
    shape_origin: str  # "ellipsoid" or "structure:<id>"
    mask: Optional[BinaryMask] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "structure_id": self.structure_id,
            "center": list(self.center),
            "on_edge": self.on_edge,
            "polarity": self.polarity,
            "i_a": self.i_a,
            "shape_voxels": self.shape_voxels,
            "shape_origin": self.shape_origin,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LesionRecord":
        return cls(
            structure_id=int(obj["structure_id"]),
            center=tuple(int(c) for c in obj["center"]),
            on_edge=bool(obj["on_edge"]),
            polarity=str(obj["polarity"]),
            i_a=float(obj["i_a"]),
            shape_voxels=int(obj["shape_voxels"]),
            shape_origin=str(obj["shape_origin"]),
        )


def save_records(records: list[LesionRecord], path) -> None:
    from .nifti import _atomic_write

    blob = json.dumps([r.to_dict() for r in records], indent=2).encode("utf-8")
    _atomic_write(path, blob)


def load_records(path) -> list[LesionRecord]:
    with open(path, "r", encoding="utf-8") as f:
        return [LesionRecord.from_dict(o) for o in json.load(f)]


def _uniform_voxel(mask_bits: np.ndarray, rng) -> tuple[int, int, int]:
    idx = np.flatnonzero(mask_bits.ravel())
    pick = int(idx[rng.integers(len(idx))])
    return tuple(int(c) for c in np.unravel_index(pick, mask_bits.shape))


def select_location(labels: LabelVolume, rng, edge_probability: float = 0.2):
    """Choose a host structure and lesion center voxel.

    The structure is uniform over nonzero labels present in the grid. With
    ``edge_probability`` the center is drawn from the structure's boundary
    shell (morphological gradient), otherwise from its eroded interior;
    an empty pool falls back to the full structure mask.

    Returns (structure_id, center voxel, on_edge).
    """
    present = labels.present_ids()
    if not present:
        raise ValueError("label grid is entirely background")
    sid = int(present[rng.integers(len(present))])
    structure = labels.structure_mask(sid)
    want_edge = bool(rng.random() < edge_probability)
    pool = (morphological_gradient(structure, BALL_1) if want_edge
            else erode(structure, BALL_1))
    on_edge = want_edge
    if pool.is_empty():
        pool = structure
        on_edge = False
    center = _uniform_voxel(pool.bits, rng)
    return sid, center, on_edge


def _ellipsoid_mask(semi_axes) -> np.ndarray:
    a, b, c = semi_axes
    rx, ry, rz = int(np.floor(a)), int(np.floor(b)), int(np.floor(c))
    x = np.arange(-rx, rx + 1, dtype=np.float64)
    y = np.arange(-ry, ry + 1, dtype=np.float64)
    z = np.arange(-rz, rz + 1, dtype=np.float64)
    dx, dy, dz = np.meshgrid(x, y, z, indexing="ij")
    return (dx / a) ** 2 + (dy / b) ** 2 + (dz / c) ** 2 <= 1.0


def _crop_to_bbox(bits: np.ndarray) -> np.ndarray:
    coords = np.argwhere(bits)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0) + 1
    return bits[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]


def _generate_shape(labels: LabelVolume, cfg: SynthConfig, rng) -> tuple[BinaryMask, str]:
    ew, sw = cfg.shape_source_weights
    use_ellipsoid = bool(rng.random() < ew / (ew + sw))
    if use_ellipsoid:
        lo, hi = cfg.ellipsoid_axes_range
        semi_axes = rng.uniform(lo, hi, size=3)
        bits = _ellipsoid_mask(semi_axes)
        origin = "ellipsoid"
    else:
        present = labels.present_ids()
        if not present:
            raise ValueError("label grid is entirely background")
        sid = int(present[rng.integers(len(present))])
        bits = _crop_to_bbox(labels.labels == sid)
        origin = f"structure:{sid}"

    if cfg.elastic_alpha == 0:
        return BinaryMask(bits.shape, bits), origin

    pad = int(np.ceil(cfg.elastic_alpha)) + 1
    padded = np.pad(bits, pad)
    for _ in range(_MAX_DEFORM_RETRIES):
        seed = int(rng.integers(0, 2**63 - 1))
        deformed = elastic_deform(
            BinaryMask(padded.shape, padded), cfg.elastic_alpha, cfg.elastic_sigma, seed
        )
        if not deformed.is_empty():
            out = _crop_to_bbox(deformed.bits)
            return BinaryMask(out.shape, out), origin
    raise SynthesisError(
        f"elastic deformation erased the {origin} shape {_MAX_DEFORM_RETRIES} times"
    )


def generate_shape(labels: LabelVolume, cfg: SynthConfig, rng) -> BinaryMask:
    """Grow one lesion shape in its own tight bounding grid.

    The initial shape is a random axis-aligned ellipsoid or a copy of a
    uniformly chosen atlas structure (weighted by shape_source_weights),
    then elastically deformed. Deformations that erase the shape are
    retried a few times before raising SynthesisError.
    """
    shape, _origin = _generate_shape(labels, cfg, rng)
    return shape


def region_stats(v: Volume, region: BinaryMask) -> RegionStats:
    """Exact mean/min/max intensity over the masked voxels."""
    require_same_dims(v, region)
    if region.is_empty():
        raise ValueError("region is empty")
    sel = v.data[region.bits]
    return RegionStats(
        i_avg=float(np.mean(sel, dtype=np.float64)),
        i_min=float(sel.min()),
        i_max=float(sel.max()),
    )


def sample_intensity(stats: RegionStats, polarity: str, epsilon: float, rng) -> float:
    """Draw the lesion peak intensity from the polarity's uniform interval.

    hyper: U(i_avg + epsilon, i_max); hypo: U(i_min, i_avg - epsilon).
    An empty interval raises DegenerateIntervalError; callers may retry
    with flipped polarity or another location.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if polarity == HYPER:
        lo, hi = stats.i_avg + epsilon, stats.i_max
    elif polarity == HYPO:
        lo, hi = stats.i_min, stats.i_avg - epsilon
    else:
        raise ValueError(f"polarity must be '{HYPER}' or '{HYPO}', got {polarity!r}")
    if not lo < hi:
        raise DegenerateIntervalError(
            f"{polarity} interval ({lo}, {hi}) is empty for stats {stats}"
        )
    return float(rng.uniform(lo, hi))


def resolve_epsilon(cfg: SynthConfig, stats: RegionStats) -> float:
    """Config epsilon, or the relative default 0.1 * regional range."""
    if cfg.epsilon is not None:
        return float(cfg.epsilon)
    return 0.1 * (stats.i_max - stats.i_min)


def lesion_profile(shape: BinaryMask, i_a: float, i_avg: float, sigma_b: float) -> np.ndarray:
    """Radial intensity profile over the shape's voxels.

    Peaks at ``i_a`` at the shape's center of mass and decays toward the
    regional mean with a Gaussian of ``sigma_b`` over Euclidean voxel
    distance: i_avg + (i_a - i_avg) * exp(-d^2 / (2 sigma_b^2)). Returned
    as a full-grid float64 array, zero outside the shape.
    """
    if sigma_b <= 0:
        raise ValueError("sigma_b must be > 0")
    coords = np.argwhere(shape.bits)
    com = coords.mean(axis=0)
    d2 = ((coords - com) ** 2).sum(axis=1)
    values = i_avg + (i_a - i_avg) * np.exp(-d2 / (2.0 * sigma_b**2))
    out = np.zeros(shape.dims, dtype=np.float64)
    out[shape.bits] = values
    return out


def inpaint_lesion(v: Volume, shape_at_location: BinaryMask, i_a: float,
                   sigma_b: float, i_avg: Optional[float] = None) -> Volume:
    """Blend a lesion profile into the volume.

    Voxels inside the shape take the radial profile exactly (so the shape
    mean is pulled strictly toward ``i_a``); the two-voxel rim outside the
    shape is feathered with one Gaussian blur pass of ``sigma_b`` so the
    step into surrounding tissue is smoothed; everything outside the
    radius-2 dilation of the shape is untouched bit-exactly.
    """
    require_same_dims(v, shape_at_location)
    if sigma_b <= 0:
        raise ValueError("sigma_b must be > 0")
    if shape_at_location.is_empty():
        raise ValueError("lesion shape is empty")
    if i_avg is None:
        i_avg = region_stats(v, shape_at_location).i_avg

    profile = lesion_profile(shape_at_location, i_a, i_avg, sigma_b)
    raw = v.data.astype(np.float64)
    raw = np.where(shape_at_location.bits, profile, raw)

    rim = dilate(shape_at_location, BALL_2).bits & ~shape_at_location.bits
    feathered = blur_array(raw, sigma_b)
    out = np.where(rim, feathered, raw).astype(np.float32)
    # bit-exact passthrough outside the dilated support
    untouched = ~(rim | shape_at_location.bits)
    out[untouched] = v.data[untouched]
    return v.with_data(out)


def _place_shape(shape: BinaryMask, center, dims) -> np.ndarray:
    """Stamp a local shape into a full grid, its center of mass at ``center``."""
    local = np.argwhere(shape.bits)
    com = np.round(local.mean(axis=0)).astype(np.int64)
    offset = np.asarray(center, dtype=np.int64) - com
    target = local + offset
    keep = ((target >= 0) & (target < np.asarray(dims))).all(axis=1)
    target = target[keep]
    bits = np.zeros(dims, dtype=bool)
    bits[target[:, 0], target[:, 1], target[:, 2]] = True
    return bits


def synthesize(v: Volume, labels: LabelVolume,
               cfg: SynthConfig) -> tuple[Volume, BinaryMask, list[LesionRecord]]:
    """Generate a random number of lesions and blend them into the scan.

    Returns the modified volume, the union anomaly mask, and one record
    per lesion (each carrying its placed mask). Deterministic in
    (v, labels, cfg): rerunning with the same seed reproduces the output
    bit-for-bit.
    """
    require_same_dims(v, labels)
    rng = np.random.default_rng(cfg.seed)
    count = int(rng.integers(cfg.lesion_count_range[0], cfg.lesion_count_range[1] + 1))
    brain = labels.foreground().bits
    hw, pw = cfg.polarity_weights

    work = v
    union = np.zeros(v.dims, dtype=bool)
    records: list[LesionRecord] = []
    for _ in range(count):
        attempts = []
        for _attempt in range(_MAX_PLACEMENTS):
            sid, center, on_edge = select_location(labels, rng, cfg.edge_probability)
            attempts.append((sid, center))
            shape, origin = _generate_shape(labels, cfg, rng)
            placed_bits = _place_shape(shape, center, v.dims) & brain
            if not placed_bits.any():
                continue
            placed = BinaryMask(v.dims, placed_bits)
            stats = region_stats(work, placed)
            eps = resolve_epsilon(cfg, stats)
            polarity = HYPER if rng.random() < hw / (hw + pw) else HYPO
            try:
                i_a = sample_intensity(stats, polarity, eps, rng)
            except DegenerateIntervalError:
                flipped = HYPO if polarity == HYPER else HYPER
                try:
                    i_a = sample_intensity(stats, flipped, eps, rng)
                    polarity = flipped
                except DegenerateIntervalError:
                    continue
            work = inpaint_lesion(work, placed, i_a, cfg.sigma_b, i_avg=stats.i_avg)
            union |= placed_bits
            records.append(LesionRecord(
                structure_id=sid,
                center=center,
                on_edge=on_edge,
                polarity=polarity,
                i_a=i_a,
                shape_voxels=placed.count,
                shape_origin=origin,
                mask=placed,
            ))
            break
        else:
            raise SynthesisError(
                f"could not place lesion after {_MAX_PLACEMENTS} attempts",
                attempts=attempts,
            )
    return work, BinaryMask(v.dims, union), records
