"""Training objectives with closed-form gradients.

Soft Dice and binary cross-entropy over probability grids, their weighted
combination, class-wise averaged total segmentation loss, and the
autoregressive NLL for report tokens. Gradients are returned alongside
losses so they can be checked against finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BinaryMask, _freeze, require_same_dims

DICE_SMOOTH = 1e-5
CE_CLAMP = 1e-7


@dataclass(frozen=True)
class ProbGrid:
    """Soft predictions in [0, 1] on a 3D grid."""

    dims: tuple
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != dims:
            if vals.size == int(np.prod(dims)):
                vals = vals.reshape(dims)
            else:
                raise ValueError("values size does not match dims")
        if not np.isfinite(vals).all() or vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("probabilities must be finite and within [0, 1]")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", _freeze(vals, self.values))


@dataclass(frozen=True)
class TokenDistribution:
    """Per-step distributions over a vocabulary; rows sum to 1."""

    steps: int
    vocab: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (int(self.steps), int(self.vocab)):
            raise ValueError(f"probs shape {probs.shape} != ({self.steps}, {self.vocab})")
        if probs.min() <= 0.0 or probs.max() > 1.0:
            raise ValueError("probabilities must lie in (0, 1]")
        if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError("each row must sum to 1 within 1e-6")
        object.__setattr__(self, "probs", _freeze(probs, self.probs))


def soft_dice_loss(s: BinaryMask, p: ProbGrid) -> tuple[float, np.ndarray]:
    """1 - 2|s*p| / (|s| + |p|), smoothed; returns (loss, d loss / d p)."""
    require_same_dims(s, p)
    t = s.bits.astype(np.float64)
    q = p.values
    inter = float((t * q).sum())
    total = float(t.sum() + q.sum())
    num = 2.0 * inter + DICE_SMOOTH
    den = total + DICE_SMOOTH
    loss = 1.0 - num / den
    # quotient rule: d/dq_i [num/den] = (2 t_i den - num) / den^2
    grad = -(2.0 * t * den - num) / (den * den)
    return loss, grad


def cross_entropy_loss(s: BinaryMask, p: ProbGrid) -> tuple[float, np.ndarray]:
    """Mean-reduced binary cross entropy with clamped probabilities."""
    require_same_dims(s, p)
    t = s.bits.astype(np.float64)
    q = np.clip(p.values, CE_CLAMP, 1.0 - CE_CLAMP)
    n = q.size
    loss = float(-(t * np.log(q) + (1.0 - t) * np.log1p(-q)).sum() / n)
    inside = (p.values > CE_CLAMP) & (p.values < 1.0 - CE_CLAMP)
    grad = np.where(inside, (q - t) / (q * (1.0 - q) * n), 0.0)
    return loss, grad


def seg_loss(s: BinaryMask, p: ProbGrid, lambda1: float, lambda2: float) -> float:
    """Weighted sum of soft Dice and cross-entropy penalties."""
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("loss weights must be >= 0")
    dice, _ = soft_dice_loss(s, p)
    ce, _ = cross_entropy_loss(s, p)
    return lambda1 * dice + lambda2 * ce


def total_seg_loss(s_a: BinaryMask, p_a: ProbGrid,
                   s_b_classes: list[tuple[BinaryMask, ProbGrid]],
                   lambda1: float, lambda2: float) -> float:
    """Anomaly term plus the class-wise average of structure terms."""
    if not s_b_classes:
        raise ValueError("class list is empty")
    anomaly = seg_loss(s_a, p_a, lambda1, lambda2)
    structure = sum(seg_loss(sb, pb, lambda1, lambda2) for sb, pb in s_b_classes)
    return anomaly + structure / len(s_b_classes)


def autoregressive_nll(dist: TokenDistribution, targets) -> float:
    """Negative log-likelihood of the target token ids under the per-step
    distributions."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.ndim != 1 or len(targets) != dist.steps:
        raise ValueError(f"need {dist.steps} target ids, got shape {targets.shape}")
    if targets.min(initial=0) < 0 or (len(targets) and targets.max() >= dist.vocab):
        raise ValueError("target id outside vocabulary")
    picked = dist.probs[np.arange(dist.steps), targets]
    return float(-np.log(picked).sum())
