"""Segmentation overlap metrics, surface Hausdorff distance, and n-gram
text metrics (4-gram BLEU with weights (0,0,0,1), ROUGE-1 recall).

Conventions for degenerate masks follow common benchmark practice: two
empty masks agree perfectly (DSC 1.0); a Hausdorff distance against a
single empty mask is infinite.
"""
from __future__ import annotations

import json
import math
import re
import subprocess
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .grid import BinaryMask, require_same_dims


@dataclass(frozen=True)
class SegScore:
    """Per-case segmentation scores; hd is millimeters (inf if undefined)."""

    dsc: float
    pre: float
    se: float
    hd: float

    def to_dict(self) -> dict:
        return {
            "dsc": self.dsc,
            "pre": self.pre,
            "se": None if math.isnan(self.se) else self.se,
            "hd": self.hd if math.isfinite(self.hd) else None,
        }


@dataclass(frozen=True)
class TextScore:
    bleu4: float
    rouge1: float

    def to_dict(self) -> dict:
        return {"bleu4": self.bleu4, "rouge1": self.rouge1}


def _counts(P: BinaryMask, G: BinaryMask) -> tuple[int, int, int]:
    require_same_dims(P, G)
    inter = int((P.bits & G.bits).sum())
    return inter, P.count, G.count


def dsc(P: BinaryMask, G: BinaryMask) -> float:
    """Dice overlap 2|P&G| / (|P|+|G|); both-empty counts as 1.0."""
    inter, np_, ng = _counts(P, G)
    if np_ + ng == 0:
        return 1.0
    return 2.0 * inter / (np_ + ng)


def precision(P: BinaryMask, G: BinaryMask) -> float:
    """|P&G| / |P|; empty P is 1.0 against empty G, else 0.0."""
    inter, np_, ng = _counts(P, G)
    if np_ == 0:
        return 1.0 if ng == 0 else 0.0
    return inter / np_


def sensitivity(P: BinaryMask, G: BinaryMask) -> float:
    """|P&G| / |G|; empty G is 1.0 when P is empty too, NaN otherwise."""
    inter, np_, ng = _counts(P, G)
    if ng == 0:
        return 1.0 if np_ == 0 else math.nan
    return inter / ng


_FACE_NEIGHBORS = ndimage.generate_binary_structure(3, 1)


def surface_voxels(m: BinaryMask) -> np.ndarray:
    """Coordinates of mask voxels with a face neighbor that is background
    (the grid border counts as background)."""
    interior = ndimage.binary_erosion(m.bits, structure=_FACE_NEIGHBORS, border_value=0)
    return np.argwhere(m.bits & ~interior)


def hausdorff(P: BinaryMask, G: BinaryMask, spacing=(1.0, 1.0, 1.0),
              percentile: float = 100.0) -> float:
    """Symmetric surface Hausdorff distance in millimeters.

    ``percentile`` 100 gives the classical maximum; 95 the robust variant
    (the percentile is taken per direction, then the max of the two).
    Returns inf when exactly one mask is empty, 0.0 when both are.
    """
    require_same_dims(P, G)
    if not 0.0 < percentile <= 100.0:
        raise ValueError("percentile must be in (0, 100]")
    if P.is_empty() and G.is_empty():
        return 0.0
    if P.is_empty() or G.is_empty():
        return math.inf
    sp = np.asarray(spacing, dtype=np.float64)
    sp_p = surface_voxels(P) * sp
    sp_g = surface_voxels(G) * sp
    d_pg = cKDTree(sp_g).query(sp_p)[0]
    d_gp = cKDTree(sp_p).query(sp_g)[0]
    if percentile >= 100.0:
        return float(max(d_pg.max(), d_gp.max()))
    return float(max(np.percentile(d_pg, percentile), np.percentile(d_gp, percentile)))


def seg_score(P: BinaryMask, G: BinaryMask, spacing=(1.0, 1.0, 1.0),
              hd_percentile: float = 100.0) -> SegScore:
    return SegScore(
        dsc=dsc(P, G),
        pre=precision(P, G),
        se=sensitivity(P, G),
        hd=hausdorff(P, G, spacing, hd_percentile),
    )


_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split punctuation into separate tokens, split whitespace."""
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Pure 4-gram clipped precision times brevity penalty (weights 0,0,0,1).

    No smoothing: candidates without any matching 4-gram (or shorter than
    4 tokens) score 0.
    """
    if not reference:
        raise ValueError("reference is empty")
    if not candidate or len(candidate) < 4:
        return 0.0
    cand = _ngrams(candidate, 4)
    ref = _ngrams(reference, 4)
    clipped = sum(min(c, ref[g]) for g, c in cand.items())
    total = sum(cand.values())
    if clipped == 0:
        return 0.0
    bp = math.exp(min(0.0, 1.0 - len(reference) / len(candidate)))
    return bp * clipped / total


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int = 1) -> float:
    """Recall of reference n-grams found in the candidate, clipped."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ref = _ngrams(reference, n)
    total = sum(ref.values())
    if total == 0:
        raise ValueError("reference is empty (no n-grams)")
    cand = _ngrams(candidate, n)
    matched = sum(min(c, cand[g]) for g, c in ref.items())
    return matched / total


def text_score(candidate_text: str, reference_text: str) -> TextScore:
    cand, ref = tokenize(candidate_text), tokenize(reference_text)
    return TextScore(bleu4=bleu4(cand, ref), rouge1=rouge_n(cand, ref, 1))


class ExternalScorer:
    """Pluggable model-based text metric run as a subprocess.

    The command receives ``{"candidate":…, "reference":…}`` JSON on stdin
    and must answer ``{"score": <float>}`` on stdout. Nothing model-based
    is ever computed natively.
    """

    def __init__(self, command: Sequence[str], timeout: float = 120.0):
        self.command = list(command)
        self.timeout = timeout

    def score(self, candidate: str, reference: str) -> float:
        payload = json.dumps({"candidate": candidate, "reference": reference})
        proc = subprocess.run(
            self.command, input=payload.encode("utf-8"),
            capture_output=True, timeout=self.timeout,
        )
        if proc.returncode != 0:
            raise RuntimeError(
                f"external scorer failed ({proc.returncode}): {proc.stderr.decode()[:500]}"
            )
        return float(json.loads(proc.stdout.decode("utf-8"))["score"])


def summarize(values: Sequence[float]) -> Optional[dict]:
    """Mean and population std over the defined (finite) entries."""
    arr = np.asarray([v for v in values if v is not None and math.isfinite(v)],
                     dtype=np.float64)
    if arr.size == 0:
        return None
    mean, std = float(arr.mean()), float(arr.std())
    return {"mean": mean, "std": std, "n": int(arr.size),
            "display": f"{mean:.4f} ± {std:.4f}"}
