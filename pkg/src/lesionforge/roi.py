"""Region-of-interest prompt selection.

Splits an anomaly mask into connected components and maps each one to the
union of the atlas structures it overlaps; also supports human prompts
built from structure names and the whole-image prompt.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NameLookupError
from .grid import BinaryMask, LabelVolume, require_same_dims
from .morphology import connected_components

GLOBAL_PROMPT_NAME = "<global>"


@dataclass(frozen=True)
class RegionPrompt:
    """A regional mask prompt plus its provenance.

    ``structures`` lists (label id, name, overlap voxel count) for every
    structure folded into the mask; for auto prompts the overlap is with
    the originating anomaly component. Auto prompts overlapping no
    structure keep the component itself as mask and are ``unlocalized``.
    """

    mask: BinaryMask
    source_kind: str  # "auto" | "human"
    component_index: Optional[int] = None
    names: tuple[str, ...] = ()
    structures: tuple[tuple[int, str, int], ...] = ()
    anomaly_voxels: int = 0

    def __post_init__(self):
        if self.source_kind not in ("auto", "human"):
            raise ValueError(f"source_kind must be 'auto' or 'human', got {self.source_kind!r}")
        object.__setattr__(self, "structures", tuple(
            (int(i), str(n), int(o)) for i, n, o in self.structures
        ))
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))

    @property
    def unlocalized(self) -> bool:
        return self.source_kind == "auto" and not self.structures

    @property
    def is_global(self) -> bool:
        return self.source_kind == "human" and self.names == (GLOBAL_PROMPT_NAME,)

    def structure_ids(self) -> set[int]:
        return {i for i, _n, _o in self.structures}

    def to_dict(self, mask_ref: Optional[str] = None) -> dict:
        source = {"kind": self.source_kind}
        if self.source_kind == "auto":
            source["component"] = self.component_index
        else:
            source["names"] = list(self.names)
        return {
            "source": source,
            "structures": [
                {"id": i, "name": n, "overlap": o} for i, n, o in self.structures
            ],
            "anomaly_voxels": self.anomaly_voxels,
            "unlocalized": self.unlocalized,
            "mask_ref": mask_ref,
        }


def select_rois(anomaly: BinaryMask, labels: LabelVolume, min_overlap: int = 1,
                connectivity: int = 26) -> list[RegionPrompt]:
    """One prompt per anomaly connected component.

    Each prompt's mask is the union of every structure whose overlap with
    the component is at least ``min_overlap`` voxels. Components touching
    no structure keep their own mask, flagged unlocalized. Ordering
    follows connected_components (largest first).
    """
    require_same_dims(anomaly, labels)
    if min_overlap < 1:
        raise ValueError("min_overlap must be >= 1")
    prompts = []
    for ci, comp in enumerate(connected_components(anomaly, connectivity)):
        overlap_counts = np.bincount(labels.labels[comp.bits])
        hits = [
            (int(sid), labels.table[int(sid)], int(overlap_counts[sid]))
            for sid in np.nonzero(overlap_counts)[0]
            if sid != 0 and overlap_counts[sid] >= min_overlap
        ]
        if hits:
            union = np.isin(labels.labels, [sid for sid, _n, _o in hits])
            mask = BinaryMask(labels.dims, union)
        else:
            mask = comp
        prompts.append(RegionPrompt(
            mask=mask,
            source_kind="auto",
            component_index=ci,
            structures=tuple(hits),
            anomaly_voxels=comp.count,
        ))
    return prompts


def _edit_distance(a: str, b: str, cap: int = 3) -> int:
    # bounded Levenshtein; early-exits rows past the cap
    if abs(len(a) - len(b)) > cap:
        return cap + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if min(cur) > cap:
            return cap + 1
        prev = cur
    return prev[-1]


def prompt_from_names(names: Sequence[str], labels: LabelVolume) -> RegionPrompt:
    """Human prompt: the union of the named structures' masks.

    Matching is case-insensitive and exact; an unknown name raises
    NameLookupError carrying near-matches (edit distance <= 2).
    """
    if not names:
        raise ValueError("names list is empty")
    ids = []
    for name in names:
        sid = labels.id_for_name(name)
        if sid is None:
            wanted = name.strip().lower()
            near = sorted(
                n for n in labels.table.values()
                if _edit_distance(wanted, n.lower(), cap=2) <= 2
            )
            hint = f"; did you mean {near}?" if near else ""
            raise NameLookupError(f"unknown structure name {name!r}{hint}", suggestions=near)
        ids.append(sid)
    union = np.isin(labels.labels, ids)
    structures = tuple((sid, labels.table[sid], 0) for sid in ids)
    return RegionPrompt(
        mask=BinaryMask(labels.dims, union),
        source_kind="human",
        names=tuple(names),
        structures=structures,
        anomaly_voxels=0,
    )


def whole_image_prompt(dims) -> RegionPrompt:
    """The special all-true prompt asking for a whole-scan description."""
    return RegionPrompt(
        mask=BinaryMask(dims, np.ones(tuple(dims), dtype=bool)),
        source_kind="human",
        names=(GLOBAL_PROMPT_NAME,),
        anomaly_voxels=0,
    )


def save_prompt(prompt: RegionPrompt, json_path, mask_path,
                spacing=(1.0, 1.0, 1.0)) -> None:
    """Write a prompt as JSON metadata plus a NIfTI mask volume.

    mask_ref is stored relative to the JSON file, so a prompt directory is
    relocatable and reruns into different directories stay byte-identical.
    """
    import os

    from .nifti import _atomic_write, save_mask

    save_mask(prompt.mask, mask_path, spacing)
    ref = os.path.relpath(os.path.abspath(str(mask_path)),
                          os.path.dirname(os.path.abspath(str(json_path))))
    obj = prompt.to_dict(mask_ref=ref)
    _atomic_write(json_path, json.dumps(obj, indent=2).encode("utf-8"))


def load_prompt(json_path) -> RegionPrompt:
    """Load a prompt written by save_prompt, pulling the mask from mask_ref."""
    import os

    from .nifti import load_mask

    with open(json_path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    ref = obj["mask_ref"]
    if not os.path.isabs(ref):
        ref = os.path.join(os.path.dirname(os.path.abspath(str(json_path))), ref)
    mask = load_mask(ref)
    source = obj["source"]
    return RegionPrompt(
        mask=mask,
        source_kind=source["kind"],
        component_index=source.get("component"),
        names=tuple(source.get("names", ())),
        structures=tuple(
            (s["id"], s["name"], s["overlap"]) for s in obj.get("structures", ())
        ),
        anomaly_voxels=int(obj.get("anomaly_voxels", 0)),
    )
