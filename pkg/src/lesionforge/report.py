"""Grounded report assembly.

Ingests regional reports (a JSON object keyed by region name, each region
holding per-modality finding sentences), pairs them with region prompts,
and assembles a global report: abnormal paragraphs first (each linked to
its prompt), then normal-template sentences for uncovered structures,
then global boilerplate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

from .errors import FormatError, ValidationError
from .grid import LabelVolume
from .roi import RegionPrompt

MODALITIES = ("T1W", "T2W", "FLAIR", "DWI", "T1C", "ADC", "Other")

# the regional-report corpus writes bare T1/T2 for the weighted sequences
_MODALITY_ALIASES = {"T1": "T1W", "T2": "T2W"}

# non-modality keys tolerated inside a region object
_RESERVED_KEYS = {"prompt_ref"}

_LATERALITY = ("left ", "right ", "bilateral ")


def canonical_modality(key: str) -> Optional[str]:
    if key in MODALITIES:
        return key
    return _MODALITY_ALIASES.get(key)


@dataclass(frozen=True)
class RegionalReport:
    """Findings for one region, keyed by canonical modality."""

    region_name: str
    findings: dict[str, str]
    prompt_ref: Optional[int] = None

    def __post_init__(self):
        if not self.findings:
            raise ValidationError(f"region {self.region_name!r} has no findings")
        bad = [k for k in self.findings if k not in MODALITIES]
        if bad:
            raise ValidationError(f"unknown modality keys {bad} in {self.region_name!r}")

    def finding_for(self, modality: str) -> Optional[str]:
        return self.findings.get(modality) or self.findings.get("Other")


def parse_regional_reports(doc: str) -> list[RegionalReport]:
    """Parse the region -> modality -> sentence JSON interchange format.

    Modality aliases T1/T2 normalize to T1W/T2W; any other unknown key is
    a schema error. An optional integer ``prompt_ref`` per region links
    it to a prompt.
    """
    try:
        obj = json.loads(doc)
    except json.JSONDecodeError as e:
        raise FormatError(f"malformed regional-report JSON at line {e.lineno}, "
                          f"column {e.colno}: {e.msg}") from e
    if not isinstance(obj, dict):
        raise FormatError("regional reports must be a JSON object keyed by region name")
    reports = []
    for region, body in obj.items():
        if not isinstance(body, dict):
            raise FormatError(f"region {region!r} must map to an object of findings")
        findings = {}
        prompt_ref = None
        for key, value in body.items():
            if key in _RESERVED_KEYS:
                prompt_ref = int(value)
                continue
            modality = canonical_modality(key)
            if modality is None:
                raise ValidationError(f"unknown modality key {key!r} in region {region!r}")
            if not isinstance(value, str):
                raise FormatError(f"finding for {region!r}/{key} must be a string")
            findings[modality] = value
        reports.append(RegionalReport(region, findings, prompt_ref))
    return reports


def _family(name: str) -> str:
    lowered = name.lower()
    for prefix in _LATERALITY:
        if lowered.startswith(prefix):
            return lowered[len(prefix):]
    return lowered


@dataclass(frozen=True)
class TemplateStore:
    """Normal-finding sentences per structure and modality.

    Lookup falls back along exact structure name -> structure family
    (laterality stripped) -> generic; each level may carry per-modality
    overrides beside its ``default``. Sentences may embed ``{name}``.
    """

    structures: dict[str, dict[str, str]]
    families: dict[str, dict[str, str]]
    generic: dict[str, str]
    boilerplate: tuple[str, ...]

    def __post_init__(self):
        if "default" not in self.generic:
            raise ValidationError("template store needs a generic default sentence")
        object.__setattr__(self, "structures",
                           {k.lower(): dict(v) for k, v in self.structures.items()})
        object.__setattr__(self, "families",
                           {k.lower(): dict(v) for k, v in self.families.items()})
        object.__setattr__(self, "boilerplate", tuple(self.boilerplate))

    @classmethod
    def from_dict(cls, obj: dict) -> "TemplateStore":
        return cls(
            structures=obj.get("structures", {}),
            families=obj.get("families", {}),
            generic=obj.get("generic", {}),
            boilerplate=obj.get("boilerplate", ()),
        )

    @classmethod
    def load(cls, path) -> "TemplateStore":
        with open(path, "r", encoding="utf-8") as f:
            try:
                return cls.from_dict(json.load(f))
            except json.JSONDecodeError as e:
                raise FormatError(f"malformed template JSON: {e}") from e

    @classmethod
    def default(cls) -> "TemplateStore":
        blob = resources.files("lesionforge.data").joinpath("default_templates.json")
        return cls.from_dict(json.loads(blob.read_text(encoding="utf-8")))

    def sentence_for(self, structure_name: str, modality: str) -> str:
        name = structure_name.lower()
        for level in (self.structures.get(name),
                      self.families.get(_family(structure_name)),
                      self.generic):
            if not level:
                continue
            text = level.get(modality) or level.get("default")
            if text:
                return text.format(name=structure_name)
        raise ValidationError(f"no template resolves for {structure_name!r}")


@dataclass(frozen=True)
class Paragraph:
    text: str
    prompt_ref: Optional[int] = None


@dataclass(frozen=True)
class GlobalReport:
    """The assembled document: ordered paragraphs with prompt links."""

    modality: str
    mode: str  # "global" | "autoseg" | "prompt"
    paragraphs: tuple[Paragraph, ...]

    def to_dict(self) -> dict:
        return {
            "modality": self.modality,
            "mode": self.mode,
            "paragraphs": [
                {"text": p.text, "prompt_ref": p.prompt_ref} for p in self.paragraphs
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render_text(self) -> str:
        return "\n".join(p.text for p in self.paragraphs) + "\n"


def _link_regionals(regionals: Sequence[RegionalReport],
                    prompts: Sequence[RegionPrompt]) -> list[tuple[int, RegionalReport]]:
    linked = []
    for i, reg in enumerate(regionals):
        ref = reg.prompt_ref if reg.prompt_ref is not None else i
        if not 0 <= ref < len(prompts):
            raise ValidationError(
                f"region {reg.region_name!r} references prompt {ref}, "
                f"but only {len(prompts)} prompts exist"
            )
        linked.append((ref, reg))
    linked.sort(key=lambda pair: pair[0])  # stable: prompt order, input order on ties
    return linked


def assemble_global(regionals: Sequence[RegionalReport], prompts: Sequence[RegionPrompt],
                    templates: TemplateStore, modality: str, labels: LabelVolume,
                    mode: str = "autoseg") -> GlobalReport:
    """Compose the global report for one modality.

    Abnormal paragraphs come from the regionals in prompt order; every
    atlas structure not covered by any prompt then contributes one normal
    template sentence (atlas-id order, no duplicates); boilerplate closes
    the document. Output is deterministic for fixed inputs.
    """
    if modality not in MODALITIES:
        raise ValueError(f"modality must be one of {MODALITIES}, got {modality!r}")
    paragraphs: list[Paragraph] = []
    for ref, reg in _link_regionals(regionals, prompts):
        text = reg.finding_for(modality)
        if text is None:
            continue
        paragraphs.append(Paragraph(text=text, prompt_ref=ref))

    covered: set[int] = set()
    for prompt in prompts:
        covered |= prompt.structure_ids()
    for sid, name in labels.table.items():
        if sid in covered:
            continue
        paragraphs.append(Paragraph(text=templates.sentence_for(name, modality)))
    for line in templates.boilerplate:
        paragraphs.append(Paragraph(text=line))
    return GlobalReport(modality=modality, mode=mode, paragraphs=tuple(paragraphs))


def assemble_modes(mode: str, regionals: Sequence[RegionalReport],
                   prompts: Sequence[RegionPrompt], templates: TemplateStore,
                   modality: str, labels: LabelVolume) -> GlobalReport:
    """Mode plumbing over assemble_global.

    ``autoseg`` consumes select_rois prompts, ``prompt`` human prompts from
    structure names; ``global`` expects the single whole-image prompt and
    one regional report, and emits just that paragraph (no templates or
    boilerplate: the single finding describes the entire scan).
    """
    if mode not in ("global", "autoseg", "prompt"):
        raise ValueError(f"mode must be global|autoseg|prompt, got {mode!r}")
    if mode == "global":
        if len(regionals) != 1 or len(prompts) != 1:
            raise ValidationError("global mode takes exactly one regional report "
                                  "and the whole-image prompt")
        text = regionals[0].finding_for(modality)
        if text is None:
            raise ValidationError(f"global regional report lacks modality {modality}")
        return GlobalReport(modality=modality, mode="global",
                            paragraphs=(Paragraph(text=text, prompt_ref=0),))
    return assemble_global(regionals, prompts, templates, modality, labels, mode=mode)
