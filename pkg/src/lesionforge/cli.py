"""Command-line entry points.

Verbs: synth, roi, eval-seg, eval-report, assemble, pipeline. Every verb
takes ``--config <json>`` plus ``--set key=value`` overrides; all
randomness flows from the single config seed, with per-stage sub-seeds
derived by stable hashing. Exit codes: 0 success, 2 usage/input error,
3 computation error. Outputs are written atomically.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import nifti
from .errors import (
    FormatError,
    LesionForgeError,
    NameLookupError,
    UnsupportedError,
    ValidationError,
)
from .metrics import seg_score, summarize, text_score
from .report import TemplateStore, assemble_modes, parse_regional_reports
from .roi import prompt_from_names, save_prompt, select_rois, whole_image_prompt
from .synth import SynthConfig, save_records, synthesize

_INPUT_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
    PermissionError,
    FormatError,
    UnsupportedError,
    ValidationError,
    NameLookupError,
    ValueError,
    KeyError,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3


def stage_seed(seed: int, stage: str) -> int:
    """Stable per-stage sub-seed derived from the master seed."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _thread_count() -> int:
    raw = os.environ.get("LESIONFORGE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return max(1, n) if n > 0 else max(1, os.cpu_count() or 1)


def _parse_set(assignments) -> dict:
    out = {}
    for item in assignments or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings stay strings
        out[key.strip()] = value
    return out


def _apply_overrides(config: dict, overrides: dict) -> None:
    for dotted, value in overrides.items():
        node = config
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"--set path {dotted!r} crosses a non-object value")
        node[parts[-1]] = value


def load_config(args) -> dict:
    config = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as f:
            try:
                config = json.load(f)
            except json.JSONDecodeError as e:
                raise FormatError(f"config is not valid JSON: {e}") from e
        if not isinstance(config, dict):
            raise FormatError("config must be a JSON object")
    _apply_overrides(config, _parse_set(getattr(args, "set", None)))
    for attr in ("volume", "labels", "label_table", "out", "seed"):
        val = getattr(args, attr, None)
        if val is not None:
            config[attr] = val
    config.setdefault("seed", 0)
    config.setdefault("out", "lesionforge_out")
    return config


def _require(config: dict, *keys):
    missing = [k for k in keys if not config.get(k)]
    if missing:
        raise ValueError(f"config is missing required entries: {missing}")
    for key in ("volume", "labels", "label_table"):
        if key in keys:
            path = config[key]
            if not os.path.exists(path):
                raise FileNotFoundError(f"{key} file does not exist: {path}")


def _outdir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(config: dict):
    volume = nifti.load_volume(config["volume"])
    labels = nifti.load_label_volume(config["labels"], config["label_table"])
    if tuple(volume.dims) != tuple(labels.dims):
        raise ValidationError(
            f"volume dims {volume.dims} do not match label dims {labels.dims}"
        )
    return volume, labels


def cmd_synth(config: dict) -> int:
    _require(config, "volume", "labels", "label_table")
    volume, labels = _load_inputs(config)
    synth_cfg = SynthConfig.from_dict({
        **config.get("synth", {}),
        "seed": stage_seed(int(config["seed"]), "synth"),
    })
    out = _outdir(config)
    abnormal, mask, records = synthesize(volume, labels, synth_cfg)
    nifti.save_volume(abnormal, out / "synth_volume.nii.gz")
    nifti.save_mask(mask, out / "synth_mask.nii.gz", spacing=volume.spacing)
    save_records(records, out / "lesion_records.json")
    print(json.dumps({
        "lesions": len(records),
        "files": ["synth_volume.nii.gz", "synth_mask.nii.gz", "lesion_records.json"],
        "out": str(out),
    }))
    return EXIT_OK


def cmd_roi(config: dict) -> int:
    _require(config, "anomaly", "labels", "label_table")
    if not os.path.exists(config["anomaly"]):
        raise FileNotFoundError(f"anomaly mask does not exist: {config['anomaly']}")
    anomaly = nifti.load_mask(config["anomaly"])
    labels = nifti.load_label_volume(config["labels"], config["label_table"])
    roi_cfg = config.get("roi", {})
    prompts = select_rois(
        anomaly, labels,
        min_overlap=int(roi_cfg.get("min_overlap", 1)),
        connectivity=int(roi_cfg.get("connectivity", 26)),
    )
    out = _outdir(config)
    written = []
    for i, prompt in enumerate(prompts):
        mask_path = out / f"prompt_{i:03d}_mask.nii.gz"
        json_path = out / f"prompt_{i:03d}.json"
        save_prompt(prompt, json_path, mask_path, spacing=labels.spacing)
        written.append(json_path.name)
    print(json.dumps({"prompts": len(prompts), "files": written, "out": str(out)}))
    return EXIT_OK


def _pair_paths(a: str, b: str) -> list[tuple[str, str]]:
    pa, pb = Path(a), Path(b)
    if pa.is_dir() != pb.is_dir():
        raise ValueError("prediction and reference must both be files or both directories")
    if not pa.is_dir():
        return [(str(pa), str(pb))]
    names = sorted(p.name for p in pa.iterdir() if p.is_file())
    pairs = []
    for name in names:
        other = pb / name
        if not other.exists():
            raise FileNotFoundError(f"reference counterpart missing: {other}")
        pairs.append((str(pa / name), str(other)))
    if not pairs:
        raise ValueError(f"no files found under {pa}")
    return pairs


def _emit_report(report: dict, out_path) -> None:
    blob = json.dumps(report, indent=2)
    if out_path:
        nifti._atomic_write(out_path, blob.encode("utf-8"))
    print(blob)


def cmd_eval_seg(args) -> int:
    pairs = _pair_paths(args.pred, args.gt)
    percentile = args.hd_percentile

    def one(pair):
        pred_path, gt_path = pair
        pred = nifti.load_mask(pred_path)
        gt = nifti.load_mask(gt_path)
        spacing = nifti.load_volume(pred_path).spacing if args.use_spacing else (1.0, 1.0, 1.0)
        score = seg_score(pred, gt, spacing, percentile)
        return {"pred": pred_path, "gt": gt_path, **score.to_dict()}

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        cases = list(pool.map(one, pairs))
    summary = {
        key: summarize([c[key] for c in cases])
        for key in ("dsc", "pre", "se", "hd")
    }
    _emit_report({"cases": cases, "summary": summary}, args.out)
    return EXIT_OK


def cmd_eval_report(args) -> int:
    pairs = _pair_paths(args.candidate, args.reference)

    def one(pair):
        cand_path, ref_path = pair
        cand = Path(cand_path).read_text(encoding="utf-8")
        ref = Path(ref_path).read_text(encoding="utf-8")
        score = text_score(cand, ref)
        return {"candidate": cand_path, "reference": ref_path, **score.to_dict()}

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        cases = list(pool.map(one, pairs))
    summary = {key: summarize([c[key] for c in cases]) for key in ("bleu4", "rouge1")}
    _emit_report({"cases": cases, "summary": summary}, args.out)
    return EXIT_OK


def _load_templates(config: dict) -> TemplateStore:
    path = config.get("templates")
    return TemplateStore.load(path) if path else TemplateStore.default()


def _build_prompts(mode: str, config: dict, labels):
    if mode == "autoseg":
        _require(config, "anomaly")
        if not os.path.exists(config["anomaly"]):
            raise FileNotFoundError(f"anomaly mask does not exist: {config['anomaly']}")
        anomaly = nifti.load_mask(config["anomaly"])
        roi_cfg = config.get("roi", {})
        return select_rois(anomaly, labels,
                           min_overlap=int(roi_cfg.get("min_overlap", 1)),
                           connectivity=int(roi_cfg.get("connectivity", 26)))
    if mode == "prompt":
        groups = config.get("prompt_names") or []
        if not groups:
            raise ValueError("prompt mode needs prompt_names: a list of name groups")
        return [prompt_from_names(group, labels) for group in groups]
    return [whole_image_prompt(labels.dims)]


def cmd_assemble(config: dict) -> int:
    _require(config, "labels", "label_table", "regionals")
    labels = nifti.load_label_volume(config["labels"], config["label_table"])
    mode = config.get("mode", "autoseg")
    modality = config.get("modality", "T2W")
    regionals = parse_regional_reports(Path(config["regionals"]).read_text(encoding="utf-8"))
    prompts = _build_prompts(mode, config, labels)
    report = assemble_modes(mode, regionals, prompts, _load_templates(config),
                            modality, labels)
    out = _outdir(config)
    nifti._atomic_write(out / "report.json", report.to_json().encode("utf-8"))
    nifti._atomic_write(out / "report.txt", report.render_text().encode("utf-8"))
    print(json.dumps({"paragraphs": len(report.paragraphs), "out": str(out)}))
    return EXIT_OK


_POLARITY_TEXT = {"hyper": "hyperintense", "hypo": "hypointense"}


def _demo_finding(prompt, records, modality: str) -> str:
    """Deterministic placeholder sentence standing in for the external
    neural report generator."""
    touching = [r for r in records
                if r.mask is not None and (r.mask.bits & prompt.mask.bits).any()]
    polarities = sorted({r.polarity for r in touching})
    if len(polarities) == 1:
        signal = _POLARITY_TEXT[polarities[0]]
    elif polarities:
        signal = "mixed-intensity"
    else:
        signal = "abnormal"
    if prompt.structures:
        where = " and ".join(name for _i, name, _o in prompt.structures)
    else:
        where = "a region outside the labelled atlas"
    plural = "lesions are" if len(touching) > 1 else "lesion is"
    return (f"A synthetic {signal} {plural} seen involving the {where} "
            f"on the {modality} sequence.")


def cmd_pipeline(config: dict) -> int:
    _require(config, "volume", "labels", "label_table")
    volume, labels = _load_inputs(config)
    out = _outdir(config)
    modality = config.get("modality", "T2W")

    synth_cfg = SynthConfig.from_dict({
        **config.get("synth", {}),
        "seed": stage_seed(int(config["seed"]), "synth"),
    })
    abnormal, mask, records = synthesize(volume, labels, synth_cfg)
    nifti.save_volume(abnormal, out / "synth_volume.nii.gz")
    nifti.save_mask(mask, out / "synth_mask.nii.gz", spacing=volume.spacing)
    save_records(records, out / "lesion_records.json")

    roi_cfg = config.get("roi", {})
    prompts = select_rois(mask, labels,
                          min_overlap=int(roi_cfg.get("min_overlap", 1)),
                          connectivity=int(roi_cfg.get("connectivity", 26)))
    for i, prompt in enumerate(prompts):
        save_prompt(prompt, out / f"prompt_{i:03d}.json",
                    out / f"prompt_{i:03d}_mask.nii.gz", spacing=labels.spacing)

    regionals_obj = {}
    for i, prompt in enumerate(prompts):
        name = (" and ".join(n for _i, n, _o in prompt.structures)
                or f"unlocalized region {i}")
        regionals_obj[name] = {
            modality: _demo_finding(prompt, records, modality),
            "prompt_ref": i,
        }
    nifti._atomic_write(out / "regional_reports.json",
                        json.dumps(regionals_obj, indent=2).encode("utf-8"))

    regionals = parse_regional_reports(json.dumps(regionals_obj))
    report = assemble_modes("autoseg", regionals, prompts, _load_templates(config),
                            modality, labels)
    nifti._atomic_write(out / "report.json", report.to_json().encode("utf-8"))
    nifti._atomic_write(out / "report.txt", report.render_text().encode("utf-8"))
    print(json.dumps({
        "lesions": len(records),
        "prompts": len(prompts),
        "paragraphs": len(report.paragraphs),
        "out": str(out),
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionforge",
        description="Synthetic brain-MRI anomalies, ROI prompts, metrics, "
                    "and grounded report assembly.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted path, JSON value)")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="generate synthetic lesions in a scan")
    common(p)
    p.add_argument("--volume", help="input NIfTI scan")
    p.add_argument("--labels", help="brain-structure label NIfTI")
    p.add_argument("--label-table", dest="label_table", help="sidecar JSON id->name table")

    p = sub.add_parser("roi", help="derive region prompts from an anomaly mask")
    common(p)
    p.add_argument("--anomaly", help="binary anomaly mask NIfTI")
    p.add_argument("--labels", help="brain-structure label NIfTI")
    p.add_argument("--label-table", dest="label_table")
    p.add_argument("--min-overlap", type=int, default=None)
    p.add_argument("--connectivity", type=int, choices=(6, 26), default=None)

    p = sub.add_parser("eval-seg", help="score predicted vs ground-truth masks")
    p.add_argument("pred", help="mask file or directory")
    p.add_argument("gt", help="mask file or directory")
    p.add_argument("--hd-percentile", type=float, default=100.0)
    p.add_argument("--use-spacing", action="store_true",
                   help="scale distances by the prediction header spacing")
    p.add_argument("--out", help="also write the report JSON here")

    p = sub.add_parser("eval-report", help="score candidate vs reference report text")
    p.add_argument("candidate", help="text file or directory")
    p.add_argument("reference", help="text file or directory")
    p.add_argument("--out")

    p = sub.add_parser("assemble", help="assemble a global report from regionals")
    common(p)
    p.add_argument("--labels")
    p.add_argument("--label-table", dest="label_table")
    p.add_argument("--regionals", help="regional-report JSON file")
    p.add_argument("--mode", choices=("global", "autoseg", "prompt"))
    p.add_argument("--modality")
    p.add_argument("--anomaly", help="anomaly mask (autoseg mode)")
    p.add_argument("--names", action="append", metavar="A,B,...",
                   help="structure name group for prompt mode (repeatable)")
    p.add_argument("--templates", help="template store JSON")

    p = sub.add_parser("pipeline", help="synth -> roi -> assemble, end to end")
    common(p)
    p.add_argument("--volume")
    p.add_argument("--labels")
    p.add_argument("--label-table", dest="label_table")

    return parser


def _dispatch(args) -> int:
    if args.command in ("eval-seg", "eval-report"):
        return cmd_eval_seg(args) if args.command == "eval-seg" else cmd_eval_report(args)
    config = load_config(args)
    if args.command == "roi":
        for key, dest in (("min_overlap", "min_overlap"), ("connectivity", "connectivity")):
            val = getattr(args, dest, None)
            if val is not None:
                config.setdefault("roi", {})[key] = val
        if getattr(args, "anomaly", None):
            config["anomaly"] = args.anomaly
    if args.command == "assemble":
        for key in ("regionals", "mode", "modality", "anomaly", "templates"):
            val = getattr(args, key, None)
            if val is not None:
                config[key] = val
        if getattr(args, "names", None):
            config["prompt_names"] = [
                [n.strip() for n in group.split(",") if n.strip()]
                for group in args.names
            ]
    handler = {
        "synth": cmd_synth,
        "roi": cmd_roi,
        "assemble": cmd_assemble,
        "pipeline": cmd_pipeline,
    }[args.command]
    return handler(config)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except _INPUT_ERRORS as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return EXIT_INPUT
    except LesionForgeError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return EXIT_COMPUTE
    except Exception as e:  # computation failures must not crash the shell
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
