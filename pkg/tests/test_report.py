import json

import numpy as np
import pytest

from lesionforge.errors import FormatError, ValidationError
from lesionforge.grid import BinaryMask, LabelVolume
from lesionforge.report import (
    RegionalReport,
    TemplateStore,
    assemble_global,
    assemble_modes,
    parse_regional_reports,
)
from lesionforge.roi import prompt_from_names, select_rois, whole_image_prompt

REGIONAL_SAMPLE = json.dumps({
    "Bilateral Frontal Parietal Lobes": {
        "FLAIR": "Multiple punctate lesions with hyperintensity are visible in the "
                 "bilateral frontal parietal lobes",
        "T1": "Multiple punctate lesions with isointensity are visible in the "
              "bilateral frontal parietal lobes",
        "T2W": "Multiple punctate lesions with hyperintensity are visible in the "
               "bilateral frontal parietal lobes",
    }
})


def atlas_4(dims=(12, 12, 12)):
    grid = np.zeros(dims, dtype=np.int32)
    grid[1:6, 1:6, 1:11] = 1
    grid[6:11, 1:6, 1:11] = 2
    grid[1:6, 6:11, 1:11] = 3
    grid[6:11, 6:11, 1:11] = 4
    table = {1: "left frontal lobe", 2: "right frontal lobe",
             3: "left parietal lobe", 4: "right parietal lobe"}
    return LabelVolume(dims, (1, 1, 1), grid, table)


class TestParse:
    def test_sample_block(self):
        reports = parse_regional_reports(REGIONAL_SAMPLE)
        assert len(reports) == 1
        r = reports[0]
        assert r.region_name == "Bilateral Frontal Parietal Lobes"
        assert set(r.findings) == {"FLAIR", "T1W", "T2W"}
        assert "isointensity" in r.findings["T1W"]

    def test_empty_object(self):
        assert parse_regional_reports("{}") == []

    def test_unknown_modality_key(self):
        doc = json.dumps({"Brainstem": {"T9W": "weird"}})
        with pytest.raises(ValidationError, match="T9W"):
            parse_regional_reports(doc)

    def test_other_key_accepted(self):
        doc = json.dumps({"Brainstem": {"Other": "No abnormality."}})
        r = parse_regional_reports(doc)[0]
        assert r.findings["Other"] == "No abnormality."

    def test_malformed_json_reports_location(self):
        with pytest.raises(FormatError, match="line"):
            parse_regional_reports('{"a": {')

    def test_non_object_rejected(self):
        with pytest.raises(FormatError):
            parse_regional_reports("[1, 2]")

    def test_prompt_ref_passthrough(self):
        doc = json.dumps({"A": {"T2W": "x", "prompt_ref": 2}})
        assert parse_regional_reports(doc)[0].prompt_ref == 2

    def test_empty_findings_rejected(self):
        with pytest.raises(ValidationError):
            parse_regional_reports(json.dumps({"A": {}}))


class TestTemplateStore:
    def test_default_store_loads(self):
        store = TemplateStore.default()
        assert store.boilerplate
        assert "synthetic" in store_note().lower()  # defaults declared synthetic

    def test_fallback_chain(self):
        store = TemplateStore(
            structures={"brainstem": {"default": "Brainstem fine."}},
            families={"frontal lobe": {"default": "{name} fine."}},
            generic={"default": "The {name} is normal.",
                     "DWI": "No restriction in the {name}."},
            boilerplate=("Midline centered.",),
        )
        assert store.sentence_for("brainstem", "T1W") == "Brainstem fine."
        assert store.sentence_for("left frontal lobe", "T1W") == "left frontal lobe fine."
        assert store.sentence_for("cerebellum", "T1W") == "The cerebellum is normal."
        assert store.sentence_for("cerebellum", "DWI") == "No restriction in the cerebellum."

    def test_generic_default_required(self):
        with pytest.raises(ValidationError):
            TemplateStore({}, {}, {}, ())

    def test_every_structure_resolves(self):
        store = TemplateStore.default()
        for name in ("left thalamus", "right occipital lobe", "pons", "x"):
            assert store.sentence_for(name, "T2W")


def store_note():
    from importlib import resources

    blob = resources.files("lesionforge.data").joinpath("default_templates.json")
    return json.loads(blob.read_text())["note"]


class TestAssemble:
    def test_regional_plus_templates_plus_boilerplate(self):
        labels = atlas_4()
        prompts = [prompt_from_names(["left parietal lobe", "right parietal lobe"], labels)]
        regionals = [RegionalReport("Parietal Lobes", {"T2W": "A lesion is seen."}, 0)]
        store = TemplateStore.default()
        report = assemble_global(regionals, prompts, store, "T2W", labels)
        # 1 finding + templates for structures 1,2 + boilerplate
        assert report.paragraphs[0].text == "A lesion is seen."
        assert report.paragraphs[0].prompt_ref == 0
        n_boiler = len(store.boilerplate)
        assert len(report.paragraphs) == 1 + 2 + n_boiler
        templated = [p.text for p in report.paragraphs[1:3]]
        assert any("left frontal lobe" in t for t in templated)
        assert any("right frontal lobe" in t for t in templated)

    def test_zero_regionals_all_templates(self):
        labels = atlas_4()
        store = TemplateStore.default()
        report = assemble_global([], [], store, "T2W", labels)
        assert len(report.paragraphs) == 4 + len(store.boilerplate)
        assert all(p.prompt_ref is None for p in report.paragraphs)

    def test_duplicate_coverage_keeps_both_paragraphs(self):
        labels = atlas_4()
        prompts = [prompt_from_names(["left frontal lobe"], labels),
                   prompt_from_names(["left frontal lobe"], labels)]
        regionals = [
            RegionalReport("LF a", {"T2W": "First finding."}, 0),
            RegionalReport("LF b", {"T2W": "Second finding."}, 1),
        ]
        store = TemplateStore.default()
        report = assemble_global(regionals, prompts, store, "T2W", labels)
        texts = [p.text for p in report.paragraphs]
        assert texts[:2] == ["First finding.", "Second finding."]
        # templates computed against the union: structures 2,3,4 templated once
        n_templates = len(texts) - 2 - len(store.boilerplate)
        assert n_templates == 3

    def test_coverage_completeness_and_no_duplicates(self):
        labels = atlas_4()
        rng = np.random.default_rng(0)
        store = TemplateStore.default()
        for _ in range(10):
            bits = rng.random((12, 12, 12)) < 0.05
            prompts = select_rois(BinaryMask((12, 12, 12), bits), labels)
            regionals = [
                RegionalReport(f"region {i}", {"T2W": f"Finding {i}."}, i)
                for i in range(len(prompts))
            ]
            report = assemble_global(regionals, prompts, store, "T2W", labels)
            prompted = set().union(*(p.structure_ids() for p in prompts)) if prompts else set()
            n_templates = len(report.paragraphs) - len(regionals) - len(store.boilerplate)
            assert n_templates == len(set(labels.table) - prompted)

    def test_unknown_prompt_ref_rejected(self):
        labels = atlas_4()
        regionals = [RegionalReport("A", {"T2W": "x"}, 5)]
        with pytest.raises(ValidationError, match="5"):
            assemble_global(regionals, [], TemplateStore.default(), "T2W", labels)

    def test_determinism(self):
        labels = atlas_4()
        prompts = [prompt_from_names(["left frontal lobe"], labels)]
        regionals = [RegionalReport("A", {"T2W": "x"}, 0)]
        store = TemplateStore.default()
        a = assemble_global(regionals, prompts, store, "T2W", labels)
        b = assemble_global(regionals, prompts, store, "T2W", labels)
        assert a.to_json() == b.to_json()
        assert a.render_text() == b.render_text()


class TestModes:
    def test_global_mode_single_paragraph(self):
        labels = atlas_4()
        prompts = [whole_image_prompt(labels.dims)]
        regionals = [RegionalReport("whole scan", {"T2W": "Everything described."})]
        report = assemble_modes("global", regionals, prompts,
                                TemplateStore.default(), "T2W", labels)
        assert report.mode == "global"
        assert len(report.paragraphs) == 1
        assert report.paragraphs[0].text == "Everything described."

    def test_prompt_mode_ordering_follows_names(self):
        labels = atlas_4()
        groups = [["right parietal lobe"], ["left frontal lobe"]]
        prompts = [prompt_from_names(g, labels) for g in groups]
        regionals = [
            RegionalReport("rp", {"T2W": "First named."}, 0),
            RegionalReport("lf", {"T2W": "Second named."}, 1),
        ]
        report = assemble_modes("prompt", regionals, prompts,
                                TemplateStore.default(), "T2W", labels)
        assert report.mode == "prompt"
        assert [p.text for p in report.paragraphs[:2]] == ["First named.", "Second named."]

    def test_autoseg_mode_component_ordering(self):
        labels = atlas_4()
        bits = np.zeros((12, 12, 12), dtype=bool)
        bits[2, 2, 2] = True                 # small lesion, structure 1
        bits[7:10, 7:10, 7:10] = True        # large lesion, structure 4
        prompts = select_rois(BinaryMask((12, 12, 12), bits), labels)
        assert prompts[0].anomaly_voxels == 27  # larger first
        regionals = [
            RegionalReport("big", {"T2W": "Large lesion paragraph."}, 0),
            RegionalReport("small", {"T2W": "Small lesion paragraph."}, 1),
        ]
        report = assemble_modes("autoseg", regionals, prompts,
                                TemplateStore.default(), "T2W", labels)
        assert report.paragraphs[0].text == "Large lesion paragraph."
        assert report.paragraphs[1].text == "Small lesion paragraph."

    def test_bad_mode(self):
        labels = atlas_4()
        with pytest.raises(ValueError):
            assemble_modes("magic", [], [], TemplateStore.default(), "T2W", labels)

    def test_json_rendering_shape(self):
        labels = atlas_4()
        report = assemble_modes("global",
                                [RegionalReport("w", {"T2W": "All good."})],
                                [whole_image_prompt(labels.dims)],
                                TemplateStore.default(), "T2W", labels)
        obj = json.loads(report.to_json())
        assert obj["mode"] == "global" and obj["modality"] == "T2W"
        assert obj["paragraphs"][0] == {"text": "All good.", "prompt_ref": 0}
        assert report.render_text() == "All good.\n"
