/**
 * Typed-array bindings to the lesionforge toolkit.
 *
 * Arrays cross the boundary as flat buffers in first-dimension-fastest
 * (NIfTI) voxel order plus a dims triple; the implementation marshals
 * them through the CLI's file interface in a private temp directory.
 * Input arrays are never mutated.
 */
import { readFileSync, writeFileSync, readdirSync } from "node:fs";
import { isAbsolute, join } from "node:path";

import {
  Dims,
  decodeFloat32,
  decodeMask,
  encodeFloat32,
  encodeInt32,
  encodeUint8,
} from "./nifti.js";
import { CliError, runCli, withTempDir } from "./runner.js";

export { CliError } from "./runner.js";
export { NiftiError } from "./nifti.js";
export type { Dims } from "./nifti.js";

export interface VolumeArray {
  dims: Dims;
  data: Float32Array;
  spacing?: [number, number, number];
}

export interface LabelArray {
  dims: Dims;
  data: Int32Array;
  spacing?: [number, number, number];
}

export interface MaskArray {
  dims: Dims;
  data: Uint8Array;
}

export type LabelTable = Record<string, string>;

/** Mirrors the CLI's synth config block; all fields optional. */
export interface SynthOptions {
  epsilon?: number | null;
  sigma_b?: number;
  lesion_count_range?: [number, number];
  edge_probability?: number;
  shape_source_weights?: [number, number];
  ellipsoid_axes_range?: [number, number];
  elastic_alpha?: number;
  elastic_sigma?: number;
  polarity_weights?: [number, number];
}

export interface LesionRecord {
  structure_id: number;
  center: [number, number, number];
  on_edge: boolean;
  polarity: "hyper" | "hypo";
  i_a: number;
  shape_voxels: number;
  shape_origin: string;
}

export interface SynthesisResult {
  volume: VolumeArray;
  mask: MaskArray;
  records: LesionRecord[];
}

export interface RegionPromptResult {
  mask: MaskArray;
  source: { kind: "auto" | "human"; component?: number; names?: string[] };
  structures: { id: number; name: string; overlap: number }[];
  anomaly_voxels: number;
  unlocalized: boolean;
}

export interface SegMetrics {
  dsc: number;
  pre: number;
  se: number | null;
  /** Hausdorff distance; null when undefined (an empty mask). */
  hd: number | null;
}

export interface TextMetrics {
  bleu4: number;
  rouge1: number;
}

function checkDims(a: Dims, b: Dims, what: string): void {
  if (a[0] !== b[0] || a[1] !== b[1] || a[2] !== b[2]) {
    throw new CliError(2, "ValueError",
      `${what}: dimension mismatch ${JSON.stringify(a)} vs ${JSON.stringify(b)}`);
  }
}

function writeInputs(dir: string, volume: VolumeArray | null, labels: LabelArray,
                     table: LabelTable): { volumePath: string; labelPath: string; tablePath: string } {
  const spacing = volume?.spacing ?? labels.spacing ?? [1, 1, 1];
  const labelPath = join(dir, "labels.nii");
  writeFileSync(labelPath, encodeInt32(labels.dims, labels.data,
    labels.spacing ?? spacing));
  const tablePath = join(dir, "labels.json");
  writeFileSync(tablePath, JSON.stringify(table));
  let volumePath = "";
  if (volume) {
    volumePath = join(dir, "volume.nii");
    writeFileSync(volumePath, encodeFloat32(volume.dims, volume.data, spacing));
  }
  return { volumePath, labelPath, tablePath };
}

/**
 * Blend synthetic lesions into a scan. Numerically identical to running
 * `lesionforge synth` on files holding the same voxels with the same seed.
 */
export function synthesize(volume: VolumeArray, labels: LabelArray,
                           table: LabelTable, seed: number,
                           options: SynthOptions = {}): SynthesisResult {
  checkDims(volume.dims, labels.dims, "synthesize");
  return withTempDir((dir) => {
    const paths = writeInputs(dir, volume, labels, table);
    const out = join(dir, "out");
    const config = {
      volume: paths.volumePath,
      labels: paths.labelPath,
      label_table: paths.tablePath,
      seed,
      out,
      synth: options,
    };
    const cfgPath = join(dir, "config.json");
    writeFileSync(cfgPath, JSON.stringify(config));
    runCli(["synth", "--config", cfgPath]);
    const outVolume = decodeFloat32(readFileSync(join(out, "synth_volume.nii.gz")));
    const outMask = decodeMask(readFileSync(join(out, "synth_mask.nii.gz")));
    const records = JSON.parse(
      readFileSync(join(out, "lesion_records.json"), "utf-8")) as LesionRecord[];
    return {
      volume: { dims: outVolume.dims, spacing: outVolume.spacing, data: outVolume.data },
      mask: { dims: outMask.dims, data: outMask.data },
      records,
    };
  });
}

/** Region prompts for each connected anomaly component. */
export function selectRois(mask: MaskArray, labels: LabelArray, table: LabelTable,
                           minOverlap = 1, connectivity: 6 | 26 = 26): RegionPromptResult[] {
  checkDims(mask.dims, labels.dims, "selectRois");
  return withTempDir((dir) => {
    const paths = writeInputs(dir, null, labels, table);
    const maskPath = join(dir, "anomaly.nii");
    writeFileSync(maskPath, encodeUint8(mask.dims, mask.data));
    const out = join(dir, "out");
    runCli(["roi", "--anomaly", maskPath, "--labels", paths.labelPath,
            "--label-table", paths.tablePath, "--out", out,
            "--min-overlap", String(minOverlap),
            "--connectivity", String(connectivity)]);
    const prompts: RegionPromptResult[] = [];
    const names = readdirSync(out).filter(
      (n) => n.startsWith("prompt_") && n.endsWith(".json")).sort();
    for (const name of names) {
      const meta = JSON.parse(readFileSync(join(out, name), "utf-8"));
      const ref = isAbsolute(meta.mask_ref) ? meta.mask_ref : join(out, meta.mask_ref);
      const m = decodeMask(readFileSync(ref));
      prompts.push({
        mask: { dims: m.dims, data: m.data },
        source: meta.source,
        structures: meta.structures,
        anomaly_voxels: meta.anomaly_voxels,
        unlocalized: meta.unlocalized,
      });
    }
    return prompts;
  });
}

/** DSC / precision / sensitivity / Hausdorff between two masks. */
export function segMetrics(pred: MaskArray, gt: MaskArray,
                           hdPercentile: 100 | 95 = 100): SegMetrics {
  checkDims(pred.dims, gt.dims, "segMetrics");
  return withTempDir((dir) => {
    const predPath = join(dir, "pred.nii");
    const gtPath = join(dir, "gt.nii");
    writeFileSync(predPath, encodeUint8(pred.dims, pred.data));
    writeFileSync(gtPath, encodeUint8(gt.dims, gt.data));
    const stdout = runCli(["eval-seg", predPath, gtPath,
                           "--hd-percentile", String(hdPercentile)]);
    const report = JSON.parse(stdout);
    const c = report.cases[0];
    return { dsc: c.dsc, pre: c.pre, se: c.se, hd: c.hd };
  });
}

/** BLEU-4 (weights 0,0,0,1) and ROUGE-1 for a candidate/reference pair. */
export function textMetrics(candidate: string, reference: string): TextMetrics {
  return withTempDir((dir) => {
    const candPath = join(dir, "cand.txt");
    const refPath = join(dir, "ref.txt");
    writeFileSync(candPath, candidate);
    writeFileSync(refPath, reference);
    const stdout = runCli(["eval-report", candPath, refPath]);
    const c = JSON.parse(stdout).cases[0];
    return { bleu4: c.bleu4, rouge1: c.rouge1 };
  });
}
