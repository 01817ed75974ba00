/** Deterministic fixtures shared by the binding tests. */
import type { Dims, LabelArray, LabelTable, MaskArray, VolumeArray } from "../src/index.js";

/** mulberry32: tiny deterministic PRNG, good enough for fixtures. */
export function prng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export const FIXTURE_TABLE: LabelTable = {
  "1": "left frontal lobe",
  "2": "right frontal lobe",
  "3": "left parietal lobe",
  "4": "right parietal lobe",
};

/**
 * Block atlas + textured intensities, first-dimension-fastest order.
 * Values are generated directly into typed arrays so both transport paths
 * see identical float32 voxels.
 */
export function makeFixture(seed: number, dims: Dims = [20, 20, 16]):
    { volume: VolumeArray; labels: LabelArray } {
  const [H, W, D] = dims;
  const rand = prng(seed);
  const labels = new Int32Array(H * W * D);
  const data = new Float32Array(H * W * D);
  const base = [0, 0.4, 0.55, 0.7, 0.85].map((b) => b + 0.1 * rand());
  const mh = Math.floor(H / 2);
  const mw = Math.floor(W / 2);
  for (let z = 0; z < D; z++) {
    for (let y = 0; y < W; y++) {
      for (let x = 0; x < H; x++) {
        const i = x + H * (y + W * z); // first axis fastest
        const inBrain = x >= 2 && x < H - 2 && y >= 2 && y < W - 2
          && z >= 2 && z < D - 2;
        if (!inBrain) continue;
        const label = (x < mh ? 1 : 2) + (y < mw ? 0 : 2);
        labels[i] = label;
        // smooth-ish gradient plus per-voxel noise, all float32
        const texture = 0.08 * Math.sin(x / 3) * Math.cos(y / 4)
          + 0.05 * Math.sin(z / 2);
        data[i] = Math.fround(base[label] + texture + 0.03 * rand());
      }
    }
  }
  return {
    volume: { dims, data, spacing: [1, 1, 1] },
    labels: { dims, data: labels, spacing: [1, 1, 1] },
  };
}

/** A small blob mask inside the fixture brain. */
export function blobMask(dims: Dims, cx: number, cy: number, cz: number,
                         r: number): MaskArray {
  const [H, W, D] = dims;
  const data = new Uint8Array(H * W * D);
  for (let z = 0; z < D; z++) {
    for (let y = 0; y < W; y++) {
      for (let x = 0; x < H; x++) {
        const d2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2;
        if (d2 <= r * r) data[x + H * (y + W * z)] = 1;
      }
    }
  }
  return { dims, data };
}
