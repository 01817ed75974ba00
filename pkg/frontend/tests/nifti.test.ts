import { describe, expect, it } from "vitest";

import {
  NiftiError,
  decodeFloat32,
  decodeInt32,
  decodeMask,
  encodeFloat32,
  encodeInt32,
  encodeUint8,
} from "../src/nifti.js";
import { prng } from "./helpers.js";

describe("nifti codec", () => {
  it("round-trips float32 volumes bit-exactly", () => {
    const rand = prng(7);
    const data = new Float32Array(60);
    for (let i = 0; i < data.length; i++) data[i] = Math.fround(rand() * 10 - 5);
    const blob = encodeFloat32([3, 4, 5], data, [0.9, 1.1, 1.3]);
    const back = decodeFloat32(blob);
    expect(back.dims).toEqual([3, 4, 5]);
    expect(back.spacing[0]).toBeCloseTo(0.9, 6);
    expect(Buffer.from(back.data.buffer)).toEqual(Buffer.from(data.buffer));
  });

  it("round-trips through gzip", () => {
    const data = new Float32Array([1, 2, 3, 4, 5, 6, 7, 8]);
    const blob = encodeFloat32([2, 2, 2], data, [1, 1, 1], true);
    expect(blob[0]).toBe(0x1f); // gzip magic
    expect(Array.from(decodeFloat32(blob).data)).toEqual([1, 2, 3, 4, 5, 6, 7, 8]);
  });

  it("round-trips int32 and uint8 grids", () => {
    const ints = new Int32Array([0, 1, 2, 3, 0, 2, 1, 4]);
    expect(Array.from(decodeInt32(encodeInt32([2, 2, 2], ints)).data))
      .toEqual(Array.from(ints));
    const bits = new Uint8Array([1, 0, 1, 1, 0, 0, 0, 1]);
    expect(Array.from(decodeMask(encodeUint8([2, 2, 2], bits)).data))
      .toEqual(Array.from(bits));
  });

  it("rejects wrong-length payloads", () => {
    expect(() => encodeFloat32([2, 2, 2], new Float32Array(7))).toThrow(NiftiError);
  });

  it("rejects malformed headers", () => {
    const blob = encodeFloat32([2, 2, 2], new Float32Array(8));
    const broken = blob.slice();
    broken[0] = 99; // sizeof_hdr no longer 348
    expect(() => decodeFloat32(broken)).toThrow(NiftiError);
  });

  it("rejects float payload where integers are expected", () => {
    const blob = encodeFloat32([2, 2, 2], new Float32Array(8));
    expect(() => decodeInt32(blob)).toThrow(NiftiError);
  });

  it("preserves first-axis-fastest ordering", () => {
    // voxel (1,0,0) is linear index 1; (0,1,0) is index H=2
    const data = new Float32Array(8);
    data[1] = 42;
    data[2] = 7;
    const back = decodeFloat32(encodeFloat32([2, 2, 2], data));
    expect(back.data[1]).toBe(42);
    expect(back.data[2]).toBe(7);
  });
});
