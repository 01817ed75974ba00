/**
 * Minimal NIfTI-1 codec over plain buffers.
 *
 * Single-file layout only (magic "n+1\0", data at vox_offset), little
 * endian on write, either byte order on read (detected from sizeof_hdr).
 * Voxel linear order is first-dimension-fastest, matching the on-disk
 * layout, so encode/decode never reorders data.
 */
import { gunzipSync, gzipSync } from "node:zlib";

export type Dims = [number, number, number];

export interface DecodedVolume {
  dims: Dims;
  spacing: [number, number, number];
  data: Float32Array;
}

export interface DecodedIntVolume {
  dims: Dims;
  spacing: [number, number, number];
  data: Int32Array;
}

const HEADER_SIZE = 348;
const VOX_OFFSET = 352;

// datatype code -> bytes per voxel
const DTYPE_SIZE: Record<number, number> = { 2: 1, 4: 2, 8: 4, 16: 4, 64: 8 };

export class NiftiError extends Error {}

function isGzip(buf: Uint8Array): boolean {
  return buf.length >= 2 && buf[0] === 0x1f && buf[1] === 0x8b;
}

function product(dims: Dims): number {
  return dims[0] * dims[1] * dims[2];
}

function buildHeader(dims: Dims, spacing: [number, number, number],
                     datatype: number, bitpix: number): Uint8Array {
  const hdr = new Uint8Array(VOX_OFFSET); // header + 4 zero extension bytes
  const view = new DataView(hdr.buffer);
  view.setInt32(0, HEADER_SIZE, true);
  view.setInt16(40, 3, true);
  view.setInt16(42, dims[0], true);
  view.setInt16(44, dims[1], true);
  view.setInt16(46, dims[2], true);
  for (let i = 4; i <= 7; i++) view.setInt16(40 + 2 * i, 1, true);
  view.setInt16(70, datatype, true);
  view.setInt16(72, bitpix, true);
  view.setFloat32(76, 1.0, true); // qfac
  view.setFloat32(80, spacing[0], true);
  view.setFloat32(84, spacing[1], true);
  view.setFloat32(88, spacing[2], true);
  view.setFloat32(108, VOX_OFFSET, true);
  view.setFloat32(112, 0.0, true); // scl_slope 0: unscaled
  view.setFloat32(116, 0.0, true);
  hdr[344] = 0x6e; // n
  hdr[345] = 0x2b; // +
  hdr[346] = 0x31; // 1
  hdr[347] = 0x00;
  return hdr;
}

function encode(dims: Dims, spacing: [number, number, number],
                payload: Uint8Array, datatype: number, bitpix: number,
                gz: boolean): Uint8Array {
  const hdr = buildHeader(dims, spacing, datatype, bitpix);
  const body = new Uint8Array(hdr.length + payload.length);
  body.set(hdr, 0);
  body.set(payload, hdr.length);
  // level/strategy defaults differ from Python's gzip, but both sides of
  // every comparison decode voxels, never raw .gz bytes
  return gz ? new Uint8Array(gzipSync(body)) : body;
}

export function encodeFloat32(dims: Dims, data: Float32Array,
                              spacing: [number, number, number] = [1, 1, 1],
                              gz = false): Uint8Array {
  if (data.length !== product(dims)) {
    throw new NiftiError(`data length ${data.length} != dims product ${product(dims)}`);
  }
  return encode(dims, spacing, new Uint8Array(data.buffer.slice(
    data.byteOffset, data.byteOffset + data.byteLength)), 16, 32, gz);
}

export function encodeInt32(dims: Dims, data: Int32Array,
                            spacing: [number, number, number] = [1, 1, 1],
                            gz = false): Uint8Array {
  if (data.length !== product(dims)) {
    throw new NiftiError(`data length ${data.length} != dims product ${product(dims)}`);
  }
  return encode(dims, spacing, new Uint8Array(data.buffer.slice(
    data.byteOffset, data.byteOffset + data.byteLength)), 8, 32, gz);
}

export function encodeUint8(dims: Dims, data: Uint8Array,
                            spacing: [number, number, number] = [1, 1, 1],
                            gz = false): Uint8Array {
  if (data.length !== product(dims)) {
    throw new NiftiError(`data length ${data.length} != dims product ${product(dims)}`);
  }
  return encode(dims, spacing, data.slice(), 2, 8, gz);
}

interface Parsed {
  dims: Dims;
  spacing: [number, number, number];
  datatype: number;
  voxOffset: number;
  sclSlope: number;
  sclInter: number;
  little: boolean;
  raw: Uint8Array;
}

function parse(buf: Uint8Array): Parsed {
  const raw = isGzip(buf) ? new Uint8Array(gunzipSync(buf)) : buf;
  if (raw.length < HEADER_SIZE) {
    throw new NiftiError(`file too small for a header: ${raw.length} bytes`);
  }
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  let little = true;
  if (view.getInt32(0, true) !== HEADER_SIZE) {
    if (view.getInt32(0, false) === HEADER_SIZE) {
      little = false;
    } else {
      throw new NiftiError(`sizeof_hdr is not ${HEADER_SIZE}`);
    }
  }
  const magic = String.fromCharCode(raw[344], raw[345], raw[346]);
  if (magic !== "n+1") {
    throw new NiftiError(`unsupported magic ${JSON.stringify(magic)}`);
  }
  const ndim = view.getInt16(40, little);
  if (ndim < 1 || ndim > 7) throw new NiftiError(`dim[0]=${ndim} out of range`);
  const dims: Dims = [1, 1, 1];
  for (let i = 1; i <= 3; i++) {
    const d = i <= ndim ? view.getInt16(40 + 2 * i, little) : 1;
    if (i <= ndim && d < 1) throw new NiftiError(`dim[${i}]=${d} invalid`);
    dims[i - 1] = Math.max(d, 1);
  }
  for (let i = 4; i <= ndim; i++) {
    if (view.getInt16(40 + 2 * i, little) > 1) {
      throw new NiftiError("higher-dimensional volumes are not supported");
    }
  }
  const datatype = view.getInt16(70, little);
  if (!(datatype in DTYPE_SIZE)) {
    throw new NiftiError(`unsupported datatype code ${datatype}`);
  }
  const spacing: [number, number, number] = [1, 1, 1];
  for (let i = 0; i < 3; i++) {
    const p = view.getFloat32(80 + 4 * i, little);
    spacing[i] = Number.isFinite(p) && p > 0 ? p : 1.0;
  }
  const voxOffset = Math.trunc(view.getFloat32(108, little));
  if (voxOffset < HEADER_SIZE) throw new NiftiError(`bad vox_offset ${voxOffset}`);
  const sclSlope = view.getFloat32(112, little);
  const sclInter = view.getFloat32(116, little);
  return { dims, spacing, datatype, voxOffset, sclSlope, sclInter, little, raw };
}

function readVoxels(p: Parsed): number[] {
  const n = product(p.dims);
  const need = n * DTYPE_SIZE[p.datatype];
  if (p.raw.length < p.voxOffset + need) {
    throw new NiftiError(`payload truncated: need ${need} bytes`);
  }
  const view = new DataView(p.raw.buffer, p.raw.byteOffset + p.voxOffset, need);
  const out = new Array<number>(n);
  for (let i = 0; i < n; i++) {
    switch (p.datatype) {
      case 2: out[i] = view.getUint8(i); break;
      case 4: out[i] = view.getInt16(2 * i, p.little); break;
      case 8: out[i] = view.getInt32(4 * i, p.little); break;
      case 16: out[i] = view.getFloat32(4 * i, p.little); break;
      default: out[i] = view.getFloat64(8 * i, p.little); break;
    }
  }
  return out;
}

export function decodeFloat32(buf: Uint8Array): DecodedVolume {
  const p = parse(buf);
  const vox = readVoxels(p);
  const data = new Float32Array(vox.length);
  const scale = p.sclSlope !== 0 && Number.isFinite(p.sclSlope);
  for (let i = 0; i < vox.length; i++) {
    data[i] = Math.fround(scale ? vox[i] * p.sclSlope + p.sclInter : vox[i]);
  }
  return { dims: p.dims, spacing: p.spacing, data };
}

export function decodeInt32(buf: Uint8Array): DecodedIntVolume {
  const p = parse(buf);
  if (p.datatype === 16 || p.datatype === 64) {
    throw new NiftiError("expected an integer-typed volume");
  }
  return { dims: p.dims, spacing: p.spacing, data: Int32Array.from(readVoxels(p)) };
}

export function decodeMask(buf: Uint8Array): { dims: Dims; data: Uint8Array } {
  const v = decodeInt32(buf);
  const bits = new Uint8Array(v.data.length);
  for (let i = 0; i < v.data.length; i++) bits[i] = v.data[i] !== 0 ? 1 : 0;
  return { dims: v.dims, data: bits };
}
