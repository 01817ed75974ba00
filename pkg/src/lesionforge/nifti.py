"""Minimal NIfTI-1 reader/writer.

Covers the single-file (.nii / .nii.gz, magic ``n+1``) and header+image
pair (.hdr/.img, magic ``ni1``) layouts. Header fields consumed:
sizeof_hdr, dim, datatype, bitpix, pixdim, vox_offset, scl_slope,
scl_inter, magic. Byte order is detected from sizeof_hdr. Loading is
total over 348-byte headers: malformed input raises FormatError or
UnsupportedError, never an uncontrolled exception.

Intensities are converted to float32 on load regardless of the on-disk
type; float32 volumes round-trip bit-exactly through save/load.
"""
from __future__ import annotations

import gzip
import json
import os
import struct
import tempfile
from typing import Optional
from zlib import error as zlib_error

import numpy as np

from .errors import FormatError, UnsupportedError, ValidationError
from .grid import BinaryMask, LabelVolume, Volume

HEADER_SIZE = 348
# data starts after the 4 zero extension-flag bytes in single-file layout
DEFAULT_VOX_OFFSET = 352

_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"

# NIfTI datatype code -> (numpy dtype char, bitpix)
_DTYPES = {
    2: ("u1", 8),    # uint8
    4: ("i2", 16),   # int16
    8: ("i4", 32),   # int32
    16: ("f4", 32),  # float32
    64: ("f8", 64),  # float64
}


def _open_maybe_gz(path):
    p = str(path)
    if p.endswith(".gz"):
        return gzip.open(p, "rb")
    return open(p, "rb")


def _read_bytes(path, offset: int, n: int) -> bytes:
    # chunked so a huge dim field in a corrupt header cannot force a
    # single n-byte preallocation; EOF just yields a short result
    try:
        with _open_maybe_gz(path) as f:
            f.seek(offset)
            chunks = []
            remaining = n
            while remaining > 0:
                chunk = f.read(min(remaining, 1 << 26))
                if not chunk:
                    break
                chunks.append(chunk)
                remaining -= len(chunk)
            return b"".join(chunks)
    except (gzip.BadGzipFile, EOFError, zlib_error) as e:
        raise FormatError(f"bad gzip stream in {path}: {e}") from e


class _Header:
    """Decoded subset of a NIfTI-1 header."""

    __slots__ = ("dims", "spacing", "datatype", "vox_offset", "scl_slope",
                 "scl_inter", "byteorder", "magic")

    def __init__(self, dims, spacing, datatype, vox_offset, scl_slope,
                 scl_inter, byteorder, magic):
        self.dims = dims
        self.spacing = spacing
        self.datatype = datatype
        self.vox_offset = vox_offset
        self.scl_slope = scl_slope
        self.scl_inter = scl_inter
        self.byteorder = byteorder
        self.magic = magic


def parse_header(raw: bytes) -> _Header:
    """Decode the consumed header subset from 348 raw bytes.

    Raises FormatError / UnsupportedError on anything outside the
    declared subset; never propagates struct or arithmetic errors.
    """
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"header truncated: {len(raw)} bytes, need {HEADER_SIZE}")
    raw = raw[:HEADER_SIZE]

    sizeof_hdr_le = struct.unpack_from("<i", raw, 0)[0]
    sizeof_hdr_be = struct.unpack_from(">i", raw, 0)[0]
    if sizeof_hdr_le == HEADER_SIZE:
        bo = "<"
    elif sizeof_hdr_be == HEADER_SIZE:
        bo = ">"
    else:
        raise FormatError(f"sizeof_hdr is {sizeof_hdr_le}, not {HEADER_SIZE}")

    magic = raw[344:348]
    if magic not in (_MAGIC_SINGLE, _MAGIC_PAIR):
        raise FormatError(f"bad magic {magic!r}")

    dim = struct.unpack_from(bo + "8h", raw, 40)
    ndim = dim[0]
    if ndim < 1 or ndim > 7:
        raise FormatError(f"dim[0] = {ndim} outside [1, 7]")
    if ndim > 3 and any(dim[i] > 1 for i in range(4, ndim + 1)):
        raise UnsupportedError(f"{ndim}-D volume with non-singleton higher dims")
    dims = []
    for i in (1, 2, 3):
        d = dim[i] if i <= ndim else 1
        if i <= ndim and d < 1:
            raise FormatError(f"dim[{i}] = {d} must be >= 1")
        dims.append(max(d, 1))

    datatype = struct.unpack_from(bo + "h", raw, 70)[0]
    if datatype not in _DTYPES:
        raise UnsupportedError(f"unsupported datatype code {datatype}")
    bitpix = struct.unpack_from(bo + "h", raw, 72)[0]
    if bitpix != _DTYPES[datatype][1]:
        raise FormatError(f"bitpix {bitpix} inconsistent with datatype {datatype}")

    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    # non-positive / non-finite pixdim entries degrade to 1.0 mm
    spacing = tuple(float(p) if np.isfinite(p) and p > 0 else 1.0 for p in pixdim[1:4])

    vox_offset_f = struct.unpack_from(bo + "f", raw, 108)[0]
    if not np.isfinite(vox_offset_f) or vox_offset_f < 0:
        raise FormatError(f"bad vox_offset {vox_offset_f}")
    vox_offset = int(vox_offset_f)
    if magic == _MAGIC_SINGLE and vox_offset < HEADER_SIZE:
        raise FormatError(f"vox_offset {vox_offset} overlaps the header")

    scl_slope = struct.unpack_from(bo + "f", raw, 112)[0]
    scl_inter = struct.unpack_from(bo + "f", raw, 116)[0]
    if not np.isfinite(scl_slope):
        scl_slope = 0.0
    if not np.isfinite(scl_inter):
        scl_inter = 0.0

    return _Header(tuple(dims), spacing, datatype, vox_offset,
                   float(scl_slope), float(scl_inter), bo, magic)


def _read_payload(path, header: _Header) -> np.ndarray:
    dtype = np.dtype(header.byteorder + _DTYPES[header.datatype][0])
    count = int(np.prod(header.dims))
    nbytes = count * dtype.itemsize

    if header.magic == _MAGIC_PAIR:
        img_path = _pair_image_path(path)
        if not os.path.exists(img_path):
            raise FormatError(f"header pair is missing its image file: {img_path}")
        src, offset = img_path, header.vox_offset
    else:
        src, offset = path, header.vox_offset

    buf = _read_bytes(src, offset, nbytes)
    if len(buf) < nbytes:
        raise FormatError(f"payload truncated: got {len(buf)} bytes, expected {nbytes}")

    flat = np.frombuffer(buf, dtype=dtype)
    # on-disk voxel order is first-axis fastest
    return flat.reshape(header.dims, order="F")


def _pair_image_path(path) -> str:
    p = str(path)
    for suffix, repl in ((".hdr.gz", ".img.gz"), (".hdr", ".img"), (".nii", ".img")):
        if p.endswith(suffix):
            return p[: -len(suffix)] + repl
    return p + ".img"


def load_volume(path) -> Volume:
    """Load a NIfTI-1 scalar volume, applying the scl slope/intercept."""
    path = str(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    header = parse_header(_read_bytes(path, 0, HEADER_SIZE))
    payload = _read_payload(path, header)
    data = payload.astype(np.float32)
    if header.scl_slope != 0.0:
        data = data * np.float32(header.scl_slope) + np.float32(header.scl_inter)
    if not np.isfinite(data).all():
        raise FormatError("payload contains non-finite intensities")
    return Volume(header.dims, header.spacing, data)


def load_raw_labels(path) -> tuple[tuple, tuple, np.ndarray]:
    """Load an integer-typed NIfTI grid without intensity scaling."""
    path = str(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    header = parse_header(_read_bytes(path, 0, HEADER_SIZE))
    if header.datatype not in (2, 4, 8):
        raise ValidationError(
            f"label volume must be integer-typed, got datatype code {header.datatype}"
        )
    payload = _read_payload(path, header)
    return header.dims, header.spacing, payload.astype(np.int32)


def load_label_table(path) -> dict[int, str]:
    """Read a sidecar JSON label table mapping id strings to names."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"label table is not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise FormatError("label table must be a JSON object of id -> name")
    table = {}
    for k, v in obj.items():
        try:
            kid = int(k)
        except ValueError:
            raise FormatError(f"label table key {k!r} is not an integer id") from None
        if not isinstance(v, str):
            raise FormatError(f"label table entry {k!r} must map to a name string")
        table[kid] = v
    return table


def load_label_volume(path, label_table_path) -> LabelVolume:
    """Load an atlas grid plus its sidecar name table, validating both."""
    dims, spacing, labels = load_raw_labels(path)
    table = load_label_table(label_table_path)
    return LabelVolume(dims, spacing, labels, table)


def _build_header(dims, spacing, datatype: int) -> bytearray:
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, dims[0], dims[1], dims[2], 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, _DTYPES[datatype][1])
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, float(DEFAULT_VOX_OFFSET))
    # slope 0 means "no scaling": raw values round-trip untouched
    struct.pack_into("<2f", hdr, 112, 0.0, 0.0)
    struct.pack_into("<4s", hdr, 344, _MAGIC_SINGLE)
    return hdr


def _set_affine(hdr: bytearray, affine: Optional[np.ndarray]) -> None:
    if affine is None:
        return
    struct.pack_into("<h", hdr, 254, 1)  # sform_code = scanner
    struct.pack_into("<4f", hdr, 280, *affine[0, :])
    struct.pack_into("<4f", hdr, 296, *affine[1, :])
    struct.pack_into("<4f", hdr, 312, *affine[2, :])


def _atomic_write(path, blob: bytes) -> None:
    path = str(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode(dims, spacing, affine, payload: np.ndarray, datatype: int, gz: bool) -> bytes:
    hdr = _build_header(dims, spacing, datatype)
    _set_affine(hdr, affine)
    body = bytes(hdr) + b"\x00" * (DEFAULT_VOX_OFFSET - HEADER_SIZE)
    body += payload.ravel(order="F").tobytes()
    if gz:
        import io

        sink = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=sink, mtime=0) as g:
            g.write(body)
        return sink.getvalue()
    return body


def save_volume(v: Volume, path) -> None:
    """Write a Volume as single-file little-endian float32 NIfTI-1."""
    gz = str(path).endswith(".gz")
    blob = _encode(v.dims, v.spacing, v.affine,
                   v.data.astype("<f4", copy=False), 16, gz)
    _atomic_write(path, blob)


def save_mask(m: BinaryMask, path, spacing=(1.0, 1.0, 1.0)) -> None:
    """Write a BinaryMask as a uint8 NIfTI-1 volume (0 background, 1 set)."""
    gz = str(path).endswith(".gz")
    blob = _encode(m.dims, spacing, None, m.bits.astype(np.uint8), 2, gz)
    _atomic_write(path, blob)


def save_labels(labels: LabelVolume, path) -> None:
    """Write a LabelVolume grid as int32 NIfTI-1 (table is saved separately)."""
    gz = str(path).endswith(".gz")
    blob = _encode(labels.dims, labels.spacing, labels.affine,
                   labels.labels.astype("<i4", copy=False), 8, gz)
    _atomic_write(path, blob)


def save_label_table(table: dict[int, str], path) -> None:
    obj = {str(k): v for k, v in sorted(table.items())}
    blob = json.dumps(obj, indent=2, sort_keys=True).encode("utf-8")
    _atomic_write(path, blob)


def load_mask(path) -> BinaryMask:
    """Load a NIfTI volume and binarize it (nonzero -> True)."""
    dims, _spacing, grid = load_raw_labels(path)
    return BinaryMask(dims, grid != 0)
