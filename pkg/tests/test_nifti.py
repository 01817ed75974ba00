import gzip
import struct

import numpy as np
import pytest

from lesionforge.errors import FormatError, UnsupportedError, ValidationError
from lesionforge.grid import BinaryMask, LabelVolume, Volume
from lesionforge.nifti import (
    HEADER_SIZE,
    load_label_volume,
    load_mask,
    load_volume,
    parse_header,
    save_labels,
    save_mask,
    save_volume,
)


def minimal_header(dims=(2, 2, 2), datatype=16, bitpix=32, vox_offset=352.0,
                   scl_slope=0.0, scl_inter=0.0, magic=b"n+1\x00",
                   pixdim=(1.0, 1.0, 1.0)) -> bytearray:
    """Hand-built 348-byte header, independent of the writer under test."""
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, dims[0], dims[1], dims[2], 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, *pixdim, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, vox_offset)
    struct.pack_into("<2f", hdr, 112, scl_slope, scl_inter)
    hdr[344:348] = magic
    return hdr


def write_file(path, hdr: bytearray, payload: bytes, vox_offset=352):
    blob = bytes(hdr) + b"\x00" * (vox_offset - len(hdr)) + payload
    path.write_bytes(blob)


class TestLoad:
    def test_minimal_float32_file(self, tmp_path):
        # 8 float32 voxels in header-declared (first-axis-fastest) order
        values = np.arange(8, dtype="<f4")
        p = tmp_path / "t.nii"
        write_file(p, minimal_header(), values.tobytes())
        v = load_volume(p)
        assert v.dims == (2, 2, 2)
        assert v.spacing == (1.0, 1.0, 1.0)
        assert np.array_equal(v.data.ravel(order="F"), values)

    def test_zero_sizeof_hdr_is_format_error(self, tmp_path):
        hdr = minimal_header()
        struct.pack_into("<i", hdr, 0, 0)
        p = tmp_path / "bad.nii"
        write_file(p, hdr, np.zeros(8, dtype="<f4").tobytes())
        with pytest.raises(FormatError):
            load_volume(p)

    def test_scl_slope_inter_applied(self, tmp_path):
        raw = np.array([3, 0, 1, 2, 5, 6, 7, 8], dtype="<i2")
        hdr = minimal_header(datatype=4, bitpix=16, scl_slope=2.0, scl_inter=1.0)
        p = tmp_path / "scaled.nii"
        write_file(p, hdr, raw.tobytes())
        v = load_volume(p)
        assert v.data.ravel(order="F")[0] == pytest.approx(7.0)  # 3*2+1

    def test_slope_zero_means_unscaled(self, tmp_path):
        raw = np.array([3] * 8, dtype="<i2")
        hdr = minimal_header(datatype=4, bitpix=16, scl_slope=0.0, scl_inter=9.0)
        p = tmp_path / "raw.nii"
        write_file(p, hdr, raw.tobytes())
        assert load_volume(p).data.ravel()[0] == 3.0

    def test_unsupported_datatype(self, tmp_path):
        hdr = minimal_header(datatype=32, bitpix=64)  # complex64
        p = tmp_path / "cplx.nii"
        write_file(p, hdr, b"\x00" * 64)
        with pytest.raises(UnsupportedError):
            load_volume(p)

    def test_4d_with_nonsingleton_rejected(self, tmp_path):
        hdr = minimal_header()
        struct.pack_into("<8h", hdr, 40, 4, 2, 2, 2, 3, 1, 1, 1)
        p = tmp_path / "4d.nii"
        write_file(p, hdr, np.zeros(24, dtype="<f4").tobytes())
        with pytest.raises(UnsupportedError):
            load_volume(p)

    def test_4d_singleton_accepted(self, tmp_path):
        hdr = minimal_header()
        struct.pack_into("<8h", hdr, 40, 4, 2, 2, 2, 1, 1, 1, 1)
        p = tmp_path / "4d1.nii"
        write_file(p, hdr, np.arange(8, dtype="<f4").tobytes())
        assert load_volume(p).dims == (2, 2, 2)

    def test_big_endian_via_sizeof_hdr_swap(self, tmp_path):
        hdr = bytearray(HEADER_SIZE)
        struct.pack_into(">i", hdr, 0, 348)
        struct.pack_into(">8h", hdr, 40, 3, 2, 2, 2, 1, 1, 1, 1)
        struct.pack_into(">h", hdr, 70, 16)
        struct.pack_into(">h", hdr, 72, 32)
        struct.pack_into(">8f", hdr, 76, 1.0, 2.0, 2.0, 2.0, 0, 0, 0, 0)
        struct.pack_into(">f", hdr, 108, 352.0)
        hdr[344:348] = b"n+1\x00"
        p = tmp_path / "be.nii"
        write_file(p, hdr, np.arange(8, dtype=">f4").tobytes())
        v = load_volume(p)
        assert v.spacing == (2.0, 2.0, 2.0)
        assert v.data.ravel(order="F")[3] == 3.0

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.nii"
        write_file(p, minimal_header(), np.zeros(4, dtype="<f4").tobytes())
        with pytest.raises(FormatError, match="truncated"):
            load_volume(p)

    def test_nan_payload_rejected(self, tmp_path):
        vals = np.full(8, np.nan, dtype="<f4")
        p = tmp_path / "nan.nii"
        write_file(p, minimal_header(), vals.tobytes())
        with pytest.raises(FormatError, match="non-finite"):
            load_volume(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_volume(tmp_path / "nope.nii")

    def test_gzip_roundtrip_and_bad_gzip(self, tmp_path):
        values = np.arange(8, dtype="<f4")
        raw = bytes(minimal_header()) + b"\x00" * 4 + values.tobytes()
        good = tmp_path / "ok.nii.gz"
        good.write_bytes(gzip.compress(raw))
        assert np.array_equal(load_volume(good).data.ravel(order="F"), values)
        bad = tmp_path / "bad.nii.gz"
        bad.write_bytes(b"not gzip at all")
        with pytest.raises(FormatError):
            load_volume(bad)

    def test_hdr_img_pair(self, tmp_path):
        hdr = minimal_header(magic=b"ni1\x00", vox_offset=0.0)
        (tmp_path / "pair.hdr").write_bytes(bytes(hdr))
        (tmp_path / "pair.img").write_bytes(np.arange(8, dtype="<f4").tobytes())
        v = load_volume(tmp_path / "pair.hdr")
        assert v.data.ravel(order="F")[5] == 5.0

    def test_nonpositive_pixdim_degrades_to_unit(self, tmp_path):
        hdr = minimal_header(pixdim=(0.0, -2.0, 3.0))
        p = tmp_path / "pd.nii"
        write_file(p, hdr, np.zeros(8, dtype="<f4").tobytes())
        assert load_volume(p).spacing == (1.0, 1.0, 3.0)


class TestSaveRoundTrip:
    def test_float32_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        data = rng.standard_normal((64, 64, 64)).astype(np.float32)
        v = Volume((64, 64, 64), (0.9, 1.1, 1.3), data)
        p = tmp_path / "rt.nii"
        save_volume(v, p)
        back = load_volume(p)
        assert back.dims == v.dims
        assert back.spacing == pytest.approx(v.spacing)
        assert np.array_equal(back.data, v.data)  # bit-exact
        assert back.data.tobytes() == v.data.tobytes()

    def test_gz_deterministic_bytes(self, tmp_path):
        data = np.arange(27, dtype=np.float32).reshape(3, 3, 3)
        v = Volume((3, 3, 3), (1, 1, 1), data)
        a, b = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
        save_volume(v, a)
        save_volume(v, b)
        assert a.read_bytes() == b.read_bytes()
        assert np.array_equal(load_volume(a).data, data)

    def test_unwritable_directory(self, tmp_path):
        v = Volume((2, 2, 2), (1, 1, 1), np.zeros((2, 2, 2), dtype=np.float32))
        with pytest.raises(OSError):
            save_volume(v, tmp_path / "no" / "such" / "dir" / "x.nii")

    def test_mask_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        m = BinaryMask((6, 5, 4), rng.random((6, 5, 4)) < 0.5)
        p = tmp_path / "m.nii.gz"
        save_mask(m, p)
        assert np.array_equal(load_mask(p).bits, m.bits)


class TestLabelVolume:
    def _write(self, tmp_path, grid, table):
        import json

        lv = LabelVolume(grid.shape, (1, 1, 1), grid, table)
        gp = tmp_path / "labels.nii"
        tp = tmp_path / "labels.json"
        save_labels(lv, gp)
        tp.write_text(json.dumps({str(k): v for k, v in table.items()}))
        return gp, tp

    def test_valid_table(self, tmp_path):
        grid = np.array([[[0, 1], [2, 0]], [[1, 1], [0, 2]]], dtype=np.int32)
        gp, tp = self._write(tmp_path, grid, {1: "left frontal lobe", 2: "brainstem"})
        lv = load_label_volume(gp, tp)
        assert lv.present_ids() == [1, 2]
        assert lv.table[2] == "brainstem"

    def test_missing_id_reported(self, tmp_path):
        import json

        grid = np.zeros((2, 2, 2), dtype=np.int32)
        grid[0, 0, 0] = 3
        gp = tmp_path / "g.nii"
        save_labels(LabelVolume(grid.shape, (1, 1, 1), grid, {3: "x"}), gp)
        tp = tmp_path / "t.json"
        tp.write_text(json.dumps({"1": "x"}))
        with pytest.raises(ValidationError, match="3"):
            load_label_volume(gp, tp)

    def test_float_payload_rejected(self, tmp_path):
        v = Volume((2, 2, 2), (1, 1, 1), np.zeros((2, 2, 2), dtype=np.float32))
        gp = tmp_path / "f.nii"
        save_volume(v, gp)
        tp = tmp_path / "t.json"
        tp.write_text("{}")
        with pytest.raises(ValidationError, match="integer"):
            load_label_volume(gp, tp)

    def test_95_region_atlas(self, tmp_path):
        # a full-size atlas-style table: 95 named structures all present
        rng = np.random.default_rng(0)
        grid = rng.integers(0, 96, size=(12, 12, 12)).astype(np.int32)
        for i in range(1, 96):
            grid.ravel()[i] = i  # guarantee presence of every id
        table = {i: f"structure {i:02d}" for i in range(1, 96)}
        gp, tp = self._write(tmp_path, grid, table)
        lv = load_label_volume(gp, tp)
        assert len(lv.table) == 95
        assert lv.present_ids() == list(range(1, 96))

    def test_duplicate_names_rejected(self):
        grid = np.zeros((2, 2, 2), dtype=np.int32)
        with pytest.raises(ValidationError, match="unique"):
            LabelVolume((2, 2, 2), (1, 1, 1), grid, {1: "same", 2: "same"})


class TestHeaderFuzz:
    def test_mutated_headers_never_crash(self, tmp_path):
        # smaller cousin of the acceptance fuzz gate
        rng = np.random.default_rng(99)
        base = bytes(minimal_header())
        payload = np.zeros(8, dtype="<f4").tobytes()
        outcomes = {"ok": 0, "typed": 0}
        for i in range(200):
            hdr = bytearray(base)
            for _ in range(rng.integers(1, 8)):
                hdr[rng.integers(0, HEADER_SIZE)] = rng.integers(0, 256)
            p = tmp_path / "fuzz.nii"
            write_file(p, hdr, payload)
            try:
                load_volume(p)
                outcomes["ok"] += 1
            except (FormatError, UnsupportedError, ValidationError):
                outcomes["typed"] += 1
        assert sum(outcomes.values()) == 200

    def test_parse_header_total_on_random_bytes(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            blob = rng.integers(0, 256, size=HEADER_SIZE, dtype=np.uint8).tobytes()
            try:
                parse_header(blob)
            except (FormatError, UnsupportedError):
                pass

    def test_huge_declared_dims_do_not_allocate(self, tmp_path):
        # dims at int16 max: the loader must fail on the short payload,
        # not try to materialize 3.5e13 voxels
        hdr = minimal_header()
        struct.pack_into("<8h", hdr, 40, 3, 32767, 32767, 32767, 1, 1, 1, 1)
        p = tmp_path / "huge.nii"
        write_file(p, hdr, b"\x00" * 64)
        with pytest.raises(FormatError, match="truncated"):
            load_volume(p)
