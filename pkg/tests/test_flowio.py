"""File format round trips and failure diagnostics."""

import numpy as np
import pytest

from motionseg.flowio import (
    FileFormatError,
    FlowField,
    mask_to_pgm,
    pgm_to_mask,
    read_flo,
    read_pfm,
    read_pgm,
    read_ppm,
    write_flo,
    write_pfm,
    write_pgm,
    write_ppm,
)


class TestFlo:
    def test_parse_known_stream(self):
        header = np.array([202021.25], dtype="<f4").tobytes()
        dims = np.array([2, 1], dtype="<i4").tobytes()
        payload = np.array([1.0, 0.0, 0.0, 1.0], dtype="<f4").tobytes()
        flow = read_flo(header + dims + payload)
        assert flow.w == 2 and flow.h == 1
        np.testing.assert_array_equal(flow.u[0], [1.0, 0.0])
        np.testing.assert_array_equal(flow.v[0], [0.0, 1.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_round_trip_bit_exact(self, seed):
        rng = np.random.default_rng(seed)
        flow = FlowField(
            u=rng.normal(size=(9, 13)).astype(np.float32),
            v=rng.normal(size=(9, 13)).astype(np.float32),
        )
        blob = write_flo(flow)
        back = read_flo(blob)
        np.testing.assert_array_equal(back.u, flow.u)
        np.testing.assert_array_equal(back.v, flow.v)
        assert write_flo(back) == blob

    def test_bad_magic(self):
        bad = np.array([0.0], dtype="<f4").tobytes() + np.array([1, 1], dtype="<i4").tobytes()
        with pytest.raises(FileFormatError, match="bad magic"):
            read_flo(bad + b"\x00" * 8)

    def test_truncated_payload(self):
        flow = FlowField(u=np.ones((2, 2), np.float32), v=np.ones((2, 2), np.float32))
        blob = write_flo(flow)
        with pytest.raises(FileFormatError, match="truncated"):
            read_flo(blob[:-4])

    def test_nonpositive_dims(self):
        header = np.array([202021.25], dtype="<f4").tobytes()
        dims = np.array([0, 3], dtype="<i4").tobytes()
        with pytest.raises(FileFormatError, match="nonpositive"):
            read_flo(header + dims)

    def test_nonfinite_rejected_at_construction(self):
        with pytest.raises(FileFormatError, match="non-finite"):
            FlowField(u=np.array([[np.nan]], np.float32), v=np.zeros((1, 1), np.float32))


class TestPnm:
    def test_pgm_round_trip(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, size=(7, 5), dtype=np.uint8)
        blob = write_pgm(img)
        np.testing.assert_array_equal(read_pgm(blob), img)
        assert write_pgm(read_pgm(blob)) == blob

    def test_ppm_round_trip(self):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 256, size=(4, 6, 3), dtype=np.uint8)
        blob = write_ppm(img)
        np.testing.assert_array_equal(read_ppm(blob), img)
        assert write_ppm(read_ppm(blob)) == blob

    def test_mask_convention(self):
        mask = np.array([[0, 1], [1, 0]], dtype=np.uint8)
        blob = mask_to_pgm(mask)
        raw = read_pgm(blob)
        np.testing.assert_array_equal(raw, np.array([[0, 255], [255, 0]], np.uint8))
        np.testing.assert_array_equal(pgm_to_mask(blob), mask)

    def test_pgm_bad_magic(self):
        with pytest.raises(FileFormatError, match="P5"):
            read_pgm(b"P6\n1 1\n255\n\x00")

    def test_pgm_truncated(self):
        with pytest.raises(FileFormatError, match="truncated"):
            read_pgm(b"P5\n4 4\n255\n\x00\x00")

    def test_comment_in_header(self):
        blob = b"P5\n# a comment\n2 1\n255\nAB"
        np.testing.assert_array_equal(read_pgm(blob), np.array([[65, 66]], np.uint8))


class TestPfm:
    @pytest.mark.parametrize("seed", range(3))
    def test_round_trip_bit_exact(self, seed):
        rng = np.random.default_rng(seed)
        vals = rng.normal(size=(5, 8)).astype(np.float32)
        blob = write_pfm(vals)
        np.testing.assert_array_equal(read_pfm(blob), vals)
        assert write_pfm(read_pfm(blob)) == blob

    def test_bottom_up_rows(self):
        vals = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        blob = write_pfm(vals)
        # payload starts with the bottom row
        payload = blob.split(b"-1.0\n", 1)[1]
        first = np.frombuffer(payload, dtype="<f4", count=2)
        np.testing.assert_array_equal(first, [3.0, 4.0])

    def test_bad_magic(self):
        with pytest.raises(FileFormatError, match="Pf"):
            read_pfm(b"PF\n1 1\n-1.0\n" + b"\x00" * 4)

    def test_truncated(self):
        blob = write_pfm(np.ones((3, 3), np.float32))
        with pytest.raises(FileFormatError, match="truncated"):
            read_pfm(blob[:-5])
