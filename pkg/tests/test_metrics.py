"""IoU, boundary F-measure (vs brute-force oracle), sequence statistics."""

import numpy as np
import pytest

from motionseg.metrics import (
    boundary_f,
    boundary_map,
    default_boundary_radius,
    format_scores_csv,
    iou,
    sequence_stats,
)
from motionseg.tensor import ShapeError


def boundary_f_bruteforce(a, gt, radius):
    """O(B^2) pairwise matching on integer squared distances."""
    ba = np.argwhere(boundary_map(a))
    bg = np.argwhere(boundary_map(gt))
    if len(ba) == 0 and len(bg) == 0:
        return 1.0
    if len(ba) == 0 or len(bg) == 0:
        return 0.0
    r2 = radius * radius

    def matched(src, dst):
        hits = 0
        for p in src:
            d2 = ((dst - p) ** 2).sum(axis=1)
            if d2.min() <= r2:
                hits += 1
        return hits

    precision = matched(ba, bg) / len(ba)
    recall = matched(bg, ba) / len(bg)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


class TestIou:
    def test_identical(self):
        m = np.zeros((4, 4), np.uint8)
        m[1:3, 1:3] = 1
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), np.uint8)
        b = np.zeros((4, 4), np.uint8)
        a[0, 0] = 1
        b[3, 3] = 1
        assert iou(a, b) == 0.0

    def test_partial_overlap(self):
        a = np.zeros((1, 4), np.uint8)
        gt = np.zeros((1, 4), np.uint8)
        a[0, :2] = 1
        gt[0, :3] = 1
        assert iou(a, gt) == pytest.approx(2 / 3)

    def test_both_empty(self):
        assert iou(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a = (rng.random((8, 8)) > 0.5).astype(np.uint8)
        b = (rng.random((8, 8)) > 0.5).astype(np.uint8)
        assert iou(a, b) == iou(b, a)

    def test_nested_monotone(self):
        gt = np.zeros((8, 8), np.uint8)
        gt[1:7, 1:7] = 1
        small = np.zeros_like(gt)
        small[3:5, 3:5] = 1
        mid = np.zeros_like(gt)
        mid[2:6, 2:6] = 1
        assert iou(small, gt) <= iou(mid, gt)

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            iou(np.zeros((2, 2)), np.zeros((3, 3)))


class TestBoundaryF:
    def test_identical_masks(self):
        m = np.zeros((10, 10), np.uint8)
        m[2:7, 3:8] = 1
        assert boundary_f(m, m, radius=2) == 1.0

    def test_one_pixel_shift_within_radius(self):
        a = np.zeros((12, 12), np.uint8)
        b = np.zeros((12, 12), np.uint8)
        a[3:8, 3:8] = 1
        b[4:9, 3:8] = 1  # shifted one pixel down
        assert boundary_f(a, b, radius=2) == 1.0

    def test_far_masks_score_zero(self):
        a = np.zeros((16, 16), np.uint8)
        b = np.zeros((16, 16), np.uint8)
        a[0:2, 0:2] = 1
        b[12:15, 12:15] = 1
        assert boundary_f(a, b, radius=1) == 0.0

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_bruteforce_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a = (rng.random((16, 16)) > 0.6).astype(np.uint8)
        b = (rng.random((16, 16)) > 0.6).astype(np.uint8)
        for radius in (1, 2, 3):
            assert boundary_f(a, b, radius) == boundary_f_bruteforce(a, b, radius)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(3)
        a = (rng.random((14, 14)) > 0.55).astype(np.uint8)
        b = (rng.random((14, 14)) > 0.55).astype(np.uint8)
        f1 = boundary_f(a, b, radius=2)
        f2 = boundary_f(np.rot90(a), np.rot90(b), radius=2)
        assert f1 == pytest.approx(f2, abs=1e-12)

    def test_default_radius(self):
        # 0.75% of the diagonal, rounded up
        assert default_boundary_radius(480, 854) == int(np.ceil(0.0075 * np.hypot(480, 854)))
        assert default_boundary_radius(64, 64) == 1

    def test_empty_conventions(self):
        empty = np.zeros((6, 6), np.uint8)
        full = np.ones((6, 6), np.uint8)
        assert boundary_f(empty, empty, 1) == 1.0
        assert boundary_f(empty, full, 1) == 0.0


class TestBoundaryMap:
    def test_inner_boundary(self):
        m = np.zeros((5, 5), np.uint8)
        m[1:4, 1:4] = 1
        b = boundary_map(m)
        assert b[2, 2] == False  # noqa: E712 - interior
        assert b[1, 1] and b[1, 3] and b[3, 3]
        assert not b[0, 0]

    def test_frame_touching_region(self):
        m = np.ones((4, 4), np.uint8)
        b = boundary_map(m)
        assert b[0].all() and b[-1].all() and b[:, 0].all() and b[:, -1].all()
        assert not b[1:3, 1:3].any()


class TestSequenceStats:
    def test_constant(self):
        s = sequence_stats([0.7] * 8)
        assert s.mean == pytest.approx(0.7)
        assert s.recall == 1.0
        assert s.decay == 0.0

    def test_recall_threshold(self):
        s = sequence_stats([1.0, 1.0, 0.0, 0.0])
        assert s.recall == 0.5

    def test_linear_decay_quartiles(self):
        vals = list(np.linspace(1.0, 0.0, 12))
        s = sequence_stats(vals)
        expect = np.mean(vals[:3]) - np.mean(vals[-3:])
        assert s.decay == pytest.approx(expect)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            sequence_stats([])

    def test_short_sequences(self):
        s = sequence_stats([0.4, 0.9])
        assert s.decay == pytest.approx(0.4 - 0.9)


class TestCsv:
    def test_format(self):
        rows = [("seq0", 0, 0.5, 0.6), ("seq0", 1, 0.7, 0.8)]
        text = format_scores_csv(rows)
        lines = text.splitlines()
        assert lines[0] == "sequence,frame,J,F"
        assert lines[1] == "seq0,0,0.5,0.6"
        assert "seq0,J," in text and "seq0,F," in text
