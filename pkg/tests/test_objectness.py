"""Objectness voting and fusion rule."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionseg.objectness import (
    FusionParams,
    fuse,
    read_proposals_dir,
    synth_proposals,
    voting_objectness,
)
from motionseg.flowio import mask_to_pgm
from motionseg.tensor import ShapeError


class TestVoting:
    def test_coverage_ratio(self):
        rng = np.random.default_rng(0)
        h = w = 8
        proposals = []
        # pixel (0,0) covered by 40 of 100 proposals
        for i in range(100):
            m = np.zeros((h, w), dtype=np.uint8)
            if i < 40:
                m[0, 0] = 1
            m[7, 7] = 1  # covered by all
            proposals.append(m)
        o = voting_objectness(proposals, h, w)
        assert o[0, 0] == pytest.approx(0.4)
        assert o[7, 7] == pytest.approx(1.0)
        assert o[3, 3] == 0.0

    def test_empty_list_is_zero(self):
        o = voting_objectness([], 4, 4)
        np.testing.assert_array_equal(o, np.zeros((4, 4), np.float32))

    def test_size_mismatch_rejected(self):
        with pytest.raises(ShapeError, match="proposal 0"):
            voting_objectness([np.zeros((3, 3), np.uint8)], 4, 4)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        props = [(rng.random((5, 5)) > 0.5).astype(np.uint8) for _ in range(7)]
        a = voting_objectness(props, 5, 5)
        b = voting_objectness(props[::-1], 5, 5)
        np.testing.assert_array_equal(a, b)


class TestFuse:
    def test_formula_cases(self):
        m = np.array([[0.8, 0.95, 0.0]])
        o = np.array([[0.0, 0.7, 0.9]])
        p = fuse(m, o, FusionParams(k=0.5))
        assert p[0, 0] == pytest.approx(0.4)
        assert p[0, 1] == pytest.approx(1.0)  # min(1.14, 1)
        assert p[0, 2] == 0.0

    def test_size_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            fuse(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_bounds(self):
        rng = np.random.default_rng(2)
        m = rng.random((16, 16))
        o = rng.random((16, 16))
        fp = FusionParams(k=0.5)
        p = fuse(m, o, fp)
        assert np.all(p <= 1.0)
        assert np.all(p >= fp.k * m - 1e-12)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=200, deadline=None)
    def test_monotone(self, m1, m2, o1, o2):
        fp = FusionParams(k=0.5)
        lo = fuse(np.array([[min(m1, m2)]]), np.array([[min(o1, o2)]]), fp)
        hi = fuse(np.array([[max(m1, m2)]]), np.array([[max(o1, o2)]]), fp)
        assert lo[0, 0] <= hi[0, 0] + 1e-12

    def test_full_objectness_never_suppresses(self):
        rng = np.random.default_rng(3)
        m = rng.random((12, 12))
        p = fuse(m, np.ones((12, 12)), FusionParams(k=0.5))
        for tau in (0.1, 0.3, 0.5, 0.7, 0.9):
            assert np.all((m > tau) <= (p > tau))

    def test_k_validated(self):
        with pytest.raises(ValueError):
            FusionParams(k=1.5)


class TestSynthProposals:
    def _instances(self):
        a = np.zeros((16, 16), dtype=np.uint8)
        a[2:6, 2:6] = 1
        b = np.zeros((16, 16), dtype=np.uint8)
        b[9:14, 8:15] = 1
        return [a, b]

    def test_exact_cover_without_jitter(self):
        masks = self._instances()
        props = synth_proposals(masks, n=2, jitter=0, rng=np.random.default_rng(0))
        o = voting_objectness(props, 16, 16)
        union = (masks[0] | masks[1]).astype(bool)
        assert np.all(o[union] == 1.0)
        assert np.all(o[~union] == 0.0)

    def test_zero_count(self):
        assert synth_proposals(self._instances(), 0, 1, np.random.default_rng(0)) == []

    def test_deterministic(self):
        masks = self._instances()
        a = synth_proposals(masks, 10, 2, np.random.default_rng(5), distractor_fraction=0.3)
        b = synth_proposals(masks, 10, 2, np.random.default_rng(5), distractor_fraction=0.3)
        for ma, mb in zip(a, b):
            np.testing.assert_array_equal(ma, mb)

    def test_no_instances_needs_size(self):
        with pytest.raises(ValueError, match="h, w"):
            synth_proposals([], 3, 0, np.random.default_rng(0))
        props = synth_proposals([], 3, 0, np.random.default_rng(0), h=8, w=8)
        assert len(props) == 3

    def test_read_proposals_dir(self, tmp_path):
        masks = self._instances()
        for i, m in enumerate(masks):
            (tmp_path / f"prop_{i:03d}.pgm").write_bytes(mask_to_pgm(m))
        back = read_proposals_dir(tmp_path)
        assert len(back) == 2
        np.testing.assert_array_equal(back[0], masks[0])

    def test_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="proposals"):
            read_proposals_dir(tmp_path / "nope")
