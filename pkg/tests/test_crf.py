"""Mean-field CRF: identities, normalization, naive/lattice agreement."""

import numpy as np
import pytest
from scipy import ndimage

from motionseg.crf import (
    CrfParams,
    binarize,
    desk_crf_params,
    make_unary,
    mean_field,
)
from motionseg.metrics import iou
from motionseg.scene import SceneConfig, generate_scene
from motionseg.tensor import ShapeError

# naive/lattice equivalence is checked in the contractive regime
# (total Potts weight below 4): with stronger coupling the fixed point is
# locally unstable and two exact-in-different-ways operators may diverge.
# Bandwidths are the desk-scale ones so kernel masses stay well away from
# the isolated-pixel floor.
AGREEMENT_PARAMS = dict(appearance_weight=2.0, theta_alpha=10.0, theta_beta=8.0,
                        smoothness_weight=1.0, theta_gamma=1.5,
                        iterations=10, lattice_quality=8.0)


def textured_instance(seed, size=32):
    scene = generate_scene(SceneConfig(height=size, width=size), seed)
    rng = np.random.default_rng(seed + 1000)
    pm = ndimage.gaussian_filter(rng.random((size, size)) * 0.6 + 0.2, 2.0)
    return scene.rgb_t, pm


class TestMakeUnary:
    def test_half_probability(self):
        u = make_unary(np.full((2, 2), 0.5))
        np.testing.assert_allclose(u, np.log(2.0))

    def test_clamped_extremes(self):
        u = make_unary(np.array([[1.0]]), floor=1e-6)
        assert u[1, 0, 0] == pytest.approx(1e-6, rel=1e-3)
        assert u[0, 0, 0] == pytest.approx(-np.log(1e-6), rel=1e-6)
        assert np.all(np.isfinite(make_unary(np.array([[0.0, 1.0]]))))

    def test_monotone(self):
        u = make_unary(np.array([[0.2, 0.5, 0.9]]))
        moving = u[1, 0]
        assert moving[0] > moving[1] > moving[2]


class TestMeanFieldIdentities:
    def test_zero_pairwise_returns_clamped_input(self):
        rng = np.random.default_rng(0)
        p = rng.random((8, 8))
        params = CrfParams(appearance_weight=0.0, smoothness_weight=0.0, iterations=5)
        out = mean_field(make_unary(p), None, params, mode="naive")
        np.testing.assert_allclose(out, np.clip(p, 1e-6, 1 - 1e-6), atol=1e-12)

    def test_zero_iterations_identity(self):
        rng = np.random.default_rng(1)
        p = rng.random((6, 6))
        rgb = (rng.random((6, 6, 3)) * 255).astype(np.uint8)
        for mode in ("naive", "lattice"):
            out = mean_field(make_unary(p), rgb, CrfParams(iterations=0), mode=mode)
            np.testing.assert_allclose(out, np.clip(p, 1e-6, 1 - 1e-6), atol=1e-12)

    def test_marginals_are_probabilities(self):
        rgb, pm = textured_instance(2, size=16)
        out = mean_field(make_unary(pm), rgb, desk_crf_params(), mode="lattice")
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_bad_unary_shape(self):
        with pytest.raises(ShapeError):
            mean_field(np.zeros((3, 4, 4)), None, CrfParams())

    def test_bad_mode(self):
        with pytest.raises(ValueError, match="mode"):
            mean_field(np.zeros((2, 4, 4)), None, CrfParams(), mode="exact")


class TestNaiveLatticeAgreement:
    @pytest.mark.parametrize("seed", range(3))
    def test_16x16_agreement(self, seed):
        rgb, pm = textured_instance(seed, size=16)
        params = CrfParams(**AGREEMENT_PARAMS)
        a = mean_field(make_unary(pm), rgb, params, mode="naive")
        b = mean_field(make_unary(pm), rgb, params, mode="lattice")
        assert np.abs(a - b).max() <= 1e-3

    def test_32x32_agreement_single(self):
        rgb, pm = textured_instance(11)
        params = CrfParams(**AGREEMENT_PARAMS)
        a = mean_field(make_unary(pm), rgb, params, mode="naive")
        b = mean_field(make_unary(pm), rgb, params, mode="lattice")
        assert np.abs(a - b).max() <= 1e-3

    def test_per_iteration_normalization(self):
        """Q stays a distribution: checked implicitly through the moving
        marginal staying within [0,1] and the two-label construction; here
        the marginals of an explicit run are summed against 1."""
        from motionseg.crf import _softmax2

        rng = np.random.default_rng(5)
        neg_e = rng.normal(size=(2, 50))
        q = _softmax2(neg_e)
        np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-5)
        assert q.min() >= 0


class TestRefinementDirection:
    def test_boundary_eroded_input_improves(self):
        """On the construction the CRF targets (blurred, eroded, noisy
        probability map with intact color edges) refinement must not hurt."""
        rng = np.random.default_rng(7)
        befores, afters = [], []
        for seed in range(4):
            scene = generate_scene(
                SceneConfig(height=32, width=32, motion_probability=1.0,
                            num_objects=(2, 3)), seed)
            gt = scene.moving_mask.astype(np.float64)
            p = ndimage.gaussian_filter(gt, 1.6)
            p = np.clip(p * 0.75 + 0.08 + rng.normal(0, 0.06, p.shape), 0, 1)
            befores.append(iou(binarize(p), scene.moving_mask))
            refined = mean_field(make_unary(p), scene.rgb_t, desk_crf_params(),
                                 mode="lattice")
            afters.append(iou(binarize(refined), scene.moving_mask))
        assert np.mean(afters) >= np.mean(befores)
        assert sum(a >= b for a, b in zip(afters, befores)) >= 3


class TestBinarize:
    def test_above_threshold(self):
        assert np.all(binarize(np.full((3, 3), 0.6), 0.5) == 1)

    def test_tie_goes_static(self):
        assert np.all(binarize(np.full((3, 3), 0.5), 0.5) == 0)

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(2)
        p = rng.random((10, 10))
        hi = binarize(p, 0.7)
        lo = binarize(p, 0.3)
        assert np.all(hi <= lo)

    def test_tau_validated(self):
        with pytest.raises(ValueError):
            binarize(np.zeros((2, 2)), 0.0)


class TestParams:
    def test_invariants(self):
        with pytest.raises(ValueError):
            CrfParams(theta_alpha=0.0)
        with pytest.raises(ValueError):
            CrfParams(iterations=-1)
        with pytest.raises(ValueError):
            CrfParams(appearance_weight=-0.1)
