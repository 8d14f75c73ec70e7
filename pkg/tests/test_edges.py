"""Edge operator, similarity, and comparison-loss tests."""

import math

import numpy as np
import pytest

from lumenreg.edges import (
    EdgeConfig,
    edge_binary,
    edge_operator,
    frame_loss,
    gaussian_kernel,
    similarity,
)
from lumenreg.frames import DEPTH_CLAMP_MM, DepthFrame


@pytest.fixture
def cfg():
    return EdgeConfig(low=0.1, high=0.2, sigma=1.0, radius=3)


class TestEdgeConfig:
    def test_threshold_ordering_enforced(self):
        with pytest.raises(ValueError):
            EdgeConfig(low=0.3, high=0.2)
        with pytest.raises(ValueError):
            EdgeConfig(low=0.0, high=0.2)

    def test_radius_floor(self):
        with pytest.raises(ValueError):
            EdgeConfig(sigma=4.0, radius=11)  # ceil(3*4) = 12
        EdgeConfig(sigma=4.0, radius=12)

    def test_scaled_keeps_thresholds(self):
        scaled = EdgeConfig(low=0.15, high=0.3, sigma=4.0, radius=12).scaled(4)
        assert scaled.low == 0.15 and scaled.high == 0.3
        assert scaled.sigma == 1.0
        assert scaled.radius == 3


class TestEdgeOperator:
    def test_constant_frame_no_edges(self, cfg):
        assert edge_operator(np.full((40, 50), 17.0), cfg).max() == 0.0

    def test_vertical_step_symmetric_ridge(self, cfg):
        # 20 mm step at column 25; blurred profile symmetric about the ridge
        img = np.full((48, 50), 30.0)
        img[:, 25:] = 50.0
        binary = edge_binary(img, cfg)
        cols = np.unique(np.nonzero(binary[10:-10])[1])
        assert len(cols) == 1
        ridge = cols[0]
        assert ridge in (24, 25)
        e = edge_operator(img, cfg)
        assert e[24, ridge] == 1.0  # peak-normalized blur keeps the crest at 1
        for off in range(1, 4):
            np.testing.assert_allclose(e[24, ridge - off], e[24, ridge + off],
                                       atol=1e-12)
        # hand-convolved horizontal profile: clipped column sums of the kernel
        taps = gaussian_kernel(1.0, 3, peak_normalized=True)
        col_sum = taps.sum()  # vertical response of an all-ones column
        expected = np.minimum(taps * col_sum, 1.0)
        np.testing.assert_allclose(e[24, ridge - 3:ridge + 4], expected, atol=1e-12)

    def test_miss_boundary_is_an_edge(self, cfg):
        # plane-with-hole: misses (inf) clamp far, creating a silhouette edge
        depth = np.full((40, 40), 30.0)
        depth[15:25, 15:25] = np.inf
        binary = edge_binary(DepthFrame(depth), cfg)
        assert binary[12:28, 12:28].sum() > 0
        assert binary[:8].sum() == 0  # far from the hole stays clean

    def test_support_idempotent(self, cfg):
        rng = np.random.default_rng(4)
        depth = rng.uniform(20, 80, (60, 70))
        binary = edge_binary(depth, cfg)
        again = edge_binary(binary.astype(np.float64) * DEPTH_CLAMP_MM, cfg)
        # re-binarizing the pre-blur output: support stays binary 0/1
        assert set(np.unique(binary)) <= {0, 1}
        assert set(np.unique(again)) <= {0, 1}

    def test_output_range(self, cfg):
        rng = np.random.default_rng(5)
        e = edge_operator(rng.uniform(0, 100, (64, 64)), cfg)
        assert e.min() >= 0.0 and e.max() <= 1.0


class TestSimilarity:
    def test_all_ones_is_one(self):
        a = np.ones((3, 8, 9))
        assert similarity(a, a) == 1.0

    def test_disjoint_supports_zero(self):
        a = np.zeros((8, 8))
        b = np.zeros((8, 8))
        a[:4] = 1.0
        b[4:] = 1.0
        assert similarity([a], [b]) == 0.0

    def test_shifted_edge_strictly_decreasing(self, cfg):
        img = np.full((40, 60), 30.0)
        img[:, 30:] = 60.0
        e = edge_operator(img, cfg)
        values = []
        for s in (0, 1, 2, 4):
            shifted = np.roll(e, s, axis=1)
            # brute-force the triple sum of the product
            acc = 0.0
            for i in range(e.shape[0]):
                for j in range(e.shape[1]):
                    acc += e[i, j] * shifted[i, j]
            expected = acc / e.size
            assert similarity([e], [shifted]) == pytest.approx(expected, rel=1e-12)
            values.append(expected)
        assert values[0] > values[1] > values[2] > values[3]

    def test_symmetry_and_scaling(self, cfg):
        rng = np.random.default_rng(6)
        a = rng.uniform(0, 1, (2, 16, 16))
        b = rng.uniform(0, 1, (2, 16, 16))
        assert similarity(a, b) == similarity(b, a)
        assert similarity(0.5 * a, b) == pytest.approx(0.5 * similarity(a, b),
                                                       rel=1e-12)
        assert similarity(a + a, b) == pytest.approx(2 * similarity(a, b), rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            similarity(np.ones((2, 8, 8)), np.ones((2, 8, 9)))

    def test_alignment_is_argmax_over_shifts(self, cfg):
        rng = np.random.default_rng(7)
        depth = rng.uniform(20, 80, (48, 48))
        e = edge_operator(depth, cfg)
        assert e.sum() > 0
        aligned = similarity([e], [e])
        for s in (1, 2, 3, 5, 9):
            assert aligned > similarity([e], [np.roll(e, s, axis=0)])
            assert aligned > similarity([e], [np.roll(e, s, axis=1)])


class TestFrameLoss:
    def test_identity_losses_zero(self):
        rng = np.random.default_rng(8)
        a = rng.uniform(0, 1, (2, 12, 12))
        assert frame_loss(a, a, "l1") == 0.0
        assert frame_loss(a, a, "l2") == 0.0
        assert frame_loss(a, a, "ncc") == pytest.approx(0.0, abs=1e-12)
        mask = (a > 0.5).astype(float)
        assert frame_loss(mask, mask, "dice") == 0.0

    def test_constant_difference(self):
        a = np.zeros((1, 8, 8))
        b = np.ones((1, 8, 8))
        assert frame_loss(a, b, "l1") == 1.0
        assert frame_loss(a, b, "l2") == 1.0

    def test_dice_hand_count(self):
        # 8x8 masks with 50% overlap: |A| = 32, |B| = 32, |A&B| = 16
        a = np.zeros((8, 8))
        b = np.zeros((8, 8))
        a[:, :4] = 1.0
        b[:, 2:6] = 1.0
        expected = 1.0 - 2.0 * 16 / (32 + 32)
        assert frame_loss([a], [b], "dice") == pytest.approx(expected)

    def test_dice_empty_masks_identical(self):
        z = np.zeros((4, 4))
        assert frame_loss([z], [z], "dice") == 0.0

    def test_ncc_degenerate_is_max_loss(self):
        const = np.full((1, 8, 8), 0.7)
        varied = np.random.default_rng(9).uniform(0, 1, (1, 8, 8))
        assert frame_loss(const, varied, "ncc") == 1.0
        assert frame_loss(const, varied, "gc") == 1.0

    def test_gc_zero_at_equality(self):
        rng = np.random.default_rng(10)
        a = rng.uniform(0, 1, (1, 16, 16))
        assert frame_loss(a, a, "gc") == pytest.approx(0.0, abs=1e-12)

    def test_losses_nonnegative(self):
        rng = np.random.default_rng(11)
        a = rng.uniform(0, 1, (3, 10, 10))
        b = rng.uniform(0, 1, (3, 10, 10))
        for metric in ("l1", "l2", "ncc", "gc"):
            assert frame_loss(a, b, metric) >= 0.0
        assert frame_loss((a > 0.5).astype(float), (b > 0.5).astype(float),
                          "dice") >= 0.0

    def test_unknown_metric_rejected(self):
        with pytest.raises(ValueError):
            frame_loss(np.ones((1, 4, 4)), np.ones((1, 4, 4)), "ssim")
