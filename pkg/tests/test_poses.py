"""Pose-pipeline tests: synchronization, hand-eye, keyframes, gap filling."""

import numpy as np
import pytest

from lumenreg.errors import DegenerateMotionError, NoSignalError
from lumenreg.geometry import (
    invert_transform,
    rotation_exp,
    rotation_log,
    validate_transform,
)
from lumenreg.poses import (
    KeyframeSet,
    Keyframe,
    PoseLog,
    interpolate_gaps,
    resample_series,
    robot_to_camera,
    rotation_slerp,
    sample_keyframes,
    solve_handeye,
    synchronize,
)


def random_pose(rng, angle_scale=1.0, translation_scale=50.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    T = np.eye(4)
    T[:3, :3] = rotation_exp(axis * rng.uniform(0.3, 1.4) * angle_scale)
    T[:3, 3] = rng.uniform(-translation_scale, translation_scale, 3)
    return T


def consistent_handeye_set(rng, n):
    """Draw X and camera poses, construct robot poses satisfying the
    hand-eye identity A_a^-1 A_b X = X B_a^-1 B_b exactly."""
    X = random_pose(rng)
    base = random_pose(rng)
    Bs = [random_pose(rng) for _ in range(n)]
    As = [base @ X @ B @ invert_transform(X) for B in Bs]
    return X, As, Bs


class TestSynchronize:
    def test_identical_series_zero_offset(self):
        sig = np.sin(np.arange(300) * 0.07)
        result = synchronize(sig, sig, max_lag=40)
        assert result.offset == 0
        assert result.peak_correlation == pytest.approx(1.0)

    def test_shifted_sinusoid_recovered(self):
        t = np.arange(500)
        sig = np.sin(t * 0.1) + 0.4 * np.sin(t * 0.033 + 1.0)
        delayed = np.roll(sig, 17)
        assert synchronize(sig, delayed, max_lag=50).offset == 17

    def test_negative_offsets(self):
        sig = np.sin(np.arange(400) * 0.09)
        advanced = np.roll(sig, -23)
        assert synchronize(sig, advanced, max_lag=40).offset == -23

    def test_pure_noise_flagged_low_confidence(self):
        rng = np.random.default_rng(0)
        result = synchronize(rng.normal(size=400), rng.normal(size=400),
                             max_lag=30)
        assert result.low_confidence
        assert result.peak_correlation < 0.5

    def test_constant_series_raises(self):
        with pytest.raises(NoSignalError):
            synchronize(np.ones(200), np.sin(np.arange(200) * 0.1), max_lag=20)

    def test_short_series_rejected(self):
        with pytest.raises(ValueError):
            synchronize(np.sin(np.arange(30) * 0.3), np.sin(np.arange(30) * 0.3),
                        max_lag=20)

    def test_rate_resampling(self):
        # same physical motion sampled at 63 Hz and 40 Hz
        t63 = np.arange(0, 8, 1 / 63.0)
        t40 = np.arange(0, 8, 1 / 40.0)
        motion = lambda t: np.sin(2 * np.pi * 0.7 * t) + 0.3 * np.sin(2 * np.pi * 1.3 * t)
        result = synchronize(motion(t63), motion(t40), max_lag=30,
                             flow_rate_hz=63.0, pose_rate_hz=40.0)
        assert result.offset == 0
        assert result.peak_correlation > 0.99

    def test_shift_property_over_seeded_signals(self):
        rng = np.random.default_rng(42)
        for trial in range(20):
            sig = np.cumsum(rng.normal(size=600))  # smooth random walk
            sig += np.sin(np.arange(600) * rng.uniform(0.05, 0.3))
            s = int(rng.integers(-50, 51))
            shifted = np.roll(sig, s)
            assert synchronize(sig, shifted, max_lag=50).offset == s

    def test_resample_series_identity(self):
        sig = np.sin(np.arange(100) * 0.2)
        np.testing.assert_allclose(resample_series(sig, 10.0, 10.0), sig)


class TestHandeye:
    def test_equal_pose_sets_give_identity(self):
        rng = np.random.default_rng(1)
        poses = [random_pose(rng) for _ in range(5)]
        X = solve_handeye([(p, p) for p in poses])
        np.testing.assert_allclose(X, np.eye(4), atol=1e-12)

    def test_noise_free_recovery(self):
        rng = np.random.default_rng(2)
        X, As, Bs = consistent_handeye_set(rng, 8)
        X_est = solve_handeye(list(zip(As, Bs)))
        rot_err = np.linalg.norm(rotation_log(X_est[:3, :3].T @ X[:3, :3]))
        assert rot_err < 1e-9
        assert np.linalg.norm(X_est[:3, 3] - X[:3, 3]) < 1e-9

    def test_parallel_axes_rejected(self):
        def rz(angle, t):
            T = np.eye(4)
            T[:3, :3] = rotation_exp(np.array([0.0, 0.0, angle]))
            T[:3, 3] = t
            return T

        As = [rz(0.2 * i, np.array([i * 1.0, 0.0, 0.0])) for i in range(4)]
        Bs = [rz(0.2 * i, np.array([0.0, i * 1.0, 0.0])) for i in range(4)]
        with pytest.raises(DegenerateMotionError):
            solve_handeye(list(zip(As, Bs)))

    def test_too_few_pairs_rejected(self):
        rng = np.random.default_rng(3)
        X, As, Bs = consistent_handeye_set(rng, 2)
        with pytest.raises(ValueError):
            solve_handeye(list(zip(As, Bs)))

    def test_result_is_valid_transform(self):
        rng = np.random.default_rng(4)
        _, As, Bs = consistent_handeye_set(rng, 6)
        validate_transform(solve_handeye(list(zip(As, Bs))), tol=1e-9)


class TestRobotToCamera:
    def test_calibration_pose_maps_to_itself(self):
        rng = np.random.default_rng(5)
        X, As, Bs = consistent_handeye_set(rng, 4)
        B = robot_to_camera(As[0], X, A_cal=As[0], B_cal=Bs[0])
        np.testing.assert_allclose(B, Bs[0], atol=1e-12)

    def test_identity_chain(self):
        rng = np.random.default_rng(6)
        A = random_pose(rng)
        np.testing.assert_allclose(
            robot_to_camera(A, np.eye(4), np.eye(4), np.eye(4)), A, atol=1e-12)

    def test_forward_constructed_chain(self):
        rng = np.random.default_rng(7)
        X, As, Bs = consistent_handeye_set(rng, 6)
        for A, B in zip(As, Bs):
            np.testing.assert_allclose(
                robot_to_camera(A, X, As[0], Bs[0]), B, atol=1e-9)


class TestSampleKeyframes:
    def test_spec_examples(self):
        assert sample_keyframes(200, 5) == [0, 40, 80, 120, 160]
        assert sample_keyframes(7, 3) == [0, 2, 4]
        assert sample_keyframes(9, 1) == [0]

    def test_invalid_counts_rejected(self):
        with pytest.raises(ValueError):
            sample_keyframes(5, 6)
        with pytest.raises(ValueError):
            sample_keyframes(5, 0)

    def test_always_sorted_unique_in_range(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = int(rng.integers(1, 500))
            k = int(rng.integers(1, n + 1))
            idx = sample_keyframes(n, k)
            assert len(idx) == k
            assert idx == sorted(set(idx))
            assert idx[0] >= 0 and idx[-1] < n


class TestInterpolateGaps:
    def test_no_gaps_identical(self):
        rng = np.random.default_rng(9)
        log = PoseLog(np.arange(3.0), tuple(random_pose(rng) for _ in range(3)))
        out = interpolate_gaps(log)
        for a, b in zip(out.poses, log.poses):
            np.testing.assert_array_equal(a, b)

    def test_translation_midpoint(self):
        T0 = np.eye(4)
        T1 = np.eye(4)
        T1[:3, 3] = (2.0, 0.0, 0.0)
        log = PoseLog(np.arange(3.0), (T0, None, T1))
        mid = interpolate_gaps(log).poses[1]
        np.testing.assert_allclose(mid[:3, 3], (1.0, 0.0, 0.0))

    def test_rotation_slerp_midpoint(self):
        T0 = np.eye(4)
        T1 = np.eye(4)
        T1[:3, :3] = rotation_exp(np.array([0.0, 0.0, np.pi / 2]))
        log = PoseLog(np.arange(3.0), (T0, None, T1))
        mid = interpolate_gaps(log).poses[1]
        angle = np.linalg.norm(rotation_log(mid[:3, :3]))
        assert np.degrees(angle) == pytest.approx(45.0, abs=1e-9)

    def test_uneven_timestamps_weighting(self):
        T0 = np.eye(4)
        T1 = np.eye(4)
        T1[:3, 3] = (4.0, 0.0, 0.0)
        log = PoseLog(np.array([0.0, 1.0, 4.0]), (T0, None, T1))
        mid = interpolate_gaps(log).poses[1]
        np.testing.assert_allclose(mid[:3, 3], (1.0, 0.0, 0.0))

    def test_leading_gap_rejected(self):
        with pytest.raises(ValueError):
            interpolate_gaps(PoseLog(np.arange(2.0), (None, np.eye(4))))

    def test_interpolated_rotations_orthonormal(self):
        rng = np.random.default_rng(10)
        T0, T1 = random_pose(rng), random_pose(rng)
        log = PoseLog(np.arange(7.0), (T0, None, None, None, None, None, T1))
        for pose in interpolate_gaps(log).poses:
            R = pose[:3, :3]
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)

    def test_slerp_endpoint_identity(self):
        rng = np.random.default_rng(11)
        R0, R1 = random_pose(rng)[:3, :3], random_pose(rng)[:3, :3]
        np.testing.assert_allclose(rotation_slerp(R0, R1, 0.0), R0, atol=1e-12)
        np.testing.assert_allclose(rotation_slerp(R0, R1, 1.0), R1, atol=1e-9)


class TestPoseLogType:
    def test_timestamps_strictly_increasing(self):
        with pytest.raises(ValueError):
            PoseLog(np.array([0.0, 0.0]), (np.eye(4), np.eye(4)))

    def test_keyframe_indices_strictly_increasing(self):
        with pytest.raises(ValueError):
            KeyframeSet((Keyframe(4, np.eye(4)), Keyframe(2, np.eye(4))))
