"""Trajectory preprocessing: video/pose synchronization, hand-eye
calibration, robot-to-camera mapping, keyframe sampling, and pose-gap
interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMotionError, NoSignalError
from .geometry import invert_transform, rotation_exp, rotation_log, validate_transform

LOW_CONFIDENCE_CORRELATION = 0.5


@dataclass(frozen=True)
class PoseLog:
    """Timestamped homogeneous poses; None marks a missing sample."""

    timestamps: np.ndarray
    poses: tuple
    rate_hz: float | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if ts.ndim != 1 or len(ts) != len(self.poses):
            raise ValueError("timestamps and poses must be equal-length 1-D")
        if len(ts) > 1 and not (np.diff(ts) > 0).all():
            raise ValueError("timestamps must be strictly increasing")
        poses = []
        for i, p in enumerate(self.poses):
            if p is None:
                poses.append(None)
            else:
                try:
                    # 1e-6 admits poses parsed from 9-significant-digit text
                    poses.append(validate_transform(p, tol=1e-6))
                except ValueError as err:
                    raise ValueError(f"pose {i}: {err}") from err
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", tuple(poses))

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.array([p is None for p in self.poses])


@dataclass(frozen=True)
class Keyframe:
    """One registration target: a frame index, its camera pose, the
    precomputed target edge frame, and optionally the raw target depth."""

    index: int
    pose: np.ndarray
    target_edges: np.ndarray | None = None
    target_depth: np.ndarray | None = None


@dataclass(frozen=True)
class KeyframeSet:
    keyframes: tuple

    def __post_init__(self):
        idx = [kf.index for kf in self.keyframes]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"keyframe indices must be strictly increasing: {idx}")
        if idx and idx[0] < 0:
            raise ValueError("keyframe indices must be nonnegative")
        object.__setattr__(self, "keyframes", tuple(self.keyframes))

    def __len__(self) -> int:
        return len(self.keyframes)

    def __iter__(self):
        return iter(self.keyframes)

    def __getitem__(self, i) -> Keyframe:
        return self.keyframes[i]

    @property
    def poses(self) -> list[np.ndarray]:
        return [kf.pose for kf in self.keyframes]


@dataclass(frozen=True)
class SyncResult:
    """Temporal offset (samples by which the second series lags the first),
    its peak correlation, and a low-confidence flag."""

    offset: int
    peak_correlation: float
    low_confidence: bool


def resample_series(series, src_rate_hz: float, dst_rate_hz: float) -> np.ndarray:
    """Linear-interpolation resampling onto the destination rate."""
    series = np.asarray(series, dtype=np.float64)
    duration = (len(series) - 1) / src_rate_hz
    t_dst = np.arange(0.0, duration + 0.5 / dst_rate_hz, 1.0 / dst_rate_hz)
    t_src = np.arange(len(series)) / src_rate_hz
    return np.interp(t_dst, t_src, series)


def _ncc_at_lag(a: np.ndarray, b: np.ndarray, lag: int) -> float:
    if lag >= 0:
        xa, xb = a[: len(a) - lag or None], b[lag:]
    else:
        xa, xb = a[-lag:], b[: len(b) + lag or None]
    n = min(len(xa), len(xb))
    xa, xb = xa[:n] - xa[:n].mean(), xb[:n] - xb[:n].mean()
    denom = np.sqrt(np.sum(xa * xa) * np.sum(xb * xb))
    if denom <= 0.0:
        return 0.0
    return float(np.sum(xa * xb) / denom)


def synchronize(flow_magnitude, pose_displacement, max_lag: int,
                flow_rate_hz: float | None = None,
                pose_rate_hz: float | None = None) -> SyncResult:
    """Temporal offset with maximum normalized cross-correlation.

    Series are zero-meaned and correlated at integer lags in
    [-max_lag, max_lag]; ties break toward the smaller |lag|. When both
    rates are given and differ, the second series is linearly resampled
    to the first one's rate, and the offset is in samples of that rate.
    A positive offset means the second series lags the first:
    pose_displacement[t + offset] ~ flow_magnitude[t].
    """
    a = np.asarray(flow_magnitude, dtype=np.float64)
    b = np.asarray(pose_displacement, dtype=np.float64)
    if flow_rate_hz and pose_rate_hz and flow_rate_hz != pose_rate_hz:
        b = resample_series(b, pose_rate_hz, flow_rate_hz)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("series contain non-finite values")
    if len(a) < 2 * max_lag or len(b) < 2 * max_lag:
        raise ValueError(f"series too short for max_lag={max_lag}")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise NoSignalError("constant series carry no synchronization signal")

    lags = sorted(range(-max_lag, max_lag + 1), key=abs)  # ties -> smaller |lag|
    best_lag, best_corr = 0, -np.inf
    for lag in lags:
        c = _ncc_at_lag(a, b, lag)
        if c > best_corr:
            best_lag, best_corr = lag, c
    return SyncResult(best_lag, best_corr,
                      low_confidence=best_corr < LOW_CONFIDENCE_CORRELATION)


def solve_handeye(pairs) -> np.ndarray:
    """Solve A X = X B for the fixed gripper-to-camera transform.

    pairs is a sequence of (robot pose A_i, camera pose B_i); all ordered
    pose pairs contribute one relative motion each. The rotation is the
    closed-form log-map least squares (align the axis-angle vectors of
    the A and B motions), then the translation solves the stacked linear
    system (R_A - I) t_X = R_X t_B - t_A.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 pose pairs, got {len(pairs)}")
    A = [validate_transform(a) for a, _ in pairs]
    B = [validate_transform(b) for _, b in pairs]

    alphas, betas, motions = [], [], []
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            Ra = invert_transform(A[i]) @ A[j]
            Rb = invert_transform(B[i]) @ B[j]
            alphas.append(rotation_log(Ra[:3, :3]))
            betas.append(rotation_log(Rb[:3, :3]))
            motions.append((Ra, Rb))

    M = np.zeros((3, 3))
    for alpha, beta in zip(alphas, betas):
        M += np.outer(beta, alpha)
    mtm = M.T @ M
    eigvals, eigvecs = np.linalg.eigh(mtm)
    if eigvals[0] < 1e-12 * max(eigvals[-1], 1.0):
        raise DegenerateMotionError(
            "rotation axes of the relative motions are (nearly) parallel; "
            "hand-eye rotation is not identifiable"
        )
    inv_sqrt = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
    R_x = inv_sqrt @ M.T

    rows, rhs = [], []
    for Ra, Rb in motions:
        rows.append(Ra[:3, :3] - np.eye(3))
        rhs.append(R_x @ Rb[:3, 3] - Ra[:3, 3])
    C = np.vstack(rows)
    d = np.concatenate(rhs)
    t_x, _, rank, _ = np.linalg.lstsq(C, d, rcond=None)
    if rank < 3:
        raise DegenerateMotionError(
            "relative motions do not constrain the hand-eye translation "
            "(stacked system is rank deficient)"
        )

    X = np.eye(4)
    X[:3, :3] = R_x
    X[:3, 3] = t_x
    return validate_transform(X, tol=1e-6)


def robot_to_camera(A_i: np.ndarray, X: np.ndarray,
                    A_cal: np.ndarray, B_cal: np.ndarray) -> np.ndarray:
    """Map a robot pose to the camera pose through the hand-eye transform:
    B_i = B_cal X^-1 A_cal^-1 A_i X."""
    A_i = validate_transform(A_i)
    return B_cal @ invert_transform(X) @ invert_transform(A_cal) @ A_i @ X


def sample_keyframes(n_frames: int, k: int) -> list[int]:
    """Uniform-stride keyframe indices: {0, d, ..., (k-1) d}, d = floor(n/k)."""
    if not 1 <= k <= n_frames:
        raise ValueError(f"need 1 <= K <= N, got K={k}, N={n_frames}")
    delta = n_frames // k
    return [i * delta for i in range(k)]


def rotation_slerp(R0: np.ndarray, R1: np.ndarray, fraction: float) -> np.ndarray:
    """Constant-velocity geodesic between two rotations."""
    return R0 @ rotation_exp(fraction * rotation_log(R0.T @ R1))


def interpolate_gaps(log: PoseLog) -> PoseLog:
    """Fill missing samples between the neighboring present poses.

    Translations interpolate linearly in time; rotations follow the
    constant-velocity geodesic (slerp). Leading or trailing gaps are an
    error: the log cannot be extrapolated.
    """
    if len(log) == 0:
        return log
    if log.poses[0] is None or log.poses[-1] is None:
        raise ValueError("leading/trailing missing samples cannot be interpolated")
    present = [i for i, p in enumerate(log.poses) if p is not None]
    filled = list(log.poses)
    for a, b in zip(present, present[1:]):
        if b == a + 1:
            continue
        Ta, Tb = log.poses[a], log.poses[b]
        ta, tb = log.timestamps[a], log.timestamps[b]
        for i in range(a + 1, b):
            f = (log.timestamps[i] - ta) / (tb - ta)
            T = np.eye(4)
            T[:3, :3] = rotation_slerp(Ta[:3, :3], Tb[:3, :3], f)
            T[:3, 3] = (1.0 - f) * Ta[:3, 3] + f * Tb[:3, 3]
            filled[i] = T
    return PoseLog(log.timestamps, tuple(filled), log.rate_hz)
