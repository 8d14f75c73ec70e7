"""Synthetic validation cases: trajectories inside a procedural tube,
rendered-depth targets, and a known ground-truth model transform."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bvh import AccelStructure, build_accel, intersect
from .cmaes import BoundsSpec
from .errors import GenerationError
from .geometry import (
    CameraIntrinsics,
    TransformParams,
    downscale_intrinsics,
    invert_transform,
    params_to_transform,
    rotation_exp,
)
from .poses import Keyframe, KeyframeSet, sample_keyframes
from .render import render_depth
from .shapes import make_bent_tube, tube_centerline, tube_frame

TRAJECTORY_KINDS = ("simple", "moderate", "complex")

# interior clearance required of every synthetic camera position (mm)
_MIN_CLEARANCE_MM = 2.0


def endoscope_intrinsics() -> CameraIntrinsics:
    """Calibration of the supported wide-angle endoscope (full HD grid)."""
    return CameraIntrinsics(
        width=1350, height=1080, c_x=679.54, c_y=543.98,
        alpha_0=769.24, alpha_2=-8.13e-4, alpha_3=-6.26e-7, alpha_4=-1.20e-9,
        e=0.9999, f=2.88e-3, g=-2.96e-3,
    )


def synthetic_intrinsics() -> CameraIntrinsics:
    """Half-scale endoscope calibration used by the synthetic experiments.

    Same angular coverage as the full calibration at a quarter of the
    pixel count, which keeps CPU registration runs affordable.
    """
    return downscale_intrinsics(endoscope_intrinsics(), 2)


@dataclass(frozen=True)
class SyntheticCase:
    """A registration problem with known ground truth."""

    keyframes: KeyframeSet
    t_gt: np.ndarray
    t_initial: np.ndarray
    trajectory: tuple  # all camera poses, world frame
    intrinsics: CameraIntrinsics
    kind: str
    seed: int
    offset_params: TransformParams  # truth in the T_initial-relative box


def _look_rotation(forward: np.ndarray, up_hint: np.ndarray) -> np.ndarray:
    z = forward / np.linalg.norm(forward)
    x = np.cross(up_hint, z)
    n = np.linalg.norm(x)
    if n < 1e-9:
        x = np.cross(np.array([1.0, 0.0, 0.0]), z)
        n = np.linalg.norm(x)
    x /= n
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def _trajectory_model_space(kind: str, rng: np.random.Generator, n_poses: int):
    """Camera poses in mesh coordinates, inside the default bent tube."""
    s0 = rng.uniform(0.12, 0.2)
    s1 = s0 + rng.uniform(0.28, 0.38)
    ss = np.linspace(s0, s1, n_poses)
    centers = tube_centerline(ss)
    tangents, normals, binormals = tube_frame(ss)
    up = np.array([0.0, 1.0, 0.0])

    if kind == "simple":
        # straight chord through the bend, constant orientation
        p0, p1 = centers[0], centers[-1]
        positions = p0 + np.linspace(0.0, 1.0, n_poses)[:, None] * (p1 - p0)
        R = _look_rotation(p1 - p0, up)
        rotations = [R] * n_poses
        return positions, rotations

    turns = rng.uniform(1.0, 2.0)
    helix_r = rng.uniform(3.0, 6.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    angles = phase + 2.0 * math.pi * turns * np.linspace(0.0, 1.0, n_poses)
    positions = centers + helix_r * (np.cos(angles)[:, None] * normals
                                     + np.sin(angles)[:, None] * binormals)
    if kind == "moderate":
        mid = n_poses // 2
        R = _look_rotation(tangents[mid], up)
        rotations = [R] * n_poses
        return positions, rotations

    # complex: follow the local tangent with oscillating pitch and yaw
    pitch_amp = rng.uniform(0.05, 0.12)
    yaw_amp = rng.uniform(0.05, 0.12)
    cycles = rng.uniform(1.5, 3.0)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=2)
    rotations = []
    prog = np.linspace(0.0, 1.0, n_poses)
    for i in range(n_poses):
        base = _look_rotation(tangents[i], up)
        pitch = pitch_amp * math.sin(2.0 * math.pi * cycles * prog[i] + phases[0])
        yaw = yaw_amp * math.sin(2.0 * math.pi * cycles * prog[i] + phases[1])
        wobble = rotation_exp(base[:, 0] * pitch) @ rotation_exp(base[:, 1] * yaw)
        rotations.append(wobble @ base)
    return positions, rotations


def _random_rigid(rng: np.random.Generator, max_angle: float = 0.6,
                  max_translation: float = 50.0) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    T = np.eye(4)
    T[:3, :3] = rotation_exp(axis * rng.uniform(0.0, max_angle))
    T[:3, 3] = rng.uniform(-max_translation, max_translation, 3)
    return T


def _gain_field(k: CameraIntrinsics, amplitude: float,
                rng: np.random.Generator) -> np.ndarray:
    """Smooth per-frame multiplicative depth distortion, always positive."""
    c = rng.uniform(-1.0, 1.0, 4)
    ys, xs = np.meshgrid(np.linspace(-1.0, 1.0, k.height),
                         np.linspace(-1.0, 1.0, k.width), indexing="ij")
    field = c[0] * xs + c[1] * ys + c[2] * xs * ys \
        + c[3] * (xs * xs + ys * ys - 1.0)
    return 1.0 + amplitude * field


def _check_interior(accel: AccelStructure, position_model: np.ndarray) -> float:
    """Smallest surface distance along the six axis directions; misses
    (an open or exited surface) come back as -inf."""
    closest = np.inf
    for axis in range(3):
        for sign in (1.0, -1.0):
            d = np.zeros(3)
            d[axis] = sign
            hit = intersect(accel, np.eye(4), position_model, d)
            if hit is None:
                return -np.inf
            closest = min(closest, hit.t)
    return closest


def generate_synthetic_case(kind: str, seed: int,
                            accel: AccelStructure | None = None,
                            intrinsics: CameraIntrinsics | None = None,
                            n_poses: int = 200, keyframes: int = 5,
                            bounds: BoundsSpec | None = None,
                            offset_fraction: float = 0.8,
                            depth_noise_sigma: float = 0.0,
                            scale_jitter: float = 0.0,
                            warp_amplitude: float = 0.0) -> SyntheticCase:
    """Build a seeded registration case with rendered-depth targets.

    A trajectory of the requested kind is laid inside the tube (in model
    coordinates), placed in the world by a random ground-truth model
    transform, and target depths are rendered at the sampled keyframe
    poses. T_initial is the ground truth perturbed by a uniform draw over
    offset_fraction of the search bounds, so the truth sits strictly
    inside the optimizer's box.

    The corruption options emulate learned depth targets:
    depth_noise_sigma adds i.i.d. Gaussian depth noise (mm);
    scale_jitter multiplies each target frame by its own uniform factor
    from 1 +- scale_jitter (per-frame monotone scale inconsistency); and
    warp_amplitude applies a per-frame smooth multiplicative gain field
    over the image (low-order polynomial in the normalized pixel
    coordinates), the frame-specific systematic shape distortion that
    averaging over keyframes is meant to suppress. All gains stay
    positive, so every corruption is a monotone map of true depth.
    """
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory kind {kind!r}; "
                         f"expected one of {TRAJECTORY_KINDS}")
    if accel is None:
        accel = build_accel(make_bent_tube())
    if intrinsics is None:
        intrinsics = synthetic_intrinsics()
    if bounds is None:
        bounds = BoundsSpec.transform_box()

    root = np.random.SeedSequence(entropy=(seed, TRAJECTORY_KINDS.index(kind)))
    rng_traj, rng_gt, rng_noise = [np.random.default_rng(s) for s in root.spawn(3)]

    positions_m, rotations_m = _trajectory_model_space(kind, rng_traj, n_poses)
    for i, p in enumerate(positions_m):
        clearance = _check_interior(accel, p)
        if clearance < _MIN_CLEARANCE_MM:
            raise GenerationError(
                f"pose {i} leaves the mesh interior (clearance {clearance:.2f} mm)")

    t_gt = _random_rigid(rng_gt)
    trajectory = []
    for pos, rot in zip(positions_m, rotations_m):
        P = np.eye(4)
        P[:3, :3] = t_gt[:3, :3] @ rot
        P[:3, 3] = t_gt[:3, :3] @ pos + t_gt[:3, 3]
        trajectory.append(P)

    span = offset_fraction * (bounds.upper - bounds.lower) / 2.0
    center = (bounds.upper + bounds.lower) / 2.0
    offset = TransformParams.from_array(center + rng_gt.uniform(-1.0, 1.0, 6) * span)
    t_initial = t_gt @ invert_transform(params_to_transform(offset))

    indices = sample_keyframes(n_poses, keyframes)
    records = []
    for idx in indices:
        depth = render_depth(accel, t_gt, intrinsics, trajectory[idx]).depth
        if warp_amplitude > 0.0:
            depth = depth * _gain_field(intrinsics, warp_amplitude, rng_noise)
        if scale_jitter > 0.0:
            depth = depth * (1.0 + rng_noise.uniform(-scale_jitter, scale_jitter))
        if depth_noise_sigma > 0.0:
            noise = rng_noise.normal(0.0, depth_noise_sigma, depth.shape)
            depth = np.maximum(depth + np.where(np.isfinite(depth), noise, 0.0), 0.0)
        records.append(Keyframe(index=idx, pose=trajectory[idx], target_depth=depth))

    return SyntheticCase(
        keyframes=KeyframeSet(tuple(records)),
        t_gt=t_gt,
        t_initial=t_initial,
        trajectory=tuple(trajectory),
        intrinsics=intrinsics,
        kind=kind,
        seed=seed,
        offset_params=offset,
    )
