"""Ground-truth rendering through the omnidirectional camera.

All operations cast one ray per pixel of the (optionally decimated)
camera grid against the model placed by a rigid model transform. Poses
are camera-to-world homogeneous matrices. Everything here is pure; the
underlying kernels release the GIL, so different keyframes can render
concurrently from plain threads.
"""

from __future__ import annotations

import numpy as np

from . import bvh
from .bvh import AccelStructure, T_EPSILON
from .frames import (
    CoverageMap,
    DepthFrame,
    FlowFrame,
    NormalFrame,
    OcclusionFrame,
    OCCLUSION_RANGE_MM,
)
from .geometry import (
    CameraIntrinsics,
    camera_ray_grid,
    downscale_intrinsics,
    invert_transform,
    max_fov_angle,
)

_grid_cache: dict[tuple[CameraIntrinsics, int], np.ndarray] = {}

# visibility tolerance when re-tracing toward a known surface point (mm)
_VIS_TOL = 1e-3


def cached_ray_grid(k: CameraIntrinsics, scale: int = 1) -> np.ndarray:
    """Unit camera-frame ray directions, (H, W, 3), memoized."""
    key = (k, scale)
    grid = _grid_cache.get(key)
    if grid is None:
        grid = camera_ray_grid(downscale_intrinsics(k, scale))
        grid.setflags(write=False)
        _grid_cache[key] = grid
    return grid


def trace_grid(accel: AccelStructure, model_transform: np.ndarray,
               cam_dirs: np.ndarray, pose: np.ndarray,
               hint_grid: np.ndarray | None = None, out=None):
    """Trace every pixel ray of a camera grid.

    Returns (t, prim, u, v) arrays of the grid shape; prim are BVH
    primitive indices (-1 on miss). `out` may carry preallocated arrays
    from a previous call to avoid reallocation; hints are optional
    primitive indices that only speed the search.
    """
    h, w = cam_dirs.shape[:2]
    T_inv = invert_transform(np.asarray(model_transform, dtype=np.float64))
    rot = T_inv[:3, :3] @ np.asarray(pose, dtype=np.float64)[:3, :3]
    origin = T_inv[:3, :3] @ np.asarray(pose, dtype=np.float64)[:3, 3] + T_inv[:3, 3]
    if out is None:
        out = (np.empty((h, w)), np.empty((h, w), np.int32),
               np.empty((h, w)), np.empty((h, w)))
    out_t, out_prim, out_u, out_v = out
    if hint_grid is None:
        hint_grid = np.full((h, w), -1, np.int32)
    bvh.raycast_grid_rows(*bvh._accel_args(accel), cam_dirs,
                          np.ascontiguousarray(rot), np.ascontiguousarray(origin),
                          0, h, T_EPSILON, hint_grid,
                          out_t, out_prim, out_u, out_v)
    return out


def _check_scale(scale: int):
    if scale not in (1, 2, 4):
        raise ValueError(f"downsample factor must be 1, 2 or 4, got {scale}")


def render_depth(accel: AccelStructure, model_transform: np.ndarray,
                 k: CameraIntrinsics, pose: np.ndarray, scale: int = 1) -> DepthFrame:
    """Depth along the camera z-axis at each pixel; misses are +inf.

    Depth is the camera-frame z of the nearest hit (t times the unit
    camera direction's z), not the ray length. Hits beyond the 90-degree
    incidence circle (possible with very wide calibrations) floor at 0.
    """
    _check_scale(scale)
    cam = cached_ray_grid(k, scale)
    t, prim, _, _ = trace_grid(accel, model_transform, cam, pose)
    depth = np.where(prim >= 0, np.maximum(t * cam[..., 2], 0.0), np.inf)
    return DepthFrame(depth)


def render_normals(accel: AccelStructure, model_transform: np.ndarray,
                   k: CameraIntrinsics, pose: np.ndarray, scale: int = 1) -> NormalFrame:
    """Geometric normal of the nearest hit, in camera coordinates, with
    sign chosen to face the camera (n . ray < 0)."""
    _check_scale(scale)
    cam = cached_ray_grid(k, scale)
    _, prim, _, _ = trace_grid(accel, model_transform, cam, pose)
    valid = prim >= 0
    faces = accel.prim_face[np.where(valid, prim, 0)]
    n_model = accel.mesh.face_normals[faces]
    T = np.asarray(model_transform, dtype=np.float64)
    pose = np.asarray(pose, dtype=np.float64)
    # model -> world -> camera
    rot = pose[:3, :3].T @ T[:3, :3]
    n_cam = n_model @ rot.T
    flip = np.einsum("hwc,hwc->hw", n_cam, cam) > 0.0
    n_cam[flip] = -n_cam[flip]
    n_cam[~valid] = 0.0
    return NormalFrame(n_cam, valid)


def render_occlusion(accel: AccelStructure, model_transform: np.ndarray,
                     k: CameraIntrinsics, pose: np.ndarray, scale: int = 1) -> OcclusionFrame:
    """Mark pixels whose surface occludes another face within
    OCCLUSION_RANGE_MM (camera-frame z) of the camera origin.

    A continuation ray is cast past the first hit (with the usual
    t-epsilon offset); the pixel is 1 iff that second hit's camera-frame
    depth is within range.
    """
    _check_scale(scale)
    cam = cached_ray_grid(k, scale)
    t, prim, _, _ = trace_grid(accel, model_transform, cam, pose)
    hit = (prim >= 0).ravel()
    h, w = cam.shape[:2]

    T_inv = invert_transform(np.asarray(model_transform, dtype=np.float64))
    pose = np.asarray(pose, dtype=np.float64)
    rot = T_inv[:3, :3] @ pose[:3, :3]
    origin = T_inv[:3, :3] @ pose[:3, 3] + T_inv[:3, 3]

    dirs_model = (cam.reshape(-1, 3) @ rot.T)[hit]
    origins2 = origin + t.ravel()[hit, None] * dirs_model

    n = len(origins2)
    t2 = np.empty(n)
    prim2 = np.empty(n, np.int32)
    bvh.raycast_batch(*bvh._accel_args(accel),
                      np.ascontiguousarray(origins2), np.ascontiguousarray(dirs_model),
                      T_EPSILON, t2, prim2, np.empty(n), np.empty(n), False)
    z2 = (t.ravel()[hit] + t2) * cam.reshape(-1, 3)[hit, 2]
    occluding = (prim2 >= 0) & (z2 <= OCCLUSION_RANGE_MM)

    mask = np.zeros(h * w, dtype=np.uint8)
    mask[np.nonzero(hit)[0][occluding]] = 1
    return OcclusionFrame(mask.reshape(h, w))


def _solve_radii(k: CameraIntrinsics, thetas: np.ndarray) -> np.ndarray:
    """Vectorized inverse of theta(rho) = atan2(rho, f(rho)) by bisection."""
    lo = np.zeros_like(thetas)
    hi = np.full_like(thetas, k.rho_max)
    sin_t = np.sin(thetas)
    cos_t = np.cos(thetas)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        g = k.radial_poly(mid) * sin_t - mid * cos_t
        above = g > 0.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def project_points(k: CameraIntrinsics, pts_cam: np.ndarray):
    """Project camera-frame points to pixels; vectorized ray_to_pixel.

    Returns (u, v, in_fov) arrays; coordinates are only meaningful where
    in_fov is True.
    """
    pts = np.asarray(pts_cam, dtype=np.float64)
    lateral = np.hypot(pts[..., 0], pts[..., 1])
    theta = np.arctan2(lateral, pts[..., 2])
    in_fov = theta <= max_fov_angle(k)
    rho = _solve_radii(k, np.where(in_fov, theta, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(lateral > 0.0, rho / np.where(lateral > 0.0, lateral, 1.0), 0.0)
    up = pts[..., 0] * scale
    vp = pts[..., 1] * scale
    A = k.stretch
    u = A[0, 0] * up + A[0, 1] * vp + k.c_x
    v = A[1, 0] * up + A[1, 1] * vp + k.c_y
    return u, v, in_fov


def render_flow(accel: AccelStructure, model_transform: np.ndarray,
                k: CameraIntrinsics, pose_prev: np.ndarray, pose_curr: np.ndarray,
                scale: int = 1) -> FlowFrame:
    """Optical flow from the previous frame's grid into the current frame.

    For each pixel (u, v) of the previous frame, the surface point it sees
    is projected into the current camera, giving (u2, v2) and the stored
    displacement (du, dv) = (u2 - u, v2 - v), so that
    I_prev(u, v) = I_curr(u + du, v + dv). A pixel is invalid when the
    previous ray misses, the point leaves the current camera's field of
    view or image bounds, or another surface occludes it in the current
    frame.
    """
    _check_scale(scale)
    ks = downscale_intrinsics(k, scale)
    cam = cached_ray_grid(k, scale)
    h, w = cam.shape[:2]
    t, prim, _, _ = trace_grid(accel, model_transform, cam, pose_prev)
    valid = prim >= 0

    pose_prev = np.asarray(pose_prev, dtype=np.float64)
    pose_curr = np.asarray(pose_curr, dtype=np.float64)
    dirs_world = cam @ pose_prev[:3, :3].T
    pts_world = pose_prev[:3, 3] + np.where(valid[..., None], t[..., None], 0.0) * dirs_world

    # current-camera coordinates and projection
    rel = (pts_world - pose_curr[:3, 3]) @ pose_curr[:3, :3]
    u2, v2, in_fov = project_points(ks, rel)
    valid &= in_fov
    valid &= (u2 >= 0.0) & (u2 < ks.width) & (v2 >= 0.0) & (v2 < ks.height)

    # occlusion check: is the point actually visible from the current pose?
    sel = valid.ravel()
    if sel.any():
        T_inv = invert_transform(np.asarray(model_transform, dtype=np.float64))
        origin_m = T_inv[:3, :3] @ pose_curr[:3, 3] + T_inv[:3, 3]
        pts_m = pts_world.reshape(-1, 3)[sel] @ T_inv[:3, :3].T + T_inv[:3, 3]
        delta = pts_m - origin_m
        dist = np.linalg.norm(delta, axis=1)
        dirs_m = delta / np.maximum(dist[:, None], 1e-30)
        n = len(dirs_m)
        t_vis = np.empty(n)
        prim_vis = np.empty(n, np.int32)
        origins = np.broadcast_to(origin_m, (n, 3))
        bvh.raycast_batch(*bvh._accel_args(accel),
                          np.ascontiguousarray(origins), np.ascontiguousarray(dirs_m),
                          T_EPSILON, t_vis, prim_vis, np.empty(n), np.empty(n), False)
        visible = (prim_vis >= 0) & (t_vis >= dist - (_VIS_TOL + 1e-9 * dist))
        flat = valid.ravel()
        flat[np.nonzero(sel)[0][~visible]] = False
        valid = flat.reshape(h, w)

    vs, us = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    du = np.where(valid, u2 - us, 0.0)
    dv = np.where(valid, v2 - vs, 0.0)
    return FlowFrame(du, dv, valid)


def accumulate_coverage(accel: AccelStructure, model_transform: np.ndarray,
                        k: CameraIntrinsics, poses, scale: int = 1) -> CoverageMap:
    """Per-face observed flags over a pose sequence.

    A face counts as observed when it is the nearest (primary) hit of at
    least one pixel in at least one pose.
    """
    _check_scale(scale)
    cam = cached_ray_grid(k, scale)
    observed = np.zeros(accel.mesh.num_faces, dtype=bool)
    out = None
    for pose in poses:
        out = trace_grid(accel, model_transform, cam, pose, out=out)
        prim = out[1]
        hits = prim[prim >= 0]
        observed[accel.prim_face[hits]] = True
    return CoverageMap(observed)
