"""Rigid-transform algebra and the omnidirectional camera model.

Transforms are plain 4x4 numpy arrays (row-major, millimeters). The
6-parameter pose vector is [theta_alpha, theta_beta, theta_gamma, t_x, t_y,
t_z] with angles in radians. The rotation convention is intrinsic Z-Y-X:
R = Rz(gamma) @ Ry(beta) @ Rx(alpha).

The camera model maps a pixel (u, v) to a ray through an affine stretch
matrix A = [[e, f], [g, 1]] and a radial polynomial
f(rho) = a0 + a2*rho^2 + a3*rho^3 + a4*rho^4; the camera looks along +z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GimbalLockError, InvalidIntrinsicsError, OutOfFovError

ORTHONORMAL_TOL = 1e-9
GIMBAL_COS_TOL = 1e-9
_STRETCH_DET_TOL = 1e-6


@dataclass(frozen=True)
class TransformParams:
    """Euler angles (rad) and translation (mm) of a rigid transform."""

    theta_alpha: float = 0.0
    theta_beta: float = 0.0
    theta_gamma: float = 0.0
    t_x: float = 0.0
    t_y: float = 0.0
    t_z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.theta_alpha, self.theta_beta, self.theta_gamma,
             self.t_x, self.t_y, self.t_z],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, values) -> "TransformParams":
        arr = np.asarray(values, dtype=np.float64).reshape(6)
        return cls(*[float(v) for v in arr])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Omnidirectional camera calibration.

    width/height in pixels, (c_x, c_y) optical center in pixels,
    alpha_* the radial polynomial coefficients, (e, f, g) the stretch
    matrix entries A = [[e, f], [g, 1]].
    """

    width: int
    height: int
    c_x: float
    c_y: float
    alpha_0: float
    alpha_2: float
    alpha_3: float
    alpha_4: float
    e: float = 1.0
    f: float = 0.0
    g: float = 0.0

    def __post_init__(self):
        if not (0 < self.c_x < self.width and 0 < self.c_y < self.height):
            raise InvalidIntrinsicsError(
                f"optical center ({self.c_x}, {self.c_y}) outside "
                f"{self.width}x{self.height} image"
            )
        if abs(self.e - self.f * self.g) <= _STRETCH_DET_TOL:
            raise InvalidIntrinsicsError(
                f"stretch matrix singular: |e - f*g| = {abs(self.e - self.f * self.g):g}"
            )

    @property
    def stretch(self) -> np.ndarray:
        return np.array([[self.e, self.f], [self.g, 1.0]], dtype=np.float64)

    @property
    def stretch_inv(self) -> np.ndarray:
        det = self.e - self.f * self.g
        return np.array([[1.0, -self.f], [-self.g, self.e]], dtype=np.float64) / det

    @property
    def rho_max(self) -> float:
        """Largest distorted-coordinate radius of any image corner: no
        calibrated pixel lies farther from the optical center."""
        inv = self.stretch_inv
        best = 0.0
        for u in (0.0, float(self.width)):
            for v in (0.0, float(self.height)):
                du, dv = u - self.c_x, v - self.c_y
                up = inv[0, 0] * du + inv[0, 1] * dv
                vp = inv[1, 0] * du + inv[1, 1] * dv
                best = max(best, math.hypot(up, vp))
        return best

    def radial_poly(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        return (self.alpha_0
                + self.alpha_2 * rho ** 2
                + self.alpha_3 * rho ** 3
                + self.alpha_4 * rho ** 4)

    def radial_poly_deriv(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        return (2.0 * self.alpha_2 * rho
                + 3.0 * self.alpha_3 * rho ** 2
                + 4.0 * self.alpha_4 * rho ** 3)


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def params_to_transform(params: TransformParams) -> np.ndarray:
    """Build the homogeneous matrix for a 6-parameter pose.

    Rotation is intrinsic Z-Y-X (gamma applied first, then beta, then
    alpha): R = Rz(gamma) @ Ry(beta) @ Rx(alpha).
    """
    vec = params.as_array() if isinstance(params, TransformParams) else \
        np.asarray(params, dtype=np.float64).reshape(6)
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"non-finite transform parameters: {vec}")
    alpha, beta, gamma, tx, ty, tz = vec
    T = np.eye(4)
    T[:3, :3] = rotation_z(gamma) @ rotation_y(beta) @ rotation_x(alpha)
    T[:3, 3] = (tx, ty, tz)
    return T


def transform_to_params(T: np.ndarray, tol: float = ORTHONORMAL_TOL) -> TransformParams:
    """Decompose a rigid transform into Z-Y-X Euler angles and translation.

    Raises GimbalLockError near |beta| = 90 deg where the decomposition
    degenerates. tol relaxes the orthonormality check for matrices parsed
    from fixed-precision text.
    """
    T = validate_transform(T, tol=tol)
    R = T[:3, :3]
    sin_beta = -R[2, 0]
    cos_beta = math.hypot(R[0, 0], R[1, 0])
    if cos_beta <= GIMBAL_COS_TOL:
        raise GimbalLockError(
            f"|cos(beta)| = {cos_beta:g} <= {GIMBAL_COS_TOL:g}: Euler "
            "decomposition is degenerate at beta = +-90 deg"
        )
    beta = math.asin(min(1.0, max(-1.0, sin_beta)))
    alpha = math.atan2(R[2, 1], R[2, 2])
    gamma = math.atan2(R[1, 0], R[0, 0])
    return TransformParams(alpha, beta, gamma, T[0, 3], T[1, 3], T[2, 3])


def validate_transform(T: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    """Check HomogeneousTransform invariants and return T as float64."""
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (4, 4):
        raise ValueError(f"transform must be 4x4, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError("transform contains non-finite entries")
    if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValueError(f"last row must be [0 0 0 1], got {T[3]}")
    R = T[:3, :3]
    if not np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0.0):
        raise ValueError("rotation block is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > 1e-6:
        raise ValueError(f"rotation determinant {np.linalg.det(R):g} != +1")
    return T


def invert_transform(T: np.ndarray) -> np.ndarray:
    """Inverse of a rigid transform without a general matrix solve."""
    R = T[:3, :3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ T[:3, 3]
    return out


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (angle in [0, pi])."""
    trace = float(np.trace(R))
    cos_angle = min(1.0, max(-1.0, 0.5 * (trace - 1.0)))
    angle = math.acos(cos_angle)
    if angle < 1e-10:
        # First-order: R ~ I + skew(w)
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if math.pi - angle < 1e-6:
        # Near pi the antisymmetric part vanishes; recover axis from R + I.
        M = 0.5 * (R + np.eye(3))
        axis = np.sqrt(np.maximum(np.diag(M), 0.0))
        k = int(np.argmax(axis))
        if axis[k] <= 0.0:
            raise ValueError("cannot recover rotation axis near angle pi")
        axis = M[:, k] / axis[k]
        axis /= np.linalg.norm(axis)
        # Fix sign using the (small) antisymmetric part.
        w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.dot(w, axis) < 0.0:
            axis = -axis
        return angle * axis
    scale = 0.5 * angle / math.sin(angle)
    return scale * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])


def rotation_exp(w: np.ndarray) -> np.ndarray:
    """Rotation matrix from an axis-angle vector (Rodrigues)."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    angle = float(np.linalg.norm(w))
    K = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    if angle < 1e-10:
        return np.eye(3) + K + 0.5 * (K @ K)
    K /= angle
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def _distorted_coords(k: CameraIntrinsics, u, v):
    du = np.asarray(u, dtype=np.float64) - k.c_x
    dv = np.asarray(v, dtype=np.float64) - k.c_y
    inv = k.stretch_inv
    return inv[0, 0] * du + inv[0, 1] * dv, inv[1, 0] * du + inv[1, 1] * dv


def pixel_to_ray(k: CameraIntrinsics, u: float, v: float) -> np.ndarray:
    """Unit ray direction in the camera frame for pixel (u, v).

    Fractional pixel coordinates are allowed; (u, v) must lie inside the
    image.
    """
    if not (0 <= u < k.width and 0 <= v < k.height):
        raise ValueError(f"pixel ({u}, {v}) outside {k.width}x{k.height} image")
    up, vp = _distorted_coords(k, u, v)
    rho = math.hypot(float(up), float(vp))
    d = np.array([float(up), float(vp), float(k.radial_poly(rho))])
    return d / np.linalg.norm(d)


def pixel_rays(k: CameraIntrinsics, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Vectorized pixel_to_ray: unit directions of shape us.shape + (3,)."""
    up, vp = _distorted_coords(k, us, vs)
    rho = np.hypot(up, vp)
    d = np.stack([up, vp, k.radial_poly(rho)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def camera_ray_grid(k: CameraIntrinsics) -> np.ndarray:
    """Unit ray directions for every pixel center, shape (H, W, 3)."""
    vs, us = np.meshgrid(
        np.arange(k.height, dtype=np.float64),
        np.arange(k.width, dtype=np.float64),
        indexing="ij",
    )
    return pixel_rays(k, us, vs)


def max_fov_angle(k: CameraIntrinsics) -> float:
    """Largest calibrated angle from the optical axis, at rho = rho_max."""
    rho = k.rho_max
    return math.atan2(rho, float(k.radial_poly(rho)))


def _solve_radius_for_angle(k: CameraIntrinsics, theta: float) -> float:
    """Invert theta(rho) = atan2(rho, f(rho)) by bracketed Newton/bisection.

    theta(rho) is strictly increasing on [0, rho_max] for calibrations with
    f - rho*f' > 0 (true of decreasing radial polynomials).
    """
    lo, hi = 0.0, k.rho_max
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    # g(rho) = f(rho)*sin(theta) - rho*cos(theta): positive at 0, negative at hi.
    rho = theta / max(math.atan2(hi, float(k.radial_poly(hi))), 1e-12) * hi
    rho = min(max(rho, lo), hi)
    for _ in range(100):
        f = float(k.radial_poly(rho))
        g = f * sin_t - rho * cos_t
        dg = float(k.radial_poly_deriv(rho)) * sin_t - cos_t
        if g > 0.0:
            lo = rho
        else:
            hi = rho
        nxt = rho - g / dg if dg != 0.0 else math.nan
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - rho) < 1e-11 * max(1.0, rho):
            return nxt
        rho = nxt
    return rho


def ray_to_pixel(k: CameraIntrinsics, d: np.ndarray) -> tuple[float, float]:
    """Project a camera-frame direction to pixel coordinates.

    Inverse of pixel_to_ray. Raises OutOfFovError when the direction's
    incidence angle exceeds the calibrated field of view (no root
    rho in [0, rho_max]).
    """
    d = np.asarray(d, dtype=np.float64).reshape(3)
    lateral = math.hypot(d[0], d[1])
    theta = math.atan2(lateral, d[2])
    if theta > max_fov_angle(k):
        raise OutOfFovError(
            f"incidence angle {math.degrees(theta):.2f} deg exceeds calibrated FoV"
        )
    if lateral == 0.0:
        return float(k.c_x), float(k.c_y)
    rho = _solve_radius_for_angle(k, theta)
    up = rho * d[0] / lateral
    vp = rho * d[1] / lateral
    A = k.stretch
    u = A[0, 0] * up + A[0, 1] * vp + k.c_x
    v = A[1, 0] * up + A[1, 1] * vp + k.c_y
    return float(u), float(v)


def downscale_intrinsics(k: CameraIntrinsics, scale: int) -> CameraIntrinsics:
    """Intrinsics of the integer-decimated image (every scale-th pixel).

    Pixel (u, v) of the decimated grid sees the exact same ray as pixel
    (scale*u, scale*v) of the full-resolution grid.
    """
    if scale not in (1, 2, 4):
        raise ValueError(f"downsample factor must be 1, 2 or 4, got {scale}")
    if scale == 1:
        return k
    s = float(scale)
    return CameraIntrinsics(
        width=k.width // scale,
        height=k.height // scale,
        c_x=k.c_x / s,
        c_y=k.c_y / s,
        alpha_0=k.alpha_0 / s,
        alpha_2=k.alpha_2 * s,
        alpha_3=k.alpha_3 * s * s,
        alpha_4=k.alpha_4 * s * s * s,
        e=k.e, f=k.f, g=k.g,
    )
