"""Per-frame ground-truth containers shared by the renderer, edge operator
and dataset encoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Exported depth is clamped to this range; misses encode as the far clamp.
DEPTH_CLAMP_MM = 100.0
# Exported flow is clamped to +-FLOW_CLAMP_PX at encoding time.
FLOW_CLAMP_PX = 20.0
# Occlusion counts a second surface within this camera-frame depth.
OCCLUSION_RANGE_MM = 100.0


@dataclass(frozen=True)
class DepthFrame:
    """Depth along the camera z-axis in mm; misses are +inf."""

    depth: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {d.shape}")
        if np.isnan(d).any():
            raise ValueError("depth contains NaN")
        if (d < 0).any():
            raise ValueError("depth contains negative values")
        object.__setattr__(self, "depth", d)

    @property
    def hit_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class NormalFrame:
    """Unit surface normals in camera coordinates; zero vector at misses."""

    normals: np.ndarray  # (H, W, 3)
    valid: np.ndarray    # (H, W) bool

    def __post_init__(self):
        n = np.ascontiguousarray(self.normals, dtype=np.float64)
        v = np.ascontiguousarray(self.valid, dtype=bool)
        if n.ndim != 3 or n.shape[2] != 3 or n.shape[:2] != v.shape:
            raise ValueError(f"inconsistent shapes {n.shape} / {v.shape}")
        norms = np.linalg.norm(n[v], axis=-1)
        if norms.size and (np.abs(norms - 1.0) > 1e-6).any():
            raise ValueError("normals at valid pixels must be unit length")
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "valid", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass(frozen=True)
class FlowFrame:
    """Pixel displacements (du, dv) mapping this frame's grid into the next
    frame, I_prev(u, v) = I_curr(u + du, v + dv); invalid pixels masked."""

    du: np.ndarray
    dv: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        du = np.ascontiguousarray(self.du, dtype=np.float64)
        dv = np.ascontiguousarray(self.dv, dtype=np.float64)
        v = np.ascontiguousarray(self.valid, dtype=bool)
        if not (du.shape == dv.shape == v.shape) or du.ndim != 2:
            raise ValueError("du/dv/valid shapes disagree")
        if np.isnan(du[v]).any() or np.isnan(dv[v]).any():
            raise ValueError("flow contains NaN at valid pixels")
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "dv", dv)
        object.__setattr__(self, "valid", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass(frozen=True)
class OcclusionFrame:
    """Binary mask: 1 where the surface occludes another face within
    OCCLUSION_RANGE_MM of the camera origin."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.mask, dtype=np.uint8)
        if m.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {m.shape}")
        if not np.isin(m, (0, 1)).all():
            raise ValueError("occlusion values must be 0 or 1")
        object.__setattr__(self, "mask", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


@dataclass(frozen=True)
class CoverageMap:
    """Per-face observed flag for one video sequence."""

    observed: np.ndarray  # (F,) bool

    def __post_init__(self):
        o = np.ascontiguousarray(self.observed, dtype=bool)
        if o.ndim != 1:
            raise ValueError("observed must be 1-D")
        object.__setattr__(self, "observed", o)

    @property
    def num_faces(self) -> int:
        return len(self.observed)
