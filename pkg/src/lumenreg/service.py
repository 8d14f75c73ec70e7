"""Local HTTP service backing the interactive initial-alignment UI.

Serves overlay previews of rendered vs target edges while the operator
nudges a perturbation of the initial-transform guess, then commits
T_initial = T_guess @ params_to_transform(params) to a pose file.

Single session per process; state changes only through nudge/opacity/
commit requests, renders are side-effect-free and deterministic for a
fixed state.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response

from . import edges as edges_mod
from .dataset_io import write_pose_matrices
from .frames import DEPTH_CLAMP_MM
from .geometry import TransformParams, params_to_transform
from .registration import RegistrationSession
from .render import cached_ray_grid, trace_grid

DEFAULT_STEP_MM = 0.5
DEFAULT_STEP_RAD = 0.005

RENDER_MODES = ("edge-overlay", "depth-overlay")


@dataclass
class AlignmentState:
    """Mutable service state; guarded by the app lock."""

    params: np.ndarray = field(default_factory=lambda: np.zeros(6))
    keyframe_index: int = 0
    opacity: float = 0.5
    step_mm: float = DEFAULT_STEP_MM
    step_rad: float = DEFAULT_STEP_RAD

    def snapshot(self) -> dict:
        return {
            "params": [float(v) for v in self.params],
            "keyframe": self.keyframe_index,
            "opacity": self.opacity,
            "step": {"mm": self.step_mm, "rad": self.step_rad},
        }


def _overlay_png(session: RegistrationSession, state_params, keyframe: int,
                 mode: str, opacity: float) -> bytes:
    """8-bit RGB preview: rendered feature in red over target in green."""
    import cv2

    kf = session.keyframes[keyframe]
    cam = cached_ray_grid(session.intrinsics, session.downsample)
    t_model = session.t_initial @ params_to_transform(
        TransformParams.from_array(state_params))
    t, prim, _, _ = trace_grid(session.accel, t_model, cam, kf.pose)
    depth = np.where(prim >= 0, np.clip(t * cam[..., 2], 0.0, DEPTH_CLAMP_MM),
                     DEPTH_CLAMP_MM)
    target_depth = session.target_depths()[keyframe]

    if mode == "edge-overlay":
        cfg = session.scaled_edge_config
        rendered = edges_mod.edge_operator(depth, cfg)
        target = edges_mod.edge_operator(target_depth, cfg)
    else:
        rendered = depth / DEPTH_CLAMP_MM
        target = target_depth / DEPTH_CLAMP_MM

    h, w = rendered.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[..., 0] = np.clip(opacity * rendered * 255.0, 0, 255).astype(np.uint8)
    rgb[..., 1] = np.clip(target * 255.0, 0, 255).astype(np.uint8)
    ok, buf = cv2.imencode(".png", rgb[..., ::-1])
    if not ok:
        raise RuntimeError("PNG encoding failed")
    return bytes(buf)


def create_app(session: RegistrationSession, out_path,
               step_mm: float = DEFAULT_STEP_MM,
               step_rad: float = DEFAULT_STEP_RAD,
               opacity: float = 0.5) -> FastAPI:
    """Build the alignment service around a loaded session."""
    app = FastAPI(title="lumenreg alignment service")
    state = AlignmentState(opacity=opacity, step_mm=step_mm, step_rad=step_rad)
    lock = threading.Lock()
    out_path = Path(out_path)

    @app.get("/api/session")
    def get_session():
        with lock:
            body = state.snapshot()
        body["keyframes"] = len(session.keyframes)
        return body

    @app.get("/api/render/{keyframe}")
    def get_render(keyframe: int, mode: str = "edge-overlay"):
        if not 0 <= keyframe < len(session.keyframes):
            return JSONResponse({"error": f"keyframe {keyframe} out of range"},
                                status_code=404)
        if mode not in RENDER_MODES:
            return JSONResponse({"error": f"mode must be one of {RENDER_MODES}"},
                                status_code=400)
        with lock:
            params = state.params.copy()
            opac = state.opacity
            state.keyframe_index = keyframe
        try:
            png = _overlay_png(session, params, keyframe, mode, opac)
        except Exception as err:  # surface render failures as a service error
            return JSONResponse({"error": f"render failed: {err}"}, status_code=500)
        return Response(content=png, media_type="image/png")

    @app.post("/api/nudge")
    def post_nudge(body: dict):
        delta = np.asarray(body.get("delta", []), dtype=np.float64)
        if delta.shape != (6,) or not np.all(np.isfinite(delta)):
            with lock:
                snap = state.snapshot()
            return JSONResponse({"error": "delta must be 6 finite numbers",
                                 **snap}, status_code=400)
        with lock:
            state.params = state.params + delta
            return state.snapshot()

    @app.post("/api/opacity")
    def post_opacity(body: dict):
        value = body.get("value")
        if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
            with lock:
                snap = state.snapshot()
            return JSONResponse({"error": "value must be in [0, 1]", **snap},
                                status_code=400)
        with lock:
            state.opacity = float(value)
            return state.snapshot()

    @app.post("/api/commit")
    def post_commit():
        with lock:
            params = state.params.copy()
        matrix = session.t_initial @ params_to_transform(
            TransformParams.from_array(params))
        try:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            write_pose_matrices(out_path, [matrix])
        except OSError as err:
            return JSONResponse({"error": f"write failed: {err}"}, status_code=500)
        return {"path": str(out_path),
                "matrix": [float(v) for v in matrix.reshape(16)]}

    return app


def serve(session: RegistrationSession, out_path, port: int = 8075,
          host: str = "127.0.0.1", **app_kwargs) -> None:
    """Run the alignment service until interrupted."""
    import uvicorn

    app = create_app(session, out_path, **app_kwargs)
    uvicorn.run(app, host=host, port=port, log_level="warning")
