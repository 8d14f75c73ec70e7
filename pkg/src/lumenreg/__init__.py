"""2D-3D registration of depth-video sequences to known 3D surface models.

Registers per-keyframe target depth maps plus a measured camera trajectory
to a triangulated surface by optimizing a rigid model transform with a
blurred-edge similarity and CMA-ES, then renders pixel-registered ground
truth (depth, normals, optical flow, occlusion, coverage).
"""

from .geometry import (
    CameraIntrinsics,
    TransformParams,
    downscale_intrinsics,
    invert_transform,
    params_to_transform,
    pixel_to_ray,
    ray_to_pixel,
    transform_to_params,
)
from .mesh import TriangleMesh, load_mesh, save_mesh
from .bvh import AccelStructure, Hit, build_accel, intersect
from .frames import (
    CoverageMap,
    DepthFrame,
    FlowFrame,
    NormalFrame,
    OcclusionFrame,
)
from .edges import EdgeConfig, edge_binary, edge_operator, frame_loss, similarity
from .cmaes import BoundsSpec, CmaesConfig, OptimizationTrace, minimize
from .poses import (
    Keyframe,
    KeyframeSet,
    PoseLog,
    interpolate_gaps,
    robot_to_camera,
    sample_keyframes,
    solve_handeye,
    synchronize,
)
from .render import (
    accumulate_coverage,
    render_depth,
    render_flow,
    render_normals,
    render_occlusion,
)
from .registration import (
    RegistrationResult,
    RegistrationSession,
    evaluate_candidate,
    load_session,
    register,
    registration_error,
    session_from_case,
)
from .synthetic import SyntheticCase, generate_synthetic_case

__all__ = [
    "AccelStructure",
    "BoundsSpec",
    "CameraIntrinsics",
    "CmaesConfig",
    "CoverageMap",
    "DepthFrame",
    "EdgeConfig",
    "FlowFrame",
    "Hit",
    "Keyframe",
    "KeyframeSet",
    "NormalFrame",
    "OcclusionFrame",
    "OptimizationTrace",
    "PoseLog",
    "RegistrationResult",
    "RegistrationSession",
    "SyntheticCase",
    "TransformParams",
    "TriangleMesh",
    "accumulate_coverage",
    "build_accel",
    "downscale_intrinsics",
    "edge_binary",
    "edge_operator",
    "evaluate_candidate",
    "frame_loss",
    "generate_synthetic_case",
    "interpolate_gaps",
    "intersect",
    "invert_transform",
    "load_mesh",
    "load_session",
    "minimize",
    "params_to_transform",
    "pixel_to_ray",
    "ray_to_pixel",
    "register",
    "registration_error",
    "render_depth",
    "render_flow",
    "render_normals",
    "render_occlusion",
    "robot_to_camera",
    "sample_keyframes",
    "save_mesh",
    "session_from_case",
    "similarity",
    "solve_handeye",
    "synchronize",
    "transform_to_params",
]

__version__ = "0.1.0"
