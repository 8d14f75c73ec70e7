"""The registration loop: render candidate transforms at the keyframe
poses, compare edge (or depth) features against the targets, and minimize
with CMA-ES.

Candidate parameters are a perturbation composed onto the initial
transform, T_i = T_initial @ params_to_transform(p), with per-axis box
bounds expressed relative to T_initial. The default objective is
1 - similarity(E(D_T), E_target) over the keyframe set; alternative
domains/metrics reproduce the loss-ablation protocol.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import edges as edges_mod
from .bvh import AccelStructure, build_accel
from .cmaes import BoundsSpec, CmaesConfig, OptimizationTrace, minimize
from .edges import EdgeConfig, frame_loss
from .errors import FormatError
from .frames import DEPTH_CLAMP_MM
from .geometry import (
    CameraIntrinsics,
    TransformParams,
    downscale_intrinsics,
    invert_transform,
    params_to_transform,
    transform_to_params,
    validate_transform,
)
from .mesh import load_mesh
from .poses import Keyframe, KeyframeSet, sample_keyframes
from .render import cached_ray_grid, trace_grid
from .synthetic import SyntheticCase

LOSS_DOMAINS = ("edge", "depth")
EDGE_METRICS = ("proposed", "l1", "l2", "ncc", "dice")
DEPTH_METRICS = ("l1", "l2", "ncc", "gc")


@dataclass(frozen=True)
class RegistrationSession:
    """Everything one registration run needs, immutable while running.

    Keyframe targets are depth frames at the camera's full resolution;
    edge targets are extracted once, at the rendering scale, when the
    session is built.
    """

    accel: AccelStructure
    intrinsics: CameraIntrinsics
    keyframes: KeyframeSet
    t_initial: np.ndarray
    bounds: BoundsSpec = field(default_factory=BoundsSpec.transform_box)
    optimizer: CmaesConfig = field(default_factory=CmaesConfig)
    edge_config: EdgeConfig = field(default_factory=EdgeConfig)
    downsample: int = 4
    workers: int = 1

    def __post_init__(self):
        validate_transform(self.t_initial)
        if self.downsample not in (1, 2, 4):
            raise ValueError(f"downsample must be 1, 2 or 4, got {self.downsample}")
        if len(self.keyframes) == 0:
            raise ValueError("session needs at least one keyframe")
        for kf in self.keyframes:
            if kf.target_depth is None and kf.target_edges is None:
                raise ValueError(f"keyframe {kf.index} has no target")
            if kf.target_depth is None and self.downsample != 1:
                raise ValueError(
                    f"keyframe {kf.index}: downsampled sessions need raw depth "
                    "targets (edge frames cannot be decimated faithfully)")

    @property
    def scaled_intrinsics(self) -> CameraIntrinsics:
        return downscale_intrinsics(self.intrinsics, self.downsample)

    @property
    def scaled_edge_config(self) -> EdgeConfig:
        return self.edge_config.scaled(self.downsample)

    def target_depths(self) -> list[np.ndarray]:
        """Keyframe target depths decimated to the rendering scale,
        clamped to the far limit (misses included)."""
        s = self.downsample
        ks = self.scaled_intrinsics
        out = []
        for kf in self.keyframes:
            if kf.target_depth.shape != (self.intrinsics.height, self.intrinsics.width):
                raise ValueError(
                    f"keyframe {kf.index}: target depth shape {kf.target_depth.shape} "
                    f"!= camera {(self.intrinsics.height, self.intrinsics.width)}")
            d = kf.target_depth[::s, ::s][:ks.height, :ks.width]
            out.append(np.minimum(np.ascontiguousarray(d, dtype=np.float64),
                                  DEPTH_CLAMP_MM))
        return out


@dataclass(frozen=True)
class RegistrationResult:
    t_final: np.ndarray
    trace: OptimizationTrace
    per_keyframe_similarity: tuple
    final_loss: float
    domain: str
    metric: str


@dataclass(frozen=True)
class RegistrationError:
    """Magnitudes of the residual transform (T_gt)^-1 T_final."""

    rotation_deg: float
    translation_mm: float

    def __post_init__(self):
        if self.rotation_deg < 0 or self.translation_mm < 0:
            raise ValueError("error magnitudes must be nonnegative")


class _Evaluator:
    """Renders and scores one candidate; caches targets, grids and hints.

    Thread safety: candidate evaluations share only read-only state plus
    per-thread scratch; the per-keyframe hint grids are refreshed from
    the first candidate of each generation and are read-only afterwards
    (hints cannot change results, only traversal speed).
    """

    def __init__(self, session: RegistrationSession, domain: str, metric: str):
        if domain not in LOSS_DOMAINS:
            raise ValueError(f"unknown domain {domain!r}")
        allowed = EDGE_METRICS if domain == "edge" else DEPTH_METRICS
        if metric not in allowed:
            raise ValueError(f"metric {metric!r} not available for domain {domain!r}; "
                             f"choose from {allowed}")
        self.session = session
        self.domain = domain
        self.metric = metric
        self.cam = cached_ray_grid(session.intrinsics, session.downsample)
        self.cam_z = np.ascontiguousarray(self.cam[..., 2])
        self.poses = [np.asarray(kf.pose, dtype=np.float64) for kf in session.keyframes]
        h, w = self.cam.shape[:2]
        self.hints = [np.full((h, w), -1, np.int32) for _ in self.poses]

        cfg = session.scaled_edge_config
        self.edge_cfg = cfg
        if domain == "edge":
            targets_depth = session.target_depths()
            if metric == "dice":
                self.targets = [edges_mod.edge_binary(d, cfg).astype(np.float64)
                                for d in targets_depth]
            else:
                self.targets = [edges_mod.edge_operator(d, cfg) for d in targets_depth]
        else:
            self.targets = session.target_depths()
        self._local = _ThreadScratch(self.cam.shape[:2])

    def _render_depth_clamped(self, t_model, kf_idx, scratch, update_hint=False):
        out = trace_grid(self.session.accel, t_model, self.cam,
                         self.poses[kf_idx],
                         hint_grid=self.hints[kf_idx], out=scratch.trace_out)
        t, prim = out[0], out[1]
        if update_hint:
            np.copyto(self.hints[kf_idx], prim)
        depth = scratch.depth
        np.multiply(t, self.cam_z, out=depth)
        np.clip(depth, 0.0, DEPTH_CLAMP_MM, out=depth)
        depth[prim < 0] = DEPTH_CLAMP_MM
        return depth

    def evaluate(self, params, update_hints: bool = False,
                 scratch: "_ThreadScratch | None" = None) -> float:
        """Loss of one candidate parameter vector."""
        t_model = self.session.t_initial @ params_to_transform(
            TransformParams.from_array(params))
        if scratch is None:
            scratch = self._local
        cfg = self.edge_cfg
        if self.domain == "edge" and self.metric == "proposed":
            acc = 0.0
            for kf_idx, target in enumerate(self.targets):
                depth = self._render_depth_clamped(t_model, kf_idx, scratch,
                                                   update_hints)
                rendered = edges_mod.edge_operator(depth, cfg, scratch.edge_ws)
                acc += float(np.mean(rendered * target))
            return 1.0 - acc / len(self.targets)

        rendered_frames = []
        for kf_idx in range(len(self.targets)):
            depth = self._render_depth_clamped(t_model, kf_idx, scratch, update_hints)
            if self.domain == "edge":
                if self.metric == "dice":
                    rendered_frames.append(
                        edges_mod.edge_binary(depth, cfg).astype(np.float64))
                else:
                    rendered_frames.append(edges_mod.edge_operator(depth, cfg,
                                                                   scratch.edge_ws))
            else:
                rendered_frames.append(depth.copy())
        return frame_loss(rendered_frames, self.targets, self.metric)

    def evaluate_batch(self, params_list) -> list[float]:
        """Deterministic batch evaluation (order preserved).

        The first candidate refreshes the hint grids; the rest render
        against them, in parallel when the session allows workers > 1.
        """
        losses = [self.evaluate(params_list[0], update_hints=True)]
        rest = params_list[1:]
        if not rest:
            return losses
        if self.session.workers > 1:
            with ThreadPoolExecutor(max_workers=self.session.workers) as pool:
                losses += list(pool.map(self._evaluate_fresh, rest))
        else:
            losses += [self.evaluate(p) for p in rest]
        return losses

    def _evaluate_fresh(self, params) -> float:
        # thread workers must not share scratch buffers
        return self.evaluate(params, scratch=_ThreadScratch(self.cam.shape[:2]))

    def per_keyframe_similarity(self, params) -> list[float]:
        """Blurred-edge similarity of each keyframe at the given params."""
        t_model = self.session.t_initial @ params_to_transform(
            TransformParams.from_array(params))
        cfg = self.session.scaled_edge_config
        if (self.domain, self.metric) == ("edge", "proposed"):
            targets = self.targets
        else:
            targets = [edges_mod.edge_operator(d, cfg)
                       for d in self.session.target_depths()]
        scratch = _ThreadScratch(self.cam.shape[:2])
        sims = []
        for kf_idx, target in enumerate(targets):
            depth = self._render_depth_clamped(t_model, kf_idx, scratch)
            rendered = edges_mod.edge_operator(depth, cfg)
            sims.append(float(np.mean(rendered * target)))
        return sims


class _ThreadScratch:
    def __init__(self, shape):
        h, w = shape
        self.trace_out = (np.empty((h, w)), np.empty((h, w), np.int32),
                          np.empty((h, w)), np.empty((h, w)))
        self.depth = np.empty((h, w))
        self.edge_ws = edges_mod._Workspace((h, w))


def evaluate_candidate(session: RegistrationSession, params,
                       domain: str = "edge", metric: str = "proposed") -> float:
    """Objective value for one candidate (lower is better).

    For the default edge domain with the proposed metric this is
    1 - similarity of blurred rendered edges against the precomputed
    target edges, per the registration objective. An all-miss render
    yields an all-far depth frame with no edges, hence loss 1.
    """
    return _Evaluator(session, domain, metric).evaluate(
        np.asarray(params, dtype=np.float64))


def register(session: RegistrationSession, domain: str = "edge",
             metric: str = "proposed") -> RegistrationResult:
    """Run the full registration loop and return the optimized transform."""
    evaluator = _Evaluator(session, domain, metric)
    trace = minimize(evaluator.evaluate, session.bounds, session.optimizer,
                     batch_evaluator=evaluator.evaluate_batch)
    best = trace.final_params
    t_final = session.t_initial @ params_to_transform(TransformParams.from_array(best))
    sims = evaluator.per_keyframe_similarity(best)
    if (domain, metric) == ("edge", "proposed"):
        final_loss = 1.0 - float(np.mean(sims))
    else:
        final_loss = evaluator.evaluate(best)
    return RegistrationResult(
        t_final=t_final,
        trace=trace,
        per_keyframe_similarity=tuple(sims),
        final_loss=final_loss,
        domain=domain,
        metric=metric,
    )


def registration_error(t_gt: np.ndarray, t_final: np.ndarray) -> RegistrationError:
    """Rotation (deg) and translation (mm) magnitudes of the residual
    transform (T_gt)^-1 T_final, from its Euler decomposition.

    Inputs validate at printed precision (1e-6) so transforms parsed from
    pose files compare cleanly.
    """
    t_err = invert_transform(validate_transform(t_gt, tol=1e-6)) \
        @ validate_transform(t_final, tol=1e-6)
    p = transform_to_params(t_err, tol=1e-5)
    angles = np.array([p.theta_alpha, p.theta_beta, p.theta_gamma])
    translation = np.array([p.t_x, p.t_y, p.t_z])
    return RegistrationError(
        rotation_deg=float(np.degrees(np.linalg.norm(angles))),
        translation_mm=float(np.linalg.norm(translation)),
    )


def session_from_case(case: SyntheticCase, accel: AccelStructure,
                      optimizer: CmaesConfig | None = None,
                      edge_config: EdgeConfig | None = None,
                      bounds: BoundsSpec | None = None,
                      downsample: int = 4, workers: int = 1) -> RegistrationSession:
    """Wrap a synthetic case into a ready-to-run session."""
    return RegistrationSession(
        accel=accel,
        intrinsics=case.intrinsics,
        keyframes=case.keyframes,
        t_initial=case.t_initial,
        bounds=bounds if bounds is not None else BoundsSpec.transform_box(),
        optimizer=optimizer if optimizer is not None else CmaesConfig(),
        edge_config=edge_config if edge_config is not None else EdgeConfig(),
        downsample=downsample,
        workers=workers,
    )


def load_session(path, seed: int | None = None, downsample: int | None = None,
                 keyframes: int | None = None, workers: int = 1) -> RegistrationSession:
    """Build a session from a JSON specification file.

    Relative paths resolve against the spec file's directory. The file
    carries paths to the mesh, intrinsics, poses (either a plain matrix
    file or a timestamped log), the initial transform, and the target
    depth images (16-bit depth PNGs, full camera resolution), plus
    bounds, optimizer, edge and sampling settings.
    """
    from .dataset_io import (  # local import: dataset_io imports poses
        parse_intrinsics,
        parse_pose_log,
        read_png,
        read_pose_matrices,
        decode_frame,
    )

    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise FormatError(f"{path.name}: invalid JSON: {err}") from err
    base = path.parent

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    for key in ("mesh", "intrinsics", "initial_transform", "targets"):
        if key not in spec:
            raise FormatError(f"{path.name}: missing session key {key!r}")
    if "poses" not in spec and "pose_log" not in spec:
        raise FormatError(f"{path.name}: need either 'poses' or 'pose_log'")

    mesh = load_mesh(resolve(spec["mesh"]))
    accel = build_accel(mesh)
    intrinsics = parse_intrinsics(resolve(spec["intrinsics"]))

    if "poses" in spec:
        poses = read_pose_matrices(resolve(spec["poses"]))
    else:
        log = parse_pose_log(resolve(spec["pose_log"]))
        if log.missing_mask.any():
            raise FormatError(f"{path.name}: pose log has missing samples; "
                              "interpolate gaps before building a session")
        poses = list(log.poses)

    t_init_list = read_pose_matrices(resolve(spec["initial_transform"]))
    if len(t_init_list) != 1:
        raise FormatError(f"{path.name}: initial_transform must hold exactly one pose")

    targets = spec["targets"]
    if isinstance(targets, str):
        target_paths = sorted(resolve(targets).glob("*.png"))
    else:
        target_paths = [resolve(p) for p in targets]
    if not target_paths:
        raise FormatError(f"{path.name}: no target depth images found")

    k = keyframes if keyframes is not None else int(spec.get("keyframes",
                                                             len(target_paths)))
    indices = sample_keyframes(len(poses), k)
    if len(target_paths) != k:
        raise FormatError(f"{path.name}: {len(target_paths)} target images "
                          f"for {k} keyframes")

    records = []
    for idx, tp in zip(indices, target_paths):
        depth = decode_frame(read_png(tp), "depth")
        records.append(Keyframe(index=idx, pose=poses[idx], target_depth=depth))

    bounds_spec = spec.get("bounds", {})
    bounds = BoundsSpec.transform_box(
        rotation_rad=float(bounds_spec.get("rotation_rad", 0.1)),
        translation_mm=float(bounds_spec.get("translation_mm", 7.5)),
    )
    opt_spec = dict(spec.get("optimizer", {}))
    if seed is not None:
        opt_spec["seed"] = seed
    optimizer = CmaesConfig(
        population=int(opt_spec.get("population", 100)),
        sigma0=float(opt_spec.get("sigma", 0.1)),
        max_generations=int(opt_spec.get("max_generations", 150)),
        stagnation_tol=float(opt_spec.get("stagnation_tol", 1e-12)),
        seed=int(opt_spec.get("seed", 0)),
    )
    edge_spec = spec.get("edges", {})
    edge_config = EdgeConfig(
        low=float(edge_spec.get("low", 0.1)),
        high=float(edge_spec.get("high", 0.2)),
        sigma=float(edge_spec.get("sigma", 4.0)),
        radius=int(edge_spec.get("radius", 12)),
    )
    return RegistrationSession(
        accel=accel,
        intrinsics=intrinsics,
        keyframes=KeyframeSet(tuple(records)),
        t_initial=t_init_list[0],
        bounds=bounds,
        optimizer=optimizer,
        edge_config=edge_config,
        downsample=downsample if downsample is not None
        else int(spec.get("downsample", 4)),
        workers=workers,
    )
