"""Command-line entry points.

Subcommands: register (run a registration session), render (per-keyframe
ground-truth previews), synth (generate a synthetic case on the built-in
tube), calibrate-handeye, sync (temporal offset between two series),
export (full-sequence ground-truth dataset), serve (alignment service).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _add_common(parser: argparse.ArgumentParser, session: bool = True):
    if session:
        parser.add_argument("--session", required=True, help="session spec JSON")
    parser.add_argument("--seed", type=int, default=None, help="optimizer seed override")
    parser.add_argument("--out", default="out", help="output directory or file")
    parser.add_argument("--downsample", type=int, choices=(1, 2, 4), default=None)
    parser.add_argument("--workers", type=int, default=1,
                        help="candidate-evaluation threads")


def _cmd_register(args) -> int:
    from .registration import load_session, register

    session = load_session(args.session, seed=args.seed,
                           downsample=args.downsample,
                           keyframes=args.keyframes, workers=args.workers)
    # the "edge" metric on the command line is the proposed blurred-edge
    # similarity; the others are the ablation losses
    metric = "proposed" if args.metric == "edge" else args.metric
    result = register(session, domain=args.domain, metric=metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    from .dataset_io import write_pose_matrices

    write_pose_matrices(out / "t_final.txt", [result.t_final])
    trace = result.trace
    (out / "trace.json").write_text(json.dumps({
        "best_loss": trace.best_loss,
        "gen_best_loss": trace.gen_best_loss,
        "mean_loss": trace.mean_loss,
        "generations": trace.generations,
        "non_finite_evals": trace.non_finite_evals,
    }, indent=1))
    summary = {
        "final_loss": result.final_loss,
        "domain": result.domain,
        "metric": result.metric,
        "generations": trace.generations,
        "per_keyframe_similarity": list(result.per_keyframe_similarity),
        "t_final": [float(v) for v in result.t_final.reshape(16)],
    }
    if args.gt:
        from .dataset_io import read_pose_matrices
        from .registration import registration_error

        t_gt = read_pose_matrices(args.gt)[0]
        err = registration_error(t_gt, result.t_final)
        summary["error"] = {"rotation_deg": err.rotation_deg,
                            "translation_mm": err.translation_mm}
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary["error"] if "error" in summary else
                     {"final_loss": result.final_loss}))
    return 0


def _cmd_render(args) -> int:
    from .dataset_io import encode_frame, read_pose_matrices, write_png
    from .registration import load_session
    from .render import render_depth, render_normals, render_occlusion

    session = load_session(args.session, downsample=args.downsample,
                           keyframes=args.keyframes)
    t_model = session.t_initial if args.transform is None \
        else read_pose_matrices(args.transform)[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scale = session.downsample
    for i, kf in enumerate(session.keyframes):
        depth = render_depth(session.accel, t_model, session.intrinsics, kf.pose, scale)
        normals = render_normals(session.accel, t_model, session.intrinsics,
                                 kf.pose, scale)
        occ = render_occlusion(session.accel, t_model, session.intrinsics,
                               kf.pose, scale)
        write_png(out / f"depth_kf{i:03d}.png", encode_frame(depth, "depth"))
        write_png(out / f"normals_kf{i:03d}.png", encode_frame(normals, "normals"))
        write_png(out / f"occlusion_kf{i:03d}.png", encode_frame(occ, "occlusion"))
    print(f"rendered {len(session.keyframes)} keyframes to {out}")
    return 0


def _cmd_synth(args) -> int:
    from .bvh import build_accel
    from .dataset_io import (
        encode_frame,
        write_intrinsics,
        write_png,
        write_pose_matrices,
    )
    from .frames import DepthFrame
    from .mesh import save_mesh
    from .shapes import make_bent_tube
    from .synthetic import generate_synthetic_case

    mesh = make_bent_tube()
    accel = build_accel(mesh)
    case = generate_synthetic_case(
        args.trajectory, seed=args.seed if args.seed is not None else 0,
        accel=accel, n_poses=args.frames, keyframes=args.keyframes,
        depth_noise_sigma=args.noise, scale_jitter=args.scale_jitter)

    out = Path(args.out)
    (out / "targets").mkdir(parents=True, exist_ok=True)
    save_mesh(out / "mesh.obj", mesh)
    write_intrinsics(out / "intrinsics.json", case.intrinsics)
    write_pose_matrices(out / "poses.txt", list(case.trajectory))
    write_pose_matrices(out / "t_initial.txt", [case.t_initial])
    write_pose_matrices(out / "t_gt.txt", [case.t_gt])
    for i, kf in enumerate(case.keyframes):
        write_png(out / "targets" / f"target_{i:06d}.png",
                  encode_frame(DepthFrame(kf.target_depth), "depth"))
    spec = {
        "mesh": "mesh.obj",
        "intrinsics": "intrinsics.json",
        "poses": "poses.txt",
        "initial_transform": "t_initial.txt",
        "targets": "targets",
        "keyframes": args.keyframes,
        "downsample": 4,
        "bounds": {"rotation_rad": 0.1, "translation_mm": 7.5},
        "optimizer": {"population": 100, "sigma": 0.1,
                      "max_generations": args.generations,
                      "seed": args.seed if args.seed is not None else 0},
        "edges": {"low": 0.1, "high": 0.2, "sigma": 4.0, "radius": 12},
    }
    (out / "session.json").write_text(json.dumps(spec, indent=1))
    print(f"synthetic case ({args.trajectory}, seed {args.seed}) written to {out}")
    return 0


def _cmd_calibrate_handeye(args) -> int:
    from .dataset_io import read_pose_matrices, write_pose_matrices
    from .poses import solve_handeye

    robot = read_pose_matrices(args.robot)
    camera = read_pose_matrices(args.camera)
    if len(robot) != len(camera):
        print(f"error: {len(robot)} robot poses vs {len(camera)} camera poses",
              file=sys.stderr)
        return 2
    X = solve_handeye(list(zip(robot, camera)))
    write_pose_matrices(args.out, [X])
    print(f"hand-eye transform written to {args.out}")
    return 0


def _cmd_sync(args) -> int:
    from .poses import synchronize

    flow = np.loadtxt(args.flow, ndmin=1)
    disp = np.loadtxt(args.pose, ndmin=1)
    result = synchronize(flow, disp, args.max_lag,
                         flow_rate_hz=args.flow_rate, pose_rate_hz=args.pose_rate)
    print(json.dumps({"offset": result.offset,
                      "peak_correlation": result.peak_correlation,
                      "low_confidence": result.low_confidence}))
    return 0


def _cmd_export(args) -> int:
    from .dataset_io import read_pose_matrices, write_sequence
    from .registration import load_session
    from .render import (
        accumulate_coverage,
        render_depth,
        render_flow,
        render_normals,
        render_occlusion,
    )

    session = load_session(args.session, downsample=args.downsample)
    t_model = session.t_initial if args.transform is None \
        else read_pose_matrices(args.transform)[0]
    spec = json.loads(Path(args.session).read_text())
    base = Path(args.session).parent
    pose_file = spec.get("poses")
    if pose_file is None:
        print("error: export needs a 'poses' file in the session spec",
              file=sys.stderr)
        return 2
    poses = read_pose_matrices(base / pose_file)
    if args.frames:
        poses = poses[:args.frames]

    scale = session.downsample
    k = session.intrinsics
    accel = session.accel
    depths, normals, occlusions, flows = [], [], [], []
    for i, pose in enumerate(poses):
        depths.append(render_depth(accel, t_model, k, pose, scale))
        normals.append(render_normals(accel, t_model, k, pose, scale))
        occlusions.append(render_occlusion(accel, t_model, k, pose, scale))
        if i > 0:
            flows.append(render_flow(accel, t_model, k, poses[i - 1], pose, scale))
    coverage = accumulate_coverage(accel, t_model, k, poses, scale)
    manifest = write_sequence(args.out, depths, normals, flows, occlusions,
                              poses, coverage, mesh=accel.mesh)
    print(f"exported {manifest['frame_count']} frames to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .registration import load_session
    from .service import serve

    session = load_session(args.session, downsample=args.downsample,
                           keyframes=args.keyframes)
    out = Path(args.out)
    if out.is_dir() or not out.suffix:
        out = out / "t_initial.txt"
    print(f"serving alignment UI backend on port {args.port}; commits to {out}")
    serve(session, out, port=args.port, step_mm=args.step_mm,
          step_rad=args.step_rad)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lumenreg",
        description="2D-3D registration of depth video to a known 3D surface "
                    "model, with pixel-registered ground-truth rendering.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="run a registration session")
    _add_common(p)
    p.add_argument("--metric", default="edge",
                   choices=("edge", "l1", "l2", "ncc", "gc", "dice"))
    p.add_argument("--domain", default="edge", choices=("edge", "depth"))
    p.add_argument("--keyframes", type=int, default=None)
    p.add_argument("--gt", default=None, help="ground-truth transform for error report")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("render", help="render ground-truth previews at keyframes")
    _add_common(p)
    p.add_argument("--keyframes", type=int, default=None)
    p.add_argument("--transform", default=None, help="model transform file "
                   "(default: session initial transform)")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("synth", help="generate a synthetic case")
    _add_common(p, session=False)
    p.add_argument("--trajectory", default="complex",
                   choices=("simple", "moderate", "complex"))
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--keyframes", type=int, default=5)
    p.add_argument("--generations", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.0, help="target depth noise (mm)")
    p.add_argument("--scale-jitter", type=float, default=0.0,
                   help="per-frame monotone depth scale jitter")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("calibrate-handeye", help="solve AX=XB from pose pairs")
    p.add_argument("--robot", required=True, help="robot pose file")
    p.add_argument("--camera", required=True, help="camera pose file")
    p.add_argument("--out", default="handeye.txt")
    p.set_defaults(func=_cmd_calibrate_handeye)

    p = sub.add_parser("sync", help="temporal offset between two motion series")
    p.add_argument("--flow", required=True, help="flow-magnitude series (one per line)")
    p.add_argument("--pose", required=True, help="pose-displacement series")
    p.add_argument("--max-lag", type=int, default=50)
    p.add_argument("--flow-rate", type=float, default=None)
    p.add_argument("--pose-rate", type=float, default=None)
    p.set_defaults(func=_cmd_sync)

    p = sub.add_parser("export", help="write the full ground-truth sequence")
    _add_common(p)
    p.add_argument("--transform", default=None)
    p.add_argument("--frames", type=int, default=None, help="limit frame count")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("serve", help="run the alignment service")
    _add_common(p)
    p.add_argument("--keyframes", type=int, default=None)
    p.add_argument("--port", type=int, default=8075)
    p.add_argument("--step-mm", type=float, default=0.5)
    p.add_argument("--step-rad", type=float, default=0.005)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
