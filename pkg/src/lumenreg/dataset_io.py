"""Bit-exact dataset encodings and file formats.

Distribution encodings (all little-endian PNG containers):

- depth: 16-bit grayscale; code = round(clamp(d, 0, 100) / 100 * 65535);
  misses encode as the far clamp 65535.
- normals: 16-bit RGB; per-component code = round((n + 1) / 2 * 65535)
  for camera-frame X/Y/Z in R/G/B; invalid pixels encode as (0, 0, 0),
  which no unit normal can produce.
- flow: 16-bit RGB; R = round((clamp(du) + 20) / 40 * 65535), G likewise
  for dv, B = 0; invalid pixels encode as (0, 0, 0).
- occlusion: 8-bit grayscale, 255 = occluding, 0 otherwise.

Rounding is half away from zero, applied uniformly. Pose files carry one
matrix per line as 16 comma-separated row-major values at 9 significant
digits; timestamped pose logs prepend the timestamp and may carry the
token "missing" in place of the matrix.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import EncodingError, FormatError, WriteError
from .frames import (
    DEPTH_CLAMP_MM,
    FLOW_CLAMP_PX,
    CoverageMap,
    DepthFrame,
    FlowFrame,
    NormalFrame,
    OcclusionFrame,
)
from .geometry import CameraIntrinsics, validate_transform
from .mesh import TriangleMesh, save_mesh
from .poses import PoseLog

FRAME_KINDS = ("depth", "normals", "flow", "occlusion")

POSE_PRECISION = 9  # significant digits in pose files


@dataclass(frozen=True)
class EncodedImage:
    width: int
    height: int
    channels: int
    bit_depth: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit depth must be 8 or 16, got {self.bit_depth}")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        px = np.ascontiguousarray(self.pixels, dtype=dtype)
        expected = (self.height, self.width) if self.channels == 1 \
            else (self.height, self.width, self.channels)
        if px.shape != expected:
            raise ValueError(f"pixel shape {px.shape} != expected {expected}")
        object.__setattr__(self, "pixels", px)

    @property
    def payload_bytes(self) -> int:
        return self.pixels.nbytes


def _quantize(values: np.ndarray, max_code: int) -> np.ndarray:
    """Half-away-from-zero rounding of nonnegative scaled values."""
    return np.floor(values * max_code + 0.5).astype(np.uint16 if max_code > 255
                                                    else np.uint8)


def encode_frame(frame, kind: str) -> EncodedImage:
    """Encode a rendered frame into its distribution image."""
    if kind not in FRAME_KINDS:
        raise ValueError(f"unknown frame kind {kind!r}; expected one of {FRAME_KINDS}")

    if kind == "depth":
        depth = frame.depth if isinstance(frame, DepthFrame) \
            else np.asarray(frame, dtype=np.float64)
        if np.isnan(depth).any():
            raise EncodingError("depth frame contains NaN")
        scaled = np.clip(depth, 0.0, DEPTH_CLAMP_MM) / DEPTH_CLAMP_MM
        codes = _quantize(scaled, 65535)
        h, w = codes.shape
        return EncodedImage(w, h, 1, 16, codes)

    if kind == "normals":
        if isinstance(frame, NormalFrame):
            normals, valid = frame.normals, frame.valid
        else:
            normals, valid = frame
            normals = np.asarray(normals, dtype=np.float64)
            valid = np.asarray(valid, dtype=bool)
        if np.isnan(normals[valid]).any():
            raise EncodingError("normal frame contains NaN at valid pixels")
        scaled = (np.clip(normals, -1.0, 1.0) + 1.0) / 2.0
        codes = _quantize(scaled, 65535)
        codes[~valid] = 0
        h, w = valid.shape
        return EncodedImage(w, h, 3, 16, codes)

    if kind == "flow":
        if isinstance(frame, FlowFrame):
            du, dv, valid = frame.du, frame.dv, frame.valid
        else:
            du, dv, valid = frame
            du = np.asarray(du, dtype=np.float64)
            dv = np.asarray(dv, dtype=np.float64)
            valid = np.asarray(valid, dtype=bool)
        if np.isnan(du[valid]).any() or np.isnan(dv[valid]).any():
            raise EncodingError("flow frame contains NaN at valid pixels")
        h, w = valid.shape
        codes = np.zeros((h, w, 3), dtype=np.uint16)
        span = 2.0 * FLOW_CLAMP_PX
        codes[..., 0] = _quantize((np.clip(du, -FLOW_CLAMP_PX, FLOW_CLAMP_PX)
                                   + FLOW_CLAMP_PX) / span, 65535)
        codes[..., 1] = _quantize((np.clip(dv, -FLOW_CLAMP_PX, FLOW_CLAMP_PX)
                                   + FLOW_CLAMP_PX) / span, 65535)
        codes[~valid] = 0
        return EncodedImage(w, h, 3, 16, codes)

    mask = frame.mask if isinstance(frame, OcclusionFrame) \
        else np.asarray(frame)
    if not np.isin(mask, (0, 1)).all():
        raise EncodingError("occlusion mask must be binary")
    h, w = mask.shape
    return EncodedImage(w, h, 1, 8, (mask.astype(np.uint8) * 255))


def decode_frame(img: EncodedImage, kind: str):
    """Invert the distribution encodings.

    Returns, by kind: depth -> (H, W) mm array (misses read back as the
    far clamp); normals -> ((H, W, 3) components, (H, W) valid);
    flow -> ((H, W) du, (H, W) dv, (H, W) valid); occlusion -> (H, W)
    uint8 0/1. Re-encoding a decoded image is bitwise idempotent.
    """
    if kind not in FRAME_KINDS:
        raise ValueError(f"unknown frame kind {kind!r}; expected one of {FRAME_KINDS}")
    expected_depth = 8 if kind == "occlusion" else 16
    expected_channels = 3 if kind in ("normals", "flow") else 1
    if img.bit_depth != expected_depth:
        raise FormatError(f"{kind} image must be {expected_depth}-bit, "
                          f"got {img.bit_depth}-bit")
    if img.channels != expected_channels:
        raise FormatError(f"{kind} image must have {expected_channels} channel(s), "
                          f"got {img.channels}")

    px = img.pixels
    if kind == "depth":
        return px.astype(np.float64) / 65535.0 * DEPTH_CLAMP_MM
    if kind == "normals":
        valid = px.any(axis=-1)
        normals = px.astype(np.float64) / 65535.0 * 2.0 - 1.0
        normals[~valid] = 0.0
        return normals, valid
    if kind == "flow":
        valid = px.any(axis=-1)
        span = 2.0 * FLOW_CLAMP_PX
        du = px[..., 0].astype(np.float64) / 65535.0 * span - FLOW_CLAMP_PX
        dv = px[..., 1].astype(np.float64) / 65535.0 * span - FLOW_CLAMP_PX
        du[~valid] = 0.0
        dv[~valid] = 0.0
        return du, dv, valid
    return (px > 0).astype(np.uint8)


def write_png(path, img: EncodedImage) -> None:
    """Lossless PNG; RGB payloads are stored with their natural channel
    order (cv2 works in BGR, so channels are reversed on the way out/in)."""
    pixels = img.pixels
    if img.channels == 3:
        pixels = pixels[..., ::-1]
    if not cv2.imwrite(str(path), pixels):
        raise WriteError(f"failed to write PNG {path}")


def read_png(path) -> EncodedImage:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"cannot read PNG {path}")
    if raw.ndim == 3:
        raw = raw[..., ::-1]
        channels = raw.shape[2]
    else:
        channels = 1
    bit_depth = 16 if raw.dtype == np.uint16 else 8
    h, w = raw.shape[:2]
    return EncodedImage(w, h, channels, bit_depth, np.ascontiguousarray(raw))


def _format_matrix_line(T: np.ndarray) -> str:
    return ",".join(f"{v:.{POSE_PRECISION}g}" for v in np.asarray(T).reshape(16))


def _parse_matrix(tokens, where: str) -> np.ndarray:
    if len(tokens) != 16:
        raise FormatError(f"{where}: expected 16 matrix values, got {len(tokens)}")
    try:
        values = [float(t) for t in tokens]
    except ValueError as err:
        raise FormatError(f"{where}: bad matrix value: {err}") from err
    T = np.array(values).reshape(4, 4)
    try:
        return validate_transform(T, tol=1e-6)
    except ValueError as err:
        raise FormatError(f"{where}: {err}") from err


def write_pose_matrices(path, poses) -> None:
    """One homogeneous matrix per line, row-major, comma-separated."""
    with open(path, "w", encoding="utf-8") as fh:
        for T in poses:
            fh.write(_format_matrix_line(T) + "\n")


def read_pose_matrices(path) -> list[np.ndarray]:
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            poses.append(_parse_matrix(line.split(","), f"{Path(path).name}:{lineno}"))
    return poses


def write_pose_log(path, log: PoseLog) -> None:
    """Timestamped log: timestamp then 16 values, or the token 'missing'."""
    with open(path, "w", encoding="utf-8") as fh:
        if log.rate_hz:
            fh.write(f"# rate_hz={log.rate_hz:g}\n")
        for ts, pose in zip(log.timestamps, log.poses):
            if pose is None:
                fh.write(f"{ts:.{POSE_PRECISION}g},missing\n")
            else:
                fh.write(f"{ts:.{POSE_PRECISION}g}," + _format_matrix_line(pose) + "\n")


def parse_pose_log(path) -> PoseLog:
    timestamps: list[float] = []
    poses: list = []
    rate = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "rate_hz=" in line:
                    rate = float(line.split("rate_hz=")[1])
                continue
            where = f"{Path(path).name}:{lineno}"
            tokens = line.split(",")
            try:
                timestamps.append(float(tokens[0]))
            except ValueError as err:
                raise FormatError(f"{where}: bad timestamp: {err}") from err
            if len(tokens) == 2 and tokens[1].strip() == "missing":
                poses.append(None)
            else:
                poses.append(_parse_matrix(tokens[1:], where))
    try:
        return PoseLog(np.array(timestamps), tuple(poses), rate)
    except ValueError as err:
        raise FormatError(f"{Path(path).name}: {err}") from err


_INTRINSICS_KEYS = {
    "width": "width", "height": "height", "cx": "c_x", "cy": "c_y",
    "a0": "alpha_0", "a2": "alpha_2", "a3": "alpha_3", "a4": "alpha_4",
    "e": "e", "f": "f", "g": "g",
}


def parse_intrinsics(path) -> CameraIntrinsics:
    """Read the intrinsics JSON (keys width, height, cx, cy, a0, a2, a3,
    a4, e, f, g)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise FormatError(f"{path.name}: invalid JSON: {err}") from err
    kwargs = {}
    for key, field_name in _INTRINSICS_KEYS.items():
        if key not in data:
            raise FormatError(f"{path.name}: missing intrinsics key {key!r}")
        kwargs[field_name] = data[key]
    kwargs["width"] = int(kwargs["width"])
    kwargs["height"] = int(kwargs["height"])
    return CameraIntrinsics(**kwargs)


def write_intrinsics(path, k: CameraIntrinsics) -> None:
    data = {key: getattr(k, field_name) for key, field_name in _INTRINSICS_KEYS.items()}
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def write_coverage(path, coverage: CoverageMap) -> None:
    """Per-face lines `face_index,flag` with 1 = observed, 0 = unobserved."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, flag in enumerate(coverage.observed):
            fh.write(f"{i},{1 if flag else 0}\n")


def read_coverage(path) -> CoverageMap:
    flags = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2 or int(parts[0]) != len(flags):
                raise FormatError(f"{Path(path).name}:{lineno}: bad coverage row")
            flags.append(parts[1] == "1")
    return CoverageMap(np.array(flags, dtype=bool))


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_sequence(out_dir, depth_frames, normal_frames, flow_frames,
                   occlusion_frames, poses, coverage: CoverageMap,
                   mesh: TriangleMesh | None = None,
                   mesh_name: str = "model.obj") -> dict:
    """Write one registered sequence in the distribution layout.

    For N frames expects N depth/normal/occlusion frames, N poses, and
    N - 1 flow frames (the first frame has none; flow_000001.png maps
    frame 0's grid into frame 1). Writes a manifest.json with SHA-256
    checksums last; on any failure no manifest is emitted and a
    WriteError is raised.
    """
    n = len(depth_frames)
    if n == 0:
        raise ValueError("empty sequence")
    if not (len(normal_frames) == len(occlusion_frames) == len(poses) == n):
        raise ValueError("depth/normal/occlusion/pose counts disagree")
    if len(flow_frames) != n - 1:
        raise ValueError(f"expected {n - 1} flow frames for {n} frames, "
                         f"got {len(flow_frames)}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: list[Path] = []
    try:
        for i in range(n):
            for name, frame, kind in (
                (f"depth_{i:06d}.png", depth_frames[i], "depth"),
                (f"normals_{i:06d}.png", normal_frames[i], "normals"),
                (f"occlusion_{i:06d}.png", occlusion_frames[i], "occlusion"),
            ):
                path = out_dir / name
                write_png(path, encode_frame(frame, kind))
                artifacts.append(path)
        for i, flow in enumerate(flow_frames, start=1):
            path = out_dir / f"flow_{i:06d}.png"
            write_png(path, encode_frame(flow, "flow"))
            artifacts.append(path)
        pose_path = out_dir / "pose.txt"
        write_pose_matrices(pose_path, poses)
        artifacts.append(pose_path)
        coverage_path = out_dir / "coverage.csv"
        write_coverage(coverage_path, coverage)
        artifacts.append(coverage_path)
        if mesh is not None:
            mesh_path = out_dir / mesh_name
            save_mesh(mesh_path, mesh)
            artifacts.append(mesh_path)
    except Exception as err:
        raise WriteError(f"sequence export failed before manifest: {err}") from err

    manifest = {
        "frame_count": n,
        "artifacts": {
            p.name: {"sha256": _sha256(p), "bytes": p.stat().st_size}
            for p in artifacts
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
