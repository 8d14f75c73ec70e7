"""Triangle mesh container and Wavefront OBJ loading."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshFormatError

DEGENERATE_AREA = 1e-12  # mm^2


@dataclass(frozen=True)
class TriangleMesh:
    """Triangulated surface in millimeters.

    vertices: (V, 3) float64, faces: (F, 3) int32 vertex indices,
    face_normals: (F, 3) unit geometric normals (right-hand winding).
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray = field(init=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {faces.shape}")
        if faces.size == 0:
            raise ValueError("mesh has no faces")
        if faces.min() < 0 or faces.max() >= len(vertices):
            raise ValueError("face index out of range")
        v0 = vertices[faces[:, 0]]
        cross = np.cross(vertices[faces[:, 1]] - v0, vertices[faces[:, 2]] - v0)
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        bad = np.nonzero(areas <= DEGENERATE_AREA)[0]
        if bad.size:
            raise ValueError(
                f"{bad.size} degenerate face(s), first at index {bad[0]} "
                f"(area {areas[bad[0]]:g} mm^2)"
            )
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "face_normals", cross / (2.0 * areas[:, None]))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)


def load_mesh(path) -> TriangleMesh:
    """Load a Wavefront OBJ (v/f records; polygons fan-triangulated).

    Vertex positions are taken as millimeters. vt/vn records are ignored.
    """
    path = Path(path)
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path.name}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as err:
                    raise MeshFormatError(f"{path.name}:{lineno}: bad vertex: {err}") from err
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path.name}:{lineno}: face needs >= 3 vertices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/", 1)[0]
                    try:
                        i = int(head)
                    except ValueError as err:
                        raise MeshFormatError(
                            f"{path.name}:{lineno}: bad face index {token!r}"
                        ) from err
                    # OBJ indices are 1-based; negative indices count from the end.
                    i = i - 1 if i > 0 else len(vertices) + i
                    if not 0 <= i < len(vertices):
                        raise MeshFormatError(
                            f"{path.name}:{lineno}: face index {token!r} out of range"
                        )
                    idx.append(i)
                for a, b in zip(idx[1:-1], idx[2:]):
                    faces.append((idx[0], a, b))
            # other records (vt, vn, o, g, s, usemtl, ...) are ignored
    if not faces:
        raise ValueError(f"{path.name}: no faces found")
    try:
        return TriangleMesh(np.array(vertices), np.array(faces, dtype=np.int32))
    except ValueError as err:
        raise ValueError(f"{path.name}: {err}") from err


def save_mesh(path, mesh: TriangleMesh) -> None:
    """Write a minimal OBJ (v/f records only)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
