"""Procedural closed test surfaces (millimeter units)."""

from __future__ import annotations

import math

import numpy as np

from .mesh import TriangleMesh


def make_icosphere(subdivisions: int = 3, radius: float = 50.0) -> TriangleMesh:
    """Closed icosphere centered at the origin."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        split = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            split += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = split
    vertices = radius * np.array(verts)
    return TriangleMesh(vertices, np.array(faces, dtype=np.int32))


def tube_centerline(s, length: float = 180.0, bend_radius: float = 260.0,
                    sway: float = 6.0):
    """Centerline point(s) of the bent tube at arc fraction s in [0, 1].

    An arc in the XZ plane (starting at the origin, initially along +z)
    with a gentle lateral sway in y.
    """
    s = np.asarray(s, dtype=np.float64)
    phi = s * (length / bend_radius)
    x = bend_radius * (1.0 - np.cos(phi))
    z = bend_radius * np.sin(phi)
    y = sway * np.sin(2.0 * math.pi * s)
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def tube_frame(s, length: float = 180.0, bend_radius: float = 260.0,
               sway: float = 6.0):
    """Orthonormal (tangent, normal, binormal) frame along the centerline."""
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    eps = 1e-5
    tangent = tube_centerline(s + eps, length, bend_radius, sway) \
        - tube_centerline(s - eps, length, bend_radius, sway)
    tangent /= np.linalg.norm(tangent, axis=-1, keepdims=True)
    up = np.array([0.0, 1.0, 0.0])
    normal = np.cross(up, tangent)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    binormal = np.cross(tangent, normal)
    return tangent, normal, binormal


def make_bent_tube(n_segments: int = 90, n_sides: int = 32,
                   radius: float = 22.0, length: float = 180.0,
                   bend_radius: float = 260.0, sway: float = 6.0,
                   fold_amp: float = 0.12, n_folds: int = 7,
                   ripple_amp: float = 0.05) -> TriangleMesh:
    """Closed bent tube with ring folds and a mild azimuthal ripple.

    The folds create depth contours from interior viewpoints, which the
    edge-based registration relies on. Capped at both ends.
    """
    ss = np.linspace(0.0, 1.0, n_segments + 1)
    centers = tube_centerline(ss, length, bend_radius, sway)
    _, normals, binormals = tube_frame(ss, length, bend_radius, sway)

    angles = np.linspace(0.0, 2.0 * math.pi, n_sides, endpoint=False)
    verts = np.empty(((n_segments + 1) * n_sides + 2, 3))
    for i, s in enumerate(ss):
        r = radius * (1.0 + fold_amp * np.sin(2.0 * math.pi * n_folds * s)
                      + ripple_amp * np.sin(3.0 * angles + 4.0 * math.pi * s))
        ring = centers[i] + r[:, None] * (np.cos(angles)[:, None] * normals[i]
                                          + np.sin(angles)[:, None] * binormals[i])
        verts[i * n_sides:(i + 1) * n_sides] = ring
    cap0 = len(verts) - 2
    cap1 = len(verts) - 1
    verts[cap0] = centers[0]
    verts[cap1] = centers[-1]

    faces = []
    for i in range(n_segments):
        for j in range(n_sides):
            a = i * n_sides + j
            b = i * n_sides + (j + 1) % n_sides
            c = (i + 1) * n_sides + j
            d = (i + 1) * n_sides + (j + 1) % n_sides
            faces.append((a, b, d))
            faces.append((a, d, c))
    for j in range(n_sides):
        faces.append((cap0, (j + 1) % n_sides, j))
        last = n_segments * n_sides
        faces.append((cap1, last + j, last + (j + 1) % n_sides))
    return TriangleMesh(verts, np.array(faces, dtype=np.int32))
