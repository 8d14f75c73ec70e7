"""Shared fixtures: calibrations, procedural scenes, prebuilt hierarchies."""

import numpy as np
import pytest

from lumenreg.bvh import build_accel
from lumenreg.geometry import CameraIntrinsics
from lumenreg.mesh import TriangleMesh
from lumenreg.shapes import make_bent_tube, make_icosphere
from lumenreg.synthetic import endoscope_intrinsics


@pytest.fixture(scope="session")
def table3_intrinsics() -> CameraIntrinsics:
    """The wide-angle endoscope calibration used across the suite."""
    return endoscope_intrinsics()


@pytest.fixture(scope="session")
def small_intrinsics() -> CameraIntrinsics:
    """Tiny symmetric camera (e=1, f=g=0) for analytic renderer tests."""
    return CameraIntrinsics(
        width=128, height=96, c_x=64.0, c_y=48.0,
        alpha_0=55.0, alpha_2=-2.0e-3, alpha_3=0.0, alpha_4=0.0,
        e=1.0, f=0.0, g=0.0,
    )


@pytest.fixture(scope="session")
def tube_mesh() -> TriangleMesh:
    return make_bent_tube()


@pytest.fixture(scope="session")
def tube_accel(tube_mesh):
    return build_accel(tube_mesh)


@pytest.fixture(scope="session")
def sphere_accel():
    return build_accel(make_icosphere(3, radius=50.0))


def plane_mesh(z: float = 50.0, half: float = 200.0) -> TriangleMesh:
    """Two-triangle square plane at the given z (normal along -+z)."""
    verts = np.array([
        [-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z],
    ])
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    return TriangleMesh(verts, faces)


def disc_mesh(z: float, radius: float, segments: int = 48) -> TriangleMesh:
    """Triangle fan disc facing the origin at the given z."""
    angles = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    rim = np.stack([radius * np.cos(angles), radius * np.sin(angles),
                    np.full(segments, float(z))], axis=1)
    verts = np.vstack([[0.0, 0.0, float(z)], rim])
    faces = np.array([[0, 1 + i, 1 + (i + 1) % segments] for i in range(segments)],
                     dtype=np.int32)
    return TriangleMesh(verts, faces)
