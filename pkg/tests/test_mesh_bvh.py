"""OBJ loading, BVH construction and ray-query equivalence tests."""

import numpy as np
import pytest

from lumenreg.bvh import (
    T_EPSILON,
    brute_force_batch,
    build_accel,
    intersect,
    raycast_batch,
    _accel_args,
)
from lumenreg.errors import MeshFormatError
from lumenreg.geometry import TransformParams, invert_transform, params_to_transform
from lumenreg.mesh import TriangleMesh, load_mesh, save_mesh
from lumenreg.shapes import make_bent_tube, make_icosphere, tube_centerline

from conftest import plane_mesh

UNIT_CUBE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 2 3
f 1 3 4
f 5 7 6
f 5 8 7
f 1 5 6
f 1 6 2
f 2 6 7
f 2 7 3
f 3 7 8
f 3 8 4
f 4 8 5
f 4 5 1
"""


class TestLoadMesh:
    def test_unit_cube(self, tmp_path):
        path = tmp_path / "cube.obj"
        path.write_text(UNIT_CUBE_OBJ)
        mesh = load_mesh(path)
        assert mesh.num_vertices == 8
        assert mesh.num_faces == 12

    def test_quad_fan_triangulation(self, tmp_path):
        path = tmp_path / "quads.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
            "v 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
            "f 1 2 3 4\nf 5 6 7 8\n")
        mesh = load_mesh(path)
        assert mesh.num_faces == 4  # 2 quads -> 2 triangles each

    def test_malformed_index_names_line(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 zap\n")
        with pytest.raises(MeshFormatError, match="bad.obj:4"):
            load_mesh(path)

    def test_out_of_range_index(self, tmp_path):
        path = tmp_path / "oob.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(MeshFormatError, match="oob.obj:4"):
            load_mesh(path)

    def test_empty_mesh_rejected(self, tmp_path):
        path = tmp_path / "empty.obj"
        path.write_text("v 0 0 0\n")
        with pytest.raises(ValueError):
            load_mesh(path)

    def test_slash_indices_and_negatives(self, tmp_path):
        path = tmp_path / "mixed.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 -1/3\n")
        mesh = load_mesh(path)
        assert mesh.num_faces == 1

    def test_save_round_trip(self, tmp_path):
        mesh = make_icosphere(1, radius=10.0)
        path = tmp_path / "ico.obj"
        save_mesh(path, mesh)
        back = load_mesh(path)
        assert back.num_faces == mesh.num_faces
        np.testing.assert_allclose(back.vertices, mesh.vertices, rtol=1e-6)

    def test_degenerate_face_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        with pytest.raises(ValueError, match="degenerate"):
            TriangleMesh(verts, np.array([[0, 1, 2]], dtype=np.int32))


class TestBuildAccel:
    def test_single_triangle_single_leaf(self):
        mesh = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float),
                            np.array([[0, 1, 2]], dtype=np.int32))
        accel = build_accel(mesh)
        assert accel.num_nodes == 1
        assert accel.node_count[0] == 1

    def test_every_triangle_in_exactly_one_leaf(self, tube_mesh, tube_accel):
        assert sorted(tube_accel.prim_face.tolist()) == list(range(tube_mesh.num_faces))

    def test_parent_bounds_contain_children(self, tube_accel):
        a = tube_accel
        for node in range(a.num_nodes):
            if a.node_count[node] == 0:
                for child in (a.node_left[node], a.node_left[node] + 1):
                    assert (a.node_min[node] <= a.node_min[child] + 1e-12).all()
                    assert (a.node_max[node] >= a.node_max[child] - 1e-12).all()

    def test_leaf_bounds_contain_triangles(self, tube_accel):
        a = tube_accel
        for node in range(a.num_nodes):
            count = a.node_count[node]
            if count:
                first = a.node_left[node]
                for p in range(first, first + count):
                    for v in (a.tri_v0[p], a.tri_v0[p] + a.tri_e1[p],
                              a.tri_v0[p] + a.tri_e2[p]):
                        assert (v >= a.node_min[node] - 1e-9).all()
                        assert (v <= a.node_max[node] + 1e-9).all()

    def test_deterministic_build(self, tube_mesh):
        a = build_accel(tube_mesh)
        b = build_accel(tube_mesh)
        np.testing.assert_array_equal(a.node_min, b.node_min)
        np.testing.assert_array_equal(a.node_left, b.node_left)
        np.testing.assert_array_equal(a.prim_face, b.prim_face)


def _random_rays(rng, n, origin_box=50.0):
    origins = rng.uniform(-origin_box, origin_box, (n, 3))
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origins, dirs


def _run_bvh(accel, origins, dirs):
    n = len(dirs)
    out = (np.empty(n), np.empty(n, np.int32), np.empty(n), np.empty(n))
    raycast_batch(*_accel_args(accel), np.ascontiguousarray(origins),
                  np.ascontiguousarray(dirs), T_EPSILON, *out, False)
    return out


def _run_brute(accel, origins, dirs):
    n = len(dirs)
    out = (np.empty(n), np.empty(n, np.int32), np.empty(n), np.empty(n))
    brute_force_batch(accel.tri_v0, accel.tri_e1, accel.tri_e2, accel.prim_face,
                      np.ascontiguousarray(origins), np.ascontiguousarray(dirs),
                      T_EPSILON, *out)
    return out


def _assert_equivalent(accel, origins, dirs):
    t_b, p_b, _, _ = _run_bvh(accel, origins, dirs)
    t_o, p_o, _, _ = _run_brute(accel, origins, dirs)
    np.testing.assert_array_equal(p_b, p_o)
    hit = p_o >= 0
    rel = np.abs(t_b[hit] - t_o[hit]) / np.abs(t_o[hit])
    assert rel.size == 0 or rel.max() <= 1e-9


class TestBvhBruteForceEquivalence:
    def test_icosphere(self, sphere_accel):
        rng = np.random.default_rng(100)
        origins, dirs = _random_rays(rng, 1000, origin_box=40.0)
        _assert_equivalent(sphere_accel, origins, dirs)

    def test_triangle_soup(self):
        rng = np.random.default_rng(7)
        verts = rng.uniform(-30, 30, (200 * 3, 3))
        faces = np.arange(600, dtype=np.int32).reshape(200, 3)
        accel = build_accel(TriangleMesh(verts, faces))
        origins, dirs = _random_rays(rng, 1000, origin_box=40.0)
        _assert_equivalent(accel, origins, dirs)

    def test_tube_interior(self, tube_accel):
        rng = np.random.default_rng(13)
        s = rng.uniform(0.05, 0.95, 1000)
        origins = np.ascontiguousarray(tube_centerline(s))
        dirs = rng.normal(size=(1000, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        _assert_equivalent(tube_accel, origins, dirs)

    def test_axis_aligned_rays(self, sphere_accel):
        # zero direction components exercise the slab special case
        dirs = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                         [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
        origins = np.tile([[5.0, 3.0, -2.0]], (6, 1))
        _assert_equivalent(sphere_accel, origins, dirs)


class TestIntersect:
    def test_plane_hit(self):
        accel = build_accel(plane_mesh(z=50.0))
        hit = intersect(accel, np.eye(4), (0, 0, 0), (0, 0, 1))
        assert hit is not None
        assert hit.t == pytest.approx(50.0, abs=1e-12)
        assert abs(hit.normal[2]) == pytest.approx(1.0)
        assert hit.barycentric.min() >= 0
        assert hit.barycentric.sum() == pytest.approx(1.0, abs=1e-9)

    def test_model_transform_shifts_hit(self):
        accel = build_accel(plane_mesh(z=50.0))
        T = np.eye(4)
        T[2, 3] = 10.0
        hit = intersect(accel, T, (0, 0, 0), (0, 0, 1))
        assert hit.t == pytest.approx(60.0, abs=1e-12)

    def test_miss_returns_none(self):
        accel = build_accel(plane_mesh(z=50.0))
        assert intersect(accel, np.eye(4), (0, 0, 0), (0, 0, -1)) is None

    def test_t_epsilon_guard(self):
        accel = build_accel(plane_mesh(z=50.0))
        hit = intersect(accel, np.eye(4), (0, 0, 50.0 - 1e-5), (0, 0, 1))
        assert hit is None  # within the self-intersection guard

    def test_rigid_transform_consistency(self, sphere_accel):
        # intersect(T, r) == T applied to intersect(I, T^-1 r)
        rng = np.random.default_rng(21)
        T = params_to_transform(TransformParams(0.4, -0.2, 0.7, 10.0, -5.0, 3.0))
        T_inv = invert_transform(T)
        for _ in range(100):
            o = rng.uniform(-80, 80, 3)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            hit = intersect(sphere_accel, T, o, d)
            o_m = T_inv[:3, :3] @ o + T_inv[:3, 3]
            d_m = T_inv[:3, :3] @ d
            hit_m = intersect(sphere_accel, np.eye(4), o_m, d_m)
            if hit is None:
                assert hit_m is None
                continue
            assert hit.face_index == hit_m.face_index
            assert abs(hit.t - hit_m.t) <= 1e-9 * max(1.0, hit_m.t)
            np.testing.assert_allclose(
                hit.position, T[:3, :3] @ hit_m.position + T[:3, 3], atol=1e-9)
            np.testing.assert_allclose(hit.normal, T[:3, :3] @ hit_m.normal,
                                       atol=1e-12)


def test_closed_sphere_interior_rays_never_miss(sphere_accel):
    rng = np.random.default_rng(3)
    n = 100_000
    origins = rng.uniform(-20, 20, (n, 3))  # strictly inside radius 50
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    _, prim, _, _ = _run_bvh(sphere_accel, origins, dirs)
    assert (prim >= 0).all()


def test_hint_grids_do_not_change_results(tube_accel):
    from lumenreg.bvh import raycast_grid_rows
    from lumenreg.geometry import camera_ray_grid, downscale_intrinsics
    from lumenreg.synthetic import endoscope_intrinsics
    from lumenreg.shapes import tube_frame

    k = downscale_intrinsics(endoscope_intrinsics(), 4)
    grid = camera_ray_grid(k)
    h, w = grid.shape[:2]
    t_, n_, b_ = tube_frame(np.array([0.3]))
    rot = np.ascontiguousarray(np.stack([n_[0], b_[0], t_[0]], axis=1))
    origin = np.ascontiguousarray(tube_centerline(0.3).reshape(3))

    def run(hints):
        out = (np.empty((h, w)), np.empty((h, w), np.int32),
               np.empty((h, w)), np.empty((h, w)))
        raycast_grid_rows(*_accel_args(tube_accel), grid, rot, origin,
                          0, h, T_EPSILON, hints, *out)
        return out

    cold = run(np.full((h, w), -1, np.int32))
    # garbage hints: shifted primitive ids, still valid indices
    hinted = run(np.roll(cold[1], 17))
    np.testing.assert_array_equal(cold[1], hinted[1])
    np.testing.assert_array_equal(cold[0], hinted[0])
