"""SAH bounding-volume hierarchy and ray-triangle intersection kernels.

The hierarchy is built once per mesh (deterministic, binned surface-area
heuristic) and stored as flat arrays. Query kernels are numba-compiled and
release the GIL, so frames and optimizer candidates can be traced from
plain Python threads. Rigid model transforms are applied to the rays (the
hierarchy is never rebuilt): a ray is intersected in model space and the
hit is mapped back to world space by the caller.

Ray parameters t are in millimeters and valid hits satisfy t > T_EPSILON.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import invert_transform
from .mesh import TriangleMesh

T_EPSILON = 1e-4  # mm; self-intersection guard
_BARY_EPS = 1e-12  # slack on barycentric bounds so shared edges stay watertight
_N_BINS = 12
_LEAF_SIZE = 4
_MAX_DEPTH = 64


@dataclass(frozen=True)
class Hit:
    """Nearest intersection along a ray (world space)."""

    t: float
    face_index: int
    barycentric: np.ndarray  # (w, u, v), nonnegative, sums to 1
    position: np.ndarray     # mm
    normal: np.ndarray       # unit geometric normal

    def __post_init__(self):
        if not self.t > 0.0:
            raise ValueError(f"hit parameter t must be positive, got {self.t}")


@dataclass(frozen=True)
class AccelStructure:
    """Flattened BVH over a TriangleMesh; immutable after build."""

    mesh: TriangleMesh
    node_min: np.ndarray   # (N, 3)
    node_max: np.ndarray   # (N, 3)
    node_left: np.ndarray  # (N,) child index (inner) or first-prim offset (leaf)
    node_count: np.ndarray  # (N,) 0 for inner nodes, leaf triangle count otherwise
    tri_v0: np.ndarray     # (F, 3) in BVH primitive order
    tri_e1: np.ndarray
    tri_e2: np.ndarray
    prim_face: np.ndarray  # (F,) original face index per primitive

    @property
    def num_nodes(self) -> int:
        return len(self.node_left)


def build_accel(mesh: TriangleMesh) -> AccelStructure:
    """Build a binned-SAH BVH. Deterministic for a given mesh."""
    verts, faces = mesh.vertices, mesh.faces
    tri_lo = np.minimum.reduce([verts[faces[:, i]] for i in range(3)])
    tri_hi = np.maximum.reduce([verts[faces[:, i]] for i in range(3)])
    centroids = 0.5 * (tri_lo + tri_hi)

    node_min, node_max, node_left, node_count = [], [], [], []
    prim_order = np.arange(len(faces))

    def half_area(lo, hi):
        ext = np.maximum(hi - lo, 0.0)
        return ext[0] * ext[1] + ext[1] * ext[2] + ext[2] * ext[0]

    def new_node(lo, hi):
        node_min.append(lo)
        node_max.append(hi)
        node_left.append(-1)
        node_count.append(0)
        return len(node_left) - 1

    # (node index, start, end, depth) over prim_order slices
    root = new_node(tri_lo.min(axis=0), tri_hi.max(axis=0))
    stack = [(root, 0, len(faces), 0)]
    while stack:
        node, start, end, depth = stack.pop()
        idx = prim_order[start:end]
        n = end - start
        if n <= _LEAF_SIZE or depth >= _MAX_DEPTH:
            node_left[node] = start
            node_count[node] = n
            continue

        cent = centroids[idx]
        cmin, cmax = cent.min(axis=0), cent.max(axis=0)
        best_cost, best_axis, best_split = np.inf, -1, -1
        bin_edges = {}
        for axis in range(3):
            extent = cmax[axis] - cmin[axis]
            if extent <= 0.0:
                continue
            bins = np.minimum(
                ((cent[:, axis] - cmin[axis]) * (_N_BINS / extent)).astype(np.int64),
                _N_BINS - 1,
            )
            counts = np.bincount(bins, minlength=_N_BINS)
            lo_b = np.full((_N_BINS, 3), np.inf)
            hi_b = np.full((_N_BINS, 3), -np.inf)
            for b in range(_N_BINS):
                sel = bins == b
                if counts[b]:
                    lo_b[b] = tri_lo[idx[sel]].min(axis=0)
                    hi_b[b] = tri_hi[idx[sel]].max(axis=0)
            # sweep: cost of splitting after bin s
            lo_l, hi_l = np.minimum.accumulate(lo_b, 0), np.maximum.accumulate(hi_b, 0)
            lo_r = np.minimum.accumulate(lo_b[::-1], 0)[::-1]
            hi_r = np.maximum.accumulate(hi_b[::-1], 0)[::-1]
            n_l = np.cumsum(counts)
            for s in range(_N_BINS - 1):
                nl, nr = n_l[s], n - n_l[s]
                if nl == 0 or nr == 0:
                    continue
                cost = nl * half_area(lo_l[s], hi_l[s]) + nr * half_area(lo_r[s + 1], hi_r[s + 1])
                if cost < best_cost:
                    best_cost, best_axis, best_split = cost, axis, s
            bin_edges[axis] = bins

        if best_axis < 0:
            # all centroids coincide: median split for balance
            mid = start + n // 2
            order = np.argsort(cent[:, 0], kind="stable")
            prim_order[start:end] = idx[order]
        else:
            left_mask = bin_edges[best_axis] <= best_split
            mid = start + int(left_mask.sum())
            prim_order[start:end] = np.concatenate([idx[left_mask], idx[~left_mask]])

        left_idx = prim_order[start:mid]
        right_idx = prim_order[mid:end]
        child = new_node(tri_lo[left_idx].min(axis=0), tri_hi[left_idx].max(axis=0))
        new_node(tri_lo[right_idx].min(axis=0), tri_hi[right_idx].max(axis=0))
        node_left[node] = child
        node_count[node] = 0
        stack.append((child + 1, mid, end, depth + 1))
        stack.append((child, start, mid, depth + 1))

    v0 = verts[faces[prim_order, 0]]
    v1 = verts[faces[prim_order, 1]]
    v2 = verts[faces[prim_order, 2]]
    return AccelStructure(
        mesh=mesh,
        node_min=np.ascontiguousarray(node_min, dtype=np.float64),
        node_max=np.ascontiguousarray(node_max, dtype=np.float64),
        node_left=np.ascontiguousarray(node_left, dtype=np.int32),
        node_count=np.ascontiguousarray(node_count, dtype=np.int32),
        tri_v0=np.ascontiguousarray(v0),
        tri_e1=np.ascontiguousarray(v1 - v0),
        tri_e2=np.ascontiguousarray(v2 - v0),
        prim_face=np.ascontiguousarray(prim_order, dtype=np.int32),
    )


@njit(cache=True, nogil=True)
def _tri_hit(v0, e1, e2, prim, ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore; returns (t, u, v) or t = -1 on miss.

    Deliberately not compiled with fastmath (and not numba-inlined into
    fastmath callers): the BVH and the brute-force oracle must evaluate
    triangles with identical arithmetic.
    """
    e1x, e1y, e1z = e1[prim, 0], e1[prim, 1], e1[prim, 2]
    e2x, e2y, e2z = e2[prim, 0], e2[prim, 1], e2[prim, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-14 < det < 1e-14:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - v0[prim, 0]
    ty = oy - v0[prim, 1]
    tz = oz - v0[prim, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -_BARY_EPS or u > 1.0 + _BARY_EPS:
        return -1.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -_BARY_EPS or u + v > 1.0 + _BARY_EPS:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return t, u, v


@njit(cache=True, nogil=True, inline="always", fastmath={"reassoc", "contract", "arcp", "nsz"})
def _safe_inv(d):
    """1/d with zero components replaced by a signed tiny value.

    (lo - o) * (+-1e300) overflows to +-inf for o off the slab plane and is
    exactly 0.0 for o on it, so the slab interval stays NaN-free.
    """
    if d == 0.0:
        d = 1e-300 if not np.signbit(d) else -1e-300
    return 1.0 / d


@njit(cache=True, nogil=True, inline="always", fastmath={"reassoc", "contract", "arcp", "nsz"})
def _slab_hit(node_min, node_max, node, ox, oy, oz, ix, iy, iz, t_lo, t_hi):
    """Ray/AABB entry distance, or inf when the slab interval is empty."""
    t1 = (node_min[node, 0] - ox) * ix
    t2 = (node_max[node, 0] - ox) * ix
    tmin = min(t1, t2)
    tmax = max(t1, t2)
    t1 = (node_min[node, 1] - oy) * iy
    t2 = (node_max[node, 1] - oy) * iy
    tmin = max(tmin, min(t1, t2))
    tmax = min(tmax, max(t1, t2))
    t1 = (node_min[node, 2] - oz) * iz
    t2 = (node_max[node, 2] - oz) * iz
    tmin = max(tmin, min(t1, t2))
    tmax = min(tmax, max(t1, t2))
    tmin = max(tmin, t_lo)
    tmax = min(tmax, t_hi)
    if tmin > tmax:
        return np.inf
    return tmin


@njit(cache=True, nogil=True, fastmath={"reassoc", "contract", "arcp", "nsz"})
def _trace_one(node_min, node_max, node_left, node_count,
               tri_v0, tri_e1, tri_e2, prim_face,
               ox, oy, oz, dx, dy, dz, t_eps, t_limit, hint, hint2,
               node_stack, dist_stack):
    """Nearest hit along one ray. Returns (t, prim, u, v); prim = -1 on miss.

    Ties on t resolve to the lower original face index, matching the
    brute-force comparator. Valid primitive hints from coherent
    neighboring rays tighten t before traversal starts.
    """
    best_t = t_limit
    best_prim = -1
    best_u = 0.0
    best_v = 0.0
    if hint >= 0:
        t, u, v = _tri_hit(tri_v0, tri_e1, tri_e2, hint, ox, oy, oz, dx, dy, dz)
        if t_eps < t < best_t:
            best_t, best_prim, best_u, best_v = t, hint, u, v
    if hint2 >= 0 and hint2 != hint:
        t, u, v = _tri_hit(tri_v0, tri_e1, tri_e2, hint2, ox, oy, oz, dx, dy, dz)
        if t_eps < t and (t < best_t or (t == best_t and best_prim >= 0
                                         and prim_face[hint2] < prim_face[best_prim])):
            best_t, best_prim, best_u, best_v = t, hint2, u, v

    ix = _safe_inv(dx)
    iy = _safe_inv(dy)
    iz = _safe_inv(dz)
    if _slab_hit(node_min, node_max, 0, ox, oy, oz, ix, iy, iz, t_eps, best_t) == np.inf:
        return best_t, best_prim, best_u, best_v

    node_stack[0] = 0
    dist_stack[0] = t_eps
    sp = 1
    while sp > 0:
        sp -= 1
        if dist_stack[sp] > best_t:
            continue
        node = node_stack[sp]
        count = node_count[node]
        if count > 0:
            first = node_left[node]
            for p in range(first, first + count):
                t, u, v = _tri_hit(tri_v0, tri_e1, tri_e2, p, ox, oy, oz, dx, dy, dz)
                if t > t_eps:
                    if t < best_t or (t == best_t and best_prim >= 0
                                      and prim_face[p] < prim_face[best_prim]):
                        best_t, best_prim, best_u, best_v = t, p, u, v
        else:
            left = node_left[node]
            right = left + 1
            t_l = _slab_hit(node_min, node_max, left, ox, oy, oz, ix, iy, iz, t_eps, best_t)
            t_r = _slab_hit(node_min, node_max, right, ox, oy, oz, ix, iy, iz, t_eps, best_t)
            if t_l > t_r:
                left, right = right, left
                t_l, t_r = t_r, t_l
            if t_r != np.inf:
                node_stack[sp] = right
                dist_stack[sp] = t_r
                sp += 1
            if t_l != np.inf:
                node_stack[sp] = left
                dist_stack[sp] = t_l
                sp += 1
    return best_t, best_prim, best_u, best_v


@njit(cache=True, nogil=True)
def raycast_batch(node_min, node_max, node_left, node_count,
                  tri_v0, tri_e1, tri_e2, prim_face,
                  origins, dirs, t_eps,
                  out_t, out_prim, out_u, out_v, use_hint):
    """Trace a batch of rays (origins/dirs already in model space).

    out_prim receives BVH primitive indices; map through prim_face for
    original face indices. use_hint seeds each ray with the previous
    ray's hit (worthwhile only for coherent batches).
    """
    node_stack = np.empty(2 * _MAX_DEPTH, dtype=np.int32)
    dist_stack = np.empty(2 * _MAX_DEPTH, dtype=np.float64)
    hint = -1
    for i in range(len(dirs)):
        t, prim, u, v = _trace_one(
            node_min, node_max, node_left, node_count,
            tri_v0, tri_e1, tri_e2, prim_face,
            origins[i, 0], origins[i, 1], origins[i, 2],
            dirs[i, 0], dirs[i, 1], dirs[i, 2],
            t_eps, np.inf, hint if use_hint else -1, -1,
            node_stack, dist_stack)
        out_prim[i] = prim
        if prim >= 0:
            out_t[i] = t
            out_u[i] = u
            out_v[i] = v
            hint = prim
        else:
            out_t[i] = np.inf
            out_u[i] = 0.0
            out_v[i] = 0.0


@njit(cache=True, nogil=True, fastmath={"reassoc", "contract", "arcp", "nsz"})
def raycast_grid_rows(node_min, node_max, node_left, node_count,
                      tri_v0, tri_e1, tri_e2, prim_face,
                      cam_dirs, rot, origin, row_start, row_end, t_eps,
                      hint_grid, out_t, out_prim, out_u, out_v):
    """Trace camera-grid rays for rows [row_start, row_end).

    cam_dirs is the (H, W, 3) grid of unit directions in some reference
    frame; rot maps that frame into model space and origin is the camera
    position in model space. Traversals are seeded with candidate hits
    from coherent neighbors: hint_grid (a previous render's out_prim, or
    all -1), the pixel to the left, and the pixel above (within this row
    range, so disjoint row chunks stay thread-safe). Hints never change
    the result, only tighten the search.

    out_prim receives primitive indices (-1 on miss); map through
    prim_face for face indices.
    """
    node_stack = np.empty(2 * _MAX_DEPTH, dtype=np.int32)
    dist_stack = np.empty(2 * _MAX_DEPTH, dtype=np.float64)
    ox, oy, oz = origin[0], origin[1], origin[2]
    width = cam_dirs.shape[1]
    for row in range(row_start, row_end):
        left_prim = -1
        for col in range(width):
            cx = cam_dirs[row, col, 0]
            cy = cam_dirs[row, col, 1]
            cz = cam_dirs[row, col, 2]
            dx = rot[0, 0] * cx + rot[0, 1] * cy + rot[0, 2] * cz
            dy = rot[1, 0] * cx + rot[1, 1] * cy + rot[1, 2] * cz
            dz = rot[2, 0] * cx + rot[2, 1] * cy + rot[2, 2] * cz
            hint = hint_grid[row, col]
            hint2 = left_prim
            if hint2 < 0 and row > row_start:
                hint2 = out_prim[row - 1, col]
            t, prim, u, v = _trace_one(
                node_min, node_max, node_left, node_count,
                tri_v0, tri_e1, tri_e2, prim_face,
                ox, oy, oz, dx, dy, dz, t_eps, np.inf, hint, hint2,
                node_stack, dist_stack)
            out_prim[row, col] = prim
            left_prim = prim
            if prim >= 0:
                out_t[row, col] = t
                out_u[row, col] = u
                out_v[row, col] = v
            else:
                out_t[row, col] = np.inf
                out_u[row, col] = 0.0
                out_v[row, col] = 0.0


@njit(cache=True, nogil=True)
def brute_force_batch(tri_v0, tri_e1, tri_e2, prim_face, origins, dirs, t_eps,
                      out_t, out_prim, out_u, out_v):
    """All-triangles nearest-hit oracle with the same comparator as the BVH.

    Writes primitive indices like raycast_batch.
    """
    for i in range(len(dirs)):
        best_t = np.inf
        best_prim = -1
        best_u = 0.0
        best_v = 0.0
        for p in range(len(tri_v0)):
            t, u, v = _tri_hit(tri_v0, tri_e1, tri_e2, p,
                               origins[i, 0], origins[i, 1], origins[i, 2],
                               dirs[i, 0], dirs[i, 1], dirs[i, 2])
            if t > t_eps:
                if t < best_t or (t == best_t and best_prim >= 0
                                  and prim_face[p] < prim_face[best_prim]):
                    best_t, best_prim, best_u, best_v = t, p, u, v
        out_prim[i] = best_prim
        if best_prim >= 0:
            out_t[i] = best_t
            out_u[i] = best_u
            out_v[i] = best_v
        else:
            out_t[i] = np.inf


def _accel_args(accel: AccelStructure):
    return (accel.node_min, accel.node_max, accel.node_left, accel.node_count,
            accel.tri_v0, accel.tri_e1, accel.tri_e2, accel.prim_face)


def intersect(accel: AccelStructure, model_transform: np.ndarray,
              origin, direction, t_eps: float = T_EPSILON) -> Hit | None:
    """Nearest hit of a world-space ray against the transformed mesh.

    The model transform places the mesh in the world; the ray is mapped
    into model space with its inverse (t is preserved for rigid motions)
    and the hit position/normal are mapped back to world space.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    T_inv = invert_transform(np.asarray(model_transform, dtype=np.float64))
    o_model = origin @ T_inv[:3, :3].T + T_inv[:3, 3]
    d_model = direction @ T_inv[:3, :3].T

    out_t = np.empty(1)
    out_prim = np.empty(1, dtype=np.int32)
    out_u = np.empty(1)
    out_v = np.empty(1)
    raycast_batch(*_accel_args(accel), o_model, d_model, t_eps,
                  out_t, out_prim, out_u, out_v, False)
    if out_prim[0] < 0:
        return None
    face = int(accel.prim_face[out_prim[0]])
    u, v = float(out_u[0]), float(out_v[0])
    mesh = accel.mesh
    tri = mesh.faces[face]
    pos_model = (1.0 - u - v) * mesh.vertices[tri[0]] \
        + u * mesh.vertices[tri[1]] + v * mesh.vertices[tri[2]]
    T = np.asarray(model_transform, dtype=np.float64)
    return Hit(
        t=float(out_t[0]),
        face_index=face,
        barycentric=np.array([1.0 - u - v, u, v]),
        position=T[:3, :3] @ pos_model + T[:3, 3],
        normal=T[:3, :3] @ mesh.face_normals[face],
    )
