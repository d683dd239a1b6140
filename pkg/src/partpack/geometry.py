"""Geometric kernel: quaternions, rigid transforms, convex hulls, approximate
minimum-volume bounding boxes, uniform rotation sampling and tetrahedron volumes.

All operations are pure functions of their inputs and safe to call from any
number of threads. Points are (N, 3) float64 arrays; quaternions are length-4
arrays in [w, x, y, z] order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull as _QhullConvexHull
from scipy.spatial import QhullError


class DegenerateInput(ValueError):
    """Raised when a point set is too degenerate for the requested operation."""


# ---------------------------------------------------------------------------
# Quaternions
# ---------------------------------------------------------------------------

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise DegenerateInput("zero quaternion")
    return q / n


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a*b (apply b first, then a when rotating vectors)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(R) -> np.ndarray:
    """Unit quaternion for a proper rotation matrix, canonicalized to w >= 0."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_rotate(q, points) -> np.ndarray:
    """Rotate points (N, 3) or (3,) by quaternion q."""
    pts = np.asarray(points, dtype=float)
    return pts @ quat_to_matrix(q).T


# ---------------------------------------------------------------------------
# Rigid transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    """Rotation followed by translation: p -> R(p) + t."""

    rotation: np.ndarray    # quaternion [w, x, y, z]
    translation: np.ndarray  # (3,)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(quat_identity(), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        return quat_rotate(self.rotation, points) + self.translation

    def inverse(self) -> "RigidTransform":
        qinv = quat_conjugate(quat_normalize(self.rotation))
        return RigidTransform(qinv, -quat_rotate(qinv, self.translation))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self . other: apply `other` first, then `self`."""
        return RigidTransform(
            quat_normalize(quat_multiply(self.rotation, other.rotation)),
            quat_rotate(self.rotation, other.translation) + self.translation,
        )


# ---------------------------------------------------------------------------
# Convex hulls
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexHull:
    """Convex polyhedron: vertex coordinates plus outward-oriented triangles."""

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray     # (F, 3) indices into vertices


def convex_hull(points) -> ConvexHull:
    """Convex hull of >= 4 non-coplanar points.

    Raises DegenerateInput for coplanar/collinear/coincident input; callers that
    only need a bounding box fall back to a flat OrientedBox.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateInput("expected an (N, 3) point array")
    if len(pts) < 4:
        raise DegenerateInput(f"need >= 4 points, got {len(pts)}")
    try:
        h = _QhullConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInput(f"degenerate point set: {exc}") from exc

    used = h.vertices  # indices of hull vertices, qhull order
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = pts[used]
    faces = remap[h.simplices]

    # Orient every triangle outward (away from the hull centroid).
    centroid = verts.mean(axis=0)
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    normals = np.cross(b - a, c - a)
    flip = np.einsum("ij,ij->i", normals, a - centroid) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return ConvexHull(vertices=verts, faces=faces)


def hull_points(points) -> np.ndarray:
    """Hull vertex coordinates; falls back to unique points for degenerate sets.

    Used to keep cached cluster point sets small: the MBB of a set equals the
    MBB of its hull.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) >= 4:
        try:
            return convex_hull(pts).vertices
        except DegenerateInput:
            pass
    return np.unique(pts, axis=0)


def hull_volume(hull: ConvexHull) -> float:
    origin = hull.vertices[0]
    a = hull.vertices[hull.faces[:, 0]] - origin
    b = hull.vertices[hull.faces[:, 1]] - origin
    c = hull.vertices[hull.faces[:, 2]] - origin
    return float(abs(np.einsum("ij,ij->i", a, np.cross(b, c)).sum()) / 6.0)


# ---------------------------------------------------------------------------
# Oriented boxes and the approximate minimum-volume bounding box
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrientedBox:
    """Box given by center, orthonormal axes (rows) and half extents."""

    center: np.ndarray       # (3,)
    axes: np.ndarray         # (3, 3), rows are unit axes, det = +1
    half_extents: np.ndarray  # (3,) non-negative

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1)
                          for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return self.center + (signs * self.half_extents) @ self.axes

    def contains(self, points, tol: float = 1e-7) -> bool:
        local = (np.atleast_2d(points) - self.center) @ self.axes.T
        return bool(np.all(np.abs(local) <= self.half_extents + tol))


def _aabb_volume_in_frame(pts: np.ndarray, frame: np.ndarray) -> float:
    local = pts @ frame.T
    ext = local.max(axis=0) - local.min(axis=0)
    return float(ext[0] * ext[1] * ext[2])


def _pca_frame(pts: np.ndarray) -> np.ndarray:
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    frame = vecs.T[::-1]  # rows, descending eigenvalue
    if np.linalg.det(frame) < 0:
        frame = frame.copy()
        frame[2] = -frame[2]
    return frame


def _proper_axis_permutations() -> list[np.ndarray]:
    """The 24 rotation matrices permuting/flipping coordinate axes."""
    mats = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        for sx in (1, -1):
            for sy in (1, -1):
                for sz in (1, -1):
                    m = np.zeros((3, 3))
                    for row, (col, s) in enumerate(zip(perm, (sx, sy, sz))):
                        m[row, col] = s
                    if np.linalg.det(m) > 0:
                        mats.append(m)
    return mats


_AXIS_PERMS = _proper_axis_permutations()


def _min_area_rect_angle(xy: np.ndarray) -> float:
    """Rotating-calipers angle (radians) of the minimum-area rectangle of 2D points."""
    if len(xy) < 3:
        return 0.0
    try:
        h = _QhullConvexHull(xy)
        poly = xy[h.vertices]
    except QhullError:
        # Collinear: align with the dominant direction.
        d = xy - xy.mean(axis=0)
        if np.allclose(d, 0):
            return 0.0
        _, _, vt = np.linalg.svd(d, full_matrices=False)
        return float(math.atan2(vt[0, 1], vt[0, 0]))
    edges = np.diff(np.vstack([poly, poly[:1]]), axis=0)
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), math.pi / 2))
    best_area, best_angle = math.inf, 0.0
    for ang in angles:
        ca, sa = math.cos(ang), math.sin(ang)
        rot = np.array([[ca, sa], [-sa, ca]])
        local = poly @ rot.T
        ext = local.max(axis=0) - local.min(axis=0)
        area = ext[0] * ext[1]
        if area < best_area - 1e-15:
            best_area, best_angle = area, float(ang)
    return best_angle


def _frame_from_direction(w: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Frame with third axis w and in-plane axes from the min-area rectangle."""
    w = w / np.linalg.norm(w)
    ref = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(w, ref)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    xy = np.column_stack([pts @ u, pts @ v])
    ang = _min_area_rect_angle(xy)
    ca, sa = math.cos(ang), math.sin(ang)
    u2 = ca * u + sa * v
    v2 = np.cross(w, u2)
    frame = np.vstack([u2, v2, w])
    if np.linalg.det(frame) < 0:
        frame = frame.copy()
        frame[1] = -frame[1]
    return frame


def _euler_delta(dx: float, dy: float, dz: float) -> np.ndarray:
    cx, sx = math.cos(dx), math.sin(dx)
    cy, sy = math.cos(dy), math.sin(dy)
    cz, sz = math.cos(dz), math.sin(dz)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _rotation_angle_from_identity(frame: np.ndarray) -> float:
    c = (np.trace(frame) - 1.0) / 2.0
    return float(math.acos(min(1.0, max(-1.0, c))))


def _canonicalize_frame(frame: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Among the 24 axis permutations of `frame`, pick the one nearest identity.

    Ties broken lexicographically on the rounded matrix entries so equal-volume
    candidates resolve identically across runs.
    """
    best = None
    best_key = None
    for perm in _AXIS_PERMS:
        cand = perm @ frame
        key = (round(_rotation_angle_from_identity(cand), 12),
               tuple(np.round(cand.ravel(), 12)))
        if best_key is None or key < best_key:
            best_key, best = key, cand
    return best


def _degenerate_box(pts: np.ndarray) -> OrientedBox:
    """Zero-extent box on degenerate axes (point / segment / flat plate)."""
    centered = pts - pts.mean(axis=0)
    if len(pts) == 1 or np.allclose(centered, 0):
        return OrientedBox(pts.mean(axis=0), np.eye(3), np.zeros(3))
    _, s, vt = np.linalg.svd(centered, full_matrices=True)
    frame = vt
    if np.linalg.det(frame) < 0:
        frame = frame.copy()
        frame[2] = -frame[2]
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    if rank == 2:
        # Planar: exact in-plane rectangle via rotating calipers.
        frame = _frame_from_direction(frame[2], pts)
    frame = _canonicalize_frame(frame, pts)
    local = pts @ frame.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    center = frame.T @ ((lo + hi) / 2.0)
    return OrientedBox(center, frame, (hi - lo) / 2.0)


def approximate_mbb(points, epsilon: float = 0.01) -> OrientedBox:
    """Approximate minimum-volume bounding box of a point set.

    Searches the PCA frame (with its 24 axis permutations), every
    hull-face-aligned frame with calipers-optimal in-plane axes, then refines
    around the best candidate with a shrinking Euler-angle neighborhood walk.
    The refinement floor scales with epsilon; degenerate inputs yield boxes
    with zero extent on the degenerate axes.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if len(pts) == 0:
        raise DegenerateInput("empty point set")

    try:
        hull = convex_hull(pts)
        hv = hull.vertices
    except DegenerateInput:
        return _degenerate_box(pts)

    candidates: list[np.ndarray] = [np.eye(3), _pca_frame(pts), _pca_frame(hv)]

    # Hull-face-aligned frames, deduplicated by rounded normal direction.
    a = hv[hull.faces[:, 0]]
    n = np.cross(hv[hull.faces[:, 1]] - a, hv[hull.faces[:, 2]] - a)
    lens = np.linalg.norm(n, axis=1)
    n = n[lens > 1e-12] / lens[lens > 1e-12, None]
    n[n[:, 0] < 0] *= -1  # +-n give the same frame
    seen = set()
    for normal in n[np.lexsort(n.T[::-1])]:
        key = tuple(np.round(normal, 6))
        if key in seen:
            continue
        seen.add(key)
        candidates.append(_frame_from_direction(normal, hv))

    best_frame = min(
        candidates,
        key=lambda f: (round(_aabb_volume_in_frame(hv, f), 15),
                       round(_rotation_angle_from_identity(f), 12)),
    )
    best_vol = _aabb_volume_in_frame(hv, best_frame)

    # Local refinement: shrink the angular step until below the epsilon floor.
    step = math.radians(6.0)
    min_step = max(math.radians(0.05), epsilon * math.radians(10.0))
    deltas = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
              for dz in (-1, 0, 1) if (dx, dy, dz) != (0, 0, 0)]
    while step >= min_step:
        improved = True
        while improved:
            improved = False
            for dx, dy, dz in deltas:
                cand = _euler_delta(dx * step, dy * step, dz * step) @ best_frame
                vol = _aabb_volume_in_frame(hv, cand)
                if vol < best_vol * (1 - 1e-12) and vol < best_vol - 1e-15:
                    best_vol, best_frame = vol, cand
                    improved = True
        step /= 2.0

    frame = _canonicalize_frame(best_frame, hv)
    local = pts @ frame.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    center = frame.T @ ((lo + hi) / 2.0)
    return OrientedBox(center, frame, (hi - lo) / 2.0)


def axis_align(part_points, epsilon: float = 0.01) -> RigidTransform:
    """Transform mapping a part so its approximate MBB is axis-aligned and
    centered at the origin."""
    pts = np.asarray(part_points, dtype=float)
    box = approximate_mbb(pts, epsilon)
    q = quat_from_matrix(box.axes)
    return RigidTransform(q, -quat_rotate(q, box.center))


# ---------------------------------------------------------------------------
# Rotation sampling (uniform on the unit-quaternion sphere)
# ---------------------------------------------------------------------------

def sample_rotations(count: int, seed: int) -> np.ndarray:
    """`count` unit quaternions sampled uniformly on S3, deterministic per seed.

    Marsaglia rejection: draw (x1, y1) until s1 = x1^2+y1^2 < 1, then (x2, y2)
    until s2 < 1, and assemble [x1, y1, x2*sqrt((1-s1)/s2), y2*sqrt((1-s1)/s2)].
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.empty((count, 4))
    for i in range(count):
        while True:
            x1, y1 = rng.uniform(-1.0, 1.0, 2)
            s1 = x1 * x1 + y1 * y1
            if s1 < 1.0:
                break
        while True:
            x2, y2 = rng.uniform(-1.0, 1.0, 2)
            s2 = x2 * x2 + y2 * y2
            if s2 < 1.0:
                break
        r = math.sqrt((1.0 - s1) / s2)
        out[i] = (x1, y1, x2 * r, y2 * r)
    return out


# ---------------------------------------------------------------------------
# Volumes
# ---------------------------------------------------------------------------

def tet_volume(a, b, c, d) -> float:
    """|det(b-a, c-a, d-a)| / 6; zero for degenerate tetrahedra."""
    a = np.asarray(a, dtype=float)
    m = np.stack([np.asarray(b, float) - a,
                  np.asarray(c, float) - a,
                  np.asarray(d, float) - a])
    return float(abs(np.linalg.det(m)) / 6.0)


def tet_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Vectorized unsigned volumes for an (M, 4) index array."""
    v = vertices
    a = v[tets[:, 0]]
    m = np.stack([v[tets[:, 1]] - a, v[tets[:, 2]] - a, v[tets[:, 3]] - a], axis=1)
    return np.abs(np.linalg.det(m)) / 6.0


def tet_signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    v = vertices
    a = v[tets[:, 0]]
    m = np.stack([v[tets[:, 1]] - a, v[tets[:, 2]] - a, v[tets[:, 3]] - a], axis=1)
    return np.linalg.det(m) / 6.0
