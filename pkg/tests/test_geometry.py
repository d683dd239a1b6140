import math

import numpy as np
import pytest

from partpack.geometry import (
    ConvexHull,
    DegenerateInput,
    RigidTransform,
    approximate_mbb,
    axis_align,
    convex_hull,
    hull_volume,
    quat_from_matrix,
    quat_rotate,
    quat_to_matrix,
    sample_rotations,
    tet_volume,
)
from conftest import min_aabb_volume_grid, random_point_cloud

CUBE_CORNERS = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                        dtype=float)


def rot_z(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestConvexHull:
    def test_cube_is_its_own_hull(self):
        hull = convex_hull(CUBE_CORNERS)
        assert len(hull.vertices) == 8
        assert abs(hull_volume(hull) - 1.0) < 1e-12

    def test_tetrahedron(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
        hull = convex_hull(pts)
        assert len(hull.vertices) == 4
        assert abs(hull_volume(hull) - 1.0 / 6.0) < 1e-12

    def test_random_ball_points_contained(self):
        # Oracle: brute-force point-vs-face-plane containment tests.
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(100, 3))
        pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1e-12)
        pts *= rng.uniform(0, 1, size=(100, 1)) ** (1 / 3)
        hull = convex_hull(pts)
        assert hull_volume(hull) <= 4.0 * math.pi / 3.0 + 1e-9
        a = hull.vertices[hull.faces[:, 0]]
        n = np.cross(hull.vertices[hull.faces[:, 1]] - a,
                     hull.vertices[hull.faces[:, 2]] - a)
        # every input point behind every outward face plane
        d = np.einsum("fj,pfj->pf", n, pts[:, None, :] - a[None, :, :])
        assert (d <= 1e-7).all()

    def test_coplanar_raises(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        with pytest.raises(DegenerateInput):
            convex_hull(pts)

    def test_too_few_points(self):
        with pytest.raises(DegenerateInput):
            convex_hull(np.zeros((3, 3)))

    def test_faces_oriented_outward(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(40, 3))
        hull = convex_hull(pts)
        centroid = hull.vertices.mean(axis=0)
        a = hull.vertices[hull.faces[:, 0]]
        n = np.cross(hull.vertices[hull.faces[:, 1]] - a,
                     hull.vertices[hull.faces[:, 2]] - a)
        assert (np.einsum("ij,ij->i", n, a - centroid) > 0).all()


class TestApproximateMbb:
    def test_axis_aligned_cube(self):
        box = approximate_mbb(CUBE_CORNERS, 0.01)
        assert 1.0 - 1e-9 <= box.volume <= 1.01
        assert box.contains(CUBE_CORNERS)

    def test_rotated_cube(self):
        pts = CUBE_CORNERS @ rot_z(45).T
        box = approximate_mbb(pts, 0.01)
        oracle = min_aabb_volume_grid(pts)
        assert box.volume <= oracle * 1.01 + 1e-12
        assert box.contains(pts)

    def test_single_point(self):
        box = approximate_mbb(np.array([[2.0, 3.0, 4.0]]), 0.01)
        assert box.volume == 0.0
        assert np.allclose(box.center, [2, 3, 4])

    def test_degenerate_plate_has_flat_axis(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(size=(30, 3))
        pts[:, 2] = 0.25  # flat in z
        box = approximate_mbb(pts, 0.01)
        assert box.half_extents.min() < 1e-12
        assert box.contains(pts)

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            approximate_mbb(CUBE_CORNERS, 0.0)

    def test_quality_against_rotation_grid_oracle(self):
        rng = np.random.default_rng(17)
        for trial in range(5):
            pts = random_point_cloud(rng, 60)
            pts = pts @ rot_z(rng.uniform(0, 90)).T
            box = approximate_mbb(pts, 0.05)
            oracle = min_aabb_volume_grid(pts)
            assert box.volume <= 1.05 * oracle + 1e-12, f"trial {trial}"
            assert box.contains(pts)

    def test_dominates_pca_box(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            pts = random_point_cloud(rng, 80)
            box = approximate_mbb(pts, 0.05)
            centered = pts - pts.mean(axis=0)
            _, vecs = np.linalg.eigh(centered.T @ centered)
            local = centered @ vecs
            pca_vol = float(np.prod(local.max(axis=0) - local.min(axis=0)))
            assert box.volume <= pca_vol + 1e-9


class TestAxisAlign:
    def test_axis_aligned_cube_stays_axis_aligned(self):
        pts = CUBE_CORNERS - 0.5
        tf = axis_align(pts)
        out = tf.apply(pts)
        ext = out.max(axis=0) - out.min(axis=0)
        assert np.allclose(sorted(ext), [1, 1, 1], atol=1e-9)
        assert np.allclose((out.max(axis=0) + out.min(axis=0)) / 2, 0, atol=1e-9)

    def test_rotated_cube_realigned(self):
        pts = (CUBE_CORNERS - 0.5) @ rot_z(30).T
        tf = axis_align(pts)
        out = tf.apply(pts)
        vol = float(np.prod(out.max(axis=0) - out.min(axis=0)))
        assert vol <= 1.01  # within (1+epsilon) of the unit cube

    def test_flat_plate(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(size=(25, 3))
        pts[:, 1] = 0.0
        tf = axis_align(pts)
        out = tf.apply(pts)
        ext = out.max(axis=0) - out.min(axis=0)
        assert ext.min() < 1e-9


class TestRigidTransform:
    def test_roundtrip_identity(self):
        rng = np.random.default_rng(9)
        q = sample_rotations(1, 4)[0]
        tf = RigidTransform(q, rng.normal(size=3))
        pts = rng.normal(size=(100, 3))
        back = tf.inverse().apply(tf.apply(pts))
        assert np.abs(back - pts).max() < 1e-7

    def test_compose(self):
        rng = np.random.default_rng(10)
        a = RigidTransform(sample_rotations(1, 1)[0], rng.normal(size=3))
        b = RigidTransform(sample_rotations(1, 2)[0], rng.normal(size=3))
        pts = rng.normal(size=(20, 3))
        assert np.allclose(a.compose(b).apply(pts), a.apply(b.apply(pts)), atol=1e-9)

    def test_quat_matrix_roundtrip(self):
        for q in sample_rotations(25, 77):
            q2 = quat_from_matrix(quat_to_matrix(q))
            if q[0] < 0:
                q = -q
            assert np.allclose(q, q2, atol=1e-9)


class TestSampleRotations:
    def test_determinism(self):
        a = sample_rotations(10, 123)
        b = sample_rotations(10, 123)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample_rotations(10, 124))

    def test_unit_norm(self):
        q = sample_rotations(1000, 5)
        assert np.abs(np.linalg.norm(q, axis=1) - 1.0).max() < 1e-9

    def test_rotation_preserves_lengths(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(50, 3))
        for q in sample_rotations(5, 8):
            out = quat_rotate(q, pts)
            assert np.allclose(np.linalg.norm(out, axis=1),
                               np.linalg.norm(pts, axis=1), atol=1e-9)


class TestTetVolume:
    def test_unit_tet(self):
        v = tet_volume((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))
        assert abs(v - 1.0 / 6.0) < 1e-15

    def test_coplanar_zero(self):
        assert tet_volume((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)) == 0.0

    def test_against_monte_carlo(self):
        # Oracle: 1e6-sample point-in-tet Monte Carlo estimate.
        rng = np.random.default_rng(42)
        verts = rng.uniform(size=(4, 3))
        exact = tet_volume(*verts)
        a = verts[0]
        m = np.linalg.inv(np.column_stack([verts[1] - a, verts[2] - a, verts[3] - a]))
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        samples = rng.uniform(lo, hi, size=(1_000_000, 3))
        lam = (samples - a) @ m.T
        inside = (lam >= 0).all(axis=1) & (lam.sum(axis=1) <= 1.0)
        mc = inside.mean() * np.prod(hi - lo)
        assert abs(mc - exact) / exact < 0.01

    def test_cube_decomposition_additivity(self, cube_mesh):
        total = sum(tet_volume(*cube_mesh.vertices[t]) for t in cube_mesh.tets)
        assert abs(total - 1.0) < 1e-9
