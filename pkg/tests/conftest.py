import numpy as np
import pytest

from partpack.synthetic import box_mesh, write_tetgen


@pytest.fixture
def cube_mesh():
    """Unit cube as 5 tets (hand-authored fixture; volume is exactly 1)."""
    return box_mesh((1.0, 1.0, 1.0))


@pytest.fixture
def cube_files(tmp_path, cube_mesh):
    node = tmp_path / "cube.node"
    ele = tmp_path / "cube.ele"
    write_tetgen(cube_mesh, node, ele)
    return node, ele


def random_point_cloud(rng, n, spread=1.0):
    return rng.normal(size=(n, 3)) * np.array([spread, spread * 0.6, spread * 0.3])


# ---------------------------------------------------------------------------
# Rotation-grid oracle for minimum AABB volume (independent of the search in
# partpack.geometry). ZYX Euler grid: yaw in [0, 90) because a 90-degree world
# rotation about z permutes world axes without changing AABB volume; pitch in
# [-90, 90] and roll in [0, 360) complete SO(3) coverage.
# ---------------------------------------------------------------------------

def _euler_zyx_matrices(z_deg, y_deg, x_deg):
    z = np.radians(z_deg)[:, None, None]
    y = np.radians(y_deg)[None, :, None]
    x = np.radians(x_deg)[None, None, :]
    cz, sz = np.cos(z), np.sin(z)
    cy, sy = np.cos(y), np.sin(y)
    cx, sx = np.cos(x), np.sin(x)
    shape = np.broadcast_shapes(cz.shape, cy.shape, cx.shape)
    r = np.empty(shape + (3, 3))
    r[..., 0, 0] = cz * cy
    r[..., 0, 1] = cz * sy * sx - sz * cx
    r[..., 0, 2] = cz * sy * cx + sz * sx
    r[..., 1, 0] = sz * cy
    r[..., 1, 1] = sz * sy * sx + cz * cx
    r[..., 1, 2] = sz * sy * cx - cz * sx
    r[..., 2, 0] = -sy
    r[..., 2, 1] = cy * sx
    r[..., 2, 2] = cy * cx
    return r.reshape(-1, 3, 3)


def min_aabb_volume_grid(points, step_deg=2.0):
    """Exhaustive rotation-grid search: minimum AABB volume over ZYX Euler
    angles sampled every step_deg degrees."""
    pts = np.asarray(points, dtype=float)
    z = np.arange(0.0, 90.0, step_deg)
    y = np.arange(-90.0, 90.0 + 1e-9, step_deg)
    x = np.arange(0.0, 360.0, step_deg)
    best = np.inf
    for zi in np.array_split(z, max(1, len(z) // 5)):
        mats = _euler_zyx_matrices(zi, y, x)
        local = np.einsum("rij,nj->rni", mats, pts)
        ext = local.max(axis=1) - local.min(axis=1)
        best = min(best, float(np.prod(ext, axis=1).min()))
    return best
