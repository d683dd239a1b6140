"""Synthetic tetrahedral meshes: boxes, cell-grid solids (L-shapes, frames)
and TetGen-format writers for fixtures and benchmarks.

Cell-grid solids triangulate each unit cell into the six Kuhn tetrahedra,
which tile space consistently, so any union of grid cells is a valid
connected tet mesh wherever the cells are face-adjacent.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .tetmesh import TetMesh

# Five-tet decomposition of a cube with corners indexed by (x + 2y + 4z).
FIVE_TET_CUBE = ((0, 1, 2, 4), (1, 2, 3, 7), (1, 4, 5, 7), (2, 4, 6, 7), (1, 2, 4, 7))

# Kuhn decomposition: six tets around the (0,0,0)-(1,1,1) diagonal.
_KUHN_PATHS = (
    (0, 1, 3, 7), (0, 1, 5, 7), (0, 2, 3, 7),
    (0, 2, 6, 7), (0, 4, 5, 7), (0, 4, 6, 7),
)


def _cube_corners(origin, size) -> np.ndarray:
    ox, oy, oz = origin
    sx, sy, sz = size
    return np.array([[ox + sx * (i & 1), oy + sy * ((i >> 1) & 1), oz + sz * ((i >> 2) & 1)]
                     for i in range(8)], dtype=float)


def box_mesh(extents, origin=(0.0, 0.0, 0.0)) -> TetMesh:
    """Axis-aligned box [origin, origin+extents] as a 5-tet mesh."""
    verts = _cube_corners(origin, extents)
    return TetMesh.create(verts, np.array(FIVE_TET_CUBE, dtype=np.int32))


def cell_mesh(cells, cell_size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> TetMesh:
    """Solid made of unit grid cells, each split into 6 Kuhn tets.

    cells: iterable of integer (i, j, k) grid coordinates.
    """
    cells = sorted({tuple(int(c) for c in cell) for cell in cells})
    if not cells:
        raise ValueError("no cells")
    vert_ids: dict[tuple, int] = {}
    verts: list[tuple] = []

    def vid(key):
        if key not in vert_ids:
            vert_ids[key] = len(verts)
            verts.append(key)
        return vert_ids[key]

    tets = []
    for (i, j, k) in cells:
        corner_keys = [(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))
                       for c in range(8)]
        ids = [vid(key) for key in corner_keys]
        for path in _KUHN_PATHS:
            tets.append([ids[p] for p in path])

    origin = np.asarray(origin, dtype=float)
    coords = np.asarray(verts, dtype=float) * cell_size + origin
    return TetMesh.create(coords, np.array(tets, dtype=np.int32))


def l_shape_mesh(arm_a: int = 8, arm_b: int = 5, cell_size: float = 1.0) -> TetMesh:
    """Elongated L: a horizontal bar of `arm_a` cells along x plus a vertical
    bar of `arm_b` cells rising from its first cell."""
    cells = [(i, 0, 0) for i in range(arm_a)]
    cells += [(0, 0, k) for k in range(1, arm_b + 1)]
    return cell_mesh(cells, cell_size)


def hollow_frame_mesh(outer: int = 4, height: int = 1, cell_size: float = 1.0) -> TetMesh:
    """Square frame (walls one cell thick, open center) extruded `height` cells."""
    cells = []
    for i in range(outer):
        for j in range(outer):
            if 0 < i < outer - 1 and 0 < j < outer - 1:
                continue
            for k in range(height):
                cells.append((i, j, k))
    return cell_mesh(cells, cell_size)


def slab_mesh(nx: int, ny: int, nz: int, cell_size: float = 1.0) -> TetMesh:
    """Full nx x ny x nz block of Kuhn cells."""
    cells = [(i, j, k) for i in range(nx) for j in range(ny) for k in range(nz)]
    return cell_mesh(cells, cell_size)


def write_tetgen(mesh: TetMesh, node_path, ele_path) -> None:
    """Write a mesh as a 1-based TetGen ASCII .node/.ele pair."""
    node_lines = [f"{mesh.n_vertices} 3 0 0"]
    for i, v in enumerate(mesh.vertices, start=1):
        node_lines.append(f"{i} {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    Path(node_path).write_text("\n".join(node_lines) + "\n")

    ele_lines = [f"{mesh.n_tets} 4 0"]
    for i, t in enumerate(mesh.tets, start=1):
        ele_lines.append(f"{i} {t[0] + 1} {t[1] + 1} {t[2] + 1} {t[3] + 1}")
    Path(ele_path).write_text("\n".join(ele_lines) + "\n")
