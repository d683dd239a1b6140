"""Tetrahedral mesh container, TetGen-style .node/.ele I/O, the facet-adjacency
dual graph, part references with cached hulls/boxes, and Wavefront OBJ export.

TetMesh and DualGraph are immutable after construction; PartRef caches are
computed once at construction, so instances are safe to share across threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import OrientedBox, approximate_mbb, hull_points, tet_signed_volumes, tet_volumes

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """Malformed .node/.ele content."""


class DegenerateTet(ValueError):
    """A tetrahedron with (numerically) zero volume, reported with its index."""


# Facets of a positively oriented tet (a,b,c,d), wound outward.
_OUTWARD_FACETS = ((0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3))


@dataclass(frozen=True)
class TetMesh:
    """Solid tetrahedral mesh. Tets are stored positively oriented."""

    vertices: np.ndarray  # (N, 3) float64
    tets: np.ndarray      # (M, 4) int32, signed volume > 0

    @staticmethod
    def create(vertices, tets) -> "TetMesh":
        """Validate and normalize: indices in range, no degenerate or duplicate
        tets, orientation flipped positive where needed."""
        verts = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        t = np.asarray(tets, dtype=np.int32).copy()
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ParseError("vertices must be (N, 3)")
        if t.ndim != 2 or t.shape[1] != 4:
            raise ParseError("tets must be (M, 4)")
        if len(t) and (t.min() < 0 or t.max() >= len(verts)):
            raise ParseError("tet vertex index out of range")

        scale = 1.0
        if len(verts):
            ext = verts.max(axis=0) - verts.min(axis=0)
            scale = max(float(np.linalg.norm(ext)), 1e-30)
        signed = tet_signed_volumes(verts, t) if len(t) else np.zeros(0)
        bad = np.where(np.abs(signed) <= 1e-14 * scale ** 3)[0]
        if len(bad):
            raise DegenerateTet(f"tetrahedron {int(bad[0])} has zero volume")
        flip = signed < 0
        t[np.ix_(flip, [2, 3])] = t[np.ix_(flip, [3, 2])]

        key = np.sort(t, axis=1)
        if len(np.unique(key, axis=0)) != len(t):
            raise ParseError("duplicate tetrahedron (same 4 vertices)")
        return TetMesh(verts, t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def tet_volumes(self) -> np.ndarray:
        return tet_volumes(self.vertices, self.tets)

    def volume(self) -> float:
        return float(self.tet_volumes().sum())

    def extract(self, tet_ids) -> "TetMesh":
        """Sub-mesh of the given tets with reindexed, compacted vertices."""
        tet_ids = np.asarray(tet_ids, dtype=np.int64)
        sub = self.tets[tet_ids]
        used, inverse = np.unique(sub, return_inverse=True)
        return TetMesh(self.vertices[used].copy(),
                       inverse.reshape(sub.shape).astype(np.int32))


def _data_lines(path) -> list[list[str]]:
    lines = []
    for raw in Path(path).read_text().splitlines():
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append(body.split())
    return lines


def load_tetmesh(node_path, ele_path) -> TetMesh:
    """Load a TetGen ASCII .node/.ele pair.

    .node: header "N 3 0 0" then N lines "idx x y z"; .ele: header "M 4 0"
    then M lines "idx v1 v2 v3 v4". '#' comments ignored; 0- or 1-based
    numbering auto-detected from the first index.
    """
    node_lines = _data_lines(node_path)
    ele_lines = _data_lines(ele_path)
    if not node_lines:
        raise ParseError(f"{node_path}: empty .node file")
    if not ele_lines:
        raise ParseError(f"{ele_path}: empty .ele file")

    try:
        n_nodes = int(node_lines[0][0])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{node_path}: bad header") from exc
    rows = node_lines[1:]
    if len(rows) < n_nodes:
        raise ParseError(f"{node_path}: expected {n_nodes} nodes, found {len(rows)}")
    rows = rows[:n_nodes]
    try:
        idx = np.array([int(r[0]) for r in rows])
        coords = np.array([[float(r[1]), float(r[2]), float(r[3])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{node_path}: malformed node line") from exc
    node_base = int(idx[0])
    if node_base not in (0, 1):
        raise ParseError(f"{node_path}: first node index must be 0 or 1, got {node_base}")
    order = np.argsort(idx)
    if not np.array_equal(idx[order], np.arange(node_base, node_base + n_nodes)):
        raise ParseError(f"{node_path}: node indices are not contiguous")
    vertices = coords[order]

    try:
        n_tets = int(ele_lines[0][0])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{ele_path}: bad header") from exc
    if n_tets < 1:
        raise ParseError(f"{ele_path}: no tetrahedra")
    rows = ele_lines[1:]
    if len(rows) < n_tets:
        raise ParseError(f"{ele_path}: expected {n_tets} tets, found {len(rows)}")
    rows = rows[:n_tets]
    try:
        tets = np.array([[int(r[1]), int(r[2]), int(r[3]), int(r[4])] for r in rows],
                        dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{ele_path}: malformed element line") from exc
    tets -= node_base

    mesh = TetMesh.create(vertices, tets)
    if n_components(mesh) > 1:
        logger.warning("%s: mesh has %d disconnected components", ele_path,
                       n_components(mesh))
    return mesh


def mesh_volume(mesh_or_part) -> float:
    """Sum of tetrahedron volumes of a TetMesh or PartRef."""
    if isinstance(mesh_or_part, PartRef):
        return mesh_or_part.volume
    return mesh_or_part.volume()


# ---------------------------------------------------------------------------
# Dual graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualGraph:
    """One node per tet; an arc per pair of tets sharing a triangular facet."""

    n_nodes: int
    arcs: np.ndarray  # (A, 2) int, each row sorted

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for a, b in self.arcs:
            adj[int(a)].append(int(b))
            adj[int(b)].append(int(a))
        return adj


def build_dual_graph(mesh: TetMesh) -> DualGraph:
    facets: dict[tuple, int] = {}
    arcs = []
    for ti, tet in enumerate(mesh.tets):
        for f in _OUTWARD_FACETS:
            key = tuple(sorted((int(tet[f[0]]), int(tet[f[1]]), int(tet[f[2]]))))
            other = facets.pop(key, None)
            if other is None:
                facets[key] = ti
            else:
                arcs.append((other, ti))
    arcs_arr = np.array(sorted(arcs), dtype=np.int64).reshape(-1, 2)
    return DualGraph(n_nodes=mesh.n_tets, arcs=arcs_arr)


def n_components(mesh: TetMesh) -> int:
    graph = build_dual_graph(mesh)
    adj = graph.neighbors()
    seen = np.zeros(mesh.n_tets, dtype=bool)
    count = 0
    for start in range(mesh.n_tets):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            for nb in adj[stack.pop()]:
                if not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
    return count


# ---------------------------------------------------------------------------
# Parts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartRef:
    """A cluster of tets of a mesh, with cached volume, hull points and MBB."""

    mesh: TetMesh = field(repr=False)
    tet_ids: np.ndarray
    volume: float
    hull_pts: np.ndarray = field(repr=False)
    mbb: OrientedBox

    @staticmethod
    def from_tets(mesh: TetMesh, tet_ids, epsilon: float = 0.01) -> "PartRef":
        ids = np.unique(np.asarray(tet_ids, dtype=np.int64))
        if len(ids) == 0:
            raise ValueError("empty part")
        vol = float(tet_volumes(mesh.vertices, mesh.tets[ids]).sum())
        pts = hull_points(mesh.vertices[np.unique(mesh.tets[ids])])
        return PartRef(mesh=mesh, tet_ids=ids, volume=vol, hull_pts=pts,
                       mbb=approximate_mbb(pts, epsilon))

    def boundary(self) -> np.ndarray:
        return part_boundary_surface(self.mesh, self.tet_ids)


def part_boundary_surface(mesh: TetMesh, tet_ids) -> np.ndarray:
    """Triangles on the boundary of the part, wound outward.

    A facet is on the boundary iff it appears in exactly one tet of the part;
    for a solid part the result is watertight.
    """
    ids = np.asarray(tet_ids, dtype=np.int64)
    facets: dict[tuple, tuple | None] = {}
    for ti in ids:
        tet = mesh.tets[int(ti)]
        for f in _OUTWARD_FACETS:
            tri = (int(tet[f[0]]), int(tet[f[1]]), int(tet[f[2]]))
            key = tuple(sorted(tri))
            if key in facets:
                facets[key] = None  # interior facet, shared by two tets
            else:
                facets[key] = tri
    tris = [tri for tri in facets.values() if tri is not None]
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


# ---------------------------------------------------------------------------
# OBJ export
# ---------------------------------------------------------------------------

def write_obj(path, objects, edges_objects=()) -> None:
    """Write named triangle soups (and optional wireframe objects) as ASCII OBJ.

    objects: iterable of (name, vertices (V,3), triangles (T,3) 0-based).
    edges_objects: iterable of (name, vertices, edge index pairs).
    """
    lines = []
    offset = 1  # OBJ is 1-based
    for name, verts, tris in objects:
        lines.append(f"o {name}")
        for v in np.asarray(verts, dtype=float):
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for t in np.asarray(tris, dtype=int):
            lines.append(f"f {t[0] + offset} {t[1] + offset} {t[2] + offset}")
        offset += len(verts)
    for name, verts, edges in edges_objects:
        lines.append(f"o {name}")
        for v in np.asarray(verts, dtype=float):
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for e in np.asarray(edges, dtype=int):
            lines.append(f"l {e[0] + offset} {e[1] + offset}")
        offset += len(verts)
    Path(path).write_text("\n".join(lines) + "\n")
