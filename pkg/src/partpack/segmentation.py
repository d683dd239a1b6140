"""Bottom-up hierarchical clustering of tetrahedra into box-like parts.

The contraction cost of a dual edge is the absolute aboxiness of the merged
cluster: MBB volume minus exact volume. Contracting cheapest edges first
yields a binary tree whose leaves are single tets and whose root is the whole
mesh. The tree is immutable once built.
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import OrientedBox, approximate_mbb, hull_points
from .tetmesh import DualGraph, PartRef, TetMesh, build_dual_graph

logger = logging.getLogger(__name__)


class DegenerateBox(ValueError):
    """Boxiness is undefined for a part whose MBB has zero volume."""


class LeafSplit(ValueError):
    """Attempted to split a leaf node."""


def boxiness(part: PartRef) -> float:
    """Vol(part) / Vol(MBB(part)); 1 exactly when the part is a box."""
    mv = part.mbb.volume
    if mv <= 0.0:
        raise DegenerateBox("part MBB has zero volume")
    return part.volume / mv


def aboxiness(part: PartRef) -> float:
    """Vol(MBB(part)) - Vol(part); 0 exactly when the part is a box."""
    return part.mbb.volume - part.volume


@dataclass
class TreeNode:
    id: int
    left: int | None
    right: int | None
    parent: int | None
    tet_count: int
    min_tet: int            # smallest tet index in the cluster (tie-breaking)
    volume: float
    hull_pts: np.ndarray = field(repr=False)
    mbb: OrientedBox = field(repr=False)
    aboxiness: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class SegmentationTree:
    mesh: TetMesh
    nodes: list[TreeNode]
    root: int

    @property
    def n_leaves(self) -> int:
        return self.mesh.n_tets

    def tets_of(self, node_id: int) -> np.ndarray:
        """All leaf tet indices under a node (leaves are node ids 0..n_tets-1)."""
        out = []
        stack = [node_id]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_leaf:
                out.append(node.id)
            else:
                stack.extend((node.left, node.right))
        return np.array(sorted(out), dtype=np.int64)

    def part(self, node_id: int, epsilon: float = 0.01) -> PartRef:
        return PartRef.from_tets(self.mesh, self.tets_of(node_id), epsilon)

    def depth(self) -> int:
        depths = {self.root: 1}
        stack = [self.root]
        best = 1
        while stack:
            nid = stack.pop()
            node = self.nodes[nid]
            if not node.is_leaf:
                for ch in (node.left, node.right):
                    depths[ch] = depths[nid] + 1
                    best = max(best, depths[ch])
                    stack.append(ch)
        return best

    def to_json_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            nodes.append({
                "id": n.id,
                "parent": n.parent,
                "children": None if n.is_leaf else [n.left, n.right],
                "tet_count": n.tet_count,
                "volume": n.volume,
                "mbb": {
                    "center": [float(x) for x in n.mbb.center],
                    "axes": [[float(x) for x in row] for row in n.mbb.axes],
                    "half_extents": [float(x) for x in n.mbb.half_extents],
                },
                "aboxiness": n.aboxiness,
            })
        return {"root": self.root, "n_leaves": self.n_leaves, "nodes": nodes}

    def dump_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True))


def _merge_data(a: TreeNode, b: TreeNode, epsilon: float):
    pts = hull_points(np.vstack([a.hull_pts, b.hull_pts]))
    vol = a.volume + b.volume
    mbb = approximate_mbb(pts, epsilon)
    return pts, vol, mbb


def _edge_cost(a: TreeNode, b: TreeNode, epsilon: float, mode: str):
    pts, vol, mbb = _merge_data(a, b, epsilon)
    if mode == "relative":
        cost = 1.0 - (vol / mbb.volume if mbb.volume > 0 else 0.0)
    else:
        cost = mbb.volume - vol
    return cost, pts, vol, mbb


def build_hierarchy(mesh: TetMesh, epsilon: float = 0.05,
                    cost_mode: str = "absolute") -> SegmentationTree:
    """Contract dual edges cheapest-first into a binary cluster tree.

    cost_mode "absolute" is the production cost (MBB volume minus volume);
    "relative" (1 - boxiness) is kept only for ablation and tends to produce
    extremely unbalanced trees.

    Stale heap entries are invalidated lazily (merged clusters get fresh node
    ids, so dead endpoints mark an entry stale); ties are broken on the sorted
    (min tet of A, min tet of B) pair so identical meshes always produce
    identical trees. Disconnected meshes are finished by joining remaining
    components with minimum-cost virtual edges.
    """
    if cost_mode not in ("absolute", "relative"):
        raise ValueError(f"unknown cost_mode {cost_mode!r}")
    if mesh.n_tets < 1:
        raise ValueError("mesh has no tets")

    tet_vols = mesh.tet_volumes()
    nodes: list[TreeNode] = []
    for ti in range(mesh.n_tets):
        pts = mesh.vertices[mesh.tets[ti]].astype(float)
        mbb = approximate_mbb(pts, epsilon)
        nodes.append(TreeNode(
            id=ti, left=None, right=None, parent=None, tet_count=1,
            min_tet=ti, volume=float(tet_vols[ti]), hull_pts=pts, mbb=mbb,
            aboxiness=mbb.volume - float(tet_vols[ti]),
        ))

    graph: DualGraph = build_dual_graph(mesh)
    alive: dict[int, set[int]] = {i: set() for i in range(mesh.n_tets)}
    for a, b in graph.arcs:
        alive[int(a)].add(int(b))
        alive[int(b)].add(int(a))

    heap: list[tuple] = []

    def push_edge(ia: int, ib: int):
        a, b = nodes[ia], nodes[ib]
        cost, pts, vol, mbb = _edge_cost(a, b, epsilon, cost_mode)
        lo, hi = sorted((a.min_tet, b.min_tet))
        heapq.heappush(heap, (cost, lo, hi, ia, ib, pts, vol, mbb))

    for a, b in graph.arcs:
        push_edge(int(a), int(b))

    def contract(ia: int, ib: int, pts, vol, mbb) -> int:
        nid = len(nodes)
        a, b = nodes[ia], nodes[ib]
        node = TreeNode(
            id=nid, left=ia, right=ib, parent=None,
            tet_count=a.tet_count + b.tet_count,
            min_tet=min(a.min_tet, b.min_tet),
            volume=vol, hull_pts=pts, mbb=mbb,
            aboxiness=mbb.volume - vol,
        )
        nodes.append(node)
        a.parent = nid
        b.parent = nid
        nbrs = (alive.pop(ia) | alive.pop(ib)) - {ia, ib}
        for nb in nbrs:
            alive[nb].discard(ia)
            alive[nb].discard(ib)
            alive[nb].add(nid)
        alive[nid] = nbrs
        for nb in sorted(nbrs):
            push_edge(nid, nb)
        return nid

    while heap:
        cost, _, _, ia, ib, pts, vol, mbb = heapq.heappop(heap)
        # Lazy invalidation: merged clusters get fresh node ids, so an entry is
        # stale exactly when an endpoint is no longer alive.
        if ia not in alive or ib not in alive:
            continue
        contract(ia, ib, pts, vol, mbb)

    # Disconnected meshes: join remaining components by cheapest virtual edges.
    while len(alive) > 1:
        roots = sorted(alive)
        best = None
        for i, ia in enumerate(roots):
            for ib in roots[i + 1:]:
                cost, pts, vol, mbb = _edge_cost(nodes[ia], nodes[ib], epsilon, cost_mode)
                lo, hi = sorted((nodes[ia].min_tet, nodes[ib].min_tet))
                key = (cost, lo, hi)
                if best is None or key < best[0]:
                    best = (key, ia, ib, pts, vol, mbb)
        _, ia, ib, pts, vol, mbb = best
        contract(ia, ib, pts, vol, mbb)

    root = next(iter(alive))
    return SegmentationTree(mesh=mesh, nodes=nodes, root=root)


def cut_tree(tree: SegmentationTree, active_set, node_to_split: int) -> list[int]:
    """Replace one active node by its two children; the union of active parts
    is unchanged."""
    active = list(active_set)
    if node_to_split not in active:
        raise ValueError(f"node {node_to_split} is not in the active set")
    node = tree.nodes[node_to_split]
    if node.is_leaf:
        raise LeafSplit(f"node {node_to_split} is a leaf")
    out = []
    for nid in active:
        if nid == node_to_split:
            out.extend((node.left, node.right))
        else:
            out.append(nid)
    return out
