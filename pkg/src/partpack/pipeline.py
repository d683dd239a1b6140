"""Outer split-and-pack loop: pack the whole object, and while the container
volume exceeds Vol(S)/E_target, split the active part with the worst
aboxiness, refine the new adjacency area onto its best-fit plane, and repack.

Also houses the reassembly analysis: the Gauss-map height-field test for
split surfaces and bottom-up assembly ordering from the tree.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull as _QhullConvexHull
from scipy.spatial import QhullError

from .packer import PackerConfig, PackingResult, pack
from .segmentation import SegmentationTree
from .tetmesh import TetMesh, part_boundary_surface

logger = logging.getLogger(__name__)


class NoSplittableNode(RuntimeError):
    """Every active node is a leaf; the hierarchy is exhausted."""


class TargetUnreachable(RuntimeError):
    """Target efficiency not reached within N_max parts; carries the best
    outcome found so far in .outcome."""

    def __init__(self, message: str, outcome: "SplitPackOutcome"):
        super().__init__(message)
        self.outcome = outcome


@dataclass(frozen=True)
class SplitPackConfig:
    n_max: int
    e_target: float
    packer: PackerConfig = field(default_factory=PackerConfig)
    interactive: bool = False

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not (0.0 < self.e_target <= 1.0):
            raise ValueError("e_target must be in (0, 1]")


@dataclass(frozen=True)
class HistoryEntry:
    n_parts: int
    efficiency: float
    box: tuple[float, float, float]
    elapsed_ms: float

    def to_json_dict(self) -> dict:
        return {"n_parts": self.n_parts, "efficiency": self.efficiency,
                "box": list(self.box), "elapsed_ms": self.elapsed_ms}


@dataclass
class SplitPackOutcome:
    result: PackingResult
    history: list[HistoryEntry]
    target_met: bool
    active_nodes: list[int]
    part_tets: dict[int, np.ndarray]
    assembly: list[tuple[int, int, int]]
    n_max_used: int


# ---------------------------------------------------------------------------
# Split surfaces and the Gauss-map height-field test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSurface:
    """Shared boundary triangles between two sibling parts, oriented outward
    from side A, with their best-fit plane (normal points toward side A)."""

    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    plane_normal: np.ndarray
    plane_offset: float

    def facet_normals(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        n = np.cross(b - a, c - a)
        lens = np.linalg.norm(n, axis=1)
        good = lens > 1e-15
        return n[good] / lens[good, None]


def split_surface(mesh: TetMesh, tets_a, tets_b) -> SplitSurface | None:
    """Shared facets between two tet sets; None if the sets are not adjacent."""
    tris_a = part_boundary_surface(mesh, tets_a)
    keys_b = {tuple(sorted(t)) for t in part_boundary_surface(mesh, tets_b)}
    shared = [t for t in tris_a if tuple(sorted(t)) in keys_b]
    if not shared:
        return None
    tris = np.array(shared, dtype=np.int64)
    verts = mesh.vertices[np.unique(tris)]
    centroid = verts.mean(axis=0)
    _, _, vt = np.linalg.svd(verts - centroid, full_matrices=False)
    normal = vt[-1]
    # Orient the plane normal toward side A (positive side).
    ca = mesh.vertices[mesh.tets[np.asarray(tets_a, dtype=np.int64)]].mean(axis=(0, 1))
    cb = mesh.vertices[mesh.tets[np.asarray(tets_b, dtype=np.int64)]].mean(axis=(0, 1))
    if np.dot(normal, ca - cb) < 0:
        normal = -normal
    return SplitSurface(
        vertices=mesh.vertices, triangles=tris,
        plane_normal=normal, plane_offset=float(np.dot(normal, centroid)))


def heightfield_check(surface: SplitSurface) -> bool:
    """True iff the convex hull of the unit facet normals does not contain the
    origin, i.e. some direction has a non-negative dot product with every
    facet normal and the two parts separate without collision."""
    normals = surface.facet_normals()
    if len(normals) == 0:
        return True
    rank = np.linalg.matrix_rank(normals, tol=1e-9)
    if rank <= 2:
        # Normals lie in a subspace: its orthogonal direction clears them all.
        return True
    try:
        hull = _QhullConvexHull(normals)
    except QhullError:
        # Affinely degenerate but spanning (cone configuration): the carrier
        # plane misses the origin, so a separating direction exists.
        return True
    # Hull equations n.x + b <= 0 hold inside; origin strictly inside means
    # every offset b < 0.
    return bool(hull.equations[:, 3].max() >= -1e-9)


# ---------------------------------------------------------------------------
# Plane refinement of the adjacency area
# ---------------------------------------------------------------------------

@dataclass
class RefineResult:
    tets_a: np.ndarray
    tets_b: np.ndarray
    moved: int
    degenerate: bool  # reassignment would have emptied a child; skipped


def plane_refine(mesh: TetMesh, tree: SegmentationTree, node_id: int,
                 tets_a, tets_b) -> RefineResult:
    """Reassign tets near the split onto the sides of the best-fit plane.

    The plane is fit once to the tree children's original shared surface, so
    repeated calls are no-ops after the first. Tets touching the current
    interface move to the side holding their centroid; since a tet's plane
    side is fixed, each tet moves at most once and the loop terminates.
    """
    tets_a = np.asarray(tets_a, dtype=np.int64)
    tets_b = np.asarray(tets_b, dtype=np.int64)
    node = tree.nodes[node_id]
    surface = split_surface(mesh, tree.tets_of(node.left), tree.tets_of(node.right))
    if surface is None:
        return RefineResult(tets_a, tets_b, moved=0, degenerate=False)
    normal, offset = surface.plane_normal, surface.plane_offset

    side = {int(t): 0 for t in tets_a}
    side.update({int(t): 1 for t in tets_b})
    centroids = {t: mesh.vertices[mesh.tets[t]].mean(axis=0) for t in side}
    desired = {}
    for t, c in centroids.items():
        d = float(np.dot(normal, c)) - offset
        desired[t] = side[t] if abs(d) <= 1e-12 else (0 if d > 0 else 1)

    moved_total = 0
    while True:
        counts = [sum(1 for s in side.values() if s == 0),
                  sum(1 for s in side.values() if s == 1)]
        a_now = np.array(sorted(t for t, s in side.items() if s == 0), dtype=np.int64)
        b_now = np.array(sorted(t for t, s in side.items() if s == 1), dtype=np.int64)
        iface = split_surface(mesh, a_now, b_now)
        if iface is None:
            break
        surf_verts = set(np.unique(iface.triangles).tolist())
        moves = []
        for t in sorted(side):
            if desired[t] == side[t]:
                continue
            if surf_verts.intersection(int(v) for v in mesh.tets[t]):
                moves.append(t)
        if not moves:
            break
        gain = [0, 0]
        for t in moves:
            gain[side[t]] -= 1
        if counts[0] + gain[0] <= 0 or counts[1] + gain[1] <= 0:
            logger.warning("plane_refine: reassignment would empty a child of "
                           "node %d; refinement skipped", node_id)
            return RefineResult(tets_a, tets_b, moved=0, degenerate=True)
        for t in moves:
            side[t] = desired[t]
        moved_total += len(moves)

    new_a = np.array(sorted(t for t, s in side.items() if s == 0), dtype=np.int64)
    new_b = np.array(sorted(t for t, s in side.items() if s == 1), dtype=np.int64)
    return RefineResult(new_a, new_b, moved=moved_total, degenerate=False)


# ---------------------------------------------------------------------------
# Split selection, assembly order, and the driver loop
# ---------------------------------------------------------------------------

def select_split_node(active, tree: SegmentationTree,
                      excluded=frozenset()) -> int:
    """Active internal node with maximal aboxiness; ties by larger volume,
    then smaller node id."""
    internal = [nid for nid in active
                if not tree.nodes[nid].is_leaf and nid not in excluded]
    if not internal:
        raise NoSplittableNode("all active nodes are leaves")
    return min(internal,
               key=lambda nid: (-tree.nodes[nid].aboxiness,
                                -tree.nodes[nid].volume, nid))


def assembly_plan(tree: SegmentationTree, active) -> list[tuple[int, int, int]]:
    """Bottom-up merge steps (left, right, parent): deepest sibling pairs
    first, exactly N-1 steps for N active parts."""
    depth = {tree.root: 0}
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if not node.is_leaf:
            for ch in (node.left, node.right):
                depth[ch] = depth[nid] + 1
                stack.append(ch)

    available = set(int(n) for n in active)
    steps: list[tuple[int, int, int]] = []
    while len(available) > 1:
        candidates = []
        for nid in available:
            parent = tree.nodes[nid].parent
            if parent is None:
                continue
            p = tree.nodes[parent]
            if p.left in available and p.right in available:
                candidates.append(parent)
        if not candidates:
            raise ValueError("active set is not a valid tree cut")
        parent = min(set(candidates), key=lambda p: (-depth[p], p))
        p = tree.nodes[parent]
        steps.append((p.left, p.right, parent))
        available -= {p.left, p.right}
        available.add(parent)
    return steps


def _split_active_part(tree: SegmentationTree, node_id: int,
                       current: np.ndarray, mesh: TetMesh):
    """Split a (possibly refined) active part along its tree children,
    assigning refinement strays to the nearer child by centroid."""
    node = tree.nodes[node_id]
    left_set = set(tree.tets_of(node.left).tolist())
    right_set = set(tree.tets_of(node.right).tolist())
    cur = [int(t) for t in current]
    new_l = [t for t in cur if t in left_set]
    new_r = [t for t in cur if t in right_set]
    strays = [t for t in cur if t not in left_set and t not in right_set]
    if strays and new_l and new_r:
        cl = mesh.vertices[mesh.tets[np.array(new_l)]].mean(axis=(0, 1))
        cr = mesh.vertices[mesh.tets[np.array(new_r)]].mean(axis=(0, 1))
        for t in strays:
            c = mesh.vertices[mesh.tets[t]].mean(axis=0)
            if np.linalg.norm(c - cl) <= np.linalg.norm(c - cr):
                new_l.append(t)
            else:
                new_r.append(t)
    elif strays:
        (new_l if new_l or not new_r else new_r).extend(strays)
    if not new_l or not new_r:
        return None
    return (np.array(sorted(new_l), dtype=np.int64),
            np.array(sorted(new_r), dtype=np.int64))


def split_and_pack(mesh: TetMesh, tree: SegmentationTree,
                   config: SplitPackConfig, prompt=None) -> SplitPackOutcome:
    """Iterate splitting and repacking until Vol(box) <= Vol(S)/E_target.

    When N_max is reached with the target unmet, an interactive prompt (if
    provided) may raise N_max; otherwise TargetUnreachable carries the
    best-so-far outcome. The returned packing is the maximum-efficiency one
    over all iterations, not necessarily the last.
    """
    vol_total = mesh.volume()
    vol_max = vol_total / config.e_target
    n_max = config.n_max

    active: list[int] = [tree.root]
    part_tets: dict[int, np.ndarray] = {tree.root: tree.tets_of(tree.root)}
    unsplittable: set[int] = set()

    history: list[HistoryEntry] = []
    best: tuple[float, PackingResult, list[int], dict] | None = None

    def outcome(target_met: bool) -> SplitPackOutcome:
        _, result, nodes, tets = best
        return SplitPackOutcome(
            result=result, history=history, target_met=target_met,
            active_nodes=nodes, part_tets=tets,
            assembly=assembly_plan(tree, nodes), n_max_used=n_max)

    while True:
        t0 = time.perf_counter()
        part_meshes = [mesh.extract(part_tets[nid]) for nid in active]
        result = pack(part_meshes, config.packer, part_ids=list(active))
        elapsed = (time.perf_counter() - t0) * 1000.0
        history.append(HistoryEntry(
            n_parts=len(active), efficiency=result.efficiency,
            box=tuple(float(v) for v in result.box_extents), elapsed_ms=elapsed))
        logger.info("split-and-pack: %d part(s), efficiency %.3f",
                    len(active), result.efficiency)
        if best is None or result.efficiency > best[0] + 1e-15:
            best = (result.efficiency, result, list(active),
                    {nid: part_tets[nid].copy() for nid in active})

        if result.box_volume <= vol_max:
            return outcome(target_met=True)

        if len(active) >= n_max:
            if config.interactive and prompt is not None:
                new_max = prompt(n_max)
                if new_max is not None and int(new_max) > n_max:
                    n_max = int(new_max)
                else:
                    raise TargetUnreachable(
                        f"target efficiency {config.e_target} not reached "
                        f"with N_max={n_max}", outcome(target_met=False))
            else:
                raise TargetUnreachable(
                    f"target efficiency {config.e_target} not reached "
                    f"with N_max={n_max}", outcome(target_met=False))

        # Split the worst active part; nodes whose split degenerates are
        # excluded and the next candidate tried.
        while True:
            try:
                node_id = select_split_node(active, tree, excluded=unsplittable)
            except NoSplittableNode:
                raise TargetUnreachable(
                    "hierarchy exhausted before reaching the target",
                    outcome(target_met=False)) from None
            pieces = _split_active_part(tree, node_id, part_tets[node_id], mesh)
            if pieces is None:
                unsplittable.add(node_id)
                continue
            break

        node = tree.nodes[node_id]
        refined = plane_refine(mesh, tree, node_id, pieces[0], pieces[1])
        idx = active.index(node_id)
        active[idx:idx + 1] = [node.left, node.right]
        del part_tets[node_id]
        part_tets[node.left] = refined.tets_a
        part_tets[node.right] = refined.tets_b
