"""Voxel-grid single-container packing.

Parts are axis-aligned by their MBBs, sorted largest first, and inserted one
by one. Each insertion tries hole placements first (a part fully submerged in
a region of free voxels that has occupied voxels above it), then positions
tangent to the height field, scored by cost = delta_h * box_volume + U where
U is the underlying free volume. An outer loop retries the whole insertion
over grown/shrunk container bases and keeps the best packing.

Candidate evaluation is pure given a frozen grid snapshot; committing a
placement is the only mutation. The base variations are independent runs.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numba import njit
from scipy import ndimage

from .geometry import (
    OrientedBox,
    RigidTransform,
    approximate_mbb,
    hull_points,
    quat_from_matrix,
    quat_identity,
    quat_rotate,
    sample_rotations,
)
from .tetmesh import TetMesh

logger = logging.getLogger(__name__)

FREE = -1
_COST_SENTINEL = np.int64(2) ** 62
_MAX_BUDGET = 1024  # keeps delta_h * box_volume inside int64 with room to spare


def substream_seed(seed: int, name: str) -> int:
    """Named deterministic sub-stream of one master seed (rotation sampling,
    box generation, random insertion order all draw from their own stream)."""
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


class NoPlacement(RuntimeError):
    """No arrangement could be found for some part in any tried pose."""


class OutOfBounds(ValueError):
    """Part geometry leaves the voxel grid (callers treat it as a collision)."""


class Overflow(OverflowError):
    """Placement cost would exceed the 64-bit integer range."""


@dataclass(frozen=True)
class PackerConfig:
    grid_budget: int = 256
    rotations: int = 10
    seed: int = 0
    base_factors: tuple[float, ...] = (0.0, 0.25, 0.5, -0.25)
    base_max_x: float | None = None
    base_max_y: float | None = None
    holes_enabled: bool = True
    insertion_order: str = "sorted"  # "sorted" | "random"
    mbb_epsilon: float = 0.01
    height_headroom: float = 2.0

    def __post_init__(self):
        if not (1 <= self.grid_budget <= _MAX_BUDGET):
            raise ValueError(f"grid_budget must be in [1, {_MAX_BUDGET}]")
        if self.rotations < 1:
            raise ValueError("rotations must be >= 1")
        if self.insertion_order not in ("sorted", "random"):
            raise ValueError("insertion_order must be 'sorted' or 'random'")


def _axis_orientation_quats() -> np.ndarray:
    """The 24 rotations mapping coordinate axes to coordinate axes.

    The first 10 are the mutually orthogonal orientations of a standard
    reference frame: identity plus the 90/180/270-degree turns about x, y
    and z. The remaining vertex/edge turns follow in angle-then-lexicographic
    order.
    """
    from .geometry import _proper_axis_permutations, quat_from_matrix as qfm

    quats = [quat_identity()]
    for axis in np.eye(3):
        for deg in (90.0, 180.0, 270.0):
            half = math.radians(deg) / 2.0
            q = np.array([math.cos(half), *(math.sin(half) * axis)])
            if q[0] < 0:
                q = -q
            quats.append(q)
    rest = []
    for m in _proper_axis_permutations():
        q = qfm(m)
        if any(abs(float(np.dot(q, p))) > 1.0 - 1e-9 for p in quats):
            continue
        angle = 2.0 * math.acos(min(1.0, abs(float(q[0]))))
        rest.append((round(angle, 9), tuple(np.round(q, 9)), q))
    rest.sort(key=lambda t: (t[0], t[1]))
    quats.extend(t[2] for t in rest)
    return np.array(quats)


_AXIS_ORIENTATIONS = _axis_orientation_quats()


def rotation_set(count: int, seed: int) -> np.ndarray:
    """Rotation candidates for the placement search.

    The first up-to-24 entries are the axis-to-axis orientations (identity
    first; the first 10 are the orthogonal orientations of a reference frame,
    which cover every axis-aligned pose of a box-shaped part). Beyond 24 the
    set is extended with uniform quaternion samples.
    """
    if count <= len(_AXIS_ORIENTATIONS):
        return _AXIS_ORIENTATIONS[:count].copy()
    extra = sample_rotations(count - len(_AXIS_ORIENTATIONS), seed)
    return np.vstack([_AXIS_ORIENTATIONS, extra])


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass
class VoxelGrid:
    """Container state: per-voxel occupancy plus the 2D upper-surface height.

    occupancy[x, y, z] is FREE (-1) or the index of the placed part.
    heightfield[x, y] is the top of the highest occupied voxel in the column
    (0 where the column is empty).
    """

    dims: tuple[int, int, int]
    voxel_size: float
    origin: np.ndarray
    occupancy: np.ndarray = field(repr=False)
    heightfield: np.ndarray = field(repr=False)
    version: int = 0
    _holes_cache: tuple | None = field(default=None, repr=False)

    @staticmethod
    def empty(dims, voxel_size: float, origin=(0.0, 0.0, 0.0)) -> "VoxelGrid":
        dims = tuple(int(d) for d in dims)
        if min(dims) < 1:
            raise ValueError("grid dims must be >= 1")
        return VoxelGrid(
            dims=dims,
            voxel_size=float(voxel_size),
            origin=np.asarray(origin, dtype=float),
            occupancy=np.full(dims, FREE, dtype=np.int32),
            heightfield=np.zeros(dims[:2], dtype=np.int64),
        )

    @property
    def box_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def free_mask(self) -> np.ndarray:
        return self.occupancy == FREE

    def current_height(self) -> int:
        return int(self.heightfield.max())

    def recompute_heightfield(self) -> np.ndarray:
        """Height field derived from scratch (used to validate the incremental one)."""
        occ = self.occupancy != FREE
        nz = self.dims[2]
        tops = np.where(occ.any(axis=2),
                        nz - np.argmax(occ[:, :, ::-1], axis=2), 0)
        return tops.astype(np.int64)

    def commit(self, placement: "Placement", mask_data: "RotatedMask",
               part_index: int) -> None:
        ax, ay, az = placement.anchor
        mx, my, mz = mask_data.mask.shape
        window = self.occupancy[ax:ax + mx, ay:ay + my, az:az + mz]
        if window.shape != mask_data.mask.shape:
            raise OutOfBounds("placement window exceeds the grid")
        if not (window[mask_data.mask] == FREE).all():
            raise ValueError("placement collides with occupied voxels")
        window[mask_data.mask] = part_index
        hw = self.heightfield[ax:ax + mx, ay:ay + my]
        cols = mask_data.top >= 0
        np.maximum(hw, np.where(cols, az + mask_data.top + 1, 0), out=hw)
        self.version += 1
        self._holes_cache = None

    def hole_regions(self) -> "HoleRegions":
        if self._holes_cache is None or self._holes_cache[0] != self.version:
            self._holes_cache = (self.version, classify_free_voxels(self))
        return self._holes_cache[1]


@dataclass(frozen=True)
class HoleRegions:
    """Maximal 6-connected regions of free voxels that have a ceiling."""

    labels: np.ndarray        # int32 grid, 0 = not a hole voxel
    volumes: np.ndarray       # voxel counts indexed by region id (entry 0 unused)
    bounds: tuple             # per region id: (lo, hi) inclusive int triples

    @property
    def n_regions(self) -> int:
        return len(self.volumes) - 1


def classify_free_voxels(grid: VoxelGrid) -> HoleRegions:
    """Label hole regions; a free voxel is a hole iff some occupied voxel sits
    above it in its own column, else it is a slot."""
    # Holes only exist strictly below the top occupied layer.
    top = max(grid.current_height() - 1, 0)
    labels = np.zeros(grid.dims, dtype=np.int32)
    empty = HoleRegions(labels=labels, volumes=np.zeros(1, dtype=np.int64),
                        bounds=(None,))
    if top == 0:
        return empty
    free = grid.occupancy[:, :, :top] == FREE
    zs = np.arange(top, dtype=np.int64)
    hole_mask = free & (zs[None, None, :] < (grid.heightfield - 1)[:, :, None])
    if not hole_mask.any():
        return empty
    structure = ndimage.generate_binary_structure(3, 1)
    sub_labels, n = ndimage.label(hole_mask, structure=structure)
    labels[:, :, :top] = sub_labels
    volumes = np.bincount(sub_labels.ravel(), minlength=n + 1).astype(np.int64)
    volumes[0] = 0
    objects = ndimage.find_objects(sub_labels)
    bounds = [None]
    for sl in objects:
        lo = tuple(int(s.start) for s in sl)
        hi = tuple(int(s.stop) - 1 for s in sl)
        bounds.append((lo, hi))
    return HoleRegions(labels=labels, volumes=volumes, bounds=tuple(bounds))


def slots_mask(grid: VoxelGrid) -> np.ndarray:
    """Free voxels whose whole column above is free up to the container top."""
    return grid.free_mask() & (grid.hole_regions().labels == 0)


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------

@njit(cache=True)
def _centers_in_tets_kernel(mask, voxel_size, vertices, tets):
    """Mark voxels of `mask` whose centers (i+0.5)*s lie in any tetrahedron.
    Barycentric test with a hand-rolled 3x3 inverse and per-test early exits."""
    s = voxel_size
    tol = 1e-9
    nx, ny, nz = mask.shape
    for t in range(tets.shape[0]):
        ax, ay, az = vertices[tets[t, 0], 0], vertices[tets[t, 0], 1], vertices[tets[t, 0], 2]
        m00 = vertices[tets[t, 1], 0] - ax
        m10 = vertices[tets[t, 1], 1] - ay
        m20 = vertices[tets[t, 1], 2] - az
        m01 = vertices[tets[t, 2], 0] - ax
        m11 = vertices[tets[t, 2], 1] - ay
        m21 = vertices[tets[t, 2], 2] - az
        m02 = vertices[tets[t, 3], 0] - ax
        m12 = vertices[tets[t, 3], 1] - ay
        m22 = vertices[tets[t, 3], 2] - az
        det = (m00 * (m11 * m22 - m12 * m21)
               - m01 * (m10 * m22 - m12 * m20)
               + m02 * (m10 * m21 - m11 * m20))
        if abs(det) < 1e-300:
            continue
        inv = 1.0 / det
        i00 = (m11 * m22 - m12 * m21) * inv
        i01 = (m02 * m21 - m01 * m22) * inv
        i02 = (m01 * m12 - m02 * m11) * inv
        i10 = (m12 * m20 - m10 * m22) * inv
        i11 = (m00 * m22 - m02 * m20) * inv
        i12 = (m02 * m10 - m00 * m12) * inv
        i20 = (m10 * m21 - m11 * m20) * inv
        i21 = (m01 * m20 - m00 * m21) * inv
        i22 = (m00 * m11 - m01 * m10) * inv

        lox = min(min(vertices[tets[t, 0], 0], vertices[tets[t, 1], 0]),
                  min(vertices[tets[t, 2], 0], vertices[tets[t, 3], 0]))
        hix = max(max(vertices[tets[t, 0], 0], vertices[tets[t, 1], 0]),
                  max(vertices[tets[t, 2], 0], vertices[tets[t, 3], 0]))
        loy = min(min(vertices[tets[t, 0], 1], vertices[tets[t, 1], 1]),
                  min(vertices[tets[t, 2], 1], vertices[tets[t, 3], 1]))
        hiy = max(max(vertices[tets[t, 0], 1], vertices[tets[t, 1], 1]),
                  max(vertices[tets[t, 2], 1], vertices[tets[t, 3], 1]))
        loz = min(min(vertices[tets[t, 0], 2], vertices[tets[t, 1], 2]),
                  min(vertices[tets[t, 2], 2], vertices[tets[t, 3], 2]))
        hiz = max(max(vertices[tets[t, 0], 2], vertices[tets[t, 1], 2]),
                  max(vertices[tets[t, 2], 2], vertices[tets[t, 3], 2]))
        i0 = max(int(np.floor(lox / s - 0.5)), 0)
        i1 = min(int(np.ceil(hix / s - 0.5)), nx - 1)
        j0 = max(int(np.floor(loy / s - 0.5)), 0)
        j1 = min(int(np.ceil(hiy / s - 0.5)), ny - 1)
        k0 = max(int(np.floor(loz / s - 0.5)), 0)
        k1 = min(int(np.ceil(hiz / s - 0.5)), nz - 1)
        for i in range(i0, i1 + 1):
            dx = (i + 0.5) * s - ax
            for j in range(j0, j1 + 1):
                dy = (j + 0.5) * s - ay
                for k in range(k0, k1 + 1):
                    if mask[i, j, k]:
                        continue
                    dz = (k + 0.5) * s - az
                    l0 = i00 * dx + i01 * dy + i02 * dz
                    if l0 < -tol:
                        continue
                    l1 = i10 * dx + i11 * dy + i12 * dz
                    if l1 < -tol:
                        continue
                    l2 = i20 * dx + i21 * dy + i22 * dz
                    if l2 < -tol or l0 + l1 + l2 > 1.0 + tol:
                        continue
                    mask[i, j, k] = True


def _centers_in_tets(grid_shape, voxel_size, offset, vertices, tets, mask):
    """Mark voxels of `mask` whose centers (i+0.5)*s + offset lie in any tet."""
    verts = np.ascontiguousarray(np.asarray(vertices, dtype=float) - offset)
    _centers_in_tets_kernel(mask, float(voxel_size), verts,
                            np.ascontiguousarray(tets, dtype=np.int64))


def rasterize(points, tets, grid: VoxelGrid, transform: RigidTransform):
    """Voxels of `grid` whose centers lie inside the transformed part.

    Returns an (K, 3) index array, or None as soon as a non-free voxel is
    touched (collision). Raises OutOfBounds if the transformed geometry leaves
    the grid.
    """
    pts = transform.apply(np.asarray(points, dtype=float))
    span = np.array(grid.dims) * grid.voxel_size
    if (pts.min(axis=0) < -1e-9).any() or (pts.max(axis=0) > span + 1e-9).any():
        raise OutOfBounds("part geometry leaves the grid")
    mask = np.zeros(grid.dims, dtype=bool)
    _centers_in_tets(grid.dims, grid.voxel_size, np.zeros(3), pts,
                     np.asarray(tets, dtype=np.int64), mask)
    if (grid.occupancy[mask] != FREE).any():
        return None
    return np.argwhere(mask)


@dataclass(frozen=True)
class RotatedMask:
    """Lattice-aligned voxelization of a rotated part.

    The part is anchored with its AABB minimum on a voxel corner, so shifting
    the anchor by whole voxels translates the same mask. bottom/top hold the
    lowest/highest occupied z index per column (-1 where the column is empty).
    """

    mask: np.ndarray = field(repr=False)
    bottom: np.ndarray = field(repr=False)  # (mx, my) int64
    top: np.ndarray = field(repr=False)     # (mx, my) int64
    t_max: int
    n_vox: int
    aabb_min: np.ndarray                    # of the rotated points
    flat_rect: bool                         # bottom == 0 on the full footprint

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.mask.shape


def rasterize_rotated(points, tets, voxel_size: float) -> RotatedMask:
    """Mask for a rotated part, re-inflated to one voxel if center sampling
    misses everything (degenerate flat parts)."""
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    ext = pts.max(axis=0) - lo
    dims = np.maximum(np.ceil(ext / voxel_size - 1e-9).astype(int), 1)
    mask = np.zeros(tuple(dims), dtype=bool)
    _centers_in_tets(tuple(dims), voxel_size, np.zeros(3), pts - lo,
                     np.asarray(tets, dtype=np.int64), mask)
    if not mask.any():
        mask[:, :, :] = True  # degenerate slivers must still occupy space

    mz = dims[2]
    any_col = mask.any(axis=2)
    bottom = np.where(any_col, np.argmax(mask, axis=2), -1).astype(np.int64)
    top = np.where(any_col, mz - 1 - np.argmax(mask[:, :, ::-1], axis=2), -1)
    top = top.astype(np.int64)
    flat_rect = bool(any_col.all() and (bottom == 0).all())
    return RotatedMask(
        mask=mask, bottom=bottom, top=top, t_max=int(top.max()),
        n_vox=int(mask.sum()), aabb_min=lo, flat_rect=flat_rect)


# ---------------------------------------------------------------------------
# Cost pieces
# ---------------------------------------------------------------------------

def underlying_free_volume(bottom: np.ndarray, anchor, heightfield: np.ndarray) -> int:
    """Sum over the part footprint of (lowest part voxel - upper surface),
    floored at 0 per column.

    bottom: per-column lowest occupied z of the part mask (-1 = empty column),
    anchor: (ax, ay, az) voxel anchor of the mask window.
    """
    ax, ay, az = (int(v) for v in anchor)
    mx, my = bottom.shape
    window = heightfield[ax:ax + mx, ay:ay + my]
    valid = bottom >= 0
    gaps = az + bottom - window
    return int(np.maximum(gaps, 0)[valid].sum())


def placement_cost(delta_h: int, underfill: int, grid: VoxelGrid) -> int:
    """Eq-style cost delta_h * (nx*ny*nz) + underfill in 64-bit integers."""
    if delta_h < 0 or underfill < 0:
        raise ValueError("delta_h and underfill must be non-negative")
    cost = int(delta_h) * grid.box_voxels + int(underfill)
    if cost >= 2 ** 63:
        raise Overflow("placement cost exceeds 64-bit range")
    return cost


def shrink_holes(regions: HoleRegions, window_dims) -> list[tuple]:
    """Per hole, the anchor ranges from which the part's mask window stays
    inside the hole's bounding box (the six-directional-extent shrink).

    Returns [(region_id, lo, hi_inclusive) ...] with empty ranges dropped;
    never excludes a feasible fully-contained anchor.
    """
    mx, my, mz = (int(d) for d in window_dims)
    out = []
    for rid in range(1, regions.n_regions + 1):
        lo, hi = regions.bounds[rid]
        alo = lo
        ahi = (hi[0] - mx + 1, hi[1] - my + 1, hi[2] - mz + 1)
        if ahi[0] >= alo[0] and ahi[1] >= alo[1] and ahi[2] >= alo[2]:
            out.append((rid, alo, ahi))
    return out


# ---------------------------------------------------------------------------
# Tangent-position search
# ---------------------------------------------------------------------------

@njit(cache=True)
def _search_tangent_kernel(H, bottom, t_max, nz, current_h, box_vol, prune_above):
    """Best (cost, dz, dy, dx) over all footprint positions resting on the
    height field. Ties are broken lexicographically on (dz, dy, dx)."""
    nx, ny = H.shape
    mx, my = bottom.shape
    best_cost = np.int64(2) ** 62
    best_dz = np.int64(-1)
    best_dy = np.int64(-1)
    best_dx = np.int64(-1)
    bound = prune_above if prune_above < best_cost else best_cost
    for dx in range(nx - mx + 1):
        for dy in range(ny - my + 1):
            dz = np.int64(0)
            aborted = False
            for x in range(mx):
                for y in range(my):
                    b = bottom[x, y]
                    if b < 0:
                        continue
                    g = H[dx + x, dy + y] - b
                    if g > dz:
                        dz = g
                dh_lb = dz + t_max + 1 - current_h
                if dh_lb < 0:
                    dh_lb = 0
                if dh_lb * box_vol > bound:
                    aborted = True
                    break
            if aborted:
                continue
            if dz + t_max >= nz:
                continue
            dh = dz + t_max + 1 - current_h
            if dh < 0:
                dh = 0
            base = dh * box_vol
            if base > bound:
                continue
            u = np.int64(0)
            for x in range(mx):
                for y in range(my):
                    b = bottom[x, y]
                    if b < 0:
                        continue
                    u += dz + b - H[dx + x, dy + y]
            cost = base + u
            if cost > bound:
                continue
            if (cost < best_cost
                    or (cost == best_cost
                        and (dz < best_dz
                             or (dz == best_dz
                                 and (dy < best_dy
                                      or (dy == best_dy and dx < best_dx)))))):
                best_cost, best_dz, best_dy, best_dx = cost, dz, dy, dx
                if best_cost < bound:
                    bound = best_cost
    return best_cost, best_dz, best_dy, best_dx


def _search_tangent_flat(H, mask_dims, t_max, nz, current_h, box_vol, prune_above):
    """Vectorized tangent search for parts with a flat full-rectangle bottom.

    dz reduces to a sliding-window maximum of the height field and U to
    footprint_area * dz minus a box sum, both computed separably.
    """
    nx, ny = H.shape
    mx, my, _ = mask_dims
    if mx > nx or my > ny:
        return int(_COST_SENTINEL), -1, -1, -1
    f = ndimage.maximum_filter(H, size=(mx, my), mode="constant", cval=0)
    dz = f[mx // 2:mx // 2 + nx - mx + 1, my // 2:my // 2 + ny - my + 1]
    dz = dz.astype(np.int64)

    integral = np.zeros((nx + 1, ny + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(H, axis=0), axis=1)
    win_sum = (integral[mx:, my:]
               - integral[:nx - mx + 1, my:]
               - integral[mx:, :ny - my + 1]
               + integral[:nx - mx + 1, :ny - my + 1])

    u = np.int64(mx * my) * dz - win_sum
    dh = np.maximum(dz + t_max + 1 - current_h, 0)
    cost = dh * np.int64(box_vol) + u
    cost[dz + t_max >= nz] = _COST_SENTINEL

    m = cost.min()
    if m >= min(_COST_SENTINEL, prune_above + 1):
        return int(_COST_SENTINEL), -1, -1, -1
    cand = np.argwhere(cost == m)
    dzs = dz[cand[:, 0], cand[:, 1]]
    order = np.lexsort((cand[:, 0], cand[:, 1], dzs))
    best = cand[order[0]]
    return int(m), int(dzs[order[0]]), int(best[1]), int(best[0])


# ---------------------------------------------------------------------------
# Parts and placements
# ---------------------------------------------------------------------------

@dataclass
class PackPart:
    """A part prepared for packing: axis-aligned, MBB-centered at the origin."""

    part_id: int
    vertices: np.ndarray = field(repr=False)  # aligned coordinates
    tets: np.ndarray = field(repr=False)
    hull_pts: np.ndarray = field(repr=False)  # aligned hull vertices
    volume: float
    pre_transform: RigidTransform             # original -> aligned coordinates
    mbb_extents: np.ndarray                   # aligned MBB edge lengths

    @property
    def max_extent(self) -> float:
        return float(self.mbb_extents.max())


def _extent_sorted_frame(axes: np.ndarray, half_extents: np.ndarray):
    """Permute MBB axes so extents come out descending (x >= y >= z): the
    identity rotation then gives the lying-flat, minimum-height pose."""
    order = sorted(range(3), key=lambda i: (-half_extents[i], i))
    perm = np.zeros((3, 3))
    for row, src in enumerate(order):
        perm[row, src] = 1.0
    if np.linalg.det(perm) < 0:
        perm[2] = -perm[2]
    return perm @ axes, half_extents[order]


def prepare_part(mesh: TetMesh, part_id: int, epsilon: float = 0.01) -> PackPart:
    hp = hull_points(mesh.vertices)
    box = approximate_mbb(hp, epsilon)
    frame, extents = _extent_sorted_frame(box.axes, box.half_extents)
    q = quat_from_matrix(frame)
    pre = RigidTransform(q, -quat_rotate(q, box.center))
    return PackPart(
        part_id=part_id,
        vertices=pre.apply(mesh.vertices),
        tets=mesh.tets.copy(),
        hull_pts=pre.apply(hp),
        volume=mesh.volume(),
        pre_transform=pre,
        mbb_extents=2.0 * extents,
    )


@dataclass(frozen=True)
class Placement:
    """Rigid placement of one part: sampled rotation (applied to the aligned
    part) plus a translation, with its cost components."""

    part_id: int
    rotation: np.ndarray       # quaternion from the sampled set
    rotation_index: int
    translation: np.ndarray    # model units, container frame
    anchor: tuple[int, int, int]
    delta_h: int
    underfill: int
    hole_id: int | None = None

    def world_points(self, aligned_points) -> np.ndarray:
        return quat_rotate(self.rotation, aligned_points) + self.translation


class _MaskCache(dict):
    def get_mask(self, part: PackPart, rot_idx: int, rotation, voxel_size: float):
        key = (part.part_id, rot_idx)
        if key not in self:
            pts = quat_rotate(rotation, part.vertices)
            self[key] = rasterize_rotated(pts, part.tets, voxel_size)
        return self[key]


def place_part(part: PackPart, grid: VoxelGrid, rotations: np.ndarray, *,
               holes_enabled: bool = True,
               mask_cache: _MaskCache | None = None) -> tuple[Placement, RotatedMask]:
    """Search hole placements, then height-field-tangent placements.

    Returns the winning placement and its mask; raises NoPlacement when no
    rotation admits a valid position.
    """
    cache = mask_cache if mask_cache is not None else _MaskCache()
    nx, ny, nz = grid.dims
    masks = []
    for ridx, q in enumerate(rotations):
        md = cache.get_mask(part, ridx, q, grid.voxel_size)
        mx, my, mz = md.dims
        usable = mx <= nx and my <= ny and mz <= nz
        masks.append((ridx, q, md, usable))

    H = grid.heightfield
    current_h = grid.current_height()

    if holes_enabled:
        regions = grid.hole_regions()
        best_key = None
        best = None
        for ridx, q, md, usable in masks:
            if not usable:
                continue
            for rid, alo, ahi in shrink_holes(regions, md.dims):
                waste = int(regions.volumes[rid]) - md.n_vox
                if waste < 0:
                    continue  # the hole cannot contain the part
                if best_key is not None and (waste, rid) > best_key[:2]:
                    continue
                found = _first_rasterizeable_anchor(
                    grid.occupancy, md.mask, alo, ahi)
                if found is None:
                    continue
                az, ay, ax = found[2], found[1], found[0]
                key = (waste, rid, az, ay, ax, ridx)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (ridx, q, md, (ax, ay, az))
        if best is not None:
            ridx, q, md, anchor = best
            u = underlying_free_volume(md.bottom, anchor, H)
            translation = np.array(anchor, dtype=float) * grid.voxel_size - md.aabb_min
            placement = Placement(
                part_id=part.part_id, rotation=np.array(q), rotation_index=ridx,
                translation=translation, anchor=anchor, delta_h=0, underfill=u,
                hole_id=best_key[1])
            return placement, md

    best_key = None
    best = None
    box_vol = np.int64(grid.box_voxels)
    for ridx, q, md, usable in masks:
        if not usable:
            continue
        prune = np.int64(best_key[0]) if best_key is not None else _COST_SENTINEL
        if md.flat_rect:
            cost, dz, dy, dx = _search_tangent_flat(
                H, md.dims, md.t_max, nz, current_h, int(box_vol), int(prune))
        else:
            cost, dz, dy, dx = _search_tangent_kernel(
                H, md.bottom, np.int64(md.t_max), np.int64(nz),
                np.int64(current_h), box_vol, prune)
        if dz < 0 or cost >= _COST_SENTINEL:
            continue
        key = (int(cost), int(dz), int(dy), int(dx), ridx)
        if best_key is None or key < best_key:
            best_key = key
            best = (ridx, q, md, (int(dx), int(dy), int(dz)))
    if best is None:
        raise NoPlacement(f"part {part.part_id}: no valid position at any rotation")

    ridx, q, md, anchor = best
    cost, dz = best_key[0], best_key[1]
    delta_h = max(0, dz + md.t_max + 1 - current_h)
    u = cost - delta_h * int(box_vol)
    translation = np.array(anchor, dtype=float) * grid.voxel_size - md.aabb_min
    placement = Placement(
        part_id=part.part_id, rotation=np.array(q), rotation_index=ridx,
        translation=translation, anchor=anchor, delta_h=delta_h, underfill=u,
        hole_id=None)
    return placement, md


def _first_rasterizeable_anchor(occupancy, mask, alo, ahi):
    """First anchor in (z, y, x) order within the shrunk hole where the part
    rasterization touches only free voxels (it may straddle out of the hole
    region itself)."""
    for az in range(alo[2], ahi[2] + 1):
        for ay in range(alo[1], ahi[1] + 1):
            for ax in range(alo[0], ahi[0] + 1):
                window = occupancy[ax:ax + mask.shape[0], ay:ay + mask.shape[1],
                                   az:az + mask.shape[2]]
                if (window[mask] == FREE).all():
                    return (ax, ay, az)
    return None


# ---------------------------------------------------------------------------
# Container sizing and the outer packing loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContainerSpec:
    """Axis-sorted container extents: ez is the vertical (longest) axis."""

    ex: float
    ey: float
    ez: float
    voxel_size: float
    assembly_box: OrientedBox


def container_spec(total_volume: float, original_hulls: list[np.ndarray],
                   config: PackerConfig) -> ContainerSpec:
    """Container from the whole assembly's approximate MBB, longest axis
    vertical. If the summed part volume exceeds the MBB volume (spatially
    overlapping standalone parts), the height is grown so everything can fit."""
    all_pts = np.vstack(original_hulls)
    box = approximate_mbb(all_pts, config.mbb_epsilon)
    ext = np.sort(2.0 * box.half_extents)[::-1]  # descending
    ez, ex, ey = float(ext[0]), float(ext[1]), float(ext[2])
    if ez <= 0:
        raise ValueError("assembly has zero extent")
    s = ez / config.grid_budget
    ex = max(ex, s)
    ey = max(ey, s)
    if total_volume > box.volume + 1e-12 * max(total_volume, 1.0):
        ez = max(ez, config.height_headroom * total_volume / (ex * ey))
    return ContainerSpec(ex=ex, ey=ey, ez=ez, voxel_size=s, assembly_box=box)


def init_container(part_meshes: list[TetMesh],
                   config: PackerConfig | None = None) -> VoxelGrid:
    """Empty grid sized to the whole assembly's approximate MBB, longest axis
    vertical (Z), with the longest dimension resolved at the voxel budget and
    every dimension clamped to at least one voxel."""
    config = config or PackerConfig()
    if not part_meshes:
        raise ValueError("need at least one part")
    hulls = [hull_points(m.vertices) for m in part_meshes]
    total = sum(m.volume() for m in part_meshes)
    spec = container_spec(total, hulls, config)
    return _build_grid(spec.ex, spec.ey, spec.ez, spec.voxel_size)


def _grid_for_variation(container: ContainerSpec, fx: float, fy: float,
                        config: PackerConfig) -> VoxelGrid | None:
    """Variation grid with the base scaled by (1+fx, 1+fy) and the height
    adjusted to keep the container volume constant; None when a configured
    base-size upper bound is violated."""
    bx = container.ex * (1.0 + fx)
    by = container.ey * (1.0 + fy)
    if bx <= 0 or by <= 0:
        return None
    if config.base_max_x is not None and bx > config.base_max_x + 1e-12:
        return None
    if config.base_max_y is not None and by > config.base_max_y + 1e-12:
        return None
    bz = container.ez * (container.ex * container.ey) / (bx * by)
    return _build_grid(bx, by, bz, container.voxel_size)


def _build_grid(bx: float, by: float, bz: float, s: float) -> VoxelGrid:
    dims = (max(1, math.ceil(bx / s - 1e-9)),
            max(1, math.ceil(by / s - 1e-9)),
            max(1, math.ceil(bz / s - 1e-9)))
    return VoxelGrid.empty(dims, s)


@dataclass
class PackingResult:
    placements: list[Placement]
    box_min: np.ndarray
    box_max: np.ndarray
    efficiency: float
    total_part_volume: float
    variation: tuple[float, float]
    variation_index: int
    grid_dims: tuple[int, int, int]
    voxel_size: float
    achieved_height_voxels: int
    attempts: list[dict]
    pre_transforms: dict[int, RigidTransform] = field(default_factory=dict)

    @property
    def box_extents(self) -> np.ndarray:
        return self.box_max - self.box_min

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.box_extents))


def _insertion_order(parts: list[PackPart], config: PackerConfig) -> list[int]:
    if config.insertion_order == "random":
        rng = np.random.Generator(
            np.random.PCG64(substream_seed(config.seed, "insertion")))
        return [int(i) for i in rng.permutation(len(parts))]
    return sorted(range(len(parts)), key=lambda i: (-parts[i].max_extent, i))


def pack(part_meshes: list[TetMesh], config: PackerConfig | None = None,
         part_ids: list[int] | None = None) -> PackingResult:
    """Pack parts into a minimum-height container over all base variations.

    Parts are sorted by descending maximum MBB edge (or shuffled for the
    random-order ablation), every base variation is packed from an empty grid,
    and the best final efficiency wins. Efficiency is exact part volume over
    the geometric bounding box of the placed parts.
    """
    config = config or PackerConfig()
    if not part_meshes:
        raise ValueError("need at least one part")
    ids = part_ids if part_ids is not None else list(range(len(part_meshes)))
    parts = [prepare_part(m, pid, config.mbb_epsilon)
             for m, pid in zip(part_meshes, ids)]
    original_hulls = [hull_points(m.vertices) for m in part_meshes]
    total_volume = sum(p.volume for p in parts)
    container = container_spec(total_volume, original_hulls, config)
    rotations = rotation_set(config.rotations, substream_seed(config.seed, "rotations"))
    order = _insertion_order(parts, config)
    mask_cache = _MaskCache()

    variations = list(product(config.base_factors, config.base_factors))
    best: PackingResult | None = None
    attempts: list[dict] = []

    for vi, (fx, fy) in enumerate(variations):
        grid = _grid_for_variation(container, fx, fy, config)
        if grid is None:
            attempts.append({"variation": [fx, fy], "status": "skipped"})
            continue
        placements: list[Placement] = []
        try:
            for slot, pi in enumerate(order):
                placement, md = place_part(
                    parts[pi], grid, rotations,
                    holes_enabled=config.holes_enabled, mask_cache=mask_cache)
                grid.commit(placement, md, slot)
                placements.append(placement)
        except NoPlacement:
            attempts.append({"variation": [fx, fy], "status": "no_placement",
                             "placed": len(placements)})
            continue

        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for placement, pi in zip(placements, order):
            pts = placement.world_points(parts[pi].hull_pts)
            lo = np.minimum(lo, pts.min(axis=0))
            hi = np.maximum(hi, pts.max(axis=0))
        box_vol = float(np.prod(hi - lo))
        eff = total_volume / box_vol if box_vol > 0 else 1.0
        attempts.append({"variation": [fx, fy], "status": "ok",
                         "efficiency": eff, "box": [float(v) for v in (hi - lo)]})
        if best is None or eff > best.efficiency + 1e-15:
            by_part = sorted(zip(order, placements), key=lambda t: t[0])
            best = PackingResult(
                placements=[p for _, p in by_part],
                box_min=lo, box_max=hi, efficiency=eff,
                total_part_volume=total_volume,
                variation=(fx, fy), variation_index=vi,
                grid_dims=grid.dims, voxel_size=grid.voxel_size,
                achieved_height_voxels=grid.current_height(),
                attempts=[],
                pre_transforms={p.part_id: p.pre_transform for p in parts})
    if best is None:
        raise NoPlacement("no base variation produced a valid arrangement")
    best.attempts = attempts
    return best
