"""Run reports: JSON/JSONL/CSV writers, OBJ export of packed arrangements,
and matplotlib figures rendered to files alongside them."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib import cm  # noqa: E402
from mpl_toolkits.mplot3d.art3d import Line3DCollection, Poly3DCollection  # noqa: E402

from .geometry import RigidTransform, quat_from_matrix, quat_multiply, quat_rotate  # noqa: E402
from .packer import PackingResult, Placement  # noqa: E402
from .tetmesh import TetMesh, part_boundary_surface, write_obj  # noqa: E402

_BOX_EDGES = [(0, 1), (0, 2), (1, 3), (2, 3),
              (4, 5), (4, 6), (5, 7), (6, 7),
              (0, 4), (1, 5), (2, 6), (3, 7)]


def file_digest(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def composite_transform(placement: Placement, pre: RigidTransform) -> dict:
    """Full rigid transform from original input coordinates: axis alignment,
    then the sampled rotation, then the translation."""
    q = quat_multiply(placement.rotation, pre.rotation)
    t = quat_rotate(placement.rotation, pre.translation) + placement.translation
    if q[0] < 0:
        q = -q
    return {"quaternion": [float(v) for v in q],
            "translation": [float(v) for v in t]}


def placements_payload(result: PackingResult, pre_transforms: dict) -> dict:
    """placements.json schema: per-part composite quaternion + translation,
    box extents, efficiency, chosen variation."""
    parts = []
    for pl in result.placements:
        entry = {"part_id": int(pl.part_id)}
        entry.update(composite_transform(pl, pre_transforms[pl.part_id]))
        parts.append(entry)
    return {
        "parts": parts,
        "box_extents": [float(v) for v in result.box_extents],
        "box_min": [float(v) for v in result.box_min],
        "efficiency": float(result.efficiency),
        "variation": [float(result.variation[0]), float(result.variation[1])],
    }


def result_payload(result: PackingResult) -> dict:
    return {
        "efficiency": float(result.efficiency),
        "box_extents": [float(v) for v in result.box_extents],
        "box_volume": float(result.box_volume),
        "total_part_volume": float(result.total_part_volume),
        "n_parts": len(result.placements),
        "variation": [float(result.variation[0]), float(result.variation[1])],
        "variation_index": int(result.variation_index),
        "grid_dims": [int(d) for d in result.grid_dims],
        "voxel_size": float(result.voxel_size),
        "achieved_height_voxels": int(result.achieved_height_voxels),
        "placements": [
            {
                "part_id": int(pl.part_id),
                "rotation_index": int(pl.rotation_index),
                "quaternion": [float(v) for v in pl.rotation],
                "translation": [float(v) for v in pl.translation],
                "anchor": [int(v) for v in pl.anchor],
                "delta_h": int(pl.delta_h),
                "underfill": int(pl.underfill),
                "hole_id": None if pl.hole_id is None else int(pl.hole_id),
            }
            for pl in result.placements
        ],
        "variation_attempts": result.attempts,
    }


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_history_jsonl(path, history) -> None:
    lines = [json.dumps(h.to_json_dict(), sort_keys=True) for h in history]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def write_bench_csv(path, rows: list[dict]) -> None:
    fields = ["run", "seed", "order", "count", "efficiency",
              "box_x", "box_y", "box_z", "elapsed_s"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in fields})


# ---------------------------------------------------------------------------
# Geometry export
# ---------------------------------------------------------------------------

def placed_part_geometry(part_mesh: TetMesh, placement: Placement,
                         pre: RigidTransform):
    """Boundary triangles of a part in its final packed pose."""
    verts = quat_rotate(placement.rotation, pre.apply(part_mesh.vertices))
    verts = verts + placement.translation
    tris = part_boundary_surface(part_mesh, np.arange(part_mesh.n_tets))
    return verts, tris


def box_wireframe(box_min, box_max):
    lo = np.asarray(box_min, dtype=float)
    hi = np.asarray(box_max, dtype=float)
    corners = np.array([[lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]],
                        [lo[0], hi[1], lo[2]], [hi[0], hi[1], lo[2]],
                        [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]],
                        [lo[0], hi[1], hi[2]], [hi[0], hi[1], hi[2]]])
    return corners, np.array(_BOX_EDGES, dtype=int)


def write_packed_obj(path, placed_geometries, box_min, box_max) -> None:
    """packed.obj: every part in its final pose plus the container as a
    12-edge wireframe (no top lid, matching the printed-box convention)."""
    objects = [(f"part_{pid}", verts, tris)
               for pid, verts, tris in placed_geometries]
    corners, edges = box_wireframe(box_min, box_max)
    write_obj(path, objects, edges_objects=[("container", corners, edges)])


def write_part_objs(out_dir, part_meshes_by_id: dict) -> list[str]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for pid, mesh in sorted(part_meshes_by_id.items()):
        tris = part_boundary_surface(mesh, np.arange(mesh.n_tets))
        path = out_dir / f"part_{pid}.obj"
        write_obj(path, [(f"part_{pid}", mesh.vertices, tris)])
        written.append(str(path))
    return written


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def render_packing_figure(path, placed_geometries, box_min, box_max) -> None:
    """3D view of the packed arrangement with the container wireframe."""
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(111, projection="3d")
    colors = cm.tab20(np.linspace(0, 1, max(len(placed_geometries), 1)))
    for color, (pid, verts, tris) in zip(colors, placed_geometries):
        polys = verts[tris]
        coll = Poly3DCollection(polys, alpha=0.85, facecolor=color,
                                edgecolor="k", linewidths=0.15)
        ax.add_collection3d(coll)
    corners, edges = box_wireframe(box_min, box_max)
    ax.add_collection3d(Line3DCollection(corners[edges], colors="dimgray",
                                         linewidths=1.0))
    lo = np.asarray(box_min, dtype=float)
    hi = np.asarray(box_max, dtype=float)
    span = float((hi - lo).max())
    mid = (lo + hi) / 2.0
    for setter, axis in ((ax.set_xlim, 0), (ax.set_ylim, 1), (ax.set_zlim, 2)):
        setter(mid[axis] - span / 2, mid[axis] + span / 2)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    ax.set_title(f"{len(placed_geometries)} parts packed")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_history_figure(path, history) -> None:
    """Efficiency vs number of parts across split-and-pack iterations."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ns = [h.n_parts for h in history]
    effs = [h.efficiency for h in history]
    ax.plot(ns, effs, marker="o")
    ax.set_xlabel("parts")
    ax.set_ylabel("packing efficiency")
    ax.set_ylim(0, 1)
    ax.grid(True, alpha=0.3)
    ax.set_title("split-and-pack history")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_bench_figure(path, rows: list[dict]) -> None:
    """Per-run efficiencies of the random-box benchmark."""
    fig, ax = plt.subplots(figsize=(6, 4))
    effs = [r["efficiency"] for r in rows]
    ax.bar(range(len(effs)), effs, color="steelblue")
    if effs:
        mean = float(np.mean(effs))
        ax.axhline(mean, color="firebrick", linestyle="--",
                   label=f"mean {mean:.3f}")
        ax.legend()
    ax.set_xlabel("run")
    ax.set_ylabel("efficiency")
    ax.set_ylim(0, 1)
    ax.set_title("random-box benchmark")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
