"""Command-line interface.

Subcommands: segment, splitpack, pack, bench-boxes, export. Exit codes:
0 success (target met where applicable), 2 bad input or flags, 3 target
efficiency unreachable within N_max, 1 packing failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import report as rep
from .bench import RandomBoxSpec, run_box_benchmark_series
from .geometry import DegenerateInput
from .packer import NoPlacement, PackerConfig, pack
from .pipeline import SplitPackConfig, TargetUnreachable, split_and_pack
from .segmentation import build_hierarchy, cut_tree
from .tetmesh import DegenerateTet, ParseError, TetMesh, load_tetmesh, write_obj
from .tetmesh import part_boundary_surface

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_TARGET = 3


def _add_packer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rotations", type=int, default=10,
                   help="number of sampled rotations (default 10)")
    p.add_argument("--grid", type=int, default=256,
                   help="voxel budget along the longest axis (default 256)")
    p.add_argument("--base-factors", default="0,0.25,0.5,-0.25",
                   help="comma-separated base growing factors")
    p.add_argument("--base-max-x", type=float, default=None)
    p.add_argument("--base-max-y", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order", choices=("sorted", "random"), default="sorted",
                   help="part insertion order")
    p.add_argument("--no-holes", action="store_true",
                   help="disable placement into holes")


def _packer_config(args) -> PackerConfig:
    factors = tuple(float(v) for v in str(args.base_factors).split(",") if v != "")
    return PackerConfig(
        grid_budget=args.grid,
        rotations=args.rotations,
        seed=args.seed,
        base_factors=factors,
        base_max_x=args.base_max_x,
        base_max_y=args.base_max_y,
        holes_enabled=not args.no_holes,
        insertion_order=args.order,
    )


def _config_echo(args, packer: PackerConfig, extra: dict | None = None) -> dict:
    echo = {
        "rotations": packer.rotations,
        "grid": packer.grid_budget,
        "base_factors": list(packer.base_factors),
        "base_max_x": packer.base_max_x,
        "base_max_y": packer.base_max_y,
        "seed": packer.seed,
        "order": packer.insertion_order,
        "holes_enabled": packer.holes_enabled,
    }
    if extra:
        echo.update(extra)
    return echo


def _load_mesh_or_exit(node_path, ele_path) -> TetMesh:
    for p in (node_path, ele_path):
        if not Path(p).exists():
            print(f"error: no such file: {p}", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
    try:
        return load_tetmesh(node_path, ele_path)
    except (ParseError, DegenerateTet) as exc:
        print(f"error: {node_path}/{ele_path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from exc


def _write_pack_outputs(out_dir: Path, result, part_meshes_by_id: dict,
                        figures: bool = True) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rep.write_json(out_dir / "placements.json",
                   rep.placements_payload(result, result.pre_transforms))
    placed = []
    for pl in result.placements:
        mesh = part_meshes_by_id[pl.part_id]
        verts, tris = rep.placed_part_geometry(mesh, pl,
                                               result.pre_transforms[pl.part_id])
        placed.append((pl.part_id, verts, tris))
    rep.write_packed_obj(out_dir / "packed.obj", placed,
                         result.box_min, result.box_max)
    rep.write_part_objs(out_dir / "parts", part_meshes_by_id)
    if figures:
        rep.render_packing_figure(out_dir / "packing.png", placed,
                                  result.box_min, result.box_max)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_segment(args) -> int:
    mesh = _load_mesh_or_exit(args.node, args.ele)
    t0 = time.perf_counter()
    tree = build_hierarchy(mesh, epsilon=args.epsilon)
    elapsed = time.perf_counter() - t0
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(args.out) if args.out else out_dir / "tree.json"
    tree.dump_json(out_path)
    print(f"tets: {mesh.n_tets}  nodes: {len(tree.nodes)}  "
          f"depth: {tree.depth()}  hierarchy_time: {elapsed:.2f}s")
    print(f"tree written to {out_path}")

    if args.dump_level:
        from .pipeline import select_split_node
        active = [tree.root]
        while len(active) < args.dump_level:
            try:
                node = select_split_node(active, tree)
            except Exception:
                break
            active = cut_tree(tree, active, node)
        level_dir = out_dir / f"level_{len(active)}"
        level_dir.mkdir(parents=True, exist_ok=True)
        for nid in active:
            tets = tree.tets_of(nid)
            sub = mesh.extract(tets)
            tris = part_boundary_surface(sub, np.arange(sub.n_tets))
            write_obj(level_dir / f"part_{nid}.obj",
                      [(f"part_{nid}", sub.vertices, tris)])
        print(f"{len(active)}-part cut written to {level_dir}")
    return EXIT_OK


def cmd_splitpack(args) -> int:
    if not (0.0 < args.target <= 1.0):
        print("error: --target must be in (0, 1]", file=sys.stderr)
        return EXIT_USAGE
    if args.nmax < 1:
        print("error: --nmax must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    mesh = _load_mesh_or_exit(args.node, args.ele)
    packer_cfg = _packer_config(args)
    interactive = (not args.non_interactive) and sys.stdin.isatty()
    config = SplitPackConfig(n_max=args.nmax, e_target=args.target,
                             packer=packer_cfg, interactive=interactive)

    t0 = time.perf_counter()
    tree = build_hierarchy(mesh, epsilon=args.seg_epsilon)
    t_hierarchy = time.perf_counter() - t0

    def prompt(current):
        try:
            raw = input(f"target not reached with N_max={current}; "
                        f"new N_max (empty to stop): ").strip()
        except EOFError:
            return None
        return int(raw) if raw else None

    t0 = time.perf_counter()
    exit_code = EXIT_OK
    try:
        outcome = split_and_pack(mesh, tree, config,
                                 prompt=prompt if interactive else None)
    except TargetUnreachable as exc:
        outcome = exc.outcome
        exit_code = EXIT_TARGET
        print(f"warning: {exc}", file=sys.stderr)
    except NoPlacement as exc:
        print(f"error: packing failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    t_packing = time.perf_counter() - t0

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    part_meshes = {nid: mesh.extract(tets)
                   for nid, tets in outcome.part_tets.items()}
    _write_pack_outputs(out_dir, outcome.result, part_meshes)
    rep.write_history_jsonl(out_dir / "history.jsonl", outcome.history)
    rep.render_history_figure(out_dir / "history.png", outcome.history)

    report = {
        "input": {"node": str(args.node), "ele": str(args.ele),
                  "sha256": rep.file_digest(args.node, args.ele)},
        "config": _config_echo(args, packer_cfg,
                               {"nmax": args.nmax, "target": args.target,
                                "seg_epsilon": args.seg_epsilon}),
        "target_met": outcome.target_met,
        "n_parts": len(outcome.active_nodes),
        "active_nodes": [int(n) for n in outcome.active_nodes],
        "assembly": [list(step) for step in outcome.assembly],
        "result": rep.result_payload(outcome.result),
        "history": [h.to_json_dict() for h in outcome.history],
        "timings": {"hierarchy_s": t_hierarchy, "packing_s": t_packing,
                    "total_s": t_hierarchy + t_packing},
    }
    rep.write_json(out_dir / "report.json", report)
    print(f"parts: {len(outcome.active_nodes)}  "
          f"efficiency: {outcome.result.efficiency:.3f}  "
          f"target {'met' if outcome.target_met else 'NOT met'}")
    print(f"outputs written to {out_dir}")
    return exit_code


def cmd_pack(args) -> int:
    if not args.parts:
        print("error: need at least one part mesh", file=sys.stderr)
        return EXIT_USAGE
    meshes = []
    for node_path in args.parts:
        node_path = Path(node_path)
        ele_path = node_path.with_suffix(".ele")
        meshes.append(_load_mesh_or_exit(node_path, ele_path))
    packer_cfg = _packer_config(args)
    t0 = time.perf_counter()
    try:
        result = pack(meshes, packer_cfg)
    except NoPlacement as exc:
        print(f"error: packing failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    elapsed = time.perf_counter() - t0

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    part_meshes = {i: m for i, m in enumerate(meshes)}
    _write_pack_outputs(out_dir, result, part_meshes)
    report = {
        "input": {"parts": [str(p) for p in args.parts],
                  "sha256": rep.file_digest(*args.parts)},
        "config": _config_echo(args, packer_cfg),
        "result": rep.result_payload(result),
        "timings": {"packing_s": elapsed},
    }
    rep.write_json(out_dir / "report.json", report)
    print(f"parts: {len(meshes)}  efficiency: {result.efficiency:.3f}  "
          f"box: {np.round(result.box_extents, 4).tolist()}")
    return EXIT_OK


def cmd_bench_boxes(args) -> int:
    spec = RandomBoxSpec(count=args.count, min_edge=args.min_edge,
                         max_edge=args.max_edge, seed=args.seed)
    packer_cfg = _packer_config(args)
    try:
        runs = run_box_benchmark_series(spec, args.runs, packer_cfg)
    except NoPlacement as exc:
        print(f"error: packing failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    rows = []
    for i, run in enumerate(runs):
        ext = run["box_extents"]
        rows.append({"run": i, "seed": run["spec"]["seed"], "order": run["order"],
                     "count": run["spec"]["count"],
                     "efficiency": run["efficiency"],
                     "box_x": ext[0], "box_y": ext[1], "box_z": ext[2],
                     "elapsed_s": run["elapsed_s"]})
        print(f"run {i}: seed={run['spec']['seed']} "
              f"efficiency={run['efficiency']:.4f} ({run['elapsed_s']:.1f}s)")
    mean_eff = float(np.mean([r["efficiency"] for r in rows]))
    print(f"mean efficiency over {len(rows)} run(s): {mean_eff:.4f} "
          f"(paper reference at full budget: ~0.88)")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "spec": {"count": spec.count, "min_edge": spec.min_edge,
                 "max_edge": spec.max_edge, "seed": spec.seed,
                 "runs": args.runs},
        "config": _config_echo(args, packer_cfg),
        "runs": [{k: v for k, v in r.items()} for r in rows],
        "mean_efficiency": mean_eff,
    }
    rep.write_json(out_dir / "bench.json", payload)
    rep.write_bench_csv(out_dir / "bench.csv", rows)
    rep.render_bench_figure(out_dir / "bench.png", rows)
    print(f"outputs written to {out_dir}")
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        payload = json.loads(Path(args.placements).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {args.placements}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    entries = payload.get("parts", [])
    if len(entries) != len(args.parts):
        print(f"error: {len(args.parts)} part files but "
              f"{len(entries)} placements", file=sys.stderr)
        return EXIT_USAGE
    placed = []
    for entry, node_path in zip(entries, args.parts):
        node_path = Path(node_path)
        mesh = _load_mesh_or_exit(node_path, node_path.with_suffix(".ele"))
        from .geometry import RigidTransform, quat_normalize
        tf = RigidTransform(quat_normalize(np.array(entry["quaternion"])),
                            np.array(entry["translation"], dtype=float))
        verts = tf.apply(mesh.vertices)
        tris = part_boundary_surface(mesh, np.arange(mesh.n_tets))
        placed.append((entry["part_id"], verts, tris))
    lo = np.min([verts.min(axis=0) for _, verts, _ in placed], axis=0)
    hi = np.max([verts.max(axis=0) for _, verts, _ in placed], axis=0)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rep.write_packed_obj(out_dir / "packed.obj", placed, lo, hi)
    print(f"packed.obj written to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partpack",
        description="Split a tetrahedral mesh into box-like parts and pack "
                    "them into a minimum-volume box.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="build the part hierarchy")
    p.add_argument("node")
    p.add_argument("ele")
    p.add_argument("--out", default=None, help="tree JSON path")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--dump-level", type=int, default=0, metavar="K",
                   help="also write OBJs of the K-part cut")
    p.add_argument("--epsilon", type=float, default=0.05,
                   help="MBB accuracy during clustering")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("splitpack", help="full split-and-pack pipeline")
    p.add_argument("node")
    p.add_argument("ele")
    p.add_argument("--nmax", type=int, required=True,
                   help="maximum number of parts")
    p.add_argument("--target", type=float, required=True,
                   help="target packing efficiency in (0, 1]")
    p.add_argument("--non-interactive", action="store_true",
                   help="never prompt for a new N_max")
    p.add_argument("--seg-epsilon", type=float, default=0.05)
    p.add_argument("--out-dir", default="out")
    _add_packer_flags(p)
    p.set_defaults(func=cmd_splitpack)

    p = sub.add_parser("pack", help="pack part meshes without segmentation")
    p.add_argument("parts", nargs="*",
                   help=".node files (matching .ele expected alongside)")
    p.add_argument("--out-dir", default="out")
    _add_packer_flags(p)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("bench-boxes", help="random-box packing benchmark")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--min-edge", type=float, default=0.1)
    p.add_argument("--max-edge", type=float, default=0.3)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--out-dir", default="out")
    _add_packer_flags(p)
    p.set_defaults(func=cmd_bench_boxes)

    p = sub.add_parser("export", help="apply a placements.json to part meshes")
    p.add_argument("parts", nargs="+",
                   help=".node files in the same order as the packed run")
    p.add_argument("--placements", required=True)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
