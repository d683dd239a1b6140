import json

import numpy as np
import pytest

from partpack.segmentation import (
    DegenerateBox,
    LeafSplit,
    SegmentationTree,
    aboxiness,
    boxiness,
    build_hierarchy,
    cut_tree,
)
from partpack.synthetic import box_mesh, cell_mesh, slab_mesh
from partpack.tetmesh import PartRef, TetMesh, build_dual_graph
from conftest import min_aabb_volume_grid


def two_cubes_stacked():
    """Two axis-aligned unit cubes stacked into a 2-tall column."""
    return cell_mesh([(0, 0, 0), (0, 0, 1)])


class TestBoxinessMetrics:
    def test_full_cube_boxiness_one(self, cube_mesh):
        part = PartRef.from_tets(cube_mesh, range(5))
        b = boxiness(part)
        assert b >= 1.0 / 1.01
        assert b <= 1.0 + 1e-9

    def test_single_tet_vs_oracle(self):
        mesh = TetMesh.create(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float),
            [[0, 1, 2, 3]])
        part = PartRef.from_tets(mesh, [0])
        oracle_mbb = min_aabb_volume_grid(mesh.vertices)
        expected = (1.0 / 6.0) / oracle_mbb
        # approximate MBB may be tighter than the 2-degree grid, never looser than 1%
        assert boxiness(part) == pytest.approx(expected, rel=0.06)

    def test_half_cube_slab(self):
        mesh = box_mesh((1.0, 1.0, 0.5))
        part = PartRef.from_tets(mesh, range(5))
        assert boxiness(part) == pytest.approx(1.0, rel=0.02)

    def test_degenerate_box_raises(self):
        mesh = TetMesh.create(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float),
            [[0, 1, 2, 3]])
        part = PartRef.from_tets(mesh, [0])
        flat = PartRef(mesh=part.mesh, tet_ids=part.tet_ids, volume=part.volume,
                       hull_pts=part.hull_pts,
                       mbb=type(part.mbb)(center=np.zeros(3), axes=np.eye(3),
                                          half_extents=np.zeros(3)))
        with pytest.raises(DegenerateBox):
            boxiness(flat)

    def test_cube_aboxiness_near_zero(self, cube_mesh):
        part = PartRef.from_tets(cube_mesh, range(5))
        assert 0.0 <= aboxiness(part) <= 0.02

    def test_l_shape_aboxiness_vs_oracle(self):
        # three cells in an L: volume 3, MBB from the rotation-grid oracle
        mesh = cell_mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)])
        part = PartRef.from_tets(mesh, range(mesh.n_tets))
        oracle = min_aabb_volume_grid(part.hull_pts)
        assert aboxiness(part) == pytest.approx(oracle - 3.0, abs=0.06)

    def test_hollow_frame_positive(self):
        from partpack.synthetic import hollow_frame_mesh
        mesh = hollow_frame_mesh(outer=4, height=1)
        part = PartRef.from_tets(mesh, range(mesh.n_tets))
        assert aboxiness(part) > 0.5  # 4x4x1 frame is missing a 2x2x1 core


class TestBuildHierarchy:
    def test_single_tet(self):
        mesh = TetMesh.create(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float),
            [[0, 1, 2, 3]])
        tree = build_hierarchy(mesh)
        assert len(tree.nodes) == 1
        assert tree.nodes[tree.root].is_leaf

    def test_two_tets(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]],
                         dtype=float)
        mesh = TetMesh.create(verts, [[0, 1, 2, 3], [1, 2, 3, 4]])
        tree = build_hierarchy(mesh)
        assert len(tree.nodes) == 3
        root = tree.nodes[tree.root]
        assert {root.left, root.right} == {0, 1}
        union = PartRef.from_tets(mesh, [0, 1], epsilon=0.05)
        assert root.aboxiness == pytest.approx(aboxiness(union), rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize("n_cells,n_tets", [(1, 6), (2, 12), (4, 24)])
    def test_structure_counts(self, n_cells, n_tets):
        cells = [(i % 2, (i // 2) % 2, 0) for i in range(n_cells)]
        mesh = cell_mesh(cells)
        assert mesh.n_tets == n_tets
        tree = build_hierarchy(mesh)
        leaves = [n for n in tree.nodes if n.is_leaf]
        internal = [n for n in tree.nodes if not n.is_leaf]
        assert len(leaves) == n_tets
        assert len(internal) == n_tets - 1

    def test_five_tet_cube(self, cube_mesh):
        tree = build_hierarchy(cube_mesh)
        assert len(tree.nodes) == 9
        root = tree.nodes[tree.root]
        assert root.tet_count == 5
        assert root.aboxiness <= 0.02

    def test_partition_invariant_at_every_node(self, cube_mesh):
        tree = build_hierarchy(cube_mesh)
        for node in tree.nodes:
            if node.is_leaf:
                continue
            l = set(tree.tets_of(node.left).tolist())
            r = set(tree.tets_of(node.right).tolist())
            assert not (l & r)
            assert sorted(l | r) == tree.tets_of(node.id).tolist()

    def test_cost_non_negative(self):
        mesh = slab_mesh(2, 2, 1)
        tree = build_hierarchy(mesh)
        for node in tree.nodes:
            assert node.aboxiness >= -1e-9 * mesh.volume()

    def test_determinism(self):
        mesh = slab_mesh(2, 2, 1)
        t1 = build_hierarchy(mesh)
        t2 = build_hierarchy(mesh)
        assert [(n.left, n.right) for n in t1.nodes] == \
               [(n.left, n.right) for n in t2.nodes]

    def test_two_stacked_cubes_root_cost_near_zero(self):
        mesh = two_cubes_stacked()
        tree = build_hierarchy(mesh)
        root = tree.nodes[tree.root]
        assert root.aboxiness <= 0.05
        # splitting the root separates complete sub-volumes
        left_vol = tree.nodes[root.left].volume
        right_vol = tree.nodes[root.right].volume
        assert left_vol + right_vol == pytest.approx(2.0, abs=1e-9)

    def test_disconnected_mesh_gets_single_tree(self):
        a = box_mesh((1, 1, 1))
        b = box_mesh((1, 1, 1), origin=(3, 0, 0))
        verts = np.vstack([a.vertices, b.vertices])
        tets = np.vstack([a.tets, b.tets + a.n_vertices])
        mesh = TetMesh.create(verts, tets)
        tree = build_hierarchy(mesh)
        assert len(tree.nodes) == 2 * mesh.n_tets - 1
        assert tree.nodes[tree.root].tet_count == mesh.n_tets

    def test_greedy_pops_minimum_cost(self):
        """Instrumented heap-correctness check against a brute-force rescan."""
        from partpack import segmentation as seg

        mesh = slab_mesh(2, 1, 1)
        recorded = []
        original = seg._edge_cost

        def spy(a, b, epsilon, mode):
            out = original(a, b, epsilon, mode)
            recorded.append(((a.id, b.id), out[0]))
            return out

        seg._edge_cost = spy
        try:
            tree = build_hierarchy(mesh)
        finally:
            seg._edge_cost = original

        # replay: at each contraction the chosen pair's cost must equal the
        # minimum cost among all edges alive at that moment
        costs = dict()
        for pair, cost in recorded:
            costs[tuple(sorted(pair))] = cost
        graph = build_dual_graph(mesh)
        alive = {i: set() for i in range(mesh.n_tets)}
        for x, y in graph.arcs:
            alive[int(x)].add(int(y))
            alive[int(y)].add(int(x))
        for node in tree.nodes[mesh.n_tets:]:
            live_edges = {tuple(sorted((a, b)))
                          for a in alive for b in alive[a]}
            if not live_edges:
                break
            min_cost = min(costs[e] for e in live_edges)
            chosen = tuple(sorted((node.left, node.right)))
            assert costs[chosen] <= min_cost + 1e-12
            nbrs = (alive.pop(node.left) | alive.pop(node.right)) \
                - {node.left, node.right}
            for nb in nbrs:
                alive[nb].discard(node.left)
                alive[nb].discard(node.right)
                alive[nb].add(node.id)
            alive[node.id] = nbrs

    def test_relative_cost_mode_runs(self, cube_mesh):
        tree = build_hierarchy(cube_mesh, cost_mode="relative")
        assert len(tree.nodes) == 9
        with pytest.raises(ValueError):
            build_hierarchy(cube_mesh, cost_mode="bogus")

    def test_json_dump(self, tmp_path, cube_mesh):
        tree = build_hierarchy(cube_mesh)
        path = tmp_path / "tree.json"
        tree.dump_json(path)
        data = json.loads(path.read_text())
        assert data["n_leaves"] == 5
        assert len(data["nodes"]) == 9
        node = data["nodes"][-1]
        assert set(node) == {"id", "parent", "children", "tet_count",
                             "volume", "mbb", "aboxiness"}
        assert set(node["mbb"]) == {"center", "axes", "half_extents"}


class TestCutTree:
    def test_split_root(self, cube_mesh):
        tree = build_hierarchy(cube_mesh)
        root = tree.nodes[tree.root]
        active = cut_tree(tree, [tree.root], tree.root)
        assert sorted(active) == sorted([root.left, root.right])

    def test_split_leaf_raises(self, cube_mesh):
        tree = build_hierarchy(cube_mesh)
        with pytest.raises(LeafSplit):
            cut_tree(tree, [0], 0)

    def test_split_to_all_leaves(self, cube_mesh):
        tree = build_hierarchy(cube_mesh)
        active = [tree.root]
        for _ in range(cube_mesh.n_tets - 1):
            internal = next(n for n in active if not tree.nodes[n].is_leaf)
            active = cut_tree(tree, active, internal)
            covered = np.concatenate([tree.tets_of(n) for n in active])
            assert sorted(covered.tolist()) == list(range(cube_mesh.n_tets))
        assert sorted(active) == list(range(cube_mesh.n_tets))

    def test_not_active_raises(self, cube_mesh):
        tree = build_hierarchy(cube_mesh)
        with pytest.raises(ValueError):
            cut_tree(tree, [tree.root], tree.root - 1)
