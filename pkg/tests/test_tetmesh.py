import numpy as np
import pytest

from partpack.geometry import RigidTransform, sample_rotations
from partpack.synthetic import box_mesh, cell_mesh, write_tetgen
from partpack.tetmesh import (
    DegenerateTet,
    ParseError,
    PartRef,
    TetMesh,
    build_dual_graph,
    load_tetmesh,
    mesh_volume,
    n_components,
    part_boundary_surface,
    write_obj,
)


class TestLoad:
    def test_cube_fixture(self, cube_files):
        mesh = load_tetmesh(*cube_files)
        assert mesh.n_vertices == 8
        assert mesh.n_tets == 5
        assert abs(mesh.volume() - 1.0) < 1e-9

    def test_zero_based_indexing(self, tmp_path, cube_mesh):
        node = tmp_path / "c.node"
        ele = tmp_path / "c.ele"
        lines = [f"{cube_mesh.n_vertices} 3 0 0"]
        for i, v in enumerate(cube_mesh.vertices):
            lines.append(f"{i} {v[0]} {v[1]} {v[2]}")
        node.write_text("\n".join(lines))
        lines = [f"{cube_mesh.n_tets} 4 0"]
        for i, t in enumerate(cube_mesh.tets):
            lines.append(f"{i} {t[0]} {t[1]} {t[2]} {t[3]}")
        ele.write_text("\n".join(lines))
        mesh = load_tetmesh(node, ele)
        assert abs(mesh.volume() - 1.0) < 1e-9

    def test_comments_ignored(self, tmp_path, cube_mesh):
        node = tmp_path / "c.node"
        ele = tmp_path / "c.ele"
        write_tetgen(cube_mesh, node, ele)
        node.write_text("# header comment\n" + node.read_text().replace(
            "\n2 ", "  # inline\n2 ", 1))
        mesh = load_tetmesh(node, ele)
        assert mesh.n_tets == 5

    def test_empty_ele(self, tmp_path, cube_mesh):
        node = tmp_path / "c.node"
        ele = tmp_path / "c.ele"
        write_tetgen(cube_mesh, node, ele)
        ele.write_text("")
        with pytest.raises(ParseError):
            load_tetmesh(node, ele)

    def test_inverted_tet_loads_with_positive_volume(self, tmp_path, cube_mesh):
        node = tmp_path / "c.node"
        ele = tmp_path / "c.ele"
        write_tetgen(cube_mesh, node, ele)
        lines = ele.read_text().splitlines()
        head, first = lines[0], lines[1].split()
        # swap two vertices of the first tet: negative orientation
        first[1], first[2] = first[2], first[1]
        lines[1] = " ".join(first)
        ele.write_text("\n".join([head] + lines[1:]))
        mesh = load_tetmesh(node, ele)
        assert abs(mesh.volume() - 1.0) < 1e-9

    def test_degenerate_tet_rejected(self, tmp_path):
        node = tmp_path / "d.node"
        ele = tmp_path / "d.ele"
        node.write_text("4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 1 1 0\n")
        ele.write_text("1 4 0\n1 1 2 3 4\n")
        with pytest.raises(DegenerateTet):
            load_tetmesh(node, ele)

    def test_bad_index_rejected(self, tmp_path):
        node = tmp_path / "d.node"
        ele = tmp_path / "d.ele"
        node.write_text("4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n")
        ele.write_text("1 4 0\n1 1 2 3 9\n")
        with pytest.raises(ParseError):
            load_tetmesh(node, ele)

    def test_duplicate_tet_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
        with pytest.raises(ParseError):
            TetMesh.create(verts, [[0, 1, 2, 3], [1, 0, 2, 3]])


class TestVolume:
    def test_cube(self, cube_mesh):
        assert abs(mesh_volume(cube_mesh) - 1.0) < 1e-9

    def test_single_tet(self):
        mesh = TetMesh.create(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float),
            [[0, 1, 2, 3]])
        assert abs(mesh_volume(mesh) - 1.0 / 6.0) < 1e-15

    def test_two_disjoint_cubes(self):
        a = box_mesh((1, 1, 1))
        b = box_mesh((1, 1, 1), origin=(3, 0, 0))
        verts = np.vstack([a.vertices, b.vertices])
        tets = np.vstack([a.tets, b.tets + a.n_vertices])
        mesh = TetMesh.create(verts, tets)
        assert abs(mesh_volume(mesh) - 2.0) < 1e-9
        assert n_components(mesh) == 2

    def test_rigid_invariance(self, cube_mesh):
        tf = RigidTransform(sample_rotations(1, 3)[0], np.array([0.3, -1.0, 2.0]))
        moved = TetMesh.create(tf.apply(cube_mesh.vertices), cube_mesh.tets)
        assert abs(moved.volume() - cube_mesh.volume()) < 1e-9

    def test_partition_sums_to_total(self):
        mesh = cell_mesh([(i, j, 0) for i in range(3) for j in range(2)])
        ids = np.arange(mesh.n_tets)
        part_a = PartRef.from_tets(mesh, ids[: len(ids) // 3])
        part_b = PartRef.from_tets(mesh, ids[len(ids) // 3:])
        assert abs(part_a.volume + part_b.volume - mesh.volume()) < 1e-9


class TestDualGraph:
    def test_two_tets_sharing_facet(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]],
                         dtype=float)
        mesh = TetMesh.create(verts, [[0, 1, 2, 3], [1, 2, 3, 4]])
        g = build_dual_graph(mesh)
        assert g.n_nodes == 2
        assert len(g.arcs) == 1

    def test_disjoint_tets_no_arcs(self):
        a = box_mesh((1, 1, 1))
        b = box_mesh((1, 1, 1), origin=(3, 0, 0))
        verts = np.vstack([a.vertices, b.vertices])
        tets = np.vstack([a.tets[:1], b.tets[:1] + a.n_vertices])
        mesh = TetMesh.create(verts, tets)
        g = build_dual_graph(mesh)
        assert g.n_nodes == 2
        assert len(g.arcs) == 0

    def test_five_tet_cube_structure(self, cube_mesh):
        # Oracle: brute-force count of tet pairs sharing exactly 3 vertices.
        g = build_dual_graph(cube_mesh)
        expected = 0
        for i in range(5):
            for j in range(i + 1, 5):
                shared = set(cube_mesh.tets[i]) & set(cube_mesh.tets[j])
                if len(shared) == 3:
                    expected += 1
        assert g.n_nodes == 5
        assert len(g.arcs) == expected == 4

    def test_arc_count_matches_facet_identity(self):
        mesh = cell_mesh([(i, 0, 0) for i in range(4)])
        g = build_dual_graph(mesh)
        boundary = part_boundary_surface(mesh, np.arange(mesh.n_tets))
        assert len(g.arcs) == (4 * mesh.n_tets - len(boundary)) // 2

    def test_max_degree_four(self):
        mesh = cell_mesh([(i, j, k) for i in range(2) for j in range(2)
                          for k in range(2)])
        adj = build_dual_graph(mesh).neighbors()
        assert max(len(a) for a in adj) <= 4


class TestBoundarySurface:
    def test_single_tet_has_four_facets(self):
        mesh = TetMesh.create(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float),
            [[0, 1, 2, 3]])
        tris = part_boundary_surface(mesh, [0])
        assert len(tris) == 4

    def test_cube_boundary_is_twelve_triangles(self, cube_mesh):
        # Oracle: facets seen exactly once across all tets.
        from collections import Counter
        counter = Counter()
        for tet in cube_mesh.tets:
            for f in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
                counter[tuple(sorted(tet[list(f)]))] += 1
        expected = sum(1 for v in counter.values() if v == 1)
        tris = part_boundary_surface(cube_mesh, np.arange(5))
        assert len(tris) == expected == 12

    def test_shared_facet_absent(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]],
                         dtype=float)
        mesh = TetMesh.create(verts, [[0, 1, 2, 3], [1, 2, 3, 4]])
        tris = part_boundary_surface(mesh, [0, 1])
        assert len(tris) == 6
        keys = {tuple(sorted(t)) for t in tris}
        assert (1, 2, 3) not in keys

    def test_watertight(self, cube_mesh):
        # every edge of the boundary bounds exactly 2 triangles
        from collections import Counter
        tris = part_boundary_surface(cube_mesh, np.arange(5))
        edges = Counter()
        for t in tris:
            for e in ((t[0], t[1]), (t[1], t[2]), (t[0], t[2])):
                edges[tuple(sorted(e))] += 1
        assert set(edges.values()) == {2}

    def test_outward_orientation(self, cube_mesh):
        tris = part_boundary_surface(cube_mesh, np.arange(5))
        v = cube_mesh.vertices
        center = np.array([0.5, 0.5, 0.5])
        for t in tris:
            n = np.cross(v[t[1]] - v[t[0]], v[t[2]] - v[t[0]])
            assert np.dot(n, v[t].mean(axis=0) - center) > 0


class TestObjExport:
    def test_roundtrip_vertex_positions(self, tmp_path, cube_mesh):
        tris = part_boundary_surface(cube_mesh, np.arange(5))
        path = tmp_path / "cube.obj"
        write_obj(path, [("cube", cube_mesh.vertices, tris)])
        verts = []
        faces = 0
        for line in path.read_text().splitlines():
            if line.startswith("v "):
                verts.append([float(x) for x in line.split()[1:]])
            elif line.startswith("f "):
                faces += 1
        assert np.allclose(np.array(verts), cube_mesh.vertices)
        assert faces == 12
