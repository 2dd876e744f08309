import warnings

import numpy as np
import pytest

from arealagree.errors import InvalidParameterError, IsolatedUnitError, LatticeError
from arealagree.lattice import (
    ContiguityMatrix,
    Lattice,
    build_contiguity,
    degree_matrix,
    grid_lattice,
    higher_order_contiguity,
    load_adjacency,
)


def bfs_distances(n, edges):
    """Independent all-pairs distance oracle: plain BFS per source node."""
    adj = {i: [] for i in range(n)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    dist = np.full((n, n), np.inf)
    for src in range(n):
        dist[src, src] = 0
        frontier = [src]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if dist[src, v] == np.inf:
                        dist[src, v] = d
                        nxt.append(v)
            frontier = nxt
    return dist


def random_connected_lattice(rng, n):
    """Random spanning path plus extra random edges; never isolated units."""
    perm = rng.permutation(n)
    edges = {(min(a, b), max(a, b)) for a, b in zip(perm[:-1], perm[1:])}
    for _ in range(rng.integers(0, 2 * n)):
        i, j = rng.integers(0, n, size=2)
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return Lattice(n=n, edges=tuple(edges))


class TestLattice:
    def test_canonicalizes_edges(self):
        lat = Lattice(n=3, edges=((1, 0), (2, 1), (0, 1)))
        assert lat.edges == ((0, 1), (1, 2))

    def test_rejects_self_loop(self):
        with pytest.raises(LatticeError):
            Lattice(n=3, edges=((0, 0), (0, 1), (1, 2)))

    def test_rejects_out_of_range(self):
        with pytest.raises(LatticeError):
            Lattice(n=2, edges=((0, 2),))

    def test_rejects_isolated_unit(self):
        with pytest.raises(IsolatedUnitError):
            Lattice(n=3, edges=((0, 1),))

    def test_hash_and_equality(self):
        a = Lattice(n=3, edges=((0, 1), (1, 2)))
        b = Lattice(n=3, edges=((1, 2), (0, 1)))
        assert a == b and hash(a) == hash(b)

    def test_unit_ids_default_to_indices(self):
        assert Lattice(n=2, edges=((0, 1),)).unit_ids == ("0", "1")


class TestContiguity:
    def test_two_by_two_rook(self):
        w = build_contiguity(grid_lattice(2, 2))
        expected = np.zeros((4, 4))
        for i, j in [(0, 1), (0, 2), (1, 3), (2, 3)]:
            expected[i, j] = expected[j, i] = 1
        np.testing.assert_array_equal(w.values, expected)

    def test_single_edge(self):
        w = build_contiguity(Lattice(n=2, edges=((0, 1),)))
        np.testing.assert_array_equal(w.values, [[0, 1], [1, 0]])

    def test_path_graph(self):
        w = build_contiguity(Lattice(n=3, edges=((0, 1), (1, 2)))).values
        assert w[0, 2] == 0 and w[0, 1] == 1 and w[1, 2] == 1

    def test_values_read_only(self):
        w = build_contiguity(grid_lattice(2, 2))
        with pytest.raises(ValueError):
            w.values[0, 1] = 5

    def test_validation(self):
        with pytest.raises(LatticeError):
            ContiguityMatrix(order=1, values=np.array([[0, 1], [0, 0]]))
        with pytest.raises(LatticeError):
            ContiguityMatrix(order=1, values=np.array([[1, 1], [1, 0]]))
        with pytest.raises(LatticeError):
            ContiguityMatrix(order=1, values=np.array([[0, 2], [2, 0]]))


class TestHigherOrder:
    def test_path_order_two(self):
        w1 = build_contiguity(Lattice(n=3, edges=((0, 1), (1, 2))))
        w2 = higher_order_contiguity(w1, 2)
        expected = np.zeros((3, 3))
        expected[0, 2] = expected[2, 0] = 1
        np.testing.assert_array_equal(w2.values, expected)

    def test_complete_graph_order_two_is_zero(self):
        w1 = build_contiguity(Lattice(n=3, edges=((0, 1), (0, 2), (1, 2))))
        assert higher_order_contiguity(w1, 2).values.sum() == 0

    def test_order_beyond_diameter_is_zero(self):
        w1 = build_contiguity(grid_lattice(2, 2))
        assert higher_order_contiguity(w1, 99).values.sum() == 0

    def test_invalid_order(self):
        w1 = build_contiguity(grid_lattice(2, 2))
        with pytest.raises(InvalidParameterError):
            higher_order_contiguity(w1, 0)

    def test_three_by_three_against_bfs(self):
        lat = grid_lattice(3, 3)
        w2 = higher_order_contiguity(build_contiguity(lat), 2)
        dist = bfs_distances(lat.n, lat.edges)
        np.testing.assert_array_equal(w2.values, (dist == 2).astype(float))

    def test_random_graphs_match_bfs_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            lat = random_connected_lattice(rng, int(rng.integers(4, 51)))
            w1 = build_contiguity(lat)
            dist = bfs_distances(lat.n, lat.edges)
            for order in (2, 3, 4):
                got = higher_order_contiguity(w1, order).values
                np.testing.assert_array_equal(got, (dist == order).astype(float))

    def test_orders_partition_pairs(self):
        lat = grid_lattice(4, 3)
        w1 = build_contiguity(lat)
        mats = [w1] + [higher_order_contiguity(w1, j) for j in range(2, 6)]
        for a in range(len(mats)):
            for b in range(a + 1, len(mats)):
                assert np.all(mats[a].values * mats[b].values == 0)

    def test_symmetry_zero_diag_binary(self):
        lat = grid_lattice(4, 4)
        w1 = build_contiguity(lat)
        for j in (1, 2, 3):
            w = higher_order_contiguity(w1, j).values
            assert np.array_equal(w, w.T)
            assert np.all(np.diag(w) == 0)
            assert np.all((w == 0) | (w == 1))


class TestDegreeMatrix:
    def test_grid(self):
        d = degree_matrix(build_contiguity(grid_lattice(2, 2)))
        np.testing.assert_array_equal(d.diagonal, [2, 2, 2, 2])

    def test_path(self):
        d = degree_matrix(build_contiguity(Lattice(n=3, edges=((0, 1), (1, 2)))))
        np.testing.assert_array_equal(d.diagonal, [1, 2, 1])

    def test_star(self):
        lat = Lattice(n=5, edges=tuple((0, i) for i in range(1, 5)))
        d = degree_matrix(build_contiguity(lat))
        np.testing.assert_array_equal(d.diagonal, [4, 1, 1, 1, 1])

    def test_matches_row_sums(self):
        lat = random_connected_lattice(np.random.default_rng(3), 17)
        w1 = build_contiguity(lat)
        np.testing.assert_array_equal(degree_matrix(w1).diagonal, w1.values.sum(axis=1))

    def test_zero_row_rejected(self):
        # a raw matrix with an unconnected unit cannot become a degree matrix
        w = np.zeros((3, 3))
        w[0, 1] = w[1, 0] = 1
        with pytest.raises(IsolatedUnitError):
            degree_matrix(ContiguityMatrix(order=1, values=w))


class TestGridLattice:
    def test_one_by_two(self):
        assert grid_lattice(1, 2).edges == ((0, 1),)

    def test_two_by_two(self):
        assert len(grid_lattice(2, 2).edges) == 4

    def test_three_by_three_edge_count(self):
        rows = cols = 3
        assert len(grid_lattice(rows, cols).edges) == rows * (cols - 1) + cols * (rows - 1)

    def test_single_cell_rejected(self):
        with pytest.raises(IsolatedUnitError):
            grid_lattice(1, 1)


class TestLoadAdjacency:
    def test_path_file(self, tmp_path):
        f = tmp_path / "adj.csv"
        f.write_text("a,b\nb,c\n")
        lat = load_adjacency(f)
        assert lat.n == 3
        assert lat.ids == ("a", "b", "c")
        assert lat.edges == ((0, 1), (1, 2))

    def test_self_loop_rejected(self, tmp_path):
        f = tmp_path / "adj.csv"
        f.write_text("a,a\n")
        with pytest.raises(LatticeError):
            load_adjacency(f)

    def test_duplicate_edge_warns(self, tmp_path):
        f = tmp_path / "adj.csv"
        f.write_text("a,b\nb,a\nb,c\n")
        with pytest.warns(UserWarning, match="duplicate"):
            lat = load_adjacency(f)
        assert lat.n == 3 and len(lat.edges) == 2

    def test_comments_blanks_and_header(self, tmp_path):
        f = tmp_path / "adj.csv"
        f.write_text("# a comment\nfrom,to\n\na,b\n# another\nb,c\n")
        lat = load_adjacency(f, header=True)
        assert lat.n == 3

    def test_malformed_line(self, tmp_path):
        f = tmp_path / "adj.csv"
        f.write_text("a;b\n")
        with pytest.raises(LatticeError):
            load_adjacency(f)

    def test_id_index_round_trip(self, tmp_path):
        f = tmp_path / "adj.csv"
        f.write_text("x9,x2\nx2,x5\nx5,x9\n")
        lat = load_adjacency(f)
        for i, uid in enumerate(lat.unit_ids):
            assert lat.index_of(uid) == i
