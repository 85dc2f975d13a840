import numpy as np
import pytest

from ugst.errors import StructureError
from ugst.graph import CsrMatrix, Graph, build_csr, normalize_adjacency, spmm

from conftest import dense_adjacency, dense_normalized, random_graph


class TestGraph:
    def test_symmetrizes_and_deduplicates(self):
        g = Graph(3, np.array([[1, 0], [0, 1], [2, 1], [1, 2]]))
        assert g.num_edges == 2
        assert g.edges.tolist() == [[0, 1], [1, 2]]

    def test_rejects_out_of_range_endpoint(self):
        with pytest.raises(StructureError):
            Graph(2, np.array([[0, 2]]))
        with pytest.raises(StructureError):
            Graph(2, np.array([[-1, 0]]))

    def test_rejects_self_loop(self):
        with pytest.raises(StructureError):
            Graph(3, np.array([[1, 1]]))

    def test_degrees(self):
        g = Graph(3, np.array([[0, 1], [1, 2]]))
        assert g.degrees().tolist() == [1, 2, 1]


class TestCsrInvariants:
    def test_rejects_bad_row_ptr(self):
        with pytest.raises(StructureError):
            CsrMatrix(2, 2, np.array([0, 2, 1]), np.array([0, 1]), np.ones(2))

    def test_rejects_unsorted_columns_within_row(self):
        with pytest.raises(StructureError):
            CsrMatrix(1, 3, np.array([0, 2]), np.array([2, 0]), np.ones(2))

    def test_rejects_column_out_of_range(self):
        with pytest.raises(StructureError):
            CsrMatrix(1, 2, np.array([0, 1]), np.array([5]), np.ones(1))


class TestBuildCsr:
    def test_empty_graph(self):
        m = build_csr(Graph(3))
        assert m.row_ptr.tolist() == [0, 0, 0, 0]
        assert m.nnz == 0

    def test_single_edge_is_symmetric(self):
        m = build_csr(Graph(2, np.array([[0, 1]])))
        dense = m.to_dense()
        assert dense[0, 1] == 1.0 and dense[1, 0] == 1.0
        assert dense[0, 0] == 0.0 and dense[1, 1] == 0.0

    def test_triangle_with_duplicate_edge(self):
        # hand enumeration after dedup: each node has the other two as
        # neighbours, diagonal absent
        g = Graph(3, np.array([[0, 1], [1, 2], [0, 2], [1, 2]]))
        m = build_csr(g)
        assert m.nnz == 6
        assert np.diff(m.row_ptr).tolist() == [2, 2, 2]
        expected = np.ones((3, 3)) - np.eye(3)
        np.testing.assert_array_equal(m.to_dense(), expected)

    def test_matches_dense_oracle_and_symmetry(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            g = random_graph(rng)
            dense = build_csr(g).to_dense()
            np.testing.assert_array_equal(dense, dense_adjacency(g))
            np.testing.assert_array_equal(dense, dense.T)


class TestNormalizeAdjacency:
    def test_isolated_node(self):
        m = normalize_adjacency(Graph(1))
        np.testing.assert_array_equal(m.to_dense(), [[1.0]])

    def test_two_nodes_one_edge(self):
        # both degrees become 2 with the self-loop; every entry 1/sqrt(4)
        m = normalize_adjacency(Graph(2, np.array([[0, 1]])))
        np.testing.assert_allclose(m.to_dense(), np.full((2, 2), 0.5), rtol=0, atol=0)

    def test_path_graph_hand_values(self):
        m = normalize_adjacency(Graph(3, np.array([[0, 1], [1, 2]]))).to_dense()
        s6 = 1.0 / np.sqrt(6.0)
        expected = np.array([
            [0.5, s6, 0.0],
            [s6, 1 / 3, s6],
            [0.0, s6, 0.5],
        ])
        np.testing.assert_allclose(m, expected, rtol=1e-15)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            g = random_graph(rng)
            np.testing.assert_allclose(
                normalize_adjacency(g).to_dense(), dense_normalized(g), rtol=1e-13
            )

    def test_value_range_and_diagonal(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            g = random_graph(rng)
            m = normalize_adjacency(g)
            assert m.values.min() > 0.0 and m.values.max() <= 1.0
            diag = np.diag(m.to_dense())
            np.testing.assert_allclose(diag, 1.0 / (g.degrees() + 1.0), rtol=1e-15)


class TestSpmm:
    def test_identity_leaves_dense_unchanged(self):
        n = 4
        eye = CsrMatrix(n, n, np.arange(n + 1), np.arange(n), np.ones(n))
        x = np.random.default_rng(0).normal(size=(n, 3))
        np.testing.assert_array_equal(spmm(eye, x), x)

    def test_zero_matrix_input(self):
        g = Graph(3, np.array([[0, 1], [1, 2]]))
        m = build_csr(g)
        np.testing.assert_array_equal(spmm(m, np.zeros((3, 2))), np.zeros((3, 2)))

    def test_random_csr_against_dense_product(self):
        rng = np.random.default_rng(123)
        dense_m = (rng.random((4, 4)) < 0.5) * rng.normal(size=(4, 4))
        rows, cols = np.nonzero(dense_m)
        row_ptr = np.zeros(5, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        m = CsrMatrix(4, 4, np.cumsum(row_ptr), cols, dense_m[rows, cols])
        x = rng.normal(size=(4, 3))
        np.testing.assert_allclose(spmm(m, x), dense_m @ x, rtol=1e-12)

    def test_dimension_mismatch(self):
        m = build_csr(Graph(3, np.array([[0, 1]])))
        with pytest.raises(StructureError):
            spmm(m, np.zeros((4, 2)))

    def test_exhaustive_small_graphs_vs_dense(self):
        # spec property: relative error <= 1e-12 on all graphs up to 8 nodes
        rng = np.random.default_rng(99)
        for _ in range(200):
            g = random_graph(rng, max_nodes=8)
            m = normalize_adjacency(g)
            x = rng.normal(size=(g.num_nodes, int(rng.integers(1, 5))))
            ref = m.to_dense() @ x
            np.testing.assert_allclose(spmm(m, x), ref, rtol=1e-12, atol=1e-13)
            # the cached-dense fast path must agree with both
            np.testing.assert_allclose(m.matmul(x), ref, rtol=1e-12, atol=1e-13)

    def test_empty_rows_stay_zero(self):
        g = Graph(4, np.array([[0, 1]]))  # nodes 2, 3 isolated
        m = build_csr(g)
        out = spmm(m, np.ones((4, 2)))
        np.testing.assert_array_equal(out[2:], np.zeros((2, 2)))
