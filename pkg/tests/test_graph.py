import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from purehop.graph import (
    UNKNOWN,
    RelationGraph,
    SplitMasks,
    build_graph,
    homophily_distribution,
    homophily_values,
    node_homophily,
    row_normalize,
    spmm,
)

from conftest import dense_adjacency, random_edges


class TestBuildGraph:
    def test_path_graph_symmetrized(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        assert g.num_edges == 4
        assert list(g.row(1)[0]) == [0, 2]

    def test_duplicates_collapse_to_single_entry(self):
        g = build_graph([(0, 1), (0, 1)], 2)
        assert g.num_edges == 2
        assert g.values.tolist() == [1.0, 1.0]

    def test_out_of_range_rejected_with_pair(self):
        with pytest.raises(ValueError, match=r"\(0, 5\)"):
            build_graph([(0, 5)], 3)

    def test_self_loops_dropped(self):
        g = build_graph([(1, 1), (0, 1)], 2)
        assert g.num_edges == 2

    def test_no_symmetrize_keeps_direction(self):
        g = build_graph([(0, 1)], 2, symmetrize=False)
        assert g.num_edges == 1
        assert list(g.row(1)[0]) == []

    @given(
        st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=60),
        st.integers(12, 15),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_csr_invariants(self, edges, n):
        g = build_graph(edges, n)
        g.validate()
        dense = dense_adjacency(edges, n)
        for u in range(n):
            cols, _ = g.row(u)
            assert np.array_equal(np.flatnonzero(dense[u]), cols)


class TestRowNormalize:
    def test_two_equal_neighbors(self):
        g = row_normalize(build_graph([(0, 1), (1, 2)], 3))
        assert g.row(1)[1].tolist() == [0.5, 0.5]
        assert g.normalized

    def test_isolated_row_stays_zero(self):
        g = row_normalize(build_graph([(0, 1)], 3))
        assert g.row(2)[1].size == 0
        assert spmm(g, np.ones(3))[2] == 0.0

    def test_idempotent(self):
        g = row_normalize(build_graph(random_edges(np.random.default_rng(1), 20), 20))
        again = row_normalize(g)
        assert np.array_equal(g.values, again.values)

    def test_ones_probe_is_exact_indicator(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            g = row_normalize(build_graph(random_edges(rng, n, rng.random() * 0.6), n))
            probe = spmm(g, np.ones(n))
            indicator = (g.degrees() > 0).astype(float)
            assert np.array_equal(probe, indicator)


class TestSpmm:
    def test_diagonal_identity(self):
        # diagonal CSR acts as the identity
        n = 4
        g = RelationGraph(n, np.arange(n + 1), np.arange(n), np.ones(n))
        x = np.random.default_rng(0).standard_normal((n, 3))
        assert np.array_equal(spmm(g, x), x)

    def test_hand_product_on_path(self, path3):
        out = spmm(path3, np.array([[1.0], [2.0], [3.0]]))
        assert out.ravel().tolist() == [2.0, 4.0, 2.0]

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            n = int(rng.integers(2, 51))
            edges = random_edges(rng, n, rng.random() * 0.5)
            g = build_graph(edges, n)
            x = rng.standard_normal((n, int(rng.integers(1, 6))))
            expected = dense_adjacency(edges, n) @ x
            assert np.max(np.abs(spmm(g, x) - expected)) <= 1e-12

    def test_dimension_mismatch(self, path3):
        with pytest.raises(ValueError):
            spmm(path3, np.ones((4, 2)))


class TestNodeHomophily:
    def test_two_thirds(self):
        g = build_graph([(0, 1), (0, 2), (0, 3)], 4)
        labels = np.array([1, 1, 1, 0])
        assert node_homophily(g, labels, 0) == pytest.approx(2 / 3)

    def test_homogeneous_neighborhood(self, triangle):
        labels = np.array([1, 1, 1])
        assert node_homophily(triangle, labels, 0) == 1.0

    def test_isolated_is_undefined(self):
        g = build_graph([(0, 1)], 3)
        assert math.isnan(node_homophily(g, np.array([0, 0, 1]), 2))

    def test_unlabeled_node_rejected(self, path3):
        with pytest.raises(ValueError):
            node_homophily(path3, np.array([UNKNOWN, 0, 1]), 0)

    def test_unlabeled_neighbors_excluded_both_sides(self):
        g = build_graph([(0, 1), (0, 2), (0, 3)], 4)
        labels = np.array([1, 1, UNKNOWN, UNKNOWN])
        assert node_homophily(g, labels, 0) == 1.0

    def test_all_neighbors_unlabeled_is_undefined(self):
        g = build_graph([(0, 1)], 2)
        assert math.isnan(node_homophily(g, np.array([1, UNKNOWN]), 0))


class TestHomophilyDistribution:
    def test_cross_label_edge_mass_at_zero(self):
        g = build_graph([(0, 1)], 2)
        report = homophily_distribution(g, np.array([1, 0]), bins=10)
        assert report.histograms[1][0] == 1
        assert report.histograms[0][0] == 1
        assert report.histograms[1][1:].sum() == 0

    def test_same_label_clique_mass_at_one(self):
        edges = [(u, v) for u in range(5) for v in range(u + 1, 5)]
        report = homophily_distribution(build_graph(edges, 5), np.ones(5, dtype=int), bins=10)
        assert report.histograms[1][-1] == 5
        assert report.defined_counts[1] == 5

    def test_histogram_counts_match_defined(self):
        rng = np.random.default_rng(5)
        g = build_graph(random_edges(rng, 30, 0.1), 30)
        labels = rng.integers(0, 2, size=30)
        labels[rng.random(30) < 0.2] = UNKNOWN
        labels[0] = 1  # keep at least one labeled node
        report = homophily_distribution(g, labels, bins=7)
        for c in (0, 1):
            assert report.histograms[c].sum() == report.defined_counts[c]
        values = homophily_values(g, labels)
        defined = values[~np.isnan(values)]
        assert ((defined >= 0) & (defined <= 1)).all()

    def test_no_labeled_nodes_rejected(self, path3):
        with pytest.raises(ValueError):
            homophily_distribution(path3, np.full(3, UNKNOWN), bins=5)


class TestSplitMasks:
    def test_validate_rejects_overlap(self):
        labels = np.array([0, 1, 0, 1])
        masks = SplitMasks(np.array([0, 1]), np.array([1, 2]), np.array([3]))
        with pytest.raises(ValueError):
            masks.validate(labels)

    def test_validate_requires_cover(self):
        labels = np.array([0, 1, 0, 1])
        masks = SplitMasks(np.array([0]), np.array([1]), np.array([2]))
        with pytest.raises(ValueError):
            masks.validate(labels)
