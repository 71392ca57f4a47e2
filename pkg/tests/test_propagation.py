import warnings

import numpy as np
import pytest

from purehop.graph import build_graph, spmm
from purehop.propagation import (
    EXACT_HOP,
    HighOrderConfig,
    hop_rings,
    layerwise_homophily,
    propagate_features,
)
from purehop.synth import CamouflageSpec, generate

from conftest import dense_adjacency, dense_row_normalize, random_edges, shortest_path_matrix


def dense_walk_orders(a: np.ndarray, x: np.ndarray, layers: int) -> list[np.ndarray]:
    """Oracle: (A^l - A^(l-1) + I) X via explicit dense matrix powers."""
    eye = np.eye(a.shape[0])
    out = []
    for l in range(1, layers + 1):
        s = np.linalg.matrix_power(a, l) - np.linalg.matrix_power(a, l - 1) + eye
        out.append(s @ x)
    return out


class TestWalkCount:
    def test_raw_second_order_on_path(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        pf = propagate_features(g, np.array([[1.0], [0.0], [0.0]]), HighOrderConfig(2, normalized=False))
        assert pf.order(2).ravel().tolist() == [2.0, -1.0, 1.0]

    def test_normalized_second_order_on_path(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        pf = propagate_features(g, np.eye(3), HighOrderConfig(2, normalized=True))
        expected = np.array([[1.5, -1.0, 0.5], [-0.5, 2.0, -0.5], [0.5, -1.0, 1.5]])
        assert np.max(np.abs(pf.order(2) - expected)) <= 1e-12
        assert np.max(np.abs(pf.order(2).sum(axis=1) - 1.0)) <= 1e-12

    def test_first_order_equals_spmm(self):
        rng = np.random.default_rng(0)
        edges = random_edges(rng, 12, 0.3)
        g = build_graph(edges, 12)
        x = rng.standard_normal((12, 4))
        pf = propagate_features(g, x, HighOrderConfig(1, normalized=False))
        assert np.array_equal(pf.order(1), spmm(g, x))

    def test_matches_dense_power_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(2, 51))
            edges = random_edges(rng, n, rng.random() * 0.4)
            x = rng.standard_normal((n, 3))
            for normalized in (False, True):
                g = build_graph(edges, n)
                a = dense_adjacency(edges, n)
                if normalized:
                    a = dense_row_normalize(a)
                pf = propagate_features(g, x, HighOrderConfig(5, normalized=normalized))
                for l, want in enumerate(dense_walk_orders(a, x, 5), start=1):
                    # tolerance scales with magnitude: raw walk counts grow
                    # like degree^l, far beyond absolute 1e-10 resolution
                    scale = max(1.0, float(np.max(np.abs(want))))
                    assert np.max(np.abs(pf.order(l) - want)) <= 1e-10 * scale

    def test_ones_probe_stays_ones_at_depth_7(self):
        rng = np.random.default_rng(2)
        # a cycle plus random chords: no isolated nodes
        edges = random_edges(rng, 40, 0.2) + [(i, (i + 1) % 40) for i in range(40)]
        g = build_graph(edges, 40)
        pf = propagate_features(g, np.ones((40, 1)), HighOrderConfig(7, normalized=True))
        for l in range(1, 8):
            assert np.max(np.abs(pf.order(l) - 1.0)) <= 1e-12

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(4)
        edges = random_edges(rng, 25, 0.3)
        g = build_graph(edges, 25)
        x = rng.standard_normal((25, 6))
        cfg = HighOrderConfig(4)
        a = propagate_features(g, x, cfg)
        b = propagate_features(g, x, cfg)
        for l in range(1, 5):
            assert np.array_equal(a.order(l), b.order(l))

    def test_feature_shape_mismatch(self):
        g = build_graph([(0, 1)], 2)
        with pytest.raises(ValueError):
            propagate_features(g, np.ones((3, 2)), HighOrderConfig(1))


class TestHopRings:
    def test_path_rings(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        rings = hop_rings(g, 2)
        assert rings.members(1, 0).tolist() == [0, 1]
        assert rings.members(2, 0).tolist() == [0, 2]
        assert rings.members(1, 1).tolist() == [0, 1, 2]
        assert rings.members(2, 1).tolist() == [1]

    def test_clique_second_ring_is_self_only(self):
        g = build_graph([(0, 1), (1, 2), (0, 2)], 3)
        with pytest.warns(UserWarning):
            rings = hop_rings(g, 2)
        assert rings.members(2, 0).tolist() == [0]

    def test_matches_shortest_path_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(15):
            n = int(rng.integers(2, 51))
            edges = random_edges(rng, n, rng.random() * 0.3)
            g = build_graph(edges, n)
            dist = shortest_path_matrix(dense_adjacency(edges, n))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # sparse draws empty out early
                rings = hop_rings(g, 4)
            for v in range(n):
                for l in range(1, 5):
                    want = set(np.flatnonzero(dist[v] == l)) | {v}
                    assert set(rings.members(l, v)) == want

    def test_rings_partition_reachable_set(self):
        rng = np.random.default_rng(21)
        edges = random_edges(rng, 30, 0.15)
        g = build_graph(edges, 30)
        layers = 6
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rings = hop_rings(g, layers)
        dist = shortest_path_matrix(dense_adjacency(edges, 30))
        for v in range(30):
            seen = {v}
            for l in range(1, layers + 1):
                exact = set(rings.members(l, v)) - {v}
                assert not (exact & seen)
                seen |= exact
            reachable = set(np.flatnonzero(dist[v] <= layers))
            assert seen == reachable


class TestExactHopPropagation:
    def test_path_second_order_rows(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        pf = propagate_features(g, np.eye(3), HighOrderConfig(2, mode=EXACT_HOP))
        assert np.allclose(pf.order(2)[0], [0.5, 0.0, 0.5])
        assert np.allclose(pf.order(2)[1], [0.0, 1.0, 0.0])

    def test_matrices_are_row_stochastic(self):
        rng = np.random.default_rng(14)
        edges = random_edges(rng, 30, 0.2)
        g = build_graph(edges, 30)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pf = propagate_features(g, np.ones((30, 1)), HighOrderConfig(3, mode=EXACT_HOP))
        for l in range(1, 4):
            assert np.array_equal(pf.order(l), np.ones((30, 1)))


class TestLayerwiseHomophily:
    def test_first_layer_mixed_equals_decoupled(self):
        rng = np.random.default_rng(6)
        edges = random_edges(rng, 20, 0.3)
        g = build_graph(edges, 20)
        labels = rng.integers(0, 2, size=20)
        labels[:2] = 1
        lw = layerwise_homophily(g, labels, 3)
        assert np.array_equal(lw.mixed[0], lw.decoupled[0], equal_nan=True)

    def test_same_label_clique_first_layer_is_one(self):
        edges = [(u, v) for u in range(4) for v in range(u + 1, 4)]
        lw = layerwise_homophily(build_graph(edges, 4), np.ones(4, dtype=int), 1)
        assert lw.mean_mixed(1) == 1.0
        assert lw.mean_decoupled(1) == 1.0

    def test_camouflage_decoupled_beats_mixed_at_planted_depth(self):
        spec = CamouflageSpec(n_benign=120, n_rings=5, ring_size=3, depth=3, seed=2)
        graphs, _, labels = generate(spec)
        lw = layerwise_homophily(graphs.relations[0], labels, spec.depth + 1)
        at = spec.depth + 1
        assert lw.mean_decoupled(at) > lw.mean_mixed(at)
