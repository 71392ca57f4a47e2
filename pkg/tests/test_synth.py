import numpy as np
import pytest

from purehop.graph import node_homophily
from purehop.propagation import hop_rings
from purehop.synth import CamouflageSpec, describe, generate

from conftest import dense_adjacency, shortest_path_matrix


def graph_edges(g):
    return [(u, int(v)) for u in range(g.n) for v in g.row(u)[0] if v > u]


class TestGenerate:
    def test_depth_one_fraud_homophily_exactly_zero(self):
        spec = CamouflageSpec(n_benign=60, n_rings=4, ring_size=2, depth=1, seed=1)
        graphs, _, labels = generate(spec)
        g = graphs.relations[0]
        for v in np.flatnonzero(labels == 1):
            assert node_homophily(g, labels, int(v)) == 0.0

    def test_depth_zero_connects_rings_directly(self):
        spec = CamouflageSpec(n_benign=40, n_rings=3, ring_size=3, depth=0, seed=2)
        graphs, _, labels = generate(spec)
        g = graphs.relations[0]
        for v in np.flatnonzero(labels == 1):
            assert node_homophily(g, labels, int(v)) > 0.0

    def test_fraud_pair_distance_matches_depth(self):
        spec = CamouflageSpec(n_benign=50, n_rings=3, ring_size=3, depth=3, seed=3)
        graphs, _, labels = generate(spec)
        g = graphs.relations[0]
        dist = shortest_path_matrix(dense_adjacency(graph_edges(g), g.n))
        fraud = np.flatnonzero(labels == 1)
        rings = fraud.reshape(spec.n_rings, spec.ring_size)
        for ring in rings:
            for i, u in enumerate(ring):
                for v in ring[i + 1 :]:
                    assert dist[u, v] == spec.depth + 1

    def test_ring_partners_appear_in_hop_ring(self):
        spec = CamouflageSpec(n_benign=40, n_rings=2, ring_size=3, depth=2, seed=4)
        graphs, _, labels = generate(spec)
        rings = hop_rings(graphs.relations[0], spec.depth + 1)
        fraud = np.flatnonzero(labels == 1)
        ring0 = set(fraud[: spec.ring_size])
        for v in ring0:
            members = set(rings.members(spec.depth + 1, int(v)))
            assert ring0 <= members | {v}
            assert (ring0 - {v}) <= members

    def test_deterministic_under_seed(self):
        spec = CamouflageSpec(seed=9)
        g1, x1, y1 = generate(spec)
        g2, x2, y2 = generate(spec)
        assert np.array_equal(x1, x2)
        assert np.array_equal(y1, y2)
        assert np.array_equal(g1.relations[0].indices, g2.relations[0].indices)

    def test_feature_means_separate_along_class_direction(self):
        spec = CamouflageSpec(n_benign=400, n_rings=20, ring_size=3, depth=1,
                              class_separation=3.0, noise_sigma=1.0, seed=5)
        _, x, y = generate(spec)
        gap = x[y == 1].mean(axis=0) - x[y == 0].mean(axis=0)
        assert 2.0 <= float(np.linalg.norm(gap)) <= 4.0

    def test_intermediaries_are_benign_labeled(self):
        spec = CamouflageSpec(n_benign=30, n_rings=2, ring_size=2, depth=2, seed=6)
        _, _, labels = generate(spec)
        info = describe(spec)
        inter = labels[spec.n_benign + info.n_fraud :]
        assert inter.size == info.n_intermediaries
        assert np.all(inter == 0)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            CamouflageSpec(ring_size=1)
        with pytest.raises(ValueError):
            CamouflageSpec(depth=-1)


class TestDescribe:
    @pytest.mark.parametrize("depth,distance", [(0, 1), (1, 2), (4, 5)])
    def test_reported_distance(self, depth, distance):
        spec = CamouflageSpec(depth=depth)
        assert describe(spec).fraud_pair_distance == distance

    def test_counts(self):
        spec = CamouflageSpec(n_benign=100, n_rings=4, ring_size=3, depth=2)
        info = describe(spec)
        assert info.n_fraud == 12
        assert info.n_intermediaries == 4 * 3 * 2
        assert info.total_nodes == 100 + 12 + 24
        assert info.fraud_direct_homophily == 0.0

    def test_depth_zero_homophily_is_one(self):
        assert describe(CamouflageSpec(depth=0)).fraud_direct_homophily == 1.0
