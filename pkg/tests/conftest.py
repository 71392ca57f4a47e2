import numpy as np
import pytest

from purehop.graph import MultiRelationGraph, RelationGraph, build_graph


def random_edges(rng: np.random.Generator, n: int, density: float = 0.25):
    """Undirected edge list without self-loops, one entry per pair."""
    mask = rng.random((n, n)) < density
    mask = np.triu(mask, 1)
    return list(zip(*np.nonzero(mask)))


def dense_adjacency(edges, n: int) -> np.ndarray:
    """Independent dense oracle built straight from the edge list."""
    a = np.zeros((n, n))
    for u, v in edges:
        if u != v:
            a[u, v] = 1.0
            a[v, u] = 1.0
    return a


def dense_row_normalize(a: np.ndarray) -> np.ndarray:
    sums = a.sum(axis=1, keepdims=True)
    out = np.divide(a, sums, out=np.zeros_like(a), where=sums > 0)
    return out


def shortest_path_matrix(a: np.ndarray) -> np.ndarray:
    """Floyd-Warshall oracle; unreachable pairs get a large sentinel."""
    n = a.shape[0]
    inf = n + 10
    d = np.where(a > 0, 1, inf)
    np.fill_diagonal(d, 0)
    for k in range(n):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d


@pytest.fixture
def path3() -> RelationGraph:
    return build_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def triangle() -> RelationGraph:
    return build_graph([(0, 1), (1, 2), (0, 2)], 3)


def small_multigraph(seed: int = 0, n: int = 6, relations: int = 2) -> MultiRelationGraph:
    rng = np.random.default_rng(seed)
    rels = [build_graph(random_edges(rng, n, 0.5), n) for _ in range(relations)]
    return MultiRelationGraph(rels, [f"r{i}" for i in range(relations)])
