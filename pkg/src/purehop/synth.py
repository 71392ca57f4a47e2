"""Synthetic camouflage graphs: fraud rings whose members only ever touch
benign intermediaries, so direct neighborhoods look clean and the fraud
signal sits at a known hop depth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import MultiRelationGraph, build_graph


@dataclass(frozen=True)
class CamouflageSpec:
    """Generator description of planted fraud rings.

    Every fraud-fraud pair inside a ring is joined by a fresh path of
    ``depth`` benign intermediaries, so the pair's shortest-path distance is
    exactly ``depth + 1`` and (for depth >= 1) every fraud node's direct
    neighborhood is entirely benign.
    """

    n_benign: int = 300
    n_rings: int = 6
    ring_size: int = 3
    depth: int = 2
    benign_density: float = 2.0
    feature_dim: int = 16
    class_separation: float = 1.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_benign < 1 or self.n_rings < 1:
            raise ValueError("n_benign and n_rings must be >= 1")
        if self.ring_size < 2:
            raise ValueError("ring_size must be >= 2")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.class_separation < 0 or self.noise_sigma < 0:
            raise ValueError("class_separation and noise_sigma must be >= 0")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")


@dataclass(frozen=True)
class SynthSummary:
    """Analytic expectations acceptance checks rely on."""

    total_nodes: int
    n_fraud: int
    n_benign_backbone: int
    n_intermediaries: int
    fraud_pair_distance: int
    fraud_direct_homophily: float

    def format_lines(self) -> list[str]:
        return [
            f"total_nodes {self.total_nodes}",
            f"fraud_nodes {self.n_fraud}",
            f"benign_backbone {self.n_benign_backbone}",
            f"intermediaries {self.n_intermediaries}",
            f"fraud_pair_distance {self.fraud_pair_distance}",
            f"fraud_direct_homophily {self.fraud_direct_homophily!r}",
        ]


def describe(spec: CamouflageSpec) -> SynthSummary:
    pairs_per_ring = spec.ring_size * (spec.ring_size - 1) // 2
    n_fraud = spec.n_rings * spec.ring_size
    n_inter = spec.n_rings * pairs_per_ring * spec.depth
    return SynthSummary(
        total_nodes=spec.n_benign + n_fraud + n_inter,
        n_fraud=n_fraud,
        n_benign_backbone=spec.n_benign,
        n_intermediaries=n_inter,
        fraud_pair_distance=spec.depth + 1,
        fraud_direct_homophily=0.0 if spec.depth >= 1 else 1.0,
    )


def _backbone_edges(rng: np.random.Generator, n: int, density: float) -> list[tuple[int, int]]:
    """Random graph with about ``density`` edges per node (fixed edge count)."""
    target = int(round(n * density))
    target = min(target, n * (n - 1) // 2)
    edges: set[tuple[int, int]] = set()
    while len(edges) < target:
        draw = rng.integers(0, n, size=(max(4 * (target - len(edges)), 16), 2))
        for u, v in draw:
            if u == v:
                continue
            edges.add((min(u, v), max(u, v)))
            if len(edges) == target:
                break
    return sorted((int(u), int(v)) for u, v in edges)


def generate(spec: CamouflageSpec):
    """Build (graphs, features, labels) for a camouflage instance.

    Deterministic under ``spec.seed``. Node layout: benign backbone first,
    then ring members, then the per-pair path intermediaries.
    """
    rng = np.random.default_rng(spec.seed)
    edges = _backbone_edges(rng, spec.n_benign, spec.benign_density)

    summary = describe(spec)
    labels = np.zeros(summary.total_nodes, dtype=np.int64)
    rings = [
        list(range(spec.n_benign + r * spec.ring_size, spec.n_benign + (r + 1) * spec.ring_size))
        for r in range(spec.n_rings)
    ]
    labels[spec.n_benign : spec.n_benign + summary.n_fraud] = 1
    next_node = spec.n_benign + summary.n_fraud
    for ring in rings:
        for i in range(len(ring)):
            for j in range(i + 1, len(ring)):
                chain = [ring[i]]
                for _ in range(spec.depth):
                    chain.append(next_node)
                    next_node += 1
                chain.append(ring[j])
                edges.extend(zip(chain[:-1], chain[1:]))

    graph = build_graph(edges, summary.total_nodes, symmetrize=True)
    direction = rng.standard_normal(spec.feature_dim)
    direction /= np.linalg.norm(direction)
    means = np.where(
        labels[:, None] == 1,
        0.5 * spec.class_separation * direction,
        -0.5 * spec.class_separation * direction,
    )
    features = means + spec.noise_sigma * rng.standard_normal((summary.total_nodes, spec.feature_dim))
    graphs = MultiRelationGraph([graph], ["txn"])
    return graphs, features, labels
