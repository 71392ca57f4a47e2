"""Sparse relation graphs in CSR form, sparse-dense products, and homophily.

All structures are immutable after construction (backing arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: Label value for nodes without a known class.
UNKNOWN = -1

#: Classes used throughout: 0 = benign, 1 = fraud.
CLASSES = (0, 1)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RelationGraph:
    """One relation's adjacency stored as CSR arrays.

    ``indptr`` has length ``n + 1``; ``indices``/``values`` have one entry per
    directed edge. Column indices are strictly increasing within each row.
    ``normalized`` indicates every nonempty row's values sum to 1 (the machine
    row sum is exactly 1.0, see :func:`row_normalize`).
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "indptr", _freeze(np.ascontiguousarray(self.indptr, dtype=np.int64)))
        object.__setattr__(self, "indices", _freeze(np.ascontiguousarray(self.indices, dtype=np.int64)))
        object.__setattr__(self, "values", _freeze(np.ascontiguousarray(self.values, dtype=np.float64)))

    @property
    def num_edges(self) -> int:
        """Number of stored (directed) entries."""
        return int(self.indices.shape[0])

    def row(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``v``."""
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def validate(self) -> None:
        """Check the CSR invariants, raising ``ValueError`` on violation."""
        if self.indptr.shape != (self.n + 1,):
            raise ValueError("indptr must have length n + 1")
        if self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 0):
            raise ValueError("row offsets must be non-decreasing and start at 0")
        if self.indptr[-1] != self.num_edges:
            raise ValueError("last offset must equal the entry count")
        if self.num_edges and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise ValueError("column index out of range")
        for v in range(self.n):
            cols, _ = self.row(v)
            if cols.size > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {v} columns are not strictly increasing")
        if self.normalized:
            sums = _row_sums(self)
            nonempty = np.diff(self.indptr) > 0
            if np.any(np.abs(sums[nonempty] - 1.0) > 1e-12):
                raise ValueError("normalized graph has a row sum off 1 by more than 1e-12")

    def transpose(self) -> "RelationGraph":
        """CSR of the transposed matrix (same structure for symmetric graphs,
        but values move with their entries)."""
        order = np.argsort(self.indices, kind="stable")
        row_of_entry = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        t_indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.indices, minlength=self.n), out=t_indptr[1:])
        return RelationGraph(
            n=self.n,
            indptr=t_indptr,
            indices=row_of_entry[order],
            values=self.values[order],
            normalized=False,
        )


@dataclass(frozen=True)
class MultiRelationGraph:
    """Ordered list of relations over a shared node set."""

    relations: list[RelationGraph]
    names: list[str]

    def __post_init__(self) -> None:
        if not self.relations:
            raise ValueError("at least one relation is required")
        if len(self.relations) != len(self.names):
            raise ValueError("one name per relation is required")
        n = self.relations[0].n
        if any(g.n != n for g in self.relations):
            raise ValueError("all relations must share the same node count")

    @property
    def n(self) -> int:
        return self.relations[0].n

    @property
    def num_relations(self) -> int:
        return len(self.relations)


def build_graph(edge_list, n: int, symmetrize: bool = True) -> RelationGraph:
    """Build a binary CSR adjacency from (u, v) pairs.

    Rows come out sorted and deduplicated; self-loops in the input are
    dropped (self-contribution is handled explicitly downstream). With
    ``symmetrize`` every edge is stored in both directions.
    """
    edges = np.asarray(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if edges.size:
        bad = (edges < 0) | (edges >= n)
        if bad.any():
            u, v = edges[bad.any(axis=1)][0]
            raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
    keep = edges[:, 0] != edges[:, 1] if edges.size else np.zeros(0, dtype=bool)
    edges = edges[keep]
    if symmetrize and edges.size:
        edges = np.concatenate([edges, edges[:, ::-1]], axis=0)
    if edges.size:
        # unique row-major pairs: sort by (u, v), then dedupe
        key = edges[:, 0] * n + edges[:, 1]
        key = np.unique(key)
        rows, cols = key // n, key % n
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return RelationGraph(n=n, indptr=indptr, indices=cols, values=np.ones(cols.shape[0]))


def _row_sums(g: RelationGraph) -> np.ndarray:
    """Row sums computed through the same reduction spmm uses."""
    return spmm(g, np.ones((g.n, 1)))[:, 0]


def row_normalize(g: RelationGraph) -> RelationGraph:
    """Rescale each nonempty row to sum to 1; zero rows stay zero.

    The last entry of every nonempty row is nudged (by at most a few ulp) so
    that the machine row sum -- as computed by :func:`spmm` -- is exactly 1.0.
    This makes the all-ones probe return the nonempty-row indicator exactly
    and is idempotent bit for bit.
    """
    lengths = np.diff(g.indptr)
    values = g.values.copy()
    sums = _row_sums(g)
    nonempty = lengths > 0
    if np.any(sums[nonempty] == 0.0):
        raise ValueError("cannot normalize a row whose values sum to zero")
    scale = np.ones(g.n)
    scale[nonempty] = 1.0 / sums[nonempty]
    values *= np.repeat(scale, lengths)
    out = RelationGraph(g.n, g.indptr, g.indices, values, normalized=True)
    last = g.indptr[1:][nonempty] - 1
    for _ in range(8):
        resid = 1.0 - _row_sums(out)[nonempty]
        if not resid.any():
            break
        values = out.values.copy()
        values[last] += resid
        out = RelationGraph(g.n, g.indptr, g.indices, values, normalized=True)
    return out


def spmm(g: RelationGraph, dense: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``A @ X`` in O(m * d).

    Per-row reductions run in a fixed deterministic order, so results are
    bitwise reproducible.
    """
    dense = np.asarray(dense, dtype=np.float64)
    squeeze = dense.ndim == 1
    if squeeze:
        dense = dense[:, None]
    if dense.shape[0] != g.n:
        raise ValueError(f"dense operand has {dense.shape[0]} rows, graph has {g.n} nodes")
    out = np.zeros((g.n, dense.shape[1]))
    if g.num_edges:
        prod = g.values[:, None] * dense[g.indices]
        starts = g.indptr[:-1]
        nonempty = np.flatnonzero(np.diff(g.indptr) > 0)
        if nonempty.size:
            out[nonempty] = np.add.reduceat(prod, starts[nonempty], axis=0)
    return out[:, 0] if squeeze else out


def validate_labels(labels: np.ndarray, n: int) -> np.ndarray:
    """Coerce to an int64 vector of {-1, 0, 1} of length n."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},)")
    ok = np.isin(labels, (UNKNOWN,) + CLASSES)
    if not ok.all():
        raise ValueError(f"label {labels[~ok][0]} is not in {{-1, 0, 1}}")
    return labels


@dataclass(frozen=True)
class SplitMasks:
    """Disjoint train/val/test node-index sets covering the labeled nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, labels: np.ndarray) -> None:
        parts = [np.asarray(p) for p in (self.train, self.val, self.test)]
        merged = np.concatenate(parts)
        if merged.size != np.unique(merged).size:
            raise ValueError("split masks overlap")
        labeled = np.flatnonzero(labels != UNKNOWN)
        if not np.array_equal(np.sort(merged), labeled):
            raise ValueError("split masks must cover exactly the labeled nodes")


def node_homophily(g: RelationGraph, labels: np.ndarray, v: int) -> float:
    """Fraction of v's labeled neighbors sharing v's label.

    Unlabeled neighbors are excluded from numerator and denominator. Returns
    ``nan`` when v has no labeled neighbors (including isolated nodes).
    """
    if labels[v] == UNKNOWN:
        raise ValueError(f"node {v} is unlabeled")
    cols, _ = g.row(v)
    neigh = labels[cols]
    labeled = neigh != UNKNOWN
    if not labeled.any():
        return math.nan
    return float(np.count_nonzero(neigh[labeled] == labels[v]) / np.count_nonzero(labeled))


def homophily_values(g: RelationGraph, labels: np.ndarray) -> np.ndarray:
    """Per-node homophily; nan for unlabeled nodes and undefined neighborhoods."""
    out = np.full(g.n, np.nan)
    for v in range(g.n):
        if labels[v] != UNKNOWN:
            out[v] = node_homophily(g, labels, v)
    return out


@dataclass(frozen=True)
class HomophilyReport:
    """Per-class histograms of node homophily over fixed-width [0, 1] bins."""

    values: np.ndarray
    bin_edges: np.ndarray
    histograms: dict[int, np.ndarray]
    defined_counts: dict[int, int]
    undefined_counts: dict[int, int]
    class_means: dict[int, float] = field(default_factory=dict)


def homophily_distribution(g: RelationGraph, labels: np.ndarray, bins: int = 10) -> HomophilyReport:
    """Histogram the defined per-node homophily values for each class."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    labels = validate_labels(labels, g.n)
    if not np.any(labels != UNKNOWN):
        raise ValueError("no labeled nodes")
    values = homophily_values(g, labels)
    edges = np.linspace(0.0, 1.0, bins + 1)
    histograms, defined, undefined, means = {}, {}, {}, {}
    for c in CLASSES:
        is_c = labels == c
        vals = values[is_c]
        ok = ~np.isnan(vals)
        histograms[c] = np.histogram(vals[ok], bins=edges)[0]
        defined[c] = int(np.count_nonzero(ok))
        undefined[c] = int(np.count_nonzero(is_c) - defined[c])
        means[c] = float(vals[ok].mean()) if ok.any() else math.nan
    return HomophilyReport(values, edges, histograms, defined, undefined, means)
