"""The detection network.

Per relation, two branches run side by side:

* an expert branch with one linear+ReLU expert per propagation order,
  combined through a per-node softmax gate;
* a mean-aggregator branch over the original graph that concatenates each
  node's own representation with its neighbors' mean before a linear+ReLU.

The branches are fused per relation as ``h + gamma * h_mix``, the fused
vectors are concatenated across relations, and an MLP head produces a single
fraud logit per node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import MultiRelationGraph, RelationGraph, row_normalize, spmm
from .propagation import PropagatedFeatures


@dataclass
class RelationParams:
    expert_weights: list[np.ndarray]  # order l: (d_in, d_hidden)
    gate_weights: np.ndarray  # (orders, d_hidden)
    gate_bias: np.ndarray  # (orders,)
    agg_weights: list[np.ndarray]  # layer k: (2 * d_prev, d_hidden)


@dataclass
class ModelParams:
    """All learnable tensors plus the fixed fusion weight gamma.

    ``version`` increments on every optimizer step so stale forward traces
    can be detected.
    """

    relations: list[RelationParams]
    head_weights: list[np.ndarray]
    head_biases: list[np.ndarray]
    gamma: float
    version: int = 0

    @property
    def orders(self) -> int:
        return len(self.relations[0].expert_weights)

    @property
    def agg_depth(self) -> int:
        return len(self.relations[0].agg_weights)

    @property
    def hidden_dim(self) -> int:
        return self.relations[0].gate_weights.shape[1]

    def named_arrays(self):
        """(name, array) pairs in canonical order; gamma is not trainable."""
        for r, rel in enumerate(self.relations):
            for l, w in enumerate(rel.expert_weights, start=1):
                yield f"rel{r}.expert{l}.w", w
            yield f"rel{r}.gate.w", rel.gate_weights
            yield f"rel{r}.gate.b", rel.gate_bias
            for k, w in enumerate(rel.agg_weights, start=1):
                yield f"rel{r}.agg{k}.w", w
        for i, (w, b) in enumerate(zip(self.head_weights, self.head_biases)):
            yield f"head{i}.w", w
            yield f"head{i}.b", b

    def copy(self) -> "ModelParams":
        return ModelParams(
            relations=[
                RelationParams(
                    expert_weights=[w.copy() for w in rel.expert_weights],
                    gate_weights=rel.gate_weights.copy(),
                    gate_bias=rel.gate_bias.copy(),
                    agg_weights=[w.copy() for w in rel.agg_weights],
                )
                for rel in self.relations
            ],
            head_weights=[w.copy() for w in self.head_weights],
            head_biases=[b.copy() for b in self.head_biases],
            gamma=self.gamma,
            version=self.version,
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    seed_or_rng,
    *,
    in_dim: int,
    hidden_dim: int,
    orders: int,
    agg_depth: int,
    num_relations: int,
    mlp_hidden: tuple[int, ...] = (64,),
    gamma: float = 1.0,
) -> ModelParams:
    """Glorot-uniform weights, zero biases, drawn in canonical order."""
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    relations = []
    for _ in range(num_relations):
        experts = [_glorot(rng, in_dim, hidden_dim, (in_dim, hidden_dim)) for _ in range(orders)]
        gate_w = np.stack([_glorot(rng, hidden_dim, 1, (hidden_dim,)) for _ in range(orders)])
        gate_b = np.zeros(orders)
        agg = []
        d_prev = in_dim
        for _ in range(agg_depth):
            agg.append(_glorot(rng, 2 * d_prev, hidden_dim, (2 * d_prev, hidden_dim)))
            d_prev = hidden_dim
        relations.append(RelationParams(experts, gate_w, gate_b, agg))
    head_w, head_b = [], []
    d_prev = num_relations * hidden_dim
    for width in tuple(mlp_hidden) + (1,):
        head_w.append(_glorot(rng, d_prev, width, (d_prev, width)))
        head_b.append(np.zeros(width))
        d_prev = width
    return ModelParams(relations, head_w, head_b, gamma=float(gamma))


@dataclass(frozen=True)
class PreparedGraphs:
    """Row-normalized adjacencies and their transposes, built once."""

    source: MultiRelationGraph
    normalized: list[RelationGraph]
    transposed: list[RelationGraph]

    @property
    def n(self) -> int:
        return self.source.n


def prepare_graphs(graphs: MultiRelationGraph) -> PreparedGraphs:
    norm = [g if g.normalized else row_normalize(g) for g in graphs.relations]
    return PreparedGraphs(source=graphs, normalized=norm, transposed=[g.transpose() for g in norm])


@dataclass
class RelationTrace:
    expert_post: list[np.ndarray]
    gate_scores: np.ndarray
    alpha: np.ndarray
    mixed: np.ndarray | None
    agg_inputs: list[np.ndarray]
    agg_neighbor: list[np.ndarray]
    agg_relu: list[np.ndarray]
    agg_drop: list[np.ndarray | None]
    agg_out: np.ndarray


@dataclass
class ForwardTrace:
    """Everything the reverse pass needs, including input references."""

    relations: list[RelationTrace]
    concat: np.ndarray
    head_inputs: list[np.ndarray]
    head_relu: list[np.ndarray]
    head_drop: list[np.ndarray | None]
    logits: np.ndarray
    probs: np.ndarray
    train_mode: bool
    caches: list[PropagatedFeatures] = field(repr=False, default_factory=list)
    graphs: PreparedGraphs | None = field(repr=False, default=None)
    params_version: int = 0


def expert_forward(caches: PropagatedFeatures, params: ModelParams, r: int) -> list[np.ndarray]:
    """Per-order expert activations ReLU(P_l @ W_l) for relation r."""
    rel = params.relations[r]
    return [np.maximum(caches.order(l + 1) @ w, 0.0) for l, w in enumerate(rel.expert_weights)]


def gate_and_mix(expert_post: list[np.ndarray], params: ModelParams, r: int):
    """Softmax gate over per-order experts; returns (alpha, mixed, scores)."""
    rel = params.relations[r]
    scores = np.stack(
        [h @ rel.gate_weights[l] + rel.gate_bias[l] for l, h in enumerate(expert_post)], axis=1
    )
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    alpha = e / e.sum(axis=1, keepdims=True)
    mixed = np.zeros_like(expert_post[0])
    for l, h in enumerate(expert_post):
        mixed += alpha[:, l : l + 1] * h
    return alpha, mixed, scores


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _sage_forward(
    g_norm: RelationGraph,
    features: np.ndarray,
    rel: RelationParams,
    *,
    train_mode: bool,
    dropout_rate: float,
    rng: np.random.Generator | None,
) -> RelationTrace:
    """Mean-aggregator branch; fills only the aggregator fields of the trace."""
    h = features
    inputs, neighbors, relus, drops = [], [], [], []
    for w in rel.agg_weights:
        neigh = spmm(g_norm, h)  # zero rows for isolated nodes
        pre = np.concatenate([h, neigh], axis=1) @ w
        post = np.maximum(pre, 0.0)
        mask = pre > 0.0
        if train_mode and dropout_rate > 0.0:
            drop = _dropout_mask(rng, post.shape, dropout_rate)
            post = post * drop
        else:
            drop = None
        inputs.append(h)
        neighbors.append(neigh)
        relus.append(mask)
        drops.append(drop)
        h = post
    return RelationTrace(
        expert_post=[],
        gate_scores=np.zeros((features.shape[0], 0)),
        alpha=np.zeros((features.shape[0], 0)),
        mixed=None,
        agg_inputs=inputs,
        agg_neighbor=neighbors,
        agg_relu=relus,
        agg_drop=drops,
        agg_out=h,
    )


def sage_forward(g: RelationGraph, features: np.ndarray, params: ModelParams, r: int, depth: int | None = None) -> np.ndarray:
    """Inference-mode aggregator branch output for relation r."""
    rel = params.relations[r]
    if depth is not None and depth != len(rel.agg_weights):
        raise ValueError("depth does not match the parameter stack")
    g_norm = g if g.normalized else row_normalize(g)
    trace = _sage_forward(g_norm, np.asarray(features, dtype=np.float64), rel, train_mode=False, dropout_rate=0.0, rng=None)
    return trace.agg_out


def fuse_and_concat(h_per_relation: list[np.ndarray], mixed_per_relation: list[np.ndarray | None], params: ModelParams) -> np.ndarray:
    """Per relation h + gamma * h_mix, concatenated in relation order."""
    fused = []
    for h, hp in zip(h_per_relation, mixed_per_relation):
        if h.shape[1] != params.hidden_dim:
            raise ValueError("relation output width does not match hidden_dim")
        fused.append(h if hp is None else h + params.gamma * hp)
    return np.concatenate(fused, axis=1)


def _head_forward(
    z: np.ndarray,
    params: ModelParams,
    *,
    train_mode: bool,
    dropout_rate: float,
    rng: np.random.Generator | None,
):
    inputs, relus, drops = [], [], []
    a = z
    last = len(params.head_weights) - 1
    for i, (w, b) in enumerate(zip(params.head_weights, params.head_biases)):
        inputs.append(a)
        pre = a @ w + b
        if i == last:
            logits = pre[:, 0]
            break
        a = np.maximum(pre, 0.0)
        relus.append(pre > 0.0)
        if train_mode and dropout_rate > 0.0:
            drop = _dropout_mask(rng, a.shape, dropout_rate)
            a = a * drop
        else:
            drop = None
        drops.append(drop)
    probs = _sigmoid(logits)
    return inputs, relus, drops, logits, probs


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def predict(z: np.ndarray, params: ModelParams) -> np.ndarray:
    """Inference-mode head probabilities for fused embeddings ``z``."""
    *_, probs = _head_forward(z, params, train_mode=False, dropout_rate=0.0, rng=None)
    return probs


def forward_full(
    graphs: MultiRelationGraph | PreparedGraphs,
    features: np.ndarray,
    caches: list[PropagatedFeatures],
    params: ModelParams,
    *,
    train_mode: bool = False,
    dropout_rate: float = 0.0,
    dropout_seed: int = 0,
) -> ForwardTrace:
    """Full forward pass; deterministic given (params, inputs, seed, mode).

    With gamma == 0 the expert branch is skipped entirely, which is exactly
    the aggregator-only model.
    """
    prepared = graphs if isinstance(graphs, PreparedGraphs) else prepare_graphs(graphs)
    features = np.asarray(features, dtype=np.float64)
    if len(caches) != len(prepared.normalized):
        raise ValueError("one propagation cache per relation is required")
    rng = np.random.default_rng(dropout_seed) if train_mode and dropout_rate > 0.0 else None
    rel_traces: list[RelationTrace] = []
    h_list: list[np.ndarray] = []
    mixed_list: list[np.ndarray | None] = []
    for r, g_norm in enumerate(prepared.normalized):
        trace = _sage_forward(
            g_norm, features, params.relations[r], train_mode=train_mode, dropout_rate=dropout_rate, rng=rng
        )
        if params.gamma != 0.0:
            trace.expert_post = expert_forward(caches[r], params, r)
            trace.alpha, trace.mixed, trace.gate_scores = gate_and_mix(trace.expert_post, params, r)
        rel_traces.append(trace)
        h_list.append(trace.agg_out)
        mixed_list.append(trace.mixed)
    z = fuse_and_concat(h_list, mixed_list, params)
    head_inputs, head_relu, head_drop, logits, probs = _head_forward(
        z, params, train_mode=train_mode, dropout_rate=dropout_rate, rng=rng
    )
    return ForwardTrace(
        relations=rel_traces,
        concat=z,
        head_inputs=head_inputs,
        head_relu=head_relu,
        head_drop=head_drop,
        logits=logits,
        probs=probs,
        train_mode=train_mode,
        caches=list(caches),
        graphs=prepared,
        params_version=params.version,
    )
