"""Loss, reverse-mode gradients, Adam with decoupled weight decay, and the
train/validate/select loop."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .graph import MultiRelationGraph, SplitMasks, build_graph, spmm
from .metrics import EvalResult, evaluate
from .model import (
    ForwardTrace,
    ModelParams,
    forward_full,
    init_params,
    prepare_graphs,
)
from .propagation import WALK_COUNT, HighOrderConfig, PropagatedFeatures, propagate_features

PROB_CLAMP = 1e-12


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a gradient stops being finite."""

    def __init__(self, message: str, reports: list["EpochReport"] | None = None):
        super().__init__(message)
        self.reports = reports or []


class StaleTrace(RuntimeError):
    """Raised when backward() gets a trace from an older parameter version."""


@dataclass
class TrainConfig:
    lr: float = 5e-3
    weight_decay: float = 5e-5
    epochs: int = 1000
    eval_every: int = 10
    batch_size: int | None = 2048  # None = all labeled train nodes
    dropout: float = 0.3
    layers: int = 7
    agg_depth: int = 2
    hidden_dim: int = 64
    mlp_hidden: tuple[int, ...] = (64,)
    gamma: float = 1.0
    seed: int = 0
    selection_metric: str = "auc"
    mode: str = WALK_COUNT
    normalized: bool = True
    threshold: float = 0.5
    class_weighting: bool = False

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.gamma < 0.0:
            raise ValueError("gamma must be non-negative")
        if self.selection_metric != "auc":
            raise ValueError("only selection by validation AUC is supported")

    def propagation_config(self) -> HighOrderConfig:
        return HighOrderConfig(layers=self.layers, mode=self.mode, normalized=self.normalized)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.named_arrays()},
            v={name: np.zeros_like(arr) for name, arr in params.named_arrays()},
        )


@dataclass
class EpochReport:
    epoch: int
    loss_sum: float
    loss_mean: float
    val: EvalResult | None
    seconds: float

    def format_line(self) -> str:
        parts = [f"epoch={self.epoch}", f"loss_sum={self.loss_sum!r}", f"loss_mean={self.loss_mean!r}"]
        if self.val is not None:
            parts += [
                f"val_auc={self.val.auc!r}",
                f"val_f1_macro={self.val.f1_macro!r}",
                f"val_gmean={self.val.gmean!r}",
            ]
        parts.append(f"seconds={self.seconds:.3f}")
        return " ".join(parts)


@dataclass
class Checkpoint:
    params: ModelParams
    config: TrainConfig
    best_epoch: int | None
    val: EvalResult | None


def _node_weights(y: np.ndarray, node_set: np.ndarray, class_weighting: bool) -> np.ndarray:
    w = np.ones(node_set.size)
    if class_weighting:
        pos = y[node_set] == 1
        n_pos = int(np.count_nonzero(pos))
        n_neg = node_set.size - n_pos
        if n_pos:
            w[pos] = n_neg / n_pos
    return w


def bce_loss(probs: np.ndarray, y: np.ndarray, node_set: np.ndarray, *, class_weighting: bool = False) -> float:
    """Summed binary cross-entropy over ``node_set`` (probabilities clamped)."""
    node_set = np.asarray(node_set, dtype=np.int64)
    if node_set.size == 0:
        raise ValueError("node_set is empty")
    p = np.clip(probs[node_set], PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = y[node_set]
    w = _node_weights(y, node_set, class_weighting)
    return float(-(w * (t * np.log(p) + (1 - t) * np.log(1.0 - p))).sum())


def backward(trace: ForwardTrace, y: np.ndarray, node_set: np.ndarray, params: ModelParams, *, class_weighting: bool = False) -> dict[str, np.ndarray]:
    """Exact gradients of the summed BCE loss w.r.t. every trainable array.

    Dropout masks recorded in the trace are reused, so this differentiates
    the exact function the forward pass computed.
    """
    if trace.params_version != params.version:
        raise StaleTrace("trace was computed for an older parameter version")
    node_set = np.asarray(node_set, dtype=np.int64)
    grads = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
    n = trace.probs.shape[0]

    d_logit = np.zeros(n)
    w = _node_weights(y, node_set, class_weighting)
    d_logit[node_set] = w * (trace.probs[node_set] - y[node_set])

    # MLP head
    last = len(params.head_weights) - 1
    d_a = d_logit[:, None]
    for i in range(last, -1, -1):
        if i == last:
            d_pre = d_a
        else:
            d_post = d_a
            if trace.head_drop[i] is not None:
                d_post = d_post * trace.head_drop[i]
            d_pre = d_post * trace.head_relu[i]
        grads[f"head{i}.w"] += trace.head_inputs[i].T @ d_pre
        grads[f"head{i}.b"] += d_pre.sum(axis=0)
        d_a = d_pre @ params.head_weights[i].T
    d_z = d_a

    d_h = params.hidden_dim
    for r, rel in enumerate(params.relations):
        rel_trace = trace.relations[r]
        d_fused = d_z[:, r * d_h : (r + 1) * d_h]
        # expert branch (skipped when gamma == 0: its gradients are zero)
        if params.gamma != 0.0 and rel_trace.mixed is not None:
            d_mixed = params.gamma * d_fused
            alpha = rel_trace.alpha
            d_alpha = np.stack([
                (d_mixed * h).sum(axis=1) for h in rel_trace.expert_post
            ], axis=1)
            inner = (alpha * d_alpha).sum(axis=1, keepdims=True)
            d_scores = alpha * (d_alpha - inner)
            for l, h_post in enumerate(rel_trace.expert_post):
                d_hl = alpha[:, l : l + 1] * d_mixed
                d_hl += d_scores[:, l : l + 1] * rel.gate_weights[l][None, :]
                grads[f"rel{r}.gate.w"][l] += h_post.T @ d_scores[:, l]
                grads[f"rel{r}.gate.b"][l] += d_scores[:, l].sum()
                d_pre = d_hl * (h_post > 0.0)
                grads[f"rel{r}.expert{l + 1}.w"] += trace.caches[r].order(l + 1).T @ d_pre
        # aggregator branch
        d_hk = d_fused
        for k in range(len(rel.agg_weights) - 1, -1, -1):
            if rel_trace.agg_drop[k] is not None:
                d_hk = d_hk * rel_trace.agg_drop[k]
            d_pre = d_hk * rel_trace.agg_relu[k]
            cat = np.concatenate([rel_trace.agg_inputs[k], rel_trace.agg_neighbor[k]], axis=1)
            grads[f"rel{r}.agg{k + 1}.w"] += cat.T @ d_pre
            d_cat = d_pre @ rel.agg_weights[k].T
            d_prev = rel_trace.agg_inputs[k].shape[1]
            if k > 0:
                d_hk = d_cat[:, :d_prev] + spmm(trace.graphs.transposed[r], d_cat[:, d_prev:])
    return grads


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig):
    """One Adam update with decoupled weight decay, applied in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, arr in params.named_arrays():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in parameter {name}")
        if cfg.weight_decay:
            arr *= 1.0 - cfg.lr * cfg.weight_decay
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        arr -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.version += 1
    return params, state


def stratified_split(labels: np.ndarray, fractions=(0.4, 0.4, 0.2), seed: int = 0) -> SplitMasks:
    """Per-class proportional split; rounding residue goes to test."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three values summing to 1")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        if idx.size < 3:
            raise ValueError(f"class {c} has {idx.size} labeled nodes, need at least 3")
        idx = rng.permutation(idx)
        n_train = int(fractions[0] * idx.size)
        n_val = int(fractions[1] * idx.size)
        train.append(idx[:n_train])
        val.append(idx[n_train : n_train + n_val])
        test.append(idx[n_train + n_val :])
    masks = SplitMasks(
        train=np.sort(np.concatenate(train)),
        val=np.sort(np.concatenate(val)),
        test=np.sort(np.concatenate(test)),
    )
    masks.validate(labels)
    return masks


def build_caches(graphs: MultiRelationGraph, features: np.ndarray, cfg: TrainConfig) -> list[PropagatedFeatures]:
    pcfg = cfg.propagation_config()
    return [propagate_features(g, features, pcfg) for g in graphs.relations]


def train(
    graphs: MultiRelationGraph,
    features: np.ndarray,
    labels: np.ndarray,
    masks: SplitMasks,
    cfg: TrainConfig,
) -> tuple[Checkpoint, list[EpochReport]]:
    """Full-graph training with periodic validation and best-AUC selection.

    Each epoch runs one optimizer step whose loss sums over a seeded random
    subset of train nodes of size ``batch_size`` (all of them when None).
    Ties in validation AUC keep the earlier epoch.
    """
    features = np.asarray(features, dtype=np.float64)
    masks.validate(labels)
    prepared = prepare_graphs(graphs)
    caches = build_caches(graphs, features, cfg)
    if any(c.layers != cfg.layers for c in caches):
        raise ValueError("cache layer count does not match the configuration")

    init_ss, batch_ss, drop_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    params = init_params(
        np.random.default_rng(init_ss),
        in_dim=features.shape[1],
        hidden_dim=cfg.hidden_dim,
        orders=cfg.layers,
        agg_depth=cfg.agg_depth,
        num_relations=graphs.num_relations,
        mlp_hidden=cfg.mlp_hidden,
        gamma=cfg.gamma,
    )
    state = AdamState.for_params(params)
    batch_rng = np.random.default_rng(batch_ss)
    drop_rng = np.random.default_rng(drop_ss)

    y = labels
    reports: list[EpochReport] = []
    best: Checkpoint = Checkpoint(params.copy(), cfg, None, None)
    best_auc = -np.inf
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        dropout_seed = int(drop_rng.integers(0, 2**63))
        if cfg.batch_size is not None and cfg.batch_size < masks.train.size:
            batch = np.sort(batch_rng.choice(masks.train, size=cfg.batch_size, replace=False))
        else:
            batch = masks.train
        trace = forward_full(
            prepared, features, caches, params,
            train_mode=True, dropout_rate=cfg.dropout, dropout_seed=dropout_seed,
        )
        loss = bce_loss(trace.probs, y, batch, class_weighting=cfg.class_weighting)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}", reports)
        grads = backward(trace, y, batch, params, class_weighting=cfg.class_weighting)
        try:
            adam_step(params, grads, state, cfg)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"{exc} at epoch {epoch}", reports) from None
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            eval_trace = forward_full(prepared, features, caches, params, train_mode=False)
            val = evaluate(eval_trace.probs[masks.val], y[masks.val], cfg.threshold)
            reports.append(EpochReport(
                epoch=epoch,
                loss_sum=loss,
                loss_mean=loss / batch.size,
                val=val,
                seconds=time.perf_counter() - started,
            ))
            if val.auc > best_auc:
                best_auc = val.auc
                best = Checkpoint(params.copy(), cfg, epoch, val)
    return best, reports


def rebuild_for_eval(checkpoint: Checkpoint, graphs: MultiRelationGraph, features: np.ndarray):
    """Prepared graphs + caches matching a checkpoint's configuration."""
    prepared = prepare_graphs(graphs)
    caches = build_caches(graphs, np.asarray(features, dtype=np.float64), checkpoint.config)
    return prepared, caches


def gradient_check(
    *,
    seed: int = 7,
    n: int = 8,
    in_dim: int = 5,
    layers: int = 3,
    agg_depth: int = 1,
    hidden_dim: int = 4,
    num_relations: int = 2,
    mlp_hidden: tuple[int, ...] = (4,),
    gamma: float = 0.7,
    step: float = 1e-5,
):
    """Compare analytic gradients against central finite differences.

    Returns (max relative error, per-parameter relative errors). Relative
    error is |a - n| / max(|a|, |n|, 1e-8) per entry.
    """
    rng = np.random.default_rng(seed)
    graphs_rel = []
    for _ in range(num_relations):
        edges = set()
        while len(edges) < 2 * n:
            u, v = rng.integers(0, n, size=2)
            if u != v:
                edges.add((min(u, v), max(u, v)))
        graphs_rel.append(build_graph(sorted(edges), n))
    graphs = MultiRelationGraph(graphs_rel, [f"r{i}" for i in range(num_relations)])
    features = rng.standard_normal((n, in_dim))
    y = (rng.random(n) < 0.5).astype(np.int64)
    node_set = np.arange(n)

    cfg = HighOrderConfig(layers=layers, mode=WALK_COUNT, normalized=True)
    caches = [propagate_features(g, features, cfg) for g in graphs.relations]
    prepared = prepare_graphs(graphs)
    params = init_params(
        rng,
        in_dim=in_dim,
        hidden_dim=hidden_dim,
        orders=layers,
        agg_depth=agg_depth,
        num_relations=num_relations,
        mlp_hidden=mlp_hidden,
        gamma=gamma,
    )

    def loss_at() -> float:
        trace = forward_full(prepared, features, caches, params, train_mode=False)
        return bce_loss(trace.probs, y, node_set)

    trace = forward_full(prepared, features, caches, params, train_mode=False)
    analytic = backward(trace, y, node_set, params)

    per_param: dict[str, float] = {}
    worst = 0.0
    for name, arr in params.named_arrays():
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_at()
            flat[i] = keep - step
            down = loss_at()
            flat[i] = keep
            num_flat[i] = (up - down) / (2.0 * step)
        denom = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(numeric)), 1e-8)
        rel = float((np.abs(analytic[name] - numeric) / denom).max())
        per_param[name] = rel
        worst = max(worst, rel)
    return worst, per_param
