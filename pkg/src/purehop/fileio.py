"""Text file formats: graphs, matrices, labels, flat configs, checkpoints.

Everything is plain text with shortest round-trip float formatting, so
write -> read -> write is byte-identical.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .graph import UNKNOWN, MultiRelationGraph, RelationGraph, build_graph
from .metrics import EvalResult
from .model import ModelParams, RelationParams
from .training import Checkpoint, TrainConfig

GRAPH_MAGIC = "HOGRL-GRAPH 1"
MATRIX_MAGIC = "HOGRL-MATRIX 1"
CHECKPOINT_MAGIC = "HOGRL-CHECKPOINT 1"


class FileFormatError(ValueError):
    """Parse or validation failure with a file location attached."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


def _fmt(x: float) -> str:
    return repr(float(x))


class _LineReader:
    def __init__(self, path):
        self.path = Path(path)
        self.lines = self.path.read_text().splitlines()
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise FileFormatError(self.path, len(self.lines) + 1, f"unexpected end of file, wanted {what}")
        self.pos += 1
        return self.lines[self.pos - 1]

    def fail(self, message: str):
        raise FileFormatError(self.path, self.pos, message)

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.lines)


def _undirected_pairs(g: RelationGraph) -> list[tuple[int, int]]:
    pairs = []
    for u in range(g.n):
        cols, _ = g.row(u)
        for v in cols[cols > u]:
            pairs.append((u, int(v)))
    return pairs


def write_graph(path, graphs: MultiRelationGraph) -> None:
    lines = [GRAPH_MAGIC, f"nodes {graphs.n} relations {graphs.num_relations}"]
    for name, g in zip(graphs.names, graphs.relations):
        if any(ch.isspace() for ch in name) or not name:
            raise ValueError(f"relation name {name!r} must be non-empty without whitespace")
        pairs = _undirected_pairs(g)
        lines.append(f"relation {name} {len(pairs)}")
        lines.extend(f"{u} {v}" for u, v in pairs)
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> MultiRelationGraph:
    r = _LineReader(path)
    if r.next("header") != GRAPH_MAGIC:
        r.fail(f"expected header {GRAPH_MAGIC!r}")
    head = r.next("nodes line").split()
    if len(head) != 4 or head[0] != "nodes" or head[2] != "relations":
        r.fail("expected 'nodes <n> relations <R>'")
    try:
        n, num_rel = int(head[1]), int(head[3])
    except ValueError:
        r.fail("node and relation counts must be integers")
    if n < 1 or num_rel < 1:
        r.fail("node and relation counts must be positive")
    relations, names = [], []
    for _ in range(num_rel):
        rel_head = r.next("relation line").split()
        if len(rel_head) != 3 or rel_head[0] != "relation":
            r.fail("expected 'relation <name> <edge_count>'")
        try:
            count = int(rel_head[2])
        except ValueError:
            r.fail("edge count must be an integer")
        edges = []
        for _ in range(count):
            parts = r.next("edge line").split()
            if len(parts) != 2:
                r.fail("expected '<u> <v>'")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                r.fail("edge endpoints must be integers")
            if not (0 <= u < n and 0 <= v < n):
                r.fail(f"edge ({u}, {v}) out of range for n={n}")
            edges.append((u, v))
        relations.append(build_graph(edges, n, symmetrize=True))
        names.append(rel_head[1])
    if not r.exhausted:
        r.pos += 1
        r.fail("trailing content after the declared relations")
    return MultiRelationGraph(relations, names)


def write_matrix(path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("matrix must be two-dimensional")
    lines = [MATRIX_MAGIC, f"{matrix.shape[0]} {matrix.shape[1]}"]
    lines.extend(" ".join(_fmt(v) for v in row) for row in matrix)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    r = _LineReader(path)
    if r.next("header") != MATRIX_MAGIC:
        r.fail(f"expected header {MATRIX_MAGIC!r}")
    dims = r.next("dimension line").split()
    if len(dims) != 2:
        r.fail("expected '<rows> <cols>'")
    try:
        rows, cols = int(dims[0]), int(dims[1])
    except ValueError:
        r.fail("dimensions must be integers")
    out = np.empty((rows, cols))
    for i in range(rows):
        parts = r.next(f"row {i}").split()
        if len(parts) != cols:
            r.fail(f"expected {cols} values, found {len(parts)}")
        try:
            out[i] = [float(p) for p in parts]
        except ValueError:
            r.fail("matrix entries must be decimal reals")
    if not r.exhausted:
        r.pos += 1
        r.fail("trailing content after the declared rows")
    return out


def write_labels(path, labels: np.ndarray) -> None:
    lines = [f"{v} {labels[v]}" for v in range(labels.shape[0]) if labels[v] != UNKNOWN]
    Path(path).write_text("\n".join(lines) + "\n" if lines else "")


def read_labels(path, n: int) -> np.ndarray:
    r = _LineReader(path)
    labels = np.full(n, UNKNOWN, dtype=np.int64)
    seen = set()
    while not r.exhausted:
        line = r.next("label line")
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            r.fail("expected '<node> <label>'")
        try:
            v, lab = int(parts[0]), int(parts[1])
        except ValueError:
            r.fail("node and label must be integers")
        if not 0 <= v < n:
            r.fail(f"node {v} out of range for n={n}")
        if lab not in (0, 1):
            r.fail(f"label must be 0 or 1, found {lab}")
        if v in seen:
            r.fail(f"duplicate entry for node {v}")
        seen.add(v)
        labels[v] = lab
    return labels


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def config_to_items(cfg: TrainConfig) -> list[tuple[str, str]]:
    items = []
    for f in dataclasses.fields(TrainConfig):
        value = getattr(cfg, f.name)
        if value is None:
            text = "full"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = _fmt(value)
        elif isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        else:
            text = str(value)
        items.append((f.name, text))
    return items


def _parse_config_value(key: str, text: str, path, lineno: int):
    if key not in _CONFIG_FIELDS:
        raise FileFormatError(path, lineno, f"unknown configuration key {key!r}")
    default = getattr(TrainConfig(), key)
    try:
        if key == "batch_size":
            return None if text.lower() == "full" else int(text)
        if key == "mlp_hidden":
            return tuple(int(v) for v in text.split(",") if v) if text else ()
        if isinstance(default, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise FileFormatError(path, lineno, f"bad value {text!r} for {key}") from None


def read_config(path, base: TrainConfig | None = None) -> TrainConfig:
    """Flat ``key = value`` file applied on top of ``base`` (defaults)."""
    r = _LineReader(path)
    overrides = {}
    while not r.exhausted:
        line = r.next("config line")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            r.fail("expected 'key = value'")
        key, _, text = stripped.partition("=")
        key, text = key.strip(), text.strip()
        overrides[key] = _parse_config_value(key, text, r.path, r.pos)
    merged = dataclasses.asdict(base or TrainConfig())
    merged.update(overrides)
    merged["mlp_hidden"] = tuple(merged["mlp_hidden"])
    return TrainConfig(**merged)


def write_config(path, cfg: TrainConfig) -> None:
    Path(path).write_text("\n".join(f"{k} = {v}" for k, v in config_to_items(cfg)) + "\n")


def _flat_values(arr: np.ndarray) -> str:
    return " ".join(_fmt(v) for v in arr.reshape(-1))


def write_checkpoint(path, checkpoint: Checkpoint) -> None:
    items = config_to_items(checkpoint.config)
    lines = [CHECKPOINT_MAGIC, f"config {len(items)}"]
    lines.extend(f"{k} = {v}" for k, v in items)
    named = list(checkpoint.params.named_arrays())
    lines.append(f"params {len(named)}")
    for name, arr in named:
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"param {name} {dims}")
        lines.append(_flat_values(arr))
    if checkpoint.val is None:
        lines.append("best none")
    else:
        v = checkpoint.val
        lines.append(
            f"best epoch {checkpoint.best_epoch} auc {_fmt(v.auc)} f1_macro {_fmt(v.f1_macro)} "
            f"gmean {_fmt(v.gmean)} threshold {_fmt(v.threshold)} tp {v.tp} fp {v.fp} tn {v.tn} fn {v.fn}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _params_from_manifest(arrays: dict[str, np.ndarray], gamma: float, path) -> ModelParams:
    num_rel = 1 + max(
        (int(name[3 : name.index(".")]) for name in arrays if name.startswith("rel")), default=-1
    )
    if num_rel == 0:
        raise FileFormatError(path, 1, "checkpoint contains no relation parameters")
    relations = []
    for r in range(num_rel):
        experts = []
        l = 1
        while f"rel{r}.expert{l}.w" in arrays:
            experts.append(arrays[f"rel{r}.expert{l}.w"])
            l += 1
        agg = []
        k = 1
        while f"rel{r}.agg{k}.w" in arrays:
            agg.append(arrays[f"rel{r}.agg{k}.w"])
            k += 1
        try:
            relations.append(RelationParams(
                expert_weights=experts,
                gate_weights=arrays[f"rel{r}.gate.w"],
                gate_bias=arrays[f"rel{r}.gate.b"],
                agg_weights=agg,
            ))
        except KeyError as exc:
            raise FileFormatError(path, 1, f"checkpoint is missing {exc}") from None
    head_w, head_b = [], []
    i = 0
    while f"head{i}.w" in arrays:
        head_w.append(arrays[f"head{i}.w"])
        head_b.append(arrays[f"head{i}.b"])
        i += 1
    if not head_w:
        raise FileFormatError(path, 1, "checkpoint is missing the head parameters")
    return ModelParams(relations, head_w, head_b, gamma=gamma)


def read_checkpoint(path) -> Checkpoint:
    r = _LineReader(path)
    if r.next("header") != CHECKPOINT_MAGIC:
        r.fail(f"expected header {CHECKPOINT_MAGIC!r}")
    head = r.next("config count").split()
    if len(head) != 2 or head[0] != "config" or not head[1].isdigit():
        r.fail("expected 'config <count>'")
    overrides = {}
    for _ in range(int(head[1])):
        line = r.next("config line")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        overrides[key] = _parse_config_value(key, text, r.path, r.pos)
    merged = dataclasses.asdict(TrainConfig())
    merged.update(overrides)
    merged["mlp_hidden"] = tuple(merged["mlp_hidden"])
    cfg = TrainConfig(**merged)

    head = r.next("params count").split()
    if len(head) != 2 or head[0] != "params" or not head[1].isdigit():
        r.fail("expected 'params <count>'")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(int(head[1])):
        manifest = r.next("param manifest").split()
        if len(manifest) < 3 or manifest[0] != "param":
            r.fail("expected 'param <name> <dims...>'")
        name = manifest[1]
        try:
            shape = tuple(int(d) for d in manifest[2:])
        except ValueError:
            r.fail("parameter dims must be integers")
        values = r.next("param values").split()
        expected = int(np.prod(shape)) if shape else 1
        if len(values) != expected:
            r.fail(f"parameter {name} wants {expected} values, found {len(values)}")
        try:
            arrays[name] = np.array([float(v) for v in values]).reshape(shape)
        except ValueError:
            r.fail("parameter values must be decimal reals")
    params = _params_from_manifest(arrays, cfg.gamma, r.path)

    best_line = r.next("best line").split()
    if best_line[:1] != ["best"]:
        r.fail("expected the best-validation line")
    if best_line[1:] == ["none"]:
        best_epoch, val = None, None
    else:
        kv = dict(zip(best_line[1::2], best_line[2::2]))
        try:
            best_epoch = int(kv["epoch"])
            val = EvalResult(
                auc=float(kv["auc"]),
                f1_macro=float(kv["f1_macro"]),
                gmean=float(kv["gmean"]),
                threshold=float(kv["threshold"]),
                tp=int(kv["tp"]),
                fp=int(kv["fp"]),
                tn=int(kv["tn"]),
                fn=int(kv["fn"]),
            )
        except (KeyError, ValueError):
            r.fail("malformed best-validation line")
    if not r.exhausted:
        r.pos += 1
        r.fail("trailing content after the best-validation line")
    return Checkpoint(params=params, config=cfg, best_epoch=best_epoch, val=val)
