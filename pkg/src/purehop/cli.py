"""Command-line surface.

Exit codes: 0 success, 1 usage or parse failure, 2 numerical failure
(non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .graph import UNKNOWN, homophily_distribution, validate_labels
from .metrics import evaluate
from .model import forward_full
from .propagation import EXACT_HOP, WALK_COUNT, HighOrderConfig, layerwise_homophily, propagate_features
from .synth import CamouflageSpec, describe, generate
from .training import TrainConfig, TrainingDiverged, gradient_check, rebuild_for_eval, stratified_split, train

GRADCHECK_TOLERANCE = 1e-5


def _load_inputs(args):
    graphs = fileio.read_graph(args.graph)
    features = fileio.read_matrix(args.features)
    if features.shape[0] != graphs.n:
        raise FileInputMismatch(
            f"features have {features.shape[0]} rows but the graph has {graphs.n} nodes"
        )
    labels = None
    if getattr(args, "labels", None):
        labels = validate_labels(fileio.read_labels(args.labels, graphs.n), graphs.n)
    return graphs, features, labels


class FileInputMismatch(ValueError):
    pass


def _pick_relation(graphs, name):
    if name is None:
        return graphs.relations[0]
    if name not in graphs.names:
        raise FileInputMismatch(
            f"unknown relation {name!r}; available: {', '.join(graphs.names)}"
        )
    return graphs.relations[graphs.names.index(name)]


def _build_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        cfg = fileio.read_config(args.config, cfg)
    overrides = {}
    for key in ("seed", "epochs", "gamma", "layers", "threshold"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _cmd_train(args) -> int:
    graphs, features, labels = _load_inputs(args)
    cfg = _build_config(args)
    masks = stratified_split(labels, seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        checkpoint, reports = train(graphs, features, labels, masks, cfg)
    except TrainingDiverged as exc:
        for report in exc.reports:
            print(report.format_line(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    fileio.write_checkpoint(out / "checkpoint.txt", checkpoint)
    (out / "epochs.log").write_text("".join(r.format_line() + "\n" for r in reports))
    prepared, caches = rebuild_for_eval(checkpoint, graphs, features)
    trace = forward_full(prepared, features, caches, checkpoint.params, train_mode=False)
    test = evaluate(trace.probs[masks.test], labels[masks.test], cfg.threshold)
    (out / "test-metrics.txt").write_text(f"split=test {test.format_line()}\n")
    if not args.no_figures and reports:
        from . import figures

        figures.save_training_curves(reports, out / "training.png")
    print(f"best epoch {checkpoint.best_epoch}: "
          + (checkpoint.val.format_line() if checkpoint.val else "no evaluation"))
    print(f"test {test.format_line()}")
    return 0


def _cmd_eval(args) -> int:
    checkpoint = fileio.read_checkpoint(args.checkpoint)
    graphs, features, labels = _load_inputs(args)
    prepared, caches = rebuild_for_eval(checkpoint, graphs, features)
    trace = forward_full(prepared, features, caches, checkpoint.params, train_mode=False)
    if args.split == "all":
        nodes = np.flatnonzero(labels != UNKNOWN)
    else:
        masks = stratified_split(labels, seed=checkpoint.config.seed)
        nodes = getattr(masks, args.split)
    threshold = args.threshold if args.threshold is not None else checkpoint.config.threshold
    result = evaluate(trace.probs[nodes], labels[nodes], threshold)
    print(f"split={args.split} {result.format_line()}")
    return 0


def _cmd_homophily(args) -> int:
    graphs = fileio.read_graph(args.graph)
    labels = validate_labels(fileio.read_labels(args.labels, graphs.n), graphs.n)
    g = _pick_relation(graphs, args.relation)
    report = homophily_distribution(g, labels, bins=args.bins)
    lines = [f"bins {args.bins}"]
    for c in (0, 1):
        hist = " ".join(str(int(v)) for v in report.histograms[c])
        lines.append(
            f"class {c} defined {report.defined_counts[c]} undefined {report.undefined_counts[c]} "
            f"mean {report.class_means[c]!r} hist {hist}"
        )
    lw = None
    if args.layers:
        lw = layerwise_homophily(g, labels, args.layers)
        for l in range(1, args.layers + 1):
            mixed, dec = lw.mixed[l - 1], lw.decoupled[l - 1]
            lines.append(
                f"layer {l} mixed_mean {lw.mean_mixed(l)!r} decoupled_mean {lw.mean_decoupled(l)!r} "
                f"mixed_defined {int(np.count_nonzero(~np.isnan(mixed)))} "
                f"decoupled_defined {int(np.count_nonzero(~np.isnan(dec)))}"
            )
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "homophily.txt").write_text(text)
        if not args.no_figures:
            from . import figures

            figures.save_homophily_histogram(report, out / "homophily.png")
            if lw is not None:
                figures.save_layer_curves(lw, out / "layerwise.png")
    return 0


def _cmd_propagate(args) -> int:
    graphs, features, _ = _load_inputs(args)
    g = _pick_relation(graphs, args.relation)
    mode = WALK_COUNT if args.mode == "walk" else EXACT_HOP
    cfg = HighOrderConfig(layers=args.layers, mode=mode, normalized=not args.raw_adjacency)
    cache = propagate_features(g, features, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for l in range(1, cfg.layers + 1):
        fileio.write_matrix(out / f"order-{l:02d}.txt", cache.order(l))
    print(f"wrote {cfg.layers} matrices to {out}")
    return 0


def _cmd_gen(args) -> int:
    spec = _read_camouflage_spec(args.spec)
    graphs, features, labels = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_graph(out / "graph.txt", graphs)
    fileio.write_matrix(out / "features.txt", features)
    fileio.write_labels(out / "labels.txt", labels)
    for line in describe(spec).format_lines():
        print(line)
    return 0


def _read_camouflage_spec(path) -> CamouflageSpec:
    fields = {f.name: f for f in dataclasses.fields(CamouflageSpec)}
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise fileio.FileFormatError(path, lineno, "expected 'key = value'")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if key not in fields:
            raise fileio.FileFormatError(path, lineno, f"unknown generator key {key!r}")
        try:
            is_real = isinstance(getattr(CamouflageSpec(), key), float)
            values[key] = float(text) if is_real else int(text)
        except ValueError:
            raise fileio.FileFormatError(path, lineno, f"bad value {text!r} for {key}") from None
    return CamouflageSpec(**values)


def _cmd_gradcheck(args) -> int:
    sizes = {"small": dict(n=8, layers=3, agg_depth=1, hidden_dim=4)}
    worst, per_param = gradient_check(**sizes[args.size])
    for name in sorted(per_param):
        print(f"{name} {per_param[name]:.3e}")
    print(f"max relative error {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    return 0 if worst <= GRADCHECK_TOLERANCE else 2


def _cmd_embed(args) -> int:
    checkpoint = fileio.read_checkpoint(args.checkpoint)
    graphs, features, _ = _load_inputs(args)
    prepared, caches = rebuild_for_eval(checkpoint, graphs, features)
    trace = forward_full(prepared, features, caches, checkpoint.params, train_mode=False)
    fileio.write_matrix(args.out, trace.concat)
    print(f"wrote {trace.concat.shape[0]}x{trace.concat.shape[1]} embedding matrix to {args.out}")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="purehop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, labels=True):
        p.add_argument("--graph", required=True)
        p.add_argument("--features", required=True)
        if labels:
            p.add_argument("--labels", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint, log, and test metrics")
    add_io(p)
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--layers", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    add_io(p)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("homophily", help="per-class homophily histograms and layer curves")
    p.add_argument("--graph", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--layers", type=int)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--relation")
    p.add_argument("--out", help="directory for the report text and figures")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_homophily)

    p = sub.add_parser("propagate", help="write the per-order propagated feature matrices")
    add_io(p, labels=False)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--mode", choices=("walk", "hop"), default="walk")
    p.add_argument("--raw-adjacency", action="store_true")
    p.add_argument("--relation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_propagate)

    p = sub.add_parser("gen", help="generate a camouflage graph instance")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--size", choices=("small",), default="small")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("embed", help="write fused embeddings for external visualization")
    p.add_argument("--checkpoint", required=True)
    add_io(p, labels=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed)
    return parser


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except (fileio.FileFormatError, FileInputMismatch, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
