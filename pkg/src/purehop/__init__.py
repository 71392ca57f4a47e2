"""Fraud-oriented node classification with decoupled high-order propagation."""

from .graph import (
    UNKNOWN,
    HomophilyReport,
    MultiRelationGraph,
    RelationGraph,
    SplitMasks,
    build_graph,
    homophily_distribution,
    node_homophily,
    row_normalize,
    spmm,
)
from .metrics import EvalResult, auc, confusion_at_threshold, evaluate, f1_macro, gmean
from .model import (
    ForwardTrace,
    ModelParams,
    expert_forward,
    forward_full,
    fuse_and_concat,
    gate_and_mix,
    init_params,
    predict,
    prepare_graphs,
    sage_forward,
)
from .propagation import (
    EXACT_HOP,
    WALK_COUNT,
    HighOrderConfig,
    HopRing,
    LayerwiseHomophily,
    PropagatedFeatures,
    hop_rings,
    layerwise_homophily,
    propagate_features,
)
from .synth import CamouflageSpec, SynthSummary, describe, generate
from .training import (
    AdamState,
    Checkpoint,
    EpochReport,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    backward,
    bce_loss,
    gradient_check,
    stratified_split,
    train,
)

__version__ = "0.1.0"
