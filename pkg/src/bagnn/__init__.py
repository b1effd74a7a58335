"""Bi-level attention graph neural network on heterogeneous graphs, in numpy.

Modules:
    hetgraph   typed multi-relational graph with inverse relations
    ingest     N-Triples and TSV readers, label and triple splits
    tensor     float64 reverse-mode autodiff over numpy arrays
    attention  node-level and relation-level attention layer
    model      stacked encoder, decoders, checkpoints
    train      losses, Adam, negative sampling, training loops
    eval       accuracy, ranking metrics, attention export, pruning
    cli        the ``bagnn`` command
"""

from .attention import AttentionRecord, LayerConfig, layer_forward
from .eval import (
    PruneSpec,
    accuracy,
    export_attention,
    mrr_hits,
    prune_relations,
    rank_all,
    relation_importance,
)
from .hetgraph import GraphError, HeteroGraph, Vocab, from_triples
from .ingest import LabeledSplit, ParseError, TripleSplit, build_graph, load_labels, parse_ntriples
from .model import (
    BagnnParameters,
    ModelConfig,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    score_triples,
)
from .seeding import rng_stream
from .train import TrainConfig, TrainReport, train_link_prediction, train_node_classification

__version__ = "0.1.0"

__all__ = [
    "AttentionRecord",
    "BagnnParameters",
    "GraphError",
    "HeteroGraph",
    "LabeledSplit",
    "LayerConfig",
    "ModelConfig",
    "ParseError",
    "PruneSpec",
    "TrainConfig",
    "TrainReport",
    "TripleSplit",
    "Vocab",
    "accuracy",
    "build_graph",
    "export_attention",
    "forward",
    "from_triples",
    "init_params",
    "layer_forward",
    "load_checkpoint",
    "load_labels",
    "mrr_hits",
    "parse_ntriples",
    "prune_relations",
    "rank_all",
    "relation_importance",
    "rng_stream",
    "save_checkpoint",
    "score_triples",
    "train_link_prediction",
    "train_node_classification",
]
