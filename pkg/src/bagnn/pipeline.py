"""Glue between a validated run config and the library: data, models, runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .eval import PruneSpec, accuracy, mrr_hits, prune_relations, rank_all, relation_importance
from .hetgraph import HeteroGraph
from .ingest import LabeledSplit, TripleSplit, build_graph, load_labels, load_triple_split, parse_ntriples
from .model import BagnnParameters, ModelConfig, forward, init_params
from .synthetic import planted_class_graph, planted_relation_graph, six_node_fixture, toy_kg
from .train import TrainConfig, predict_classes, train_link_prediction, train_node_classification


@dataclass
class Dataset:
    graph: HeteroGraph
    labels: LabeledSplit | None = None
    triples: TripleSplit | None = None


def load_dataset(doc: dict) -> Dataset:
    ds = doc["dataset"]
    fmt = ds["format"]
    if fmt == "ntriples":
        data = parse_ntriples(ds["graph"])
        g = build_graph(
            data,
            gen_inverse=ds.get("gen_inverse", True),
            remove_relations=ds.get("remove_relations", ()),
            type_predicate=ds.get("type_predicate"),
        )
        return Dataset(g, labels=load_labels(ds["labels"], g))
    if fmt == "tsv":
        split = load_triple_split(ds["train"], ds["valid"], ds["test"])
        return Dataset(split.train_graph(ds.get("gen_inverse", True)), triples=split)
    seed = ds.get("data_seed", 0)
    name = ds["name"]
    if name == "six-node":
        g, split = six_node_fixture()
        return Dataset(g, labels=split)
    if name == "planted-class":
        g, split = planted_class_graph(seed)
        return Dataset(g, labels=split)
    if name == "planted-relation":
        g, split, _ = planted_relation_graph(seed)
        return Dataset(g, labels=split)
    split = toy_kg(seed)
    return Dataset(split.train_graph(ds.get("gen_inverse", True)), triples=split)


def model_config(doc: dict, data: Dataset) -> ModelConfig:
    m = dict(doc.get("model", {}))
    m["seed"] = doc["seed"]
    if doc["task"] == "node-class":
        if data.labels is None:
            raise ValueError("node-class task needs labels")
        m["num_classes"] = data.labels.num_classes
        m.pop("decoder", None)
    else:
        m.setdefault("decoder", "distmult")
    return ModelConfig(**m)


def train_config(doc: dict) -> TrainConfig:
    return TrainConfig(epochs=doc["epochs"], negatives=doc["negatives"], **doc.get("optimizer", {}))


def train(doc: dict, data: Dataset):
    cfg = model_config(doc, data)
    tc = train_config(doc)
    if doc["task"] == "node-class":
        return train_node_classification(data.graph, data.labels, cfg, tc)
    return train_link_prediction(data.graph, data.triples, cfg, tc)


def initial_params(doc: dict, data: Dataset) -> BagnnParameters:
    cfg = model_config(doc, data)
    n_dec = data.triples.num_relations if data.triples is not None else None
    return init_params(cfg, data.graph, num_decoder_relations=n_dec)


def evaluate(doc: dict, data: Dataset, params: BagnnParameters, workers: int = 1) -> dict[str, dict[str, float]]:
    """Metric table: accuracies for node-class, raw/filtered MRR and Hits for link-pred."""
    if doc["task"] == "node-class":
        pred = predict_classes(data.graph, params)
        return {
            "accuracy": {
                "train": accuracy(pred, data.labels.train),
                "test": accuracy(pred, data.labels.test),
            }
        }
    with T.no_grad():
        h, _ = forward(data.graph, params)
    return mrr_hits(rank_all(h.data, params.decoder.data, params.config.decoder, data.triples, workers=workers))


def attention_records(data: Dataset, params: BagnnParameters):
    with T.no_grad():
        _, records = forward(data.graph, params)
    return records


def prune_sweep(doc: dict, data: Dataset, params: BagnnParameters, modes, fractions,
                retrain: bool, seeds=(0,)) -> list[dict]:
    """Accuracy for each (mode, fraction, seed) after attention-ranked relation pruning."""
    if doc["task"] != "node-class":
        raise ValueError("prune sweep is defined for node classification")
    records = attention_records(data, params)
    importance = relation_importance(records[-1], data.graph.num_relations)
    rows = []
    for mode in modes:
        for frac in fractions:
            for seed in seeds:
                sub = prune_relations(data.graph, importance, PruneSpec(mode, float(frac), seed))
                if retrain:
                    cfg = ModelConfig(**{**params.config.to_dict(), "seed": seed})
                    p, _ = train_node_classification(sub, data.labels, cfg, train_config(doc))
                else:
                    p = params
                acc = accuracy(predict_classes(sub, p), data.labels.test)
                rows.append({"mode": mode, "fraction": float(frac), "seed": int(seed), "accuracy": acc,
                             "relations_kept": int(np.unique(sub.edges[:, 1]).size) if sub.num_edges else 0})
    return rows
