"""Losses, Adam, negative sampling and the two full-batch training loops."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import tensor as T
from .hetgraph import HeteroGraph
from .ingest import LabeledSplit, TripleSplit
from .model import BagnnParameters, ModelConfig, class_logits, forward, init_params, score_triples
from .seeding import rng_stream
from .tensor import Tensor


def cross_entropy(distributions: Tensor, labels) -> Tensor:
    """Mean of ``-log p[label]`` over rows of a distribution matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cross_entropy: empty label set")
    if labels.shape != distributions.shape[:1]:
        raise T.ShapeError(f"{len(labels)} labels for {distributions.shape[0]} rows")
    if labels.min() < 0 or labels.max() >= distributions.shape[1]:
        raise ValueError("label index out of range")
    picked = T.take2d(distributions, np.arange(len(labels)), labels)
    return T.scale(T.mean(T.log(picked)), -1.0)


def cross_entropy_logits(logits: Tensor, labels) -> Tensor:
    """Same value as ``cross_entropy(softmax(logits), labels)``, computed in log space."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cross_entropy: empty label set")
    logp = T.log_softmax_rows(logits)
    return T.scale(T.mean(T.take2d(logp, np.arange(len(labels)), labels)), -1.0)


def binary_cross_entropy(pos_scores: Tensor, neg_scores: Tensor) -> Tensor:
    """Mean BCE of ``sigmoid(score)`` against 1 for positives, 0 for negatives."""
    n = pos_scores.size + neg_scores.size
    total = T.add(T.total(T.softplus(T.scale(pos_scores, -1.0))), T.total(T.softplus(neg_scores)))
    return T.scale(total, 1.0 / n)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> AdamState:
    """Bias-corrected Adam update from each tensor's ``grad``; grads are then zeroed."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if g.shape != p.shape:
            raise T.ShapeError(f"grad of {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise T.ShapeError(f"moment buffer for {name} has shape {m.shape}, parameter {p.shape}")
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        g[...] = 0.0
    return state


# ---------------------------------------------------------------------------
# negative sampling


def negative_sample(
    triple,
    node_count: int,
    rng: np.random.Generator,
    known: set | None = None,
    w: int = 1,
    max_draws: int = 100,
    stats: dict | None = None,
) -> list[tuple[int, int, int]]:
    """``w`` corruptions of ``triple``, each replacing the head or the tail.

    The side is a fair coin and the replacement a uniform node other than
    the original.  Corruptions that are known true triples are redrawn; after
    ``max_draws`` attempts the last draw is accepted and
    ``stats["fallbacks"]`` is incremented.
    """
    if node_count < 2:
        raise ValueError("need at least two nodes to corrupt a triple")
    h, r, t = (int(x) for x in triple)
    known = known or set()
    out = []
    for _ in range(w):
        for attempt in range(max_draws):
            corrupt_head = rng.random() < 0.5
            x = int(rng.integers(node_count - 1))
            orig = h if corrupt_head else t
            if x >= orig:
                x += 1
            cand = (x, r, t) if corrupt_head else (h, r, x)
            if cand not in known:
                break
        else:
            if stats is not None:
                stats["fallbacks"] = stats.get("fallbacks", 0) + 1
        if stats is not None:
            key = "head" if corrupt_head else "tail"
            stats[key] = stats.get(key, 0) + 1
        out.append(cand)
    return out


# ---------------------------------------------------------------------------
# training loops


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    negatives: int = 1


@dataclass
class TrainReport:
    seed: int
    task: str
    epochs: list[dict] = field(default_factory=list)
    timings: list[float] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def final(self, key: str):
        return self.epochs[-1][key] if self.epochs else None

    def to_jsonl(self) -> str:
        """One JSON object per epoch; wall-clock times are left out (see :meth:`timing_json`)."""
        lines = [json.dumps({"seed": self.seed, "task": self.task, **e}, sort_keys=True) for e in self.epochs]
        return "".join(line + "\n" for line in lines)

    def timing_json(self) -> str:
        return json.dumps({"seed": self.seed, "epoch_seconds": self.timings, **self.notes}, sort_keys=True)


def _params_to_train(params: BagnnParameters, freeze: Iterable[str]) -> dict[str, Tensor]:
    frozen = set(freeze)
    return {k: v for k, v in params.named_tensors().items() if k not in frozen}


def train_node_classification(
    graph: HeteroGraph,
    split: LabeledSplit,
    config: ModelConfig,
    train_config: TrainConfig = TrainConfig(),
    params: BagnnParameters | None = None,
    features=None,
    freeze: Iterable[str] = (),
) -> tuple[BagnnParameters, TrainReport]:
    """Full-batch training: forward, cross-entropy on train nodes, backward, Adam."""
    nodes, labels = split.arrays("train")
    if nodes.size == 0:
        raise ValueError("empty training split")
    if config.num_classes != split.num_classes:
        raise ValueError(f"config has {config.num_classes} classes, split has {split.num_classes}")
    if params is None:
        params = init_params(config, graph, learn_embedding=features is None)
    trainable = _params_to_train(params, freeze)
    state = AdamState(train_config.lr, train_config.beta1, train_config.beta2, train_config.eps)
    report = TrainReport(config.seed, "node-class")
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        with T.Tape():
            h, _ = forward(graph, params, features)
            logits = class_logits(T.gather_rows(h, nodes), params.head)
            loss = cross_entropy_logits(logits, labels)
            T.backward(loss)
        adam_step(trainable, state)
        params.zero_grad()
        acc = float(np.mean(np.argmax(logits.data, axis=1) == labels))
        report.epochs.append({"epoch": epoch, "loss": float(loss.data), "train_accuracy": acc})
        report.timings.append(time.perf_counter() - t0)
    return params, report


def predict_classes(graph: HeteroGraph, params: BagnnParameters, features=None) -> np.ndarray:
    with T.no_grad():
        h, _ = forward(graph, params, features)
        return np.argmax(class_logits(h, params.head).data, axis=1)


def train_link_prediction(
    graph: HeteroGraph,
    split: TripleSplit,
    config: ModelConfig,
    train_config: TrainConfig = TrainConfig(),
    params: BagnnParameters | None = None,
    freeze: Iterable[str] = (),
) -> tuple[BagnnParameters, TrainReport]:
    """Encoder + decoder trained with BCE on positives vs. sampled negatives.

    ``graph`` is the message-passing graph (normally ``split.train_graph()``);
    scores use base relation ids from the split.
    """
    if not split.train:
        raise ValueError("empty training triples")
    if config.decoder is None:
        raise ValueError("link prediction needs a decoder in the model config")
    if params is None:
        params = init_params(config, graph, num_decoder_relations=split.num_relations)
    trainable = _params_to_train(params, freeze)
    state = AdamState(train_config.lr, train_config.beta1, train_config.beta2, train_config.eps)
    rng = rng_stream(config.seed, "sampling")
    known = split.all_true
    pos = np.asarray(split.train, dtype=np.int64)
    report = TrainReport(config.seed, "link-pred")
    stats: dict = {}
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        negs = [
            c
            for tr in split.train
            for c in negative_sample(tr, graph.node_count, rng, known, train_config.negatives, stats=stats)
        ]
        neg = np.asarray(negs, dtype=np.int64)
        with T.Tape():
            h, _ = forward(graph, params)
            s_pos = score_triples(h, params.decoder, config.decoder, pos[:, 0], pos[:, 1], pos[:, 2])
            s_neg = score_triples(h, params.decoder, config.decoder, neg[:, 0], neg[:, 1], neg[:, 2])
            loss = binary_cross_entropy(s_pos, s_neg)
            T.backward(loss)
        adam_step(trainable, state)
        params.zero_grad()
        report.epochs.append(
            {
                "epoch": epoch,
                "loss": float(loss.data),
                "mean_positive_score": float(s_pos.data.mean()),
                "mean_negative_score": float(s_neg.data.mean()),
            }
        )
        report.timings.append(time.perf_counter() - t0)
    report.notes["negative_sampling_fallbacks"] = stats.get("fallbacks", 0)
    return params, report

