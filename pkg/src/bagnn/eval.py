"""Accuracy, filtered/raw ranking metrics, attention export and relation pruning."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .attention import AttentionRecord
from .hetgraph import HeteroGraph
from .ingest import TripleSplit
from .model import score_candidates
from .seeding import rng_stream


def accuracy(predictions, test) -> float:
    """Fraction of ``(node, class)`` pairs in ``test`` predicted correctly.

    ``predictions`` is either an array indexed by node or a mapping.
    """
    if not test:
        raise ValueError("empty test split")
    correct = 0
    for v, c in test:
        try:
            p = predictions[v]
        except (KeyError, IndexError):
            raise KeyError(f"no prediction for node {v}") from None
        correct += int(p == c)
    return correct / len(test)


# ---------------------------------------------------------------------------
# ranking


@dataclass
class RankingResult:
    """Per-triple 1-based ranks (tie-averaged, so possibly half-integers)."""

    triples: np.ndarray
    raw_head: np.ndarray
    raw_tail: np.ndarray
    filt_head: np.ndarray
    filt_tail: np.ndarray

    def __len__(self):
        return len(self.triples)

    def ranks(self, setting: str) -> np.ndarray:
        if setting == "raw":
            return np.concatenate([self.raw_head, self.raw_tail])
        if setting == "filtered":
            return np.concatenate([self.filt_head, self.filt_tail])
        raise ValueError(f"unknown setting {setting!r}")


def tie_averaged_rank(scores: np.ndarray, target: int, exclude: np.ndarray | None = None) -> float:
    """``1 + #(strictly higher) + #(ties other than target) / 2``.

    Candidates flagged in the boolean ``exclude`` mask are ignored.
    """
    s = scores[target]
    higher = scores > s
    ties = scores == s
    ties[target] = False
    if exclude is not None:
        keep = ~exclude
        keep[target] = True
        higher &= keep
        ties &= keep
    return 1.0 + float(higher.sum()) + 0.5 * float(ties.sum())


def rank_all(
    embeddings: np.ndarray,
    decoder_params: np.ndarray,
    kind: str,
    split: TripleSplit,
    which: str = "test",
    workers: int = 1,
) -> RankingResult:
    """Rank every triple of ``split.<which>`` against all head and tail substitutions.

    With ``workers > 1`` triples are ranked on a thread pool; each result is
    written to its own row, so the output does not depend on scheduling.
    """
    emb = np.asarray(getattr(embeddings, "data", embeddings))
    w = np.asarray(getattr(decoder_params, "data", decoder_params))
    triples = np.asarray(getattr(split, which), dtype=np.int64).reshape(-1, 3)
    tails_of: dict[tuple[int, int], list[int]] = {}
    heads_of: dict[tuple[int, int], list[int]] = {}
    for h, r, t in split.all_true:
        tails_of.setdefault((h, r), []).append(t)
        heads_of.setdefault((r, t), []).append(h)
    n = emb.shape[0]
    out = np.zeros((len(triples), 4))

    def rank_one(k: int) -> None:
        h, r, t = (int(x) for x in triples[k])
        s_tail = score_candidates(emb, w, kind, h, r, t, "tail")
        s_head = score_candidates(emb, w, kind, h, r, t, "head")
        ex_t = np.zeros(n, dtype=bool)
        ex_t[tails_of.get((h, r), [])] = True
        ex_h = np.zeros(n, dtype=bool)
        ex_h[heads_of.get((r, t), [])] = True
        out[k] = (
            tie_averaged_rank(s_head, h),
            tie_averaged_rank(s_tail, t),
            tie_averaged_rank(s_head, h, ex_h),
            tie_averaged_rank(s_tail, t, ex_t),
        )

    if workers > 1 and len(triples) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(rank_one, range(len(triples))))
    else:
        for k in range(len(triples)):
            rank_one(k)
    return RankingResult(triples, out[:, 0], out[:, 1], out[:, 2], out[:, 3])


def metrics_from_ranks(ranks: Sequence[float], ns: Iterable[int] = (1, 3, 10)) -> dict[str, float]:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("no ranks")
    # fsum is correctly rounded, so the value does not depend on summation order
    out = {"MRR": math.fsum(1.0 / ranks) / ranks.size}
    for n in ns:
        out[f"Hits@{n}"] = float(np.mean(ranks <= n))
    return out


def mrr_hits(result: RankingResult, ns: Iterable[int] = (1, 3, 10)) -> dict[str, dict[str, float]]:
    """``{"raw": {...}, "filtered": {...}}`` with MRR and Hits@n over both directions."""
    ns = tuple(ns)
    return {s: metrics_from_ranks(result.ranks(s), ns) for s in ("raw", "filtered")}


def metrics_csv(table: dict[str, dict[str, float]]) -> str:
    keys = list(next(iter(table.values())).keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting"] + keys)
    for setting, row in table.items():
        w.writerow([setting] + [f"{row[k]:.6f}" for k in keys])
    return buf.getvalue()


def metrics_text(table: dict[str, dict[str, float]]) -> str:
    keys = list(next(iter(table.values())).keys())
    width = max(10, *(len(k) + 2 for k in keys))
    lines = ["setting".ljust(10) + "".join(k.rjust(width) for k in keys)]
    for setting, row in table.items():
        lines.append(setting.ljust(10) + "".join(f"{row[k]:.4f}".rjust(width) for k in keys))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# attention export


def export_attention(
    records: Sequence[AttentionRecord],
    node: int,
    layer: int | None = None,
    relation_names: Sequence[str] | None = None,
    head: int | None = None,
) -> str:
    """CSV of the relation-level weights at ``node`` (row r, column r').

    ``layer`` defaults to the last layer; ``head=None`` averages the heads.
    """
    rec = records[-1 if layer is None else layer]
    if not 0 <= node < rec.index.node_count or rec.index.node_pair_count[node] == 0:
        raise KeyError(f"no relation-level attention recorded for node {node}")
    mat = rec.mean_psi_matrix(node) if head is None else rec.psi_matrix(head, node)
    rels = rec.relations_of(node)
    names = [relation_names[r] if relation_names is not None else str(r) for r in rels]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["relation"] + names)
    for name, row in zip(names, mat):
        w.writerow([name] + [repr(float(x)) for x in row])
    return buf.getvalue()


def read_attention_csv(text: str) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    names = rows[0][1:]
    mat = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
    return names, mat


# ---------------------------------------------------------------------------
# relation importance and pruning


def relation_importance(
    record: AttentionRecord, num_relations: int, aggregate: str = "mean_present"
) -> np.ndarray:
    """Importance of each relation id from relation-level attention.

    At each node and head, relation r' receives the mean over source
    relations r of ``psi[r, r']`` (those shares sum to one per node).
    ``mean_present`` averages this over the (node, head) cases where r'
    occurs; ``mean_all`` divides by every (node, head) instead, which also
    rewards frequent relations.  Relations never seen score 0.
    """
    idx = record.index
    total = np.zeros(num_relations)
    seen = np.zeros(num_relations)
    heads = [p for p in record.psi if p is not None]
    if not heads:
        raise ValueError("relation-level attention disabled; no importance available")
    counts = idx.node_pair_count[idx.pair_node]  # |R_v| for each pair
    for psi in heads:
        received = np.zeros(idx.num_pairs)
        np.add.at(received, idx.pp_k, psi)
        share = received / counts
        np.add.at(total, idx.pair_rel, share)
        np.add.at(seen, idx.pair_rel, 1.0)
    if aggregate == "mean_present":
        return np.divide(total, seen, out=np.zeros_like(total), where=seen > 0)
    if aggregate == "mean_all":
        return total / (len(heads) * idx.node_count)
    raise ValueError(f"unknown aggregate {aggregate!r}")


@dataclass(frozen=True)
class PruneSpec:
    mode: str
    fraction: float
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("top", "bottom", "random"):
            raise ValueError(f"unknown prune mode {self.mode!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")


def base_relation_scores(graph: HeteroGraph, importance: np.ndarray) -> np.ndarray:
    """One score per base relation: the mean over it and its inverse."""
    R = graph.num_base_relations
    imp = np.asarray(importance, dtype=np.float64)
    if not graph.gen_inverse:
        return imp[:R].copy()
    return 0.5 * (imp[:R] + imp[R : 2 * R])


def select_relations(graph: HeteroGraph, importance: np.ndarray, spec: PruneSpec) -> list[int]:
    """Base relation ids kept under ``spec`` (``ceil(fraction * R)`` of them)."""
    R = graph.num_base_relations
    n_keep = math.ceil(spec.fraction * R - 1e-12)
    if n_keep < 1:
        raise ValueError("pruning would keep zero relations")
    scores = base_relation_scores(graph, importance)
    ids = np.arange(R)
    if spec.mode == "top":
        order = np.lexsort((ids, -scores))
    elif spec.mode == "bottom":
        order = np.lexsort((ids, scores))
    else:
        order = rng_stream(spec.seed, "pruning").permutation(R)
    return sorted(int(r) for r in order[:n_keep])


def prune_relations(graph: HeteroGraph, importance: np.ndarray, spec: PruneSpec) -> HeteroGraph:
    """Subgraph with only the selected relations; inverse pairs go together."""
    keep = select_relations(graph, importance, spec)
    if graph.gen_inverse:
        keep = keep + [r + graph.num_base_relations for r in keep]
    return graph.subgraph_by_relations(keep)
