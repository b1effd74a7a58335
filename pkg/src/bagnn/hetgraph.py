"""Heterogeneous graph with typed nodes, typed directed edges and inverse relations.

Node, entity-type and relation identifiers are dense integers starting at 0.
String names live in side dictionaries (:class:`Vocab`).  Relation ids
``[0, R)`` are the base relations; when inverses are enabled the id
``r + R`` is the inverse of ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Invalid node, relation or entity-type identifier."""


class Vocab:
    """Bijective name <-> contiguous integer id mapping."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._ids[name] = idx
            self._names.append(name)
        return idx

    def id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise KeyError(f"unknown name {name!r}") from None

    def get(self, name: str, default=None):
        return self._ids.get(name, default)

    def name(self, idx: int) -> str:
        return self._names[idx]

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self):
        return iter(self._names)

    @property
    def names(self) -> list[str]:
        return list(self._names)


@dataclass
class HeteroGraph:
    """Typed multi-relational graph.

    Build with :meth:`add_triple` and friends, then call :meth:`finalize`
    before querying; afterwards the graph is read-only.
    """

    node_count: int
    num_base_relations: int
    gen_inverse: bool = True
    entity_type_of: np.ndarray | None = None
    entity_type_names: list[str] = field(default_factory=lambda: ["Entity"])
    relation_names: list[str] | None = None
    node_names: list[str] | None = None

    def __post_init__(self):
        if self.node_count < 0 or self.num_base_relations < 0:
            raise GraphError("node_count and num_base_relations must be >= 0")
        if self.entity_type_of is None:
            self.entity_type_of = np.zeros(self.node_count, dtype=np.int64)
        else:
            self.entity_type_of = np.asarray(self.entity_type_of, dtype=np.int64)
            if self.entity_type_of.shape != (self.node_count,):
                raise GraphError("entity_type_of must have one entry per node")
            if self.node_count and (
                self.entity_type_of.min() < 0
                or self.entity_type_of.max() >= len(self.entity_type_names)
            ):
                raise GraphError("entity type id out of range")
        if self.relation_names is None:
            self.relation_names = [f"r{k}" for k in range(self.num_base_relations)]
        if len(self.relation_names) != self.num_base_relations:
            raise GraphError("relation_names must name every base relation")
        self._edges: set[tuple[int, int, int]] = set()
        self._final = False
        self._src = self._rel = self._dst = None
        self._neighbors: dict[tuple[int, int], np.ndarray] = {}
        self._relsets: list[np.ndarray] = []

    # -- construction -------------------------------------------------

    @property
    def num_relations(self) -> int:
        """Size of the relation id space, inverses included."""
        return self.num_base_relations * (2 if self.gen_inverse else 1)

    def inverse(self, rel: int) -> int:
        if not self.gen_inverse:
            raise GraphError("graph was built without inverse relations")
        self._check_rel(rel)
        R = self.num_base_relations
        return rel + R if rel < R else rel - R

    def relation_name(self, rel: int) -> str:
        self._check_rel(rel)
        R = self.num_base_relations
        if rel < R:
            return self.relation_names[rel]
        return self.relation_names[rel - R] + "^-1"

    def add_triple(self, head: int, rel: int, tail: int, gen_inverse: bool | None = None):
        """Insert ``(head, rel, tail)`` and, if enabled, its inverse.

        ``rel`` must be a base relation id.  Duplicates are ignored.
        """
        if self._final:
            raise GraphError("graph is finalized")
        self._check_node(head)
        self._check_node(tail)
        if not 0 <= rel < self.num_base_relations:
            raise GraphError(f"unknown base relation id {rel}")
        if gen_inverse is None:
            gen_inverse = self.gen_inverse
        if gen_inverse and not self.gen_inverse:
            raise GraphError("graph was built without inverse relations")
        self._edges.add((int(head), int(rel), int(tail)))
        if gen_inverse:
            self._edges.add((int(tail), int(rel) + self.num_base_relations, int(head)))
        return self

    def add_triples(self, triples: Iterable[Sequence[int]]):
        for h, r, t in triples:
            self.add_triple(h, r, t)
        return self

    def finalize(self) -> "HeteroGraph":
        """Freeze the edge set and build the neighbor and relation-set indices."""
        if self._final:
            return self
        edges = sorted(self._edges)
        if edges:
            arr = np.asarray(edges, dtype=np.int64)
        else:
            arr = np.zeros((0, 3), dtype=np.int64)
        self._src, self._rel, self._dst = arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()
        for a in (self._src, self._rel, self._dst):
            a.setflags(write=False)
        self._neighbors = {}
        relsets: list[list[int]] = [[] for _ in range(self.node_count)]
        # edges are sorted by (src, rel, dst): contiguous runs give sorted neighbor lists
        if len(edges):
            keys = self._src * max(self.num_relations, 1) + self._rel
            bounds = np.flatnonzero(np.diff(keys)) + 1
            starts = np.concatenate([[0], bounds])
            ends = np.concatenate([bounds, [len(edges)]])
            for s, e in zip(starts, ends):
                v, r = int(self._src[s]), int(self._rel[s])
                nb = self._dst[s:e]
                self._neighbors[(v, r)] = nb
                relsets[v].append(r)
        self._relsets = [np.asarray(rs, dtype=np.int64) for rs in relsets]
        self._final = True
        return self

    # -- queries ------------------------------------------------------

    @property
    def finalized(self) -> bool:
        return self._final

    @property
    def edges(self) -> np.ndarray:
        """Stored directed edges as an ``(E, 3)`` array of ``(src, rel, dst)``, sorted."""
        self._require_final()
        return np.stack([self._src, self._rel, self._dst], axis=1)

    @property
    def num_edges(self) -> int:
        self._require_final()
        return len(self._src)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        self._require_final()
        return self._src, self._rel, self._dst

    def neighbors(self, v: int, r: int) -> list[int]:
        """Sorted, deduplicated ``N_v^r`` (may be empty)."""
        self._require_final()
        self._check_node(v)
        self._check_rel(r)
        nb = self._neighbors.get((int(v), int(r)))
        return [] if nb is None else nb.tolist()

    def relation_set(self, v: int) -> list[int]:
        """Relations with a non-empty neighborhood at ``v``, ascending."""
        self._require_final()
        self._check_node(v)
        return self._relsets[v].tolist()

    def entity_type(self, v: int) -> int:
        self._check_node(v)
        return int(self.entity_type_of[v])

    def neighbor_index(self) -> dict[tuple[int, int], list[int]]:
        self._require_final()
        return {k: v.tolist() for k, v in self._neighbors.items()}

    def subgraph_by_relations(self, keep: Iterable[int]) -> "HeteroGraph":
        """New finalized graph keeping only edges whose relation id is in ``keep``."""
        self._require_final()
        keep_set = {int(r) for r in keep}
        for r in keep_set:
            self._check_rel(r)
        g = self._empty_like()
        for s, r, d in zip(self._src.tolist(), self._rel.tolist(), self._dst.tolist()):
            if r in keep_set:
                g._edges.add((s, r, d))
        return g.finalize()

    def permuted(self, perm: Sequence[int]) -> "HeteroGraph":
        """Relabel node ``v`` as ``perm[v]``."""
        self._require_final()
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.node_count)):
            raise GraphError("perm must be a permutation of the node ids")
        types = np.empty_like(self.entity_type_of)
        types[perm] = self.entity_type_of
        names = None
        if self.node_names is not None:
            names = [""] * self.node_count
            for v, n in enumerate(self.node_names):
                names[perm[v]] = n
        g = HeteroGraph(
            self.node_count,
            self.num_base_relations,
            gen_inverse=self.gen_inverse,
            entity_type_of=types,
            entity_type_names=list(self.entity_type_names),
            relation_names=list(self.relation_names),
            node_names=names,
        )
        for s, r, d in zip(self._src.tolist(), self._rel.tolist(), self._dst.tolist()):
            g._edges.add((int(perm[s]), r, int(perm[d])))
        return g.finalize()

    def _empty_like(self) -> "HeteroGraph":
        return HeteroGraph(
            self.node_count,
            self.num_base_relations,
            gen_inverse=self.gen_inverse,
            entity_type_of=self.entity_type_of.copy(),
            entity_type_names=list(self.entity_type_names),
            relation_names=list(self.relation_names),
            node_names=None if self.node_names is None else list(self.node_names),
        )

    def _require_final(self):
        if not self._final:
            raise GraphError("graph must be finalized before querying")

    def _check_node(self, v):
        if not (isinstance(v, (int, np.integer)) and 0 <= v < self.node_count):
            raise GraphError(f"unknown node id {v}")

    def _check_rel(self, r):
        if not (isinstance(r, (int, np.integer)) and 0 <= r < self.num_relations):
            raise GraphError(f"unknown relation id {r}")

    def __repr__(self):
        state = f"edges={len(self._src)}" if self._final else "building"
        return (
            f"HeteroGraph(nodes={self.node_count}, relations={self.num_relations}, "
            f"types={len(self.entity_type_names)}, {state})"
        )


def from_triples(
    triples: Iterable[Sequence[int]],
    node_count: int,
    num_base_relations: int,
    gen_inverse: bool = True,
    **kwargs,
) -> HeteroGraph:
    """Build and finalize a graph from ``(head, rel, tail)`` triples."""
    g = HeteroGraph(node_count, num_base_relations, gen_inverse=gen_inverse, **kwargs)
    g.add_triples(triples)
    return g.finalize()
