"""Bi-level attention layer.

For every node ``v`` and every relation ``r`` incident to it, node-level
attention weights ``gamma`` over the relation-specific neighborhood produce a
relation summary ``z_v^r``.  Relation-level attention then mixes the
summaries of all relations at ``v``: relation-specific query/key/value
projections give row-stochastic weights ``psi`` over ``R_v``, and

    delta_v^r = ReLU(sum_{r'} psi^{r,r'} value_{r'} + W_self h_v)
    h_v'      = mean over heads of sum_{r in R_v} delta_v^r

The batched implementation (:func:`layer_forward`) works on flat arrays of
(node, relation) *pairs*; the per-node functions below it compute the same
quantities one node at a time and exist for inspection and testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import tensor as T
from .hetgraph import HeteroGraph
from .tensor import Tensor

NodeMode = Literal["additive", "multiplicative", "none"]
RelMode = Literal["multiplicative", "additive", "none"]

NODE_MODES = ("additive", "multiplicative", "none")
REL_MODES = ("multiplicative", "additive", "none")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LayerConfig:
    d_in: int
    d_out: int
    heads: int = 1
    node_att_mode: str = "additive"
    rel_att_mode: str = "multiplicative"
    leaky_slope: float = 0.2
    use_skip: bool = True

    def __post_init__(self):
        if self.heads < 1:
            raise ConfigError("heads must be >= 1")
        if self.d_in < 1 or self.d_out < 1:
            raise ConfigError("layer dims must be positive")
        if self.node_att_mode not in NODE_MODES:
            raise ConfigError(f"unknown node_att_mode {self.node_att_mode!r}")
        if self.rel_att_mode not in REL_MODES:
            raise ConfigError(f"unknown rel_att_mode {self.rel_att_mode!r}")
        if self.node_att_mode == "none" and self.rel_att_mode == "none":
            raise ConfigError("at least one attention stage must be enabled")
        if self.rel_att_mode == "none" and self.d_in != self.d_out:
            raise ConfigError("rel_att_mode='none' adds z to W_self h and needs d_in == d_out")


# ---------------------------------------------------------------------------
# graph-derived index arrays


class GraphIndex:
    """Flat index arrays over (node, relation) pairs, edges and pair-pairs.

    ``pair p`` is a (node, relation) combination with a non-empty
    neighborhood.  Edge ``e`` says ``e_nbr[e]`` is in ``N_{e_node[e]}^{e_rel[e]}``
    and belongs to pair ``e_pair[e]``.  The pair-pair arrays enumerate every
    ordered (r, r') in ``R_v x R_v`` for every node ``v``.
    """

    def __init__(self, graph: HeteroGraph):
        if not graph.finalized:
            graph.finalize()
        self.node_count = graph.node_count
        self.num_relations = graph.num_relations
        src, rel, dst = graph.edge_arrays()
        self.e_node = src
        self.e_rel = rel
        self.e_nbr = dst
        n_rel = max(graph.num_relations, 1)
        keys = src * n_rel + rel
        uniq, e_pair = np.unique(keys, return_inverse=True)
        self.e_pair = e_pair.astype(np.int64)
        self.pair_node = (uniq // n_rel).astype(np.int64)
        self.pair_rel = (uniq % n_rel).astype(np.int64)
        self.num_pairs = len(uniq)
        self.pair_degree = np.bincount(self.e_pair, minlength=self.num_pairs).astype(np.float64)

        # pairs are sorted by node, so each node's pairs form a contiguous block
        counts = np.bincount(self.pair_node, minlength=self.node_count)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.node_pair_start = starts
        self.node_pair_count = counts
        q_list, k_list = [], []
        for c in np.unique(counts[counts > 0]):
            nodes = np.flatnonzero(counts == c)
            base = starts[nodes]
            off_q = np.repeat(np.arange(c), c)
            off_k = np.tile(np.arange(c), c)
            q_list.append((base[:, None] + off_q[None, :]).ravel())
            k_list.append((base[:, None] + off_k[None, :]).ravel())
        if q_list:
            q = np.concatenate(q_list)
            k = np.concatenate(k_list)
            order = np.lexsort((k, q))
            self.pp_q, self.pp_k = q[order], k[order]
        else:
            self.pp_q = self.pp_k = np.zeros(0, dtype=np.int64)
        self.isolated = np.flatnonzero(counts == 0)

    def pair_id(self, v: int, r: int) -> int | None:
        s, c = self.node_pair_start[v], self.node_pair_count[v]
        rels = self.pair_rel[s : s + c]
        k = np.searchsorted(rels, r)
        if k < c and rels[k] == r:
            return int(s + k)
        return None


_INDEX_CACHE: dict[int, tuple[HeteroGraph, GraphIndex]] = {}


def graph_index(graph: HeteroGraph) -> GraphIndex:
    """Cached :class:`GraphIndex` for a finalized (immutable) graph."""
    hit = _INDEX_CACHE.get(id(graph))
    if hit is not None and hit[0] is graph:
        return hit[1]
    idx = GraphIndex(graph)
    if len(_INDEX_CACHE) > 32:
        _INDEX_CACHE.clear()
    _INDEX_CACHE[id(graph)] = (graph, idx)
    return idx


# ---------------------------------------------------------------------------
# parameters


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class LayerParams:
    """Learnable weights of one layer; per-head entries are lists of length K.

    Shapes, with R relations (inverses included):
      a[k]        (R, 2*d_in)          additive node attention vectors
      U1[k], U2[k] (R, d_in, d_in)     multiplicative node attention
      W1/W2/W3[k] (R, d_out, d_in)     relation-specific query/key/value
      a_rel[k]    (R, 2*d_out)         additive relation attention
      W_self      (d_out, d_in)
      skip_low    (d_in, d_in_prev)    only when node-level skip shapes differ
      skip_high   (d_out, d_in)        only when d_in != d_out
    """

    config: LayerConfig
    num_relations: int
    a: list[Tensor] = field(default_factory=list)
    U1: list[Tensor] = field(default_factory=list)
    U2: list[Tensor] = field(default_factory=list)
    W1: list[Tensor] = field(default_factory=list)
    W2: list[Tensor] = field(default_factory=list)
    W3: list[Tensor] = field(default_factory=list)
    a_rel: list[Tensor] = field(default_factory=list)
    W_self: Tensor | None = None
    skip_low: Tensor | None = None
    skip_high: Tensor | None = None

    @classmethod
    def init(
        cls,
        config: LayerConfig,
        num_relations: int,
        rng: np.random.Generator,
        d_in_prev: int | None = None,
    ) -> "LayerParams":
        R, di, do, K = num_relations, config.d_in, config.d_out, config.heads
        p = cls(config, R)

        def leaf(arr):
            return Tensor(arr, requires_grad=True)

        for _ in range(K):
            if config.node_att_mode == "additive":
                p.a.append(leaf(glorot(rng, (R, 2 * di), 2 * di, 1)))
            elif config.node_att_mode == "multiplicative":
                p.U1.append(leaf(glorot(rng, (R, di, di), di, di)))
                p.U2.append(leaf(glorot(rng, (R, di, di), di, di)))
            if config.rel_att_mode != "none":
                p.W1.append(leaf(glorot(rng, (R, do, di), di, do)))
                p.W2.append(leaf(glorot(rng, (R, do, di), di, do)))
                p.W3.append(leaf(glorot(rng, (R, do, di), di, do)))
            if config.rel_att_mode == "additive":
                p.a_rel.append(leaf(glorot(rng, (R, 2 * do), 2 * do, 1)))
        p.W_self = leaf(glorot(rng, (do, di), di, do))
        if config.use_skip:
            if d_in_prev is not None and d_in_prev != di:
                p.skip_low = leaf(glorot(rng, (di, d_in_prev), d_in_prev, di))
            if di != do:
                p.skip_high = leaf(glorot(rng, (do, di), di, do))
        return p

    def named_tensors(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in ("a", "U1", "U2", "W1", "W2", "W3", "a_rel"):
            for k, t in enumerate(getattr(self, name)):
                out[f"{prefix}{name}.h{k}"] = t
        for name in ("W_self", "skip_low", "skip_high"):
            t = getattr(self, name)
            if t is not None:
                out[f"{prefix}{name}"] = t
        return out


# ---------------------------------------------------------------------------
# attention records


@dataclass
class AttentionRecord:
    """Attention weights of one layer, per head, stored against a GraphIndex.

    ``gamma[k]`` is aligned with the index's edge arrays and ``psi[k]`` with
    its pair-pair arrays.
    """

    index: GraphIndex
    gamma: list[np.ndarray]
    psi: list[np.ndarray | None]

    @property
    def heads(self) -> int:
        return len(self.gamma)

    def gamma_for(self, head: int, r: int, v: int) -> np.ndarray:
        """Weights over ``N_v^r`` in neighbor order."""
        p = self.index.pair_id(v, r)
        if p is None:
            raise KeyError(f"node {v} has no neighbors under relation {r}")
        return self.gamma[head][self.index.e_pair == p]

    def relations_of(self, v: int) -> np.ndarray:
        s, c = self.index.node_pair_start[v], self.index.node_pair_count[v]
        return self.index.pair_rel[s : s + c]

    def psi_matrix(self, head: int, v: int) -> np.ndarray:
        """``|R_v| x |R_v|`` matrix, row ``r`` = weights over ``r'``."""
        idx = self.index
        c = int(idx.node_pair_count[v])
        if c == 0:
            raise KeyError(f"node {v} has no relations")
        ps = self.psi[head]
        if ps is None:
            raise KeyError("relation-level attention disabled in this layer")
        s = int(idx.node_pair_start[v])
        mask = (idx.pp_q >= s) & (idx.pp_q < s + c)
        return ps[mask].reshape(c, c)

    def mean_psi_matrix(self, v: int) -> np.ndarray:
        return np.mean([self.psi_matrix(k, v) for k in range(self.heads)], axis=0)


# ---------------------------------------------------------------------------
# batched layer


def project_features(h: Tensor, entity_type_of: np.ndarray, projections: Tensor) -> Tensor:
    """Row ``i`` becomes ``T[type(i)] @ h[i]``; ``projections`` is ``(B, d_out, d_in)``."""
    types = np.asarray(entity_type_of, dtype=np.int64)
    if h.shape[0] != len(types):
        raise T.ShapeError(f"features have {h.shape[0]} rows for {len(types)} nodes")
    if len(types) and types.max() >= projections.shape[0]:
        raise ConfigError(f"missing projection for entity type {int(types.max())}")
    return T.indexed_matvec(projections, types, h)


def layer_forward(
    graph: HeteroGraph,
    h_in: Tensor,
    params: LayerParams,
    config: LayerConfig | None = None,
    prev_z: list[Tensor] | None = None,
    return_z: bool = False,
):
    """One bi-level attention layer over all nodes.

    Returns ``(h_out, record)``, or ``(h_out, record, z_per_head)`` when
    ``return_z`` is set (the relation summaries feed the next layer's
    node-level skip connection via ``prev_z``).
    """
    cfg = config or params.config
    idx = graph_index(graph)
    N = idx.node_count
    if h_in.shape != (N, cfg.d_in):
        raise T.ShapeError(f"layer input {h_in.shape}, expected {(N, cfg.d_in)}")
    if params.num_relations != idx.num_relations:
        raise ConfigError(
            f"params built for {params.num_relations} relations, graph has {idx.num_relations}"
        )
    slope = cfg.leaky_slope
    P = idx.num_pairs

    self_h = T.matmul(h_in, T.transpose(params.W_self))  # (N, d_out)

    head_out, gammas, psis, zs = [], [], [], []
    for k in range(cfg.heads):
        # node level
        if P == 0:
            gamma = None
        elif cfg.node_att_mode == "additive":
            a = params.a[k]
            s_self = T.matmul(h_in, T.transpose(T.slice_cols(a, 0, cfg.d_in)))
            s_nbr = T.matmul(h_in, T.transpose(T.slice_cols(a, cfg.d_in, 2 * cfg.d_in)))
            logits = T.add(T.take2d(s_self, idx.e_node, idx.e_rel), T.take2d(s_nbr, idx.e_nbr, idx.e_rel))
            gamma = T.segment_softmax(T.leaky_relu(logits, slope), idx.e_pair, P)
        elif cfg.node_att_mode == "multiplicative":
            q = T.indexed_matvec(params.U1[k], idx.e_rel, T.gather_rows(h_in, idx.e_node))
            kk = T.indexed_matvec(params.U2[k], idx.e_rel, T.gather_rows(h_in, idx.e_nbr))
            gamma = T.segment_softmax(T.rowwise_dot(q, kk), idx.e_pair, P)
        else:
            gamma = Tensor(1.0 / idx.pair_degree[idx.e_pair])

        if P:
            z = T.gather_weighted_sum(gamma, h_in, idx.e_nbr, idx.e_pair, P)
            if cfg.use_skip and prev_z is not None:
                pz = prev_z[k % len(prev_z)]
                if params.skip_low is not None:
                    pz = T.matmul(pz, T.transpose(params.skip_low))
                if pz.shape == z.shape:
                    z = T.add(z, pz)
            zs.append(z)
            pair_self = T.gather_rows(self_h, idx.pair_node)

            # relation level
            if cfg.rel_att_mode == "none":
                psi = None
                delta = T.relu(T.add(z, pair_self))
            else:
                q = T.indexed_matvec(params.W1[k], idx.pair_rel, z)
                kk = T.indexed_matvec(params.W2[k], idx.pair_rel, z)
                val = T.indexed_matvec(params.W3[k], idx.pair_rel, z)
                if cfg.rel_att_mode == "multiplicative":
                    logits = T.gather_dot(q, idx.pp_q, kk, idx.pp_k)
                else:
                    # the weight vector belongs to the query relation
                    ar = params.a_rel[k]
                    a_q, a_k = T.slice_cols(ar, 0, cfg.d_out), T.slice_cols(ar, cfg.d_out, 2 * cfg.d_out)
                    q_part = T.gather_rows(T.gather_dot(q, np.arange(P), a_q, idx.pair_rel), idx.pp_q)
                    k_part = T.gather_dot(kk, idx.pp_k, a_k, idx.pair_rel[idx.pp_q])
                    logits = T.leaky_relu(T.add(q_part, k_part), slope)
                psi = T.segment_softmax(logits, idx.pp_q, P)
                mix = T.gather_weighted_sum(psi, val, idx.pp_k, idx.pp_q, P)
                delta = T.relu(T.add(mix, pair_self))
            out = T.segment_sum(delta, idx.pair_node, N)
        else:
            psi = None
            out = None

        if len(idx.isolated):
            iso = T.segment_sum(
                T.relu(T.gather_rows(self_h, idx.isolated)), idx.isolated, N
            )
            out = iso if out is None else T.add(out, iso)
        gammas.append(None if gamma is None else gamma.data.copy())
        psis.append(None if psi is None else psi.data.copy())
        head_out.append(out)

    h_out = head_out[0] if cfg.heads == 1 else T.mean_vectors(head_out)
    if cfg.use_skip:
        if params.skip_high is not None:
            h_out = T.add(h_out, T.matmul(h_in, T.transpose(params.skip_high)))
        else:
            h_out = T.add(h_out, h_in)
    record = AttentionRecord(idx, gammas, psis)
    if return_z:
        return h_out, record, zs
    return h_out, record


# ---------------------------------------------------------------------------
# per-node reference path


def node_attention(
    graph: HeteroGraph, v: int, r: int, h: Tensor, params: LayerParams, head: int = 0
) -> Tensor:
    """Weights over ``N_v^r`` from the layer's node-level attention."""
    nbrs = graph.neighbors(v, r)
    if not nbrs:
        raise ValueError(f"node {v} has no neighbors under relation {r}")
    cfg = params.config
    hv = T.gather_rows(h, [v])
    logits = []
    for j in nbrs:
        hj = T.gather_rows(h, [j])
        if cfg.node_att_mode == "additive":
            a_r = T.gather_rows(params.a[head], [r])
            cat = T.concat_rows(T.reshape(hv, (cfg.d_in,)), T.reshape(hj, (cfg.d_in,)))
            logit = T.leaky_relu(T.matmul(a_r, cat), cfg.leaky_slope)
        elif cfg.node_att_mode == "multiplicative":
            u1 = T.reshape(T.gather_rows(params.U1[head], [r]), (cfg.d_in, cfg.d_in))
            u2 = T.reshape(T.gather_rows(params.U2[head], [r]), (cfg.d_in, cfg.d_in))
            qv = T.matmul(u1, T.reshape(hv, (cfg.d_in,)))
            kj = T.matmul(u2, T.reshape(hj, (cfg.d_in,)))
            logit = T.reshape(T.rowwise_dot(T.reshape(qv, (1, -1)), T.reshape(kj, (1, -1))), (1,))
        else:
            logit = Tensor([0.0])
        logits.append(T.reshape(logit, (1,)))
    vec = T.concat_rows(logits)
    return T.masked_softmax(vec, range(len(nbrs)))


def lower_att(graph: HeteroGraph, v: int, r: int, gamma: Tensor, h: Tensor) -> Tensor:
    """``z_v^r = sum_j gamma_j h_j`` over ``j in N_v^r``."""
    nbrs = graph.neighbors(v, r)
    if gamma.shape != (len(nbrs),):
        raise T.ShapeError(f"gamma {gamma.shape} not aligned with {len(nbrs)} neighbors")
    rows = T.gather_rows(h, nbrs)
    return T.reshape(T.matmul(T.reshape(gamma, (1, len(nbrs))), rows), (h.shape[1],))


def qkv(z: Tensor, params: LayerParams, r: int, head: int = 0) -> tuple[Tensor, Tensor, Tensor]:
    cfg = params.config
    shape = (cfg.d_out, cfg.d_in)
    mats = [T.reshape(T.gather_rows(W[head], [r]), shape) for W in (params.W1, params.W2, params.W3)]
    return tuple(T.matmul(m, z) for m in mats)


def relation_attention(
    queries: list[Tensor], keys: list[Tensor], params: LayerParams | None = None,
    rels: list[int] | None = None, head: int = 0,
) -> list[Tensor]:
    """Row ``r`` of the result: softmax over ``r'`` of the query/key score."""
    n = len(queries)
    if n == 0 or len(keys) != n:
        raise ValueError("need one key per query and at least one relation")
    additive = params is not None and params.config.rel_att_mode == "additive"
    rows = []
    for i in range(n):
        logits = []
        for j in range(n):
            if additive:
                a = T.reshape(T.gather_rows(params.a_rel[head], [rels[i]]), (-1,))
                s = T.leaky_relu(T.matmul(T.reshape(a, (1, -1)), T.concat_rows(queries[i], keys[j])),
                                 params.config.leaky_slope)
            else:
                s = T.rowwise_dot(T.reshape(queries[i], (1, -1)), T.reshape(keys[j], (1, -1)))
            logits.append(T.reshape(s, (1,)))
        rows.append(T.masked_softmax(T.concat_rows(logits), range(n)))
    return rows


def delta(psi_row: Tensor, values: list[Tensor], h_v: Tensor, W_self: Tensor) -> Tensor:
    """``ReLU(sum_r' psi[r'] value_r' + W_self h_v)``."""
    if psi_row.shape != (len(values),):
        raise T.ShapeError(f"psi row {psi_row.shape} vs {len(values)} values")
    mixed = T.matmul(T.reshape(psi_row, (1, len(values))), T.reshape(T.concat_rows(values), (len(values), -1)))
    return T.relu(T.add(T.reshape(mixed, (W_self.shape[0],)), T.matmul(W_self, h_v)))
