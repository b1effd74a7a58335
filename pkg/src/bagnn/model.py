"""Stacked bi-level attention encoder, classifier head and triple decoders.

Also holds the checkpoint format::

    bytes 0..7    magic b"BAGNNCK1"
    bytes 8..15   header length n, unsigned little-endian
    next n bytes  UTF-8 JSON header (sorted keys)
    rest          float64 little-endian array payload

The header has ``config`` (the :class:`ModelConfig` fields), ``graph``
(node count, relation count, entity type count) and ``arrays``: a list of
``{"name", "shape", "offset", "nbytes"}`` with offsets relative to the start
of the payload, in parameter order.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import AttentionRecord, ConfigError, LayerConfig, LayerParams, glorot, layer_forward, project_features
from .hetgraph import HeteroGraph
from .seeding import rng_stream
from .tensor import Tensor

VARIANTS = {
    "full": ("additive", "multiplicative"),
    "node_only": ("additive", "none"),
    "relation_only": ("none", "multiplicative"),
    "a_node_a_rel": ("additive", "additive"),
    "m_node_a_rel": ("multiplicative", "additive"),
    "m_node_m_rel": ("multiplicative", "multiplicative"),
}
DECODERS = ("distmult", "transe", "complex")

MAGIC = b"BAGNNCK1"


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    hidden_dim: int = 16
    feature_dim: int | None = None  # width of the learnable input table; None -> hidden_dim
    heads: int = 2
    variant: str = "full"
    num_classes: int = 0
    decoder: str | None = None
    leaky_slope: float = 0.2
    use_skip: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        if self.decoder is not None and self.decoder not in DECODERS:
            raise ConfigError(f"unknown decoder {self.decoder!r}")
        if self.decoder == "complex" and self.hidden_dim % 2:
            raise ConfigError("complex decoder needs an even hidden_dim")
        if self.num_classes < 0:
            raise ConfigError("num_classes must be >= 0")

    @property
    def input_dim(self) -> int:
        return self.feature_dim or self.hidden_dim

    def layer_configs(self) -> list[LayerConfig]:
        node_mode, rel_mode = VARIANTS[self.variant]
        d = self.hidden_dim
        return [
            LayerConfig(d, d, self.heads, node_mode, rel_mode, self.leaky_slope, self.use_skip)
            for _ in range(self.num_layers)
        ]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class BagnnParameters:
    config: ModelConfig
    embedding: Tensor | None  # (N, input_dim); None when features are supplied
    type_proj: Tensor  # (B, hidden_dim, input_dim)
    layers: list[LayerParams]
    head: Tensor | None = None  # (num_classes, hidden_dim)
    decoder: Tensor | None = None  # (R_base, hidden_dim)
    graph_shape: dict = field(default_factory=dict)

    def named_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.embedding is not None:
            out["embedding"] = self.embedding
        out["type_proj"] = self.type_proj
        for l, lp in enumerate(self.layers):
            out.update(lp.named_tensors(f"layer{l}."))
        if self.head is not None:
            out["head"] = self.head
        if self.decoder is not None:
            out["decoder"] = self.decoder
        return out

    def encoder_tensors(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_tensors().items() if k not in ("head", "decoder")}

    def num_parameters(self) -> int:
        return sum(t.size for t in self.named_tensors().values())

    def zero_grad(self) -> None:
        for t in self.named_tensors().values():
            t.zero_grad()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.named_tensors().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        mine = self.named_tensors()
        if set(mine) != set(arrays):
            missing = sorted(set(mine) ^ set(arrays))
            raise ConfigError(f"parameter name mismatch: {missing}")
        for k, t in mine.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.shape:
                raise ConfigError(f"shape mismatch for {k}: {a.shape} vs {t.shape}")
            t.data[...] = a


def init_params(
    config: ModelConfig,
    graph: HeteroGraph,
    learn_embedding: bool = True,
    num_decoder_relations: int | None = None,
) -> BagnnParameters:
    """Seeded Glorot-uniform initialisation of every weight."""
    rng = rng_stream(config.seed, "init")
    d, di = config.hidden_dim, config.input_dim
    B = len(graph.entity_type_names)
    emb = Tensor(rng.normal(0.0, 1.0, (graph.node_count, di)), requires_grad=True) if learn_embedding else None
    proj = Tensor(glorot(rng, (B, d, di), di, d), requires_grad=True)
    layers = []
    prev = None
    for lc in config.layer_configs():
        layers.append(LayerParams.init(lc, graph.num_relations, rng, d_in_prev=prev))
        prev = lc.d_in
    head = None
    if config.num_classes:
        head = Tensor(glorot(rng, (config.num_classes, d), d, config.num_classes), requires_grad=True)
    dec = None
    if config.decoder is not None:
        n_rel = num_decoder_relations if num_decoder_relations is not None else graph.num_base_relations
        dec = Tensor(rng.normal(0.0, 1.0 / np.sqrt(d), (n_rel, d)), requires_grad=True)
        if config.decoder == "distmult":
            dec.data[...] = 1.0 + dec.data
    shape = {
        "node_count": graph.node_count,
        "num_relations": graph.num_relations,
        "num_entity_types": B,
    }
    return BagnnParameters(config, emb, proj, layers, head, dec, shape)


def forward(
    graph: HeteroGraph,
    params: BagnnParameters,
    features: Tensor | np.ndarray | None = None,
) -> tuple[Tensor, list[AttentionRecord]]:
    """Embeddings after the input projection and every layer, plus attention records."""
    if features is None:
        if params.embedding is None:
            raise ConfigError("no learnable embedding table; pass features")
        h = params.embedding
    else:
        h = T.as_tensor(features)
    if h.shape != (graph.node_count, params.config.input_dim):
        raise T.ShapeError(f"features {h.shape}, expected {(graph.node_count, params.config.input_dim)}")
    h = project_features(h, graph.entity_type_of, params.type_proj)
    records = []
    prev_z = None
    for lp in params.layers:
        h, rec, prev_z = layer_forward(graph, h, lp, prev_z=prev_z, return_z=True)
        records.append(rec)
    return h, records


def class_logits(embeddings: Tensor, head: Tensor) -> Tensor:
    return T.matmul(embeddings, T.transpose(head))


def classify(embeddings: Tensor, head: Tensor) -> Tensor:
    """Per-node class distributions (rows sum to one)."""
    return T.softmax_rows(class_logits(embeddings, head))


# ---------------------------------------------------------------------------
# triple scoring


def score_triples(
    embeddings: Tensor, decoder_params: Tensor, kind: str, heads, rels, tails
) -> Tensor:
    """Vector of scores for aligned arrays of heads, relations and tails."""
    heads = np.asarray(heads, dtype=np.int64)
    rels = np.asarray(rels, dtype=np.int64)
    tails = np.asarray(tails, dtype=np.int64)
    if len(rels) and (rels.min() < 0 or rels.max() >= decoder_params.shape[0]):
        raise KeyError(f"unknown relation id in {sorted(set(rels.tolist()))}")
    eh = T.gather_rows(embeddings, heads)
    et = T.gather_rows(embeddings, tails)
    wr = T.gather_rows(decoder_params, rels)
    if kind == "distmult":
        return T.rowwise_dot(T.mul(eh, wr), et)
    if kind == "transe":
        return T.scale(T.row_norms(T.sub(T.add(eh, wr), et)), -1.0)
    if kind == "complex":
        d = embeddings.shape[1] // 2
        hr, hi = T.slice_cols(eh, 0, d), T.slice_cols(eh, d, 2 * d)
        tr, ti = T.slice_cols(et, 0, d), T.slice_cols(et, d, 2 * d)
        wre, wim = T.slice_cols(wr, 0, d), T.slice_cols(wr, d, 2 * d)
        # Re(<h, w, conj(t)>)
        terms = [
            T.rowwise_dot(T.mul(hr, wre), tr),
            T.rowwise_dot(T.mul(hi, wre), ti),
            T.rowwise_dot(T.mul(hr, wim), ti),
            T.scale(T.rowwise_dot(T.mul(hi, wim), tr), -1.0),
        ]
        return T.sum_vectors(terms)
    raise ConfigError(f"unknown decoder {kind!r}")


def score_triple(embeddings, decoder_params, kind: str, h: int, r: int, t: int) -> float:
    with T.no_grad():
        s = score_triples(T.as_tensor(embeddings), T.as_tensor(decoder_params), kind, [h], [r], [t])
    return float(s.data[0])


def score_candidates(emb: np.ndarray, w: np.ndarray, kind: str, h, r, t, side: str) -> np.ndarray:
    """Scores for replacing the head (``side='head'``) or tail with every node."""
    e_h, e_t, w_r = emb[h], emb[t], w[r]
    if kind == "distmult":
        return emb @ (e_t * w_r) if side == "head" else emb @ (e_h * w_r)
    if kind == "transe":
        if side == "head":
            return -np.linalg.norm(emb + (w_r - e_t), axis=1)
        return -np.linalg.norm((e_h + w_r) - emb, axis=1)
    if kind == "complex":
        d = emb.shape[1] // 2
        er, ei = emb[:, :d], emb[:, d:]
        wre, wim = w_r[:d], w_r[d:]
        if side == "head":
            tr, ti = e_t[:d], e_t[d:]
            return er @ (wre * tr + wim * ti) + ei @ (wre * ti - wim * tr)
        hr, hi = e_h[:d], e_h[d:]
        return er @ (hr * wre - hi * wim) + ei @ (hi * wre + hr * wim)
    raise ConfigError(f"unknown decoder {kind!r}")


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: BagnnParameters, extra: dict | None = None) -> None:
    arrays = params.arrays()
    entries, offset = [], 0
    for name, a in arrays.items():
        nbytes = a.size * 8
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {
        "format": "bagnn-checkpoint",
        "version": 1,
        "config": params.config.to_dict(),
        "graph": params.graph_shape,
        "learn_embedding": params.embedding is not None,
        "arrays": entries,
    }
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<Q", len(hbytes)))
    buf.write(hbytes)
    for a in arrays.values():
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Header dict and named arrays from a checkpoint file."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a bagnn checkpoint")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + n].decode("utf-8"))
    payload = memoryview(raw)[16 + n :]
    arrays = {}
    for e in header["arrays"]:
        chunk = payload[e["offset"] : e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(e["shape"]).copy()
    return header, arrays


def load_checkpoint(path, graph: HeteroGraph) -> tuple[BagnnParameters, dict]:
    header, arrays = read_checkpoint(path)
    config = ModelConfig.from_dict(header["config"])
    n_dec = arrays["decoder"].shape[0] if "decoder" in arrays else None
    params = init_params(config, graph, learn_embedding=header["learn_embedding"], num_decoder_relations=n_dec)
    params.load_arrays(arrays)
    return params, header
