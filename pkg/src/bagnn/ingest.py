"""Readers for N-Triples, TSV triple files and node label files.

Only the line-oriented N-Triples subset is understood: IRIs in angle
brackets, ``_:`` blank node labels (treated as plain node names) and quoted
literals whose ``^^<type>`` / ``@lang`` suffix is kept as part of the term
but otherwise ignored.  Paths ending in ``.gz`` are decompressed on the fly.
"""

from __future__ import annotations

import csv
import gzip
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .hetgraph import HeteroGraph, Vocab

LITERAL_TYPE = "Literal"
RESOURCE_TYPE = "Resource"
RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"


class ParseError(ValueError):
    """Malformed input; carries the 1-based line number and byte offset."""

    def __init__(self, message: str, line: int, offset: int | None = None, source: str = "<stream>"):
        where = f"{source}:{line}"
        if offset is not None:
            where += f" (byte {offset})"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.offset = offset
        self.source = source


def open_input(path) -> BinaryIO:
    """Binary handle; gzip-decompressed when the name ends in ``.gz``."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _as_stream(src) -> BinaryIO:
    if isinstance(src, (bytes, bytearray)):
        return io.BytesIO(src)
    if isinstance(src, (str, Path)):
        return open_input(src)
    return src


def _lines(stream: BinaryIO, source: str) -> Iterator[tuple[int, int, str]]:
    """Yield (line number, byte offset of line start, decoded line)."""
    offset = 0
    for lineno, raw in enumerate(stream, start=1):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"invalid UTF-8: {exc.reason}", lineno, offset + exc.start, source) from None
        yield lineno, offset, text.rstrip("\r\n")
        offset += len(raw)


# ---------------------------------------------------------------------------
# N-Triples

_IRI = r"<([^<>\"{}|^`\\\s]*)>"
_BNODE = r"(_:[A-Za-z0-9_][A-Za-z0-9_.\-]*)"
_LITERAL = r'("(?:[^"\\\n\r]|\\.)*"(?:\^\^<[^<>\s]*>|@[A-Za-z]+(?:-[A-Za-z0-9]+)*)?)'
_TERM_RE = {
    "subject": re.compile(rf"[ \t]*(?:{_IRI}|{_BNODE})"),
    "predicate": re.compile(rf"[ \t]+{_IRI}"),
    "object": re.compile(rf"[ \t]+(?:{_IRI}|{_BNODE}|{_LITERAL})"),
}
_END_RE = re.compile(r"[ \t]*\.[ \t]*(?:#.*)?$")


@dataclass
class RDFData:
    """Interned triples plus the dictionaries that name them."""

    nodes: Vocab = field(default_factory=Vocab)
    relations: Vocab = field(default_factory=Vocab)
    is_literal: list[bool] = field(default_factory=list)
    triples: list[tuple[int, int, int]] = field(default_factory=list)
    lines_read: int = 0

    def intern_node(self, name: str, literal: bool) -> int:
        n = len(self.nodes)
        idx = self.nodes.add(name)
        if idx == n:
            self.is_literal.append(literal)
        return idx

    @property
    def counts(self) -> dict[str, int]:
        return {
            "triples": len(self.triples),
            "nodes": len(self.nodes),
            "relations": len(self.relations),
            "literals": int(sum(self.is_literal)),
        }


def parse_ntriples(src, data: RDFData | None = None, source: str | None = None) -> RDFData:
    """Parse N-Triples from bytes, a binary stream or a path.

    Raises :class:`ParseError` on the first malformed line.
    """
    if source is None:
        source = str(src) if isinstance(src, (str, Path)) else "<stream>"
    data = data if data is not None else RDFData()
    stream = _as_stream(src)
    try:
        for lineno, start, line in _lines(stream, source):
            data.lines_read += 1
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            pos = 0
            terms = []
            for slot in ("subject", "predicate", "object"):
                m = _TERM_RE[slot].match(line, pos)
                if m is None:
                    col = len(line[:pos].encode("utf-8"))
                    raise ParseError(f"expected {slot}", lineno, start + col, source)
                terms.append(m)
                pos = m.end()
            if _END_RE.match(line, pos) is None:
                col = len(line[:pos].encode("utf-8"))
                raise ParseError("expected '.' terminating the triple", lineno, start + col, source)
            s_m, p_m, o_m = terms
            s = data.intern_node(s_m.group(1) or s_m.group(2), literal=False)
            p = data.relations.add(p_m.group(1))
            if o_m.group(3) is not None:
                o = data.intern_node(o_m.group(3), literal=True)
            else:
                o = data.intern_node(o_m.group(1) or o_m.group(2), literal=False)
            data.triples.append((s, p, o))
    finally:
        if isinstance(src, (str, Path)):
            stream.close()
    return data


def _format_node(name: str, literal: bool) -> str:
    if literal or name.startswith("_:"):
        return name
    return f"<{name}>"


def write_ntriples(data: RDFData, stream, triples: Iterable[tuple[int, int, int]] | None = None) -> int:
    """Serialize interned triples as N-Triples; returns the number written."""
    n = 0
    for s, p, o in data.triples if triples is None else triples:
        line = (
            f"{_format_node(data.nodes.name(s), data.is_literal[s])} "
            f"<{data.relations.name(p)}> "
            f"{_format_node(data.nodes.name(o), data.is_literal[o])} .\n"
        )
        stream.write(line.encode("utf-8"))
        n += 1
    return n


def build_graph(
    data: RDFData,
    gen_inverse: bool = True,
    remove_relations: Iterable[str] = (),
    type_predicate: str | None = None,
) -> HeteroGraph:
    """Turn parsed RDF into a finalized :class:`HeteroGraph`.

    ``remove_relations`` lists predicate IRIs dropped entirely (the
    classification target, to avoid label leakage).  With ``type_predicate``
    set, a node's entity type is the object of its first such triple;
    otherwise IRIs and blank nodes share one ``Resource`` type.  Literals
    always get the ``Literal`` type.
    """
    removed = set(remove_relations)
    unknown = [r for r in removed if r not in data.relations]
    if unknown:
        raise KeyError(f"relations not present in data: {unknown}")
    kept_rel = [name for name in data.relations if name not in removed]
    rel_id = {data.relations.id(name): k for k, name in enumerate(kept_rel)}

    type_names = Vocab([RESOURCE_TYPE, LITERAL_TYPE])
    types = np.zeros(len(data.nodes), dtype=np.int64)
    types[np.asarray(data.is_literal, dtype=bool)] = 1
    if type_predicate is not None and type_predicate in data.relations:
        tp = data.relations.id(type_predicate)
        assigned = set()
        for s, p, o in data.triples:
            if p == tp and s not in assigned and not data.is_literal[s]:
                types[s] = type_names.add(data.nodes.name(o))
                assigned.add(s)

    g = HeteroGraph(
        len(data.nodes),
        len(kept_rel),
        gen_inverse=gen_inverse,
        entity_type_of=types,
        entity_type_names=type_names.names,
        relation_names=kept_rel,
        node_names=data.nodes.names,
    )
    for s, p, o in data.triples:
        r = rel_id.get(p)
        if r is not None:
            g.add_triple(s, r, o)
    return g.finalize()


# ---------------------------------------------------------------------------
# TSV triples


@dataclass
class TripleSplit:
    train: list[tuple[int, int, int]]
    valid: list[tuple[int, int, int]]
    test: list[tuple[int, int, int]]
    entities: Vocab
    relations: Vocab

    def __post_init__(self):
        sets = [set(self.train), set(self.valid), set(self.test)]
        for a in range(3):
            for b in range(a + 1, 3):
                if sets[a] & sets[b]:
                    raise ValueError("train/valid/test triple lists overlap")

    @property
    def all_true(self) -> set[tuple[int, int, int]]:
        return set(self.train) | set(self.valid) | set(self.test)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def train_graph(self, gen_inverse: bool = True) -> HeteroGraph:
        """Graph over the training triples only (the encoder's message-passing graph)."""
        g = HeteroGraph(
            len(self.entities),
            len(self.relations),
            gen_inverse=gen_inverse,
            relation_names=self.relations.names,
            node_names=self.entities.names,
        )
        g.add_triples(self.train)
        return g.finalize()


def parse_tsv_triples(
    src, entities: Vocab | None = None, relations: Vocab | None = None, source: str | None = None
) -> tuple[list[tuple[int, int, int]], Vocab, Vocab]:
    """Read ``head \\t relation \\t tail`` lines, interning names in file order."""
    if source is None:
        source = str(src) if isinstance(src, (str, Path)) else "<stream>"
    entities = entities if entities is not None else Vocab()
    relations = relations if relations is not None else Vocab()
    out = []
    stream = _as_stream(src)
    try:
        for lineno, start, line in _lines(stream, source):
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(f"expected 3 tab-separated columns, got {len(cols)}", lineno, start, source)
            h, r, t = (c.strip() for c in cols)
            out.append((entities.add(h), relations.add(r), entities.add(t)))
    finally:
        if isinstance(src, (str, Path)):
            stream.close()
    return out, entities, relations


def load_triple_split(train, valid, test) -> TripleSplit:
    """Read three TSV files with shared entity/relation dictionaries."""
    ents, rels = Vocab(), Vocab()
    tr, _, _ = parse_tsv_triples(train, ents, rels)
    va, _, _ = parse_tsv_triples(valid, ents, rels)
    te, _, _ = parse_tsv_triples(test, ents, rels)
    return TripleSplit(tr, va, te, ents, rels)


# ---------------------------------------------------------------------------
# labels


@dataclass
class LabeledSplit:
    train: list[tuple[int, int]]
    test: list[tuple[int, int]]
    class_names: list[str]

    def __post_init__(self):
        overlap = {v for v, _ in self.train} & {v for v, _ in self.test}
        if overlap:
            raise ValueError(f"nodes labeled in both train and test: {sorted(overlap)[:5]}")
        for _, c in self.train + self.test:
            if not 0 <= c < len(self.class_names):
                raise ValueError(f"class index {c} out of range")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def arrays(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        rows = getattr(self, which)
        if not rows:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        a = np.asarray(rows, dtype=np.int64)
        return a[:, 0], a[:, 1]

    def permuted(self, perm) -> "LabeledSplit":
        perm = np.asarray(perm)
        return LabeledSplit(
            [(int(perm[v]), c) for v, c in self.train],
            [(int(perm[v]), c) for v, c in self.test],
            list(self.class_names),
        )


def _strip_iri(name: str) -> str:
    name = name.strip()
    if name.startswith("<") and name.endswith(">"):
        return name[1:-1]
    return name


def _node_lookup(graph_or_vocab):
    names = graph_or_vocab.node_names if isinstance(graph_or_vocab, HeteroGraph) else graph_or_vocab
    if isinstance(names, Vocab):
        return names.get
    if names is None:
        raise ValueError("graph carries no node names")
    table = {n: k for k, n in enumerate(names)}
    return table.get


def load_labels(src, graph, source: str | None = None) -> LabeledSplit:
    """Read ``node_iri \\t class_name \\t split`` rows (split is train or test)."""
    if source is None:
        source = str(src) if isinstance(src, (str, Path)) else "<stream>"
    lookup = _node_lookup(graph)
    classes = Vocab()
    rows: dict[str, list[tuple[int, int]]] = {"train": [], "test": []}
    seen: dict[int, str] = {}
    stream = _as_stream(src)
    try:
        for lineno, start, line in _lines(stream, source):
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(f"expected 3 tab-separated columns, got {len(cols)}", lineno, start, source)
            iri, cname, split = _strip_iri(cols[0]), cols[1].strip(), cols[2].strip()
            if split not in rows:
                raise ParseError(f"split must be 'train' or 'test', got {split!r}", lineno, start, source)
            v = lookup(iri)
            if v is None:
                raise KeyError(f"node {iri!r} not in graph")
            if v in seen and seen[v] != split:
                raise ValueError(f"node {iri!r} labeled in both {seen[v]} and {split}")
            seen[v] = split
            rows[split].append((v, classes.add(cname)))
    finally:
        if isinstance(src, (str, Path)):
            stream.close()
    return LabeledSplit(rows["train"], rows["test"], classes.names)


def convert_split_files(train_path, test_path, out_stream, entity_col: str | None = None,
                        label_col: str | None = None) -> int:
    """Rewrite header-bearing train/test TSVs (one row per instance) as a label file.

    Benchmark split files commonly carry a header such as
    ``person  id  label_affiliation``; the entity column defaults to the first
    one and the label column to the first whose name starts with ``label``.
    """
    n = 0
    for path, split in ((train_path, "train"), (test_path, "test")):
        with open_input(path) as fh:
            text = io.TextIOWrapper(fh, encoding="utf-8")
            reader = csv.DictReader(text, delimiter="\t")
            cols = reader.fieldnames or []
            ecol = entity_col or cols[0]
            lcol = label_col or next((c for c in cols if c.lower().startswith("label")), None)
            if lcol is None or ecol not in cols:
                raise ValueError(f"{path}: cannot find entity/label columns in {cols}")
            for row in reader:
                out_stream.write(f"{_strip_iri(row[ecol])}\t{row[lcol].strip()}\t{split}\n".encode("utf-8"))
                n += 1
    return n
