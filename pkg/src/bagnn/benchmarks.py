"""Locate and load the AIFB and MUTAG node-classification benchmarks.

The files are not shipped with the package.  Point ``BAGNN_DATA_DIR`` (or
``data_dir=``) at a directory holding one sub-directory per dataset in the
layout of the common RDF benchmark distribution::

    <data_dir>/aifb/aifb_stripped.nt.gz    (or .nt)
    <data_dir>/aifb/trainingSet.tsv
    <data_dir>/aifb/testSet.tsv
    <data_dir>/mutag/mutag_stripped.nt.gz
    <data_dir>/mutag/trainingSet.tsv
    <data_dir>/mutag/testSet.tsv
"""

from __future__ import annotations

import hashlib
import io
import os
from dataclasses import dataclass
from pathlib import Path

from .hetgraph import HeteroGraph
from .ingest import LabeledSplit, build_graph, convert_split_files, load_labels, parse_ntriples


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    graph_file: str
    target_relations: tuple[str, ...]
    num_labeled: int
    num_classes: int


BENCHMARKS = {
    "aifb": BenchmarkSpec(
        "aifb",
        "aifb_stripped.nt",
        (
            "http://swrc.ontoware.org/ontology#affiliation",
            "http://swrc.ontoware.org/ontology#employs",
        ),
        176,
        4,
    ),
    "mutag": BenchmarkSpec(
        "mutag",
        "mutag_stripped.nt",
        ("http://dl-learner.org/carcinogenesis#isMutagenic",),
        340,
        2,
    ),
}


class DatasetNotFound(FileNotFoundError):
    pass


def data_dir(explicit=None) -> Path:
    if explicit is not None:
        return Path(explicit)
    return Path(os.environ.get("BAGNN_DATA_DIR", "data"))


def locate(name: str, root=None) -> dict[str, Path]:
    """Paths of the graph and split files, or :class:`DatasetNotFound` listing what is missing."""
    spec = BENCHMARKS[name]
    base = data_dir(root) / name
    found: dict[str, Path] = {}
    missing = []
    for key, fname in (("graph", spec.graph_file), ("train", "trainingSet.tsv"), ("test", "testSet.tsv")):
        options = [base / fname, base / (fname + ".gz")]
        hit = next((p for p in options if p.exists()), None)
        if hit is None:
            missing.append(str(options[0]))
        else:
            found[key] = hit
    if missing:
        raise DatasetNotFound(
            f"{name} benchmark files not found (set BAGNN_DATA_DIR): missing {', '.join(missing)}"
        )
    return found


def load_benchmark(name: str, root=None, gen_inverse: bool = True) -> tuple[HeteroGraph, LabeledSplit]:
    """Graph with the target relations removed, plus the published train/test split."""
    spec = BENCHMARKS[name]
    paths = locate(name, root)
    graph = build_graph(parse_ntriples(paths["graph"]), gen_inverse=gen_inverse,
                        remove_relations=spec.target_relations)
    buf = io.BytesIO()
    convert_split_files(paths["train"], paths["test"], buf)
    buf.seek(0)
    return graph, load_labels(buf, graph, source=f"{name} split files")


def checksums(name: str, root=None) -> dict[str, str]:
    """SHA-256 of each located benchmark file, for recording which copy a run used."""
    return {key: hashlib.sha256(path.read_bytes()).hexdigest() for key, path in locate(name, root).items()}
