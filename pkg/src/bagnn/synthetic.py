"""Small generated graphs used by the tests, the gradient check and the demos."""

from __future__ import annotations

import numpy as np

from .hetgraph import HeteroGraph, from_triples
from .ingest import LabeledSplit, TripleSplit
from .hetgraph import Vocab
from .seeding import rng_stream


def six_node_fixture() -> tuple[HeteroGraph, LabeledSplit]:
    """6 nodes, 3 relations (no inverses), 2 entity types.

    Node 5 has no outgoing edges, so it exercises the isolated-node path;
    node 0 sees all three relations, node 2 two of them.
    """
    triples = [
        (0, 0, 1), (0, 0, 2), (0, 1, 3), (0, 2, 4), (0, 2, 1),
        (1, 0, 0), (1, 1, 2),
        (2, 1, 0), (2, 2, 3), (2, 2, 5), (2, 1, 4),
        (3, 0, 4), (3, 0, 0),
        (4, 2, 2),
    ]
    types = np.array([0, 0, 1, 1, 0, 1])
    g = from_triples(
        triples, 6, 3, gen_inverse=False,
        entity_type_of=types, entity_type_names=["Person", "Project"],
        relation_names=["knows", "worksOn", "cites"],
        node_names=[f"n{k}" for k in range(6)],
    )
    split = LabeledSplit([(0, 0), (1, 1), (2, 0), (5, 1)], [(3, 1), (4, 0)], ["a", "b"])
    return g, split


def random_graph(
    rng: np.random.Generator,
    node_count: int,
    num_relations: int,
    num_edges: int,
    num_types: int = 1,
    gen_inverse: bool = True,
) -> HeteroGraph:
    triples = np.stack(
        [
            rng.integers(node_count, size=num_edges),
            rng.integers(num_relations, size=num_edges),
            rng.integers(node_count, size=num_edges),
        ],
        axis=1,
    )
    types = rng.integers(num_types, size=node_count)
    return from_triples(
        triples.tolist(), node_count, num_relations, gen_inverse=gen_inverse,
        entity_type_of=types, entity_type_names=[f"T{k}" for k in range(num_types)],
    )


def planted_class_graph(seed: int = 0, n: int = 40, classes: int = 4) -> tuple[HeteroGraph, LabeledSplit]:
    """Nodes link mostly within their class under relation 0 and randomly under relation 1."""
    rng = rng_stream(seed, "data")
    label = np.arange(n) % classes
    triples = []
    for v in range(n):
        same = np.flatnonzero((label == label[v]) & (np.arange(n) != v))
        for u in rng.choice(same, size=2, replace=False):
            triples.append((v, 0, int(u)))
        triples.append((v, 1, int(rng.integers(n))))
    g = from_triples(triples, n, 2, node_names=[f"v{k}" for k in range(n)])
    order = rng.permutation(n)
    train = [(int(v), int(label[v])) for v in order[: n // 2]]
    test = [(int(v), int(label[v])) for v in order[n // 2 :]]
    return g, LabeledSplit(train, test, [f"c{k}" for k in range(classes)])


def planted_relation_graph(
    seed: int = 0,
    instances: int = 120,
    classes: int = 3,
    num_relations: int = 10,
    train_fraction: float = 0.5,
    reliability=(0.9, 0.75, 0.6),
) -> tuple[HeteroGraph, LabeledSplit, np.ndarray]:
    """Instances linked to per-relation hub nodes; a few relations carry the class.

    Relation ``k`` has its own ``classes`` hubs.  Each instance gets one edge
    per relation: with probability ``reliability[k]`` to the hub of its own
    class, otherwise to a uniformly random hub of that relation.  Relations
    past the end of ``reliability`` have reliability 0 (pure noise).

    Returns the graph, the split and the reliability per base relation.
    """
    rng = rng_stream(seed, "data")
    label = np.arange(instances) % classes
    rng.shuffle(label)
    rel = np.zeros(num_relations)
    rel[: len(reliability)] = reliability[:num_relations]
    reliability = rel
    hub0 = instances
    n = instances + num_relations * classes
    triples = []
    for v in range(instances):
        for k in range(num_relations):
            if rng.random() < reliability[k]:
                c = label[v]
            else:
                c = rng.integers(classes)
            triples.append((v, k, hub0 + k * classes + int(c)))
    types = np.zeros(n, dtype=np.int64)
    types[hub0:] = 1
    g = from_triples(
        triples, n, num_relations, entity_type_of=types,
        entity_type_names=["Instance", "Hub"],
        relation_names=[f"rel{k}" for k in range(num_relations)],
        node_names=[f"i{v}" for v in range(instances)] + [f"hub{k}" for k in range(n - instances)],
    )
    order = rng.permutation(instances)
    cut = int(round(train_fraction * instances))
    train = [(int(v), int(label[v])) for v in order[:cut]]
    test = [(int(v), int(label[v])) for v in order[cut:]]
    return g, LabeledSplit(train, test, [f"class{k}" for k in range(classes)]), reliability


def toy_kg(seed: int = 0, groups: int = 8, group_size: int = 5, test_fraction: float = 0.1,
           valid_fraction: float = 0.1) -> TripleSplit:
    """``groups * group_size**2`` triples: ``(a, sameGroup, b)`` for every a, b in one group.

    The default size gives 200 triples over 40 entities.  A held-out triple
    can only be recovered from the group structure visible in training.
    """
    rng = rng_stream(seed, "data")
    ents = Vocab(f"e{k}" for k in range(groups * group_size))
    rels = Vocab(["sameGroup"])
    triples = []
    for gidx in range(groups):
        members = range(gidx * group_size, (gidx + 1) * group_size)
        triples += [(a, 0, b) for a in members for b in members]
    triples = [triples[k] for k in rng.permutation(len(triples))]
    n_test = int(round(test_fraction * len(triples)))
    n_valid = int(round(valid_fraction * len(triples)))
    test = triples[:n_test]
    valid = triples[n_test : n_test + n_valid]
    train = triples[n_test + n_valid :]
    return TripleSplit(train, valid, test, ents, rels)
