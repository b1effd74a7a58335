"""Acceptance criteria, one test per criterion.

Each criterion prints ``criterion N: PASS|FAIL <detail>``; the lines are
collected again in the pytest terminal summary.  Run directly with
``python tests/test_acceptance.py`` for the lines alone.

Criteria 5 to 7 need the AIFB and MUTAG benchmark files (see the README for
the ``BAGNN_DATA_DIR`` layout).  Without them those criteria fail.
"""

import hashlib
import json
import math
import statistics
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracle  # noqa: E402
from bagnn import tensor as T  # noqa: E402
from bagnn.attention import layer_forward, project_features  # noqa: E402
from bagnn.benchmarks import DatasetNotFound, checksums, load_benchmark  # noqa: E402
from bagnn.eval import (  # noqa: E402
    PruneSpec,
    accuracy,
    mrr_hits,
    prune_relations,
    rank_all,
    relation_importance,
)
from bagnn.gradcheck import run_gradcheck  # noqa: E402
from bagnn.hetgraph import Vocab  # noqa: E402
from bagnn.ingest import TripleSplit  # noqa: E402
from bagnn.model import VARIANTS, ModelConfig, class_logits, forward, init_params  # noqa: E402
from bagnn.synthetic import planted_relation_graph, random_graph, six_node_fixture, toy_kg  # noqa: E402
from bagnn.train import (  # noqa: E402
    TrainConfig,
    cross_entropy_logits,
    predict_classes,
    train_link_prediction,
    train_node_classification,
)

LINES: dict[int, str] = {}
SEEDS_10 = range(10)
SEEDS_5 = range(5)


@dataclass
class Outcome:
    passed: bool
    detail: str
    report: str = ""  # deterministic run record, compared by criterion 11

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.report.encode()).hexdigest()


def record(n: int, outcome: Outcome) -> Outcome:
    line = f"criterion {n}: {'PASS' if outcome.passed else 'FAIL'} {outcome.detail}"
    LINES[n] = line
    print(line)
    return outcome


# ---------------------------------------------------------------------------
# 1. gradient correctness


def criterion_1() -> Outcome:
    t0 = time.perf_counter()
    result = run_gradcheck("six-node", eps=1e-4, tol=1e-4)
    secs = time.perf_counter() - t0
    ok = result.passed and secs < 30.0
    detail = f"worst_rel_error={result.worst_rel_error:.2e} ({result.worst_param}) runtime={secs:.1f}s (<30s)"
    return Outcome(ok, detail, json.dumps(result.per_param, sort_keys=True))


# ---------------------------------------------------------------------------
# 2. straight-line oracle


def criterion_2() -> Outcome:
    g, _ = six_node_fixture()
    edges = g.edges.tolist()
    worst = 0.0
    report = []
    for variant in sorted(VARIANTS):
        cfg = ModelConfig(num_layers=2, hidden_dim=4, heads=2, variant=variant, num_classes=2, seed=11)
        p = init_params(cfg, g)
        with T.no_grad():
            h0 = project_features(p.embedding, g.entity_type_of, p.type_proj)
            one, _ = layer_forward(g, h0, p.layers[0])
            two, _ = forward(g, p)
        o_one, _, _, _ = oracle.layer(edges, 6, h0.data.tolist(), *oracle.unpack(p.layers[0]))
        o_two, _ = oracle.encoder(edges, 6, g.entity_type_of, p.embedding.data, p.type_proj.data,
                                  [oracle.unpack(lp) for lp in p.layers])
        err = max(float(np.abs(one.data - o_one).max()), float(np.abs(two.data - o_two).max()))
        worst = max(worst, err)
        report.append(two.data.tobytes().hex())
    return Outcome(worst <= 1e-10, f"max_abs_error={worst:.1e} over 6 variants (<=1e-10)", "".join(report))


# ---------------------------------------------------------------------------
# 3. normalization


def criterion_3() -> Outcome:
    rng = np.random.default_rng(2024)
    variants = sorted(VARIANTS)
    worst, negatives, single_bad, checked = 0.0, 0, 0, 0
    for k in range(100):
        n, R = int(rng.integers(2, 30)), int(rng.integers(1, 5))
        g = random_graph(rng, n, R, int(rng.integers(1, 4 * n)), num_types=int(rng.integers(1, 3)))
        cfg = ModelConfig(num_layers=2, hidden_dim=4, heads=2, variant=variants[k % 6], seed=k)
        p = init_params(cfg, g)
        p.embedding.data *= 3.0
        with T.no_grad():
            _, records = forward(g, p)
        for rec in records:
            for head in range(rec.heads):
                for v in range(n):
                    rels = g.relation_set(v)
                    for r in rels:
                        gam = rec.gamma_for(head, r, v)
                        worst = max(worst, abs(gam.sum() - 1.0))
                        negatives += int(np.sum(gam < 0))
                        checked += 1
                    if rels and rec.psi[head] is not None:
                        M = rec.psi_matrix(head, v)
                        worst = max(worst, float(np.abs(M.sum(axis=1) - 1.0).max()))
                        negatives += int(np.sum(M < 0))
                        checked += len(rels)
                        if len(rels) == 1 and M.tolist() != [[1.0]]:
                            single_bad += 1
    ok = worst <= 1e-9 and negatives == 0 and single_bad == 0
    detail = f"{checked} vectors, max |sum-1|={worst:.1e}, negative entries={negatives}, bad single-relation psi={single_bad}"
    return Outcome(ok, detail, f"{checked}:{worst!r}")


# ---------------------------------------------------------------------------
# 4. permutation equivariance of the loss


def _loss(g, p, feats, nodes, labels):
    with T.no_grad():
        h, _ = forward(g, p, features=feats)
        return float(cross_entropy_logits(class_logits(T.gather_rows(h, nodes), p.head), labels).data)


def criterion_4() -> Outcome:
    rng = np.random.default_rng(77)
    worst = 0.0
    for k, variant in enumerate(sorted(VARIANTS) * 3):
        n = int(rng.integers(8, 25))
        g = random_graph(rng, n, 3, 3 * n, num_types=2)
        cfg = ModelConfig(num_layers=2, hidden_dim=4, heads=2, variant=variant, num_classes=3, seed=k)
        p = init_params(cfg, g)
        nodes = rng.choice(n, size=n // 2, replace=False)
        labels = rng.integers(3, size=nodes.size)
        perm = rng.permutation(n)
        feats = np.empty_like(p.embedding.data)
        feats[perm] = p.embedding.data
        a = _loss(g, p, p.embedding.data, nodes, labels)
        b = _loss(g.permuted(perm), p, feats, perm[nodes], labels)
        worst = max(worst, abs(a - b))
    return Outcome(worst < 1e-9, f"max |loss change|={worst:.1e} over 18 relabelings (<1e-9)", repr(worst))


# ---------------------------------------------------------------------------
# 5-7. benchmark node classification

BENCH_CFG = dict(num_layers=2, hidden_dim=16, heads=2)
BENCH_TRAIN = TrainConfig(epochs=50, lr=0.01)
_bench_cache: dict = {}


def benchmark_runs(name: str, variant: str = "full"):
    """Test accuracies over 10 seeds plus the slowest run time, or the missing-data message."""
    key = (name, variant)
    if key not in _bench_cache:
        try:
            g, split = load_benchmark(name)
        except DatasetNotFound as exc:
            _bench_cache[key] = str(exc)
            return _bench_cache[key]
        accs, times, reports = [], [], []
        for seed in SEEDS_10:
            t0 = time.perf_counter()
            cfg = ModelConfig(**BENCH_CFG, variant=variant, num_classes=split.num_classes, seed=seed)
            p, rep = train_node_classification(g, split, cfg, BENCH_TRAIN)
            accs.append(accuracy(predict_classes(g, p), split.test))
            times.append(time.perf_counter() - t0)
            reports.append(rep.to_jsonl())
        _bench_cache[key] = (accs, max(times), "".join(reports) + repr(accs))
    return _bench_cache[key]


def _benchmark_outcome(name: str, threshold: float) -> Outcome:
    runs = benchmark_runs(name)
    if isinstance(runs, str):
        return Outcome(False, f"{name} data unavailable: {runs}", "unavailable")
    accs, slowest, report = runs
    mean = float(np.mean(accs))
    ok = mean >= threshold and slowest <= 15 * 60
    detail = (f"{name} mean test accuracy={mean:.4f} (>={threshold}) slowest run={slowest:.0f}s "
              f"(<=900s) graph sha256={checksums(name)['graph'][:12]}")
    return Outcome(ok, detail, report)


def criterion_5() -> Outcome:
    return _benchmark_outcome("aifb", 0.92)


def criterion_6() -> Outcome:
    return _benchmark_outcome("mutag", 0.70)


def criterion_7() -> Outcome:
    results = {v: benchmark_runs("aifb", v) for v in ("full", "node_only", "relation_only")}
    missing = [v for v, r in results.items() if isinstance(r, str)]
    if missing:
        return Outcome(False, f"aifb data unavailable: {results[missing[0]]}", "unavailable")
    means = {v: float(np.mean(r[0])) for v, r in results.items()}
    ok = means["full"] >= means["node_only"] and means["full"] >= means["relation_only"]
    detail = " ".join(f"{v}={m:.4f}" for v, m in means.items())
    return Outcome(ok, f"aifb mean accuracy {detail}", "".join(r[2] for r in results.values()))


# ---------------------------------------------------------------------------
# 8. ranking metrics against exhaustive enumeration


def _py_score(kind, e, w, h, r, t):
    d = len(e[0])
    if kind == "distmult":
        return sum(e[h][i] * w[r][i] * e[t][i] for i in range(d))
    if kind == "transe":
        return -math.sqrt(sum((e[h][i] + w[r][i] - e[t][i]) ** 2 for i in range(d)))
    half = d // 2
    total = 0.0
    for i in range(half):
        hc = complex(e[h][i], e[h][half + i])
        wc = complex(w[r][i], w[r][half + i])
        tc = complex(e[t][i], e[t][half + i])
        total += (hc * wc * tc.conjugate()).real
    return total


def _enumerate(kind, e, w, n, triples, all_true):
    raw, filt = [], []
    for side in ("head", "tail"):
        for h, r, t in triples:
            target = _py_score(kind, e, w, h, r, t)
            above = ties = above_f = ties_f = 0
            for x in range(n):
                cand = (x, r, t) if side == "head" else (h, r, x)
                if cand == (h, r, t):
                    continue
                s = _py_score(kind, e, w, *cand)
                true = cand in all_true
                above += s > target
                ties += s == target
                above_f += s > target and not true
                ties_f += s == target and not true
            raw.append(1 + above + ties / 2)
            filt.append(1 + above_f + ties_f / 2)
    return raw, filt


def _exact_metrics(ranks):
    n = len(ranks)
    mrr = float(sum(Fraction(1.0 / r) for r in ranks)) / n
    out = {"MRR": mrr}
    for k in (1, 3, 10):
        out[f"Hits@{k}"] = sum(1 for r in ranks if r <= k) / n
    return out


def criterion_8() -> Outcome:
    rng = np.random.default_rng(8)
    n_ent, n_rel = 15, 3
    pool = [(h, r, t) for h in range(n_ent) for r in range(n_rel) for t in range(n_ent)]
    picked = [pool[k] for k in rng.choice(len(pool), size=50, replace=False)]
    split = TripleSplit(picked[20:], [], picked[:20], Vocab(f"e{k}" for k in range(n_ent)),
                        Vocab(f"r{k}" for k in range(n_rel)))
    mismatches, violations = [], 0
    report = []
    for kind in ("distmult", "transe", "complex"):
        # small integer tables give many exact score ties
        e = rng.integers(-1, 2, size=(n_ent, 4)).astype(np.float64)
        w = rng.integers(-1, 2, size=(n_rel, 4)).astype(np.float64)
        res = rank_all(e, w, kind, split)
        table = mrr_hits(res)
        raw, filt = _enumerate(kind, e.tolist(), w.tolist(), n_ent, split.test, split.all_true)
        expected = {"raw": _exact_metrics(raw), "filtered": _exact_metrics(filt)}
        if table != expected or res.ranks("raw").tolist() != raw or res.ranks("filtered").tolist() != filt:
            mismatches.append(kind)
        violations += int(np.sum(1 / res.ranks("filtered") < 1 / res.ranks("raw")))
        report.append(json.dumps(table, sort_keys=True))
    ok = not mismatches and violations == 0
    detail = (f"3 decoders x 20 test triples, exact mismatches={mismatches or 'none'}, "
              f"filtered<raw reciprocal ranks={violations}")
    return Outcome(ok, detail, "".join(report))


# ---------------------------------------------------------------------------
# 9. link prediction sanity

LP_TRAIN = TrainConfig(epochs=300, lr=0.01)


def _filtered_mrr(kg, p):
    with T.no_grad():
        h = forward(kg.train_graph(), p)[0].data
    return mrr_hits(rank_all(h, p.decoder.data, "distmult", kg))["filtered"]["MRR"]


def criterion_9() -> Outcome:
    kg = toy_kg(0)
    assert len(kg.train) + len(kg.valid) + len(kg.test) == 200
    g = kg.train_graph()
    trained, control, slowest, report = [], [], 0.0, []
    for seed in SEEDS_5:
        cfg = ModelConfig(hidden_dim=16, heads=2, decoder="distmult", seed=seed)
        t0 = time.perf_counter()
        p, rep = train_link_prediction(g, kg, cfg, LP_TRAIN)
        trained.append(_filtered_mrr(kg, p))
        slowest = max(slowest, time.perf_counter() - t0)
        # control: same decoder training on top of the frozen, untrained encoder
        p0 = init_params(cfg, g, num_decoder_relations=kg.num_relations)
        t0 = time.perf_counter()
        p0, rep0 = train_link_prediction(g, kg, cfg, LP_TRAIN, params=p0, freeze=p0.encoder_tensors())
        control.append(_filtered_mrr(kg, p0))
        slowest = max(slowest, time.perf_counter() - t0)
        report += [rep.to_jsonl(), rep0.to_jsonl()]
    med = statistics.median(trained)
    gap = statistics.median(t - c for t, c in zip(trained, control))
    ok = med >= 0.5 and gap >= 0.2 and slowest < 300
    detail = (f"median filtered MRR={med:.4f} (>=0.5), median gap over control={gap:.4f} (>=0.2), "
              f"slowest run={slowest:.1f}s (<300s)")
    return Outcome(ok, detail, "".join(report) + repr((trained, control)))


# ---------------------------------------------------------------------------
# 10. pruning case study


def criterion_10() -> Outcome:
    accs = {"top": [], "random": [], "bottom": []}
    report = []
    for seed in SEEDS_5:
        g, split, _ = planted_relation_graph(seed)
        cfg = ModelConfig(hidden_dim=16, heads=2, num_classes=split.num_classes, seed=seed)
        tc = TrainConfig(epochs=50)
        p, rep = train_node_classification(g, split, cfg, tc)
        with T.no_grad():
            _, records = forward(g, p)
        importance = relation_importance(records[-1], g.num_relations)
        report.append(rep.to_jsonl() + repr(importance.tolist()))
        for mode in accs:
            sub = prune_relations(g, importance, PruneSpec(mode, 0.3, seed))
            q, _ = train_node_classification(sub, split, cfg, tc)
            accs[mode].append(accuracy(predict_classes(sub, q), split.test))
    med = {m: statistics.median(a) for m, a in accs.items()}
    ok = med["top"] > med["random"] > med["bottom"]
    detail = "median test accuracy " + " ".join(f"{m}={v:.4f}" for m, v in med.items()) + " (top>random>bottom)"
    return Outcome(ok, detail, "".join(report) + repr(accs))


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}
_first_runs: dict[int, Outcome] = {}


def run(n: int) -> Outcome:
    if n not in _first_runs:
        _first_runs[n] = CRITERIA[n]()
    return _first_runs[n]


# ---------------------------------------------------------------------------
# 11. determinism


def criterion_11() -> Outcome:
    first = {n: run(n) for n in CRITERIA}
    _bench_cache.clear()
    differ, skipped = [], []
    for n, fn in CRITERIA.items():
        if first[n].report == "unavailable":
            skipped.append(n)
            continue
        if fn().digest != first[n].digest:
            differ.append(n)
    ran = [n for n in CRITERIA if n not in skipped]
    detail = f"reruns of criteria {ran} byte-identical: {'yes' if not differ else f'no, differ: {differ}'}"
    if skipped:
        detail += f"; criteria {skipped} not rerun (no data)"
    return Outcome(not differ, detail)


@pytest.mark.parametrize("n", sorted(CRITERIA) + [11])
def test_criterion(n):
    outcome = record(n, criterion_11() if n == 11 else run(n))
    assert outcome.passed, LINES[n]


if __name__ == "__main__":
    for n in sorted(CRITERIA) + [11]:
        record(n, criterion_11() if n == 11 else run(n))
