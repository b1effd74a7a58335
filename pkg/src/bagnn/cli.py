"""``bagnn`` command line: train, eval, export-attention, prune-sweep, gradcheck.

Exit codes:
  0  success
  1  unexpected internal error
  2  usage or config schema error
  3  missing input file
  4  a check failed (gradcheck)
  5  malformed data or inconsistent inputs

Failures print one line to stderr: ``error code=<n> kind=<kind> message=<text>``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigValidationError, load_config, validate
from .ingest import ParseError

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISSING, EXIT_CHECK, EXIT_DATA = 0, 1, 2, 3, 4, 5

CHECKPOINT = "checkpoint.bin"
REPORT = "train_report.jsonl"
META = "run_meta.json"


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


def _threads(args) -> int | None:
    t = getattr(args, "threads", None)
    if t is None and os.environ.get("BAGNN_THREADS"):
        try:
            t = int(os.environ["BAGNN_THREADS"])
        except ValueError:
            raise CliError(EXIT_USAGE, "usage", "BAGNN_THREADS must be an integer") from None
    if t is not None and t < 1:
        raise CliError(EXIT_USAGE, "usage", "--threads must be >= 1")
    return t


def _out_dir(args, doc) -> Path:
    out = Path(args.out_dir or doc["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_MISSING, "missing-file", f"{p} does not exist")
    return p


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _load_run(args):
    from .model import read_checkpoint
    from .pipeline import load_dataset

    ckpt = _require(args.checkpoint)
    header, _ = read_checkpoint(ckpt)
    if getattr(args, "config", None):
        doc = load_config(_require(args.config))
    else:
        doc = validate(header.get("extra", {}).get("run_config") or {})
    data = load_dataset(doc)
    from .model import load_checkpoint

    params, _ = load_checkpoint(ckpt, data.graph)
    return doc, data, params


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    from .model import save_checkpoint
    from .pipeline import load_dataset, train

    doc = load_config(_require(args.config), args.override)
    out = _out_dir(args, doc)
    data = load_dataset(doc)
    params, report = train(doc, data)
    save_checkpoint(out / CHECKPOINT, params, extra={"run_config": doc})
    _write(out / REPORT, report.to_jsonl())
    _write(out / META, report.timing_json() + "\n")
    print(f"wrote {out / CHECKPOINT} ({params.num_parameters()} parameters, {len(report.epochs)} epochs)")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .eval import metrics_csv, metrics_text
    from .pipeline import evaluate

    doc, data, params = _load_run(args)
    out = _out_dir(args, doc)
    table = evaluate(doc, data, params, workers=_threads(args) or 1)
    _write(out / "metrics.csv", metrics_csv(table))
    _write(out / "metrics.txt", metrics_text(table))
    sys.stdout.write(metrics_text(table))
    return EXIT_OK


def cmd_export_attention(args) -> int:
    from .eval import export_attention
    from .pipeline import attention_records

    doc, data, params = _load_run(args)
    g = data.graph
    names = g.node_names or []
    lookup = {n: k for k, n in enumerate(names)}
    node = lookup.get(args.node.strip("<>"))
    if node is None:
        if args.node.isdigit() and int(args.node) < g.node_count:
            node = int(args.node)
        else:
            raise CliError(EXIT_DATA, "unknown-node", f"node {args.node!r} not in graph")
    records = attention_records(data, params)
    layer = args.layer
    if layer is not None and not 0 <= layer < len(records):
        raise CliError(EXIT_DATA, "bad-layer", f"layer {layer} outside 0..{len(records) - 1}")
    rel_names = [g.relation_name(r) for r in range(g.num_relations)]
    try:
        text = export_attention(records, node, layer, rel_names)
    except KeyError as exc:
        raise CliError(EXIT_DATA, "no-attention", str(exc).strip("'\"")) from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    _write(Path(args.out), text)
    print(f"wrote {args.out}")
    return EXIT_OK


def _fractions(text: str) -> list[float]:
    if ".." in text:
        lo, hi = (float(x) for x in text.split(".."))
        steps = int(round((hi - lo) / 0.1))
        return [round(lo + 0.1 * k, 10) for k in range(steps + 1)]
    return [float(x) for x in text.split(",")]


def cmd_prune_sweep(args) -> int:
    import csv
    import io

    from .pipeline import prune_sweep

    doc, data, params = _load_run(args)
    out = _out_dir(args, doc)
    modes = [m.strip() for m in args.modes.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = prune_sweep(doc, data, params, modes, _fractions(args.fractions), args.retrain, seeds)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["mode", "fraction", "seed", "relations_kept", "accuracy"],
                       lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "accuracy": f"{r['accuracy']:.6f}"})
    _write(out / "prune_sweep.csv", buf.getvalue())
    print(f"wrote {out / 'prune_sweep.csv'} ({len(rows)} cells)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import FIXTURES, run_gradcheck

    if args.fixture not in FIXTURES:
        raise CliError(EXIT_USAGE, "unknown-fixture", f"fixture {args.fixture!r}; available: {','.join(FIXTURES)}")
    result = run_gradcheck(args.fixture, eps=args.eps, tol=args.tol, variant=args.variant)
    print(result.summary())
    if args.out:
        _write(Path(args.out), json.dumps(
            {"passed": result.passed, "worst_rel_error": result.worst_rel_error,
             "worst_param": result.worst_param, "per_param": result.per_param,
             "tolerance": result.tolerance, "eps": args.eps}, sort_keys=True, indent=1) + "\n")
    return EXIT_OK if result.passed else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="cap BLAS threads (env BAGNN_THREADS)")
    p = _Parser(prog="bagnn", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub_add = sub.add_parser

    def add(name, **kw):
        return sub_add(name, parents=[common], **kw)

    t = add("train", help="train a model from a JSON run config")
    t.add_argument("--config", required=True)
    t.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_train)

    e = add("eval", help="metric tables for a checkpoint")
    e.add_argument("--config")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out-dir")
    e.set_defaults(func=cmd_eval)

    x = add("export-attention", help="relation-level attention heat-map CSV for one node")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--config")
    x.add_argument("--node", required=True, help="node IRI/name, or numeric id")
    x.add_argument("--layer", type=int, default=None, help="layer index (default: last)")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_attention)

    s = add("prune-sweep", help="accuracy after top/bottom/random relation pruning")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--config")
    s.add_argument("--modes", default="top,bottom,random")
    s.add_argument("--fractions", default="0.1..1.0")
    s.add_argument("--seeds", default="0")
    s.add_argument("--retrain", action="store_true")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_prune_sweep)

    g = add("gradcheck", help="finite-difference check of all parameter gradients")
    g.add_argument("--fixture", default="six-node")
    g.add_argument("--eps", type=float, default=1e-4)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--variant", default="full")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gradcheck)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    message = " ".join(str(message).split())
    print(f"error code={code} kind={kind} message={message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        threads = _threads(args)
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc.kind, str(exc))
    except ConfigValidationError as exc:
        return _fail(EXIT_USAGE, "config", str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, "missing-file", str(exc))
    except (ParseError, KeyError, ValueError) as exc:
        return _fail(EXIT_DATA, "data", str(exc).strip("'\""))
    except Exception as exc:  # noqa: BLE001
        return _fail(EXIT_INTERNAL, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
