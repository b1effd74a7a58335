"""Run configuration: one JSON document, schema-checked before any work."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .model import DECODERS, VARIANTS

_PATH = {"type": "string", "minLength": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["task", "dataset"],
    "properties": {
        "task": {"enum": ["node-class", "link-pred"]},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["format"],
            "properties": {
                "format": {"enum": ["ntriples", "tsv", "synthetic"]},
                "graph": _PATH,
                "labels": _PATH,
                "train": _PATH,
                "valid": _PATH,
                "test": _PATH,
                "name": {"enum": ["six-node", "planted-class", "planted-relation", "toy-kg"]},
                "data_seed": {"type": "integer"},
                "remove_relations": {"type": "array", "items": {"type": "string"}},
                "type_predicate": {"type": ["string", "null"]},
                "gen_inverse": {"type": "boolean"},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "num_layers": {"type": "integer", "minimum": 1},
                "hidden_dim": {"type": "integer", "minimum": 1},
                "feature_dim": {"type": ["integer", "null"], "minimum": 1},
                "heads": {"type": "integer", "minimum": 1},
                "variant": {"enum": sorted(VARIANTS)},
                "decoder": {"enum": list(DECODERS) + [None]},
                "leaky_slope": {"type": "number"},
                "use_skip": {"type": "boolean"},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "epochs": {"type": "integer", "minimum": 0},
        "negatives": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "out_dir": _PATH,
    },
}

DEFAULTS = {
    "model": {},
    "optimizer": {},
    "epochs": 50,
    "negatives": 1,
    "seed": 0,
    "out_dir": "out",
}


class ConfigValidationError(ValueError):
    pass


def validate(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigValidationError(f"{where}: {exc.message}") from None
    ds = doc["dataset"]
    need = {"ntriples": ("graph", "labels"), "tsv": ("train", "valid", "test"), "synthetic": ("name",)}
    missing = [k for k in need[ds["format"]] if k not in ds]
    if missing:
        raise ConfigValidationError(f"dataset: format {ds['format']!r} needs {missing}")
    if doc["task"] == "link-pred" and ds["format"] == "ntriples":
        raise ConfigValidationError("dataset: link-pred reads tsv or synthetic data")
    out = copy.deepcopy(DEFAULTS)
    out.update(copy.deepcopy(doc))
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigValidationError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for text in overrides or ():
        path, value = parse_override(text)
        node = doc
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigValidationError(f"override {text!r} descends into a non-object")
        node[path[-1]] = value
    return doc


def load_config(path, overrides=()) -> dict:
    """Read, override, validate; relative dataset paths resolve against the file's directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(f"{path}: invalid JSON: {exc}") from None
    doc = validate(apply_overrides(doc, overrides))
    base = path.parent
    for key in ("graph", "labels", "train", "valid", "test"):
        if key in doc["dataset"]:
            doc["dataset"][key] = str((base / doc["dataset"][key]).resolve())
    return doc
