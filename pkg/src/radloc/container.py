"""Self-describing JSON containers for fitted models and reference tables.

Top-level fields: ``format_version``, ``kind``, ``hyperparameters``,
``scaler``, ``classes``, ``parameters`` plus ``target`` and ``provenance``.
Arrays are nested numeric lists; floats use shortest round-trip repr.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from radloc import __version__
from radloc.errors import CorruptFileError, KindError, SchemaError

FORMAT_VERSION = 1
REQUIRED = ("format_version", "kind", "hyperparameters", "scaler", "classes", "parameters")


def plain(obj):
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


def provenance(config: dict | None = None, seeds: dict | None = None, **extra) -> dict:
    config = config or {}
    block = {
        "tool": "radloc",
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "seeds": seeds or {},
    }
    block.update(extra)
    return plain(block)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def dump(doc: dict, path) -> None:
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        raise SchemaError(f"container missing fields {missing}")
    Path(path).write_text(canonical_json(doc) + "\n", encoding="utf-8")


def load(path, expect_kind=None) -> dict:
    """Read and validate a container; ``expect_kind`` is a kind or a collection of kinds."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"{path}: not a readable container ({exc})") from None
    if not isinstance(doc, dict) or any(k not in doc for k in REQUIRED):
        raise CorruptFileError(f"{path}: container is missing required fields")
    if doc["format_version"] != FORMAT_VERSION:
        raise SchemaError(f"{path}: format_version {doc['format_version']} != {FORMAT_VERSION}")
    if expect_kind is not None:
        kinds = (expect_kind,) if isinstance(expect_kind, str) else tuple(expect_kind)
        if doc["kind"] not in kinds:
            raise KindError(f"{path}: container kind {doc['kind']!r}, expected one of {kinds}")
    return doc
