"""Versioned checkpoint files: JSON with shapes and row-major weight arrays."""

from __future__ import annotations

import json

import numpy as np

from .errors import ParseError, ValidationError

CHECKPOINT_FORMAT_VERSION = 1


def save(path, kind, meta, arrays):
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": {
            name: {"shape": list(a.shape), "data": [float(v) for v in np.ravel(a)]}
            for name, a in arrays.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load(path, kind):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read checkpoint {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint format_version {version!r}")
    if doc.get("kind") != kind:
        raise ValidationError(
            f"checkpoint {path!r} holds a {doc.get('kind')!r} model, expected {kind!r}"
        )
    arrays = {}
    try:
        for name, spec in doc["arrays"].items():
            arr = np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
            arrays[name] = arr
        meta = doc["meta"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed checkpoint arrays: {exc}") from exc
    if any(not np.all(np.isfinite(a)) for a in arrays.values()):
        raise ValidationError("checkpoint contains non-finite parameters")
    return meta, arrays
