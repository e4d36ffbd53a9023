"""Report envelopes, deterministic JSON and the versioned report schemas."""

from __future__ import annotations

import json
import math

import numpy as np

from . import __version__

SCHEMA_VERSION = "1"


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(doc) -> str:
    """Deterministic JSON: sorted keys, fixed separators, shortest float repr."""
    return json.dumps(_clean(doc), sort_keys=True, indent=1, separators=(",", ": "),
                      allow_nan=False) + "\n"


def envelope(kind: str, params: dict, payload: dict) -> dict:
    """Wrap a report with its type, schema version, library version and parameter echo."""
    return {"report": kind, "schema_version": SCHEMA_VERSION, "version": __version__,
            "params": params, "result": payload}


_NUM = {"type": "number"}
_NUM_OR_STR = {"oneOf": [{"type": "number"}, {"type": "string", "enum": ["nan", "inf", "-inf"]}]}
_NUMS = {"type": "array", "items": _NUM}

SCHEMAS = {
    "RegularityReport": {
        "type": "object",
        "required": ["fitted_exponent", "r_range", "max_rel_deviation", "per_point_slopes",
                     "radii", "log_curve"],
        "properties": {
            "fitted_exponent": _NUM,
            "r_range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            "max_rel_deviation": _NUM,
            "per_point_slopes": _NUMS,
            "radii": _NUMS,
            "log_curve": _NUMS,
        },
    },
    "TraceReport": {
        "type": "object",
        "required": ["lp_ratio_max", "besov_ratio_max", "recovery_errors", "params"],
        "properties": {
            "lp_ratio_max": _NUM_OR_STR,
            "besov_ratio_max": _NUM_OR_STR,
            "recovery_errors": {"type": "object"},
            "params": {"type": "object"},
        },
    },
    "KCurve": {
        "type": "object",
        "required": ["knee_spanned", "curve"],
        "properties": {
            "knee_spanned": {"type": "boolean"},
            "curve": {"type": "array", "items": {
                "type": "object", "required": ["t", "K", "witness"],
                "properties": {"t": _NUM, "K": _NUM, "witness": {"type": "string"}}}},
        },
    },
    "WhitneyReport": {
        "type": "object",
        "required": ["balls", "overlap_bound", "checks"],
        "properties": {
            "balls": {"type": "array", "items": {
                "type": "object", "required": ["center", "radius", "layer", "anchor"],
                "properties": {"center": {"type": "integer"}, "radius": _NUM,
                               "layer": {"type": "integer"}, "anchor": {"type": "integer"}}}},
            "overlap_bound": {"type": "integer"},
            "checks": {"type": "object"},
        },
    },
    "BesovReport": {
        "type": "object",
        "required": ["norm", "seminorm", "profile"],
        "properties": {
            "norm": _NUM, "seminorm": _NUM,
            "profile": {"type": "array", "items": {
                "type": "object", "required": ["t", "E"], "properties": {"t": _NUM, "E": _NUM}}},
        },
    },
    "Envelope": {
        "type": "object",
        "required": ["report", "schema_version", "version", "params", "result"],
        "properties": {
            "report": {"type": "string"}, "schema_version": {"type": "string"},
            "version": {"type": "string"}, "params": {"type": "object"}, "result": {"type": "object"},
        },
    },
}


def schema_document() -> dict:
    """All report schemas under one versioned document."""
    return {"$schema": "https://json-schema.org/draft/2020-12/schema",
            "schema_version": SCHEMA_VERSION, "definitions": SCHEMAS}


def write_csv(rows, header) -> str:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in r))
    return "\n".join(out) + "\n"
