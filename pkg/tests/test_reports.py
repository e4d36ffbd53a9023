import json
import math
from pathlib import Path

import numpy as np
import pytest

from besovtrace import __version__
from besovtrace import generators as g
from besovtrace.interpolation import SmoothingFamily, k_curve, lp_pair
from besovtrace.reports import SCHEMAS, _clean, dumps, envelope, schema_document, write_csv
from besovtrace.space import estimate_regularity
from besovtrace.trace import extension_harness

GOLDEN = Path(__file__).parent / "golden"
TYPES = {"object": dict, "array": list, "string": str, "boolean": bool}


def conforms(doc, schema) -> bool:
    """Validator for the schema subset the reports use."""
    if "oneOf" in schema:
        return sum(conforms(doc, s) for s in schema["oneOf"]) == 1
    kind = schema.get("type")
    if kind == "number":
        ok = isinstance(doc, (int, float)) and not isinstance(doc, bool)
    elif kind == "integer":
        ok = isinstance(doc, int) and not isinstance(doc, bool)
    elif kind:
        ok = isinstance(doc, TYPES[kind])
    else:
        ok = True
    if not ok or ("enum" in schema and doc not in schema["enum"]):
        return False
    if kind == "object":
        if any(k not in doc for k in schema.get("required", [])):
            return False
        return all(conforms(doc[k], s) for k, s in schema.get("properties", {}).items() if k in doc)
    if kind == "array":
        if not schema.get("minItems", 0) <= len(doc) <= schema.get("maxItems", math.inf):
            return False
        return all(conforms(v, schema["items"]) for v in doc) if "items" in schema else True
    return True


def roundtrip(obj):
    return json.loads(dumps(obj))


@pytest.mark.parametrize("name", ["TraceReport", "RegularityReport", "KCurve", "Envelope"])
def test_schema_golden(name):
    assert dumps(SCHEMAS[name]) == (GOLDEN / f"{name}.schema.json").read_text()


def test_schema_document():
    doc = schema_document()
    assert doc["schema_version"] == "1"
    assert set(doc["definitions"]) == set(SCHEMAS)


def test_regularity_report_conforms():
    rep = estimate_regularity(g.grid_space(1, 6)).to_dict()
    assert conforms(roundtrip(rep), SCHEMAS["RegularityReport"])


def test_trace_report_conforms():
    diag = g.diagonal_segment(g.grid_space(2, 4))
    rep = extension_harness(diag, 0.4, 2, 2, ensemble_size=3, gamma=1.0, scale_unit=0.25).to_dict()
    assert conforms(roundtrip(rep), SCHEMAS["TraceReport"])


def test_kcurve_conforms():
    X = g.grid_space(1, 5)
    f = np.cos(4 * X.coords[:, 0])
    kc = k_curve(lp_pair(X, 2.0), f, np.geomspace(0.1, 10, 5), SmoothingFamily.build(X, f))
    assert conforms(roundtrip(kc.to_dict()), SCHEMAS["KCurve"])
    env = roundtrip(envelope("KCurve", {"p": 2.0}, kc.to_dict()))
    assert conforms(env, SCHEMAS["Envelope"]) and env["version"] == __version__


def test_conforms_rejects_missing_field():
    assert not conforms({"knee_spanned": True}, SCHEMAS["KCurve"])
    assert not conforms({"knee_spanned": 1, "curve": []}, SCHEMAS["KCurve"])


def test_clean_non_finite_and_numpy():
    doc = _clean({"a": np.float64(np.nan), "b": np.array([np.inf, -np.inf, 1.5]),
                  "c": np.int64(3), "d": np.bool_(True), 4: (1, 2)})
    assert doc == {"a": "nan", "b": ["inf", "-inf", 1.5], "c": 3, "d": True, "4": [1, 2]}
    assert type(doc["c"]) is int and type(doc["d"]) is bool


def test_dumps_is_deterministic():
    a = {"z": 0.1, "a": [1, 2.5e-300], "m": {"y": 1, "b": 2}}
    b = {"m": {"b": 2, "y": 1}, "a": [1, 2.5e-300], "z": 0.1}
    assert dumps(a) == dumps(b)
    assert dumps(a).endswith("\n")
    assert json.loads(dumps({"x": 0.1 + 0.2}))["x"] == 0.1 + 0.2


def test_write_csv_full_precision():
    text = write_csv([(1, 0.1 + 0.2), ("w", 2.0)], ["a", "b"])
    lines = text.splitlines()
    assert lines[0] == "a,b"
    assert float(lines[1].split(",")[1]) == 0.1 + 0.2
    assert lines[2] == "w,2"
