"""JSON and CSV file formats.

Every JSON document carries ``"schema": "<name>/v1"``.  Complex numbers are
``[re, im]`` pairs and matrices are row-major nested lists.  Floats are
written with Python's shortest round-trip representation, so
``decode(encode(x)) == x`` for every supported object.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .core_model import (
    CountTable,
    ExperimentConfig,
    ExperimentDesign,
    FisherMatrix,
    MeshParameters,
    OverlapParameters,
    Pmf,
    SchemaError,
)
from .estimator import FitResult, FullParameters
from .fisher import DesignResult

VERSION = "v1"


def _tag(name: str) -> str:
    return f"{name}/{VERSION}"


def _expect(doc: Any, name: str) -> dict:
    if not isinstance(doc, dict):
        raise SchemaError(f"expected a JSON object for {name!r}")
    if doc.get("schema") != _tag(name):
        raise SchemaError(f"expected schema {_tag(name)!r}, found {doc.get('schema')!r}")
    return doc


def _field(doc: dict, key: str):
    try:
        return doc[key]
    except KeyError:
        raise SchemaError(f"{doc.get('schema', 'document')} is missing {key!r}") from None


def _floats(values) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"expected a list of numbers: {exc}") from None


def _ints(values) -> tuple[int, ...]:
    try:
        out = tuple(int(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"expected a list of integers: {exc}") from None
    if any(isinstance(v, float) and not float(v).is_integer() for v in values):
        raise SchemaError("expected integers, found fractional values")
    return out


def complex_matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def complex_matrix_from_json(rows) -> np.ndarray:
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"malformed complex matrix: {exc}") from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise SchemaError(f"complex matrix must be N x N x [re, im], got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


# --------------------------------------------------------------------------
# Encoders
# --------------------------------------------------------------------------

def _mesh_body(m: MeshParameters) -> dict:
    return {"splitting_ratios": list(m.splitting_ratios), "phases": list(m.phases)}


def _overlaps_body(o: OverlapParameters) -> dict:
    return {"labels": o.labels, "magnitudes": list(o.magnitudes), "phases": list(o.phases)}


def _config_body(c: ExperimentConfig) -> dict:
    body: dict[str, Any] = {"input": list(c.input), "sources": list(c.sources), "label": c.label}
    if c.mesh is not None:
        body["mesh"] = _mesh_body(c.mesh)
    else:
        body["unitary"] = complex_matrix_to_json(c.unitary)
    return body


def _design_body(d: ExperimentDesign) -> dict:
    return {"configs": [_config_body(c) for c in d.configs], "weights": list(d.weights)}


def _fisher_body(f: FisherMatrix) -> dict:
    return {"parameter_labels": list(f.parameter_labels),
            "entries": np.asarray(f.entries, dtype=float).tolist(),
            "underflow_terms": int(f.underflow_terms)}


def _params_body(p: FullParameters) -> dict:
    return {"overlaps": _overlaps_body(p.overlaps), "mesh": _mesh_body(p.mesh)}


def encode(obj, **extra) -> dict:
    """Tagged JSON-ready dict for any library object; ``extra`` keys are appended."""
    if isinstance(obj, MeshParameters):
        doc = {"schema": _tag("mesh"), **_mesh_body(obj)}
    elif isinstance(obj, OverlapParameters):
        doc = {"schema": _tag("overlaps"), **_overlaps_body(obj)}
    elif isinstance(obj, FullParameters):
        doc = {"schema": _tag("parameters"), **_params_body(obj)}
    elif isinstance(obj, Pmf):
        doc = {"schema": _tag("pmf"), "outcomes": [list(o) for o in obj.outcomes],
               "probabilities": [float(p) for p in obj.probabilities]}
    elif isinstance(obj, CountTable):
        doc = {"schema": _tag("counts"), "outcomes": [list(o) for o in obj.outcomes],
               "counts": [int(c) for c in obj.counts], "sources": list(obj.sources)}
    elif isinstance(obj, ExperimentDesign):
        doc = {"schema": _tag("design"), **_design_body(obj)}
    elif isinstance(obj, FisherMatrix):
        doc = {"schema": _tag("fisher"), **_fisher_body(obj)}
    elif isinstance(obj, DesignResult):
        doc = {"schema": _tag("design_result"),
               "design": _design_body(obj.design),
               "score": float(obj.score),
               "fim": _fisher_body(obj.fim),
               "converged": bool(obj.converged),
               "theta": None if obj.theta is None else _overlaps_body(obj.theta),
               "optimizer_trace": [[int(k), float(v)] for k, v in obj.optimizer_trace]}
    elif isinstance(obj, FitResult):
        doc = {"schema": _tag("fit_result"),
               "estimate": _params_body(obj.estimate),
               "log_likelihood": float(obj.log_likelihood),
               "observed_fim": _fisher_body(obj.observed_fim),
               "converged": bool(obj.converged),
               "tvd_per_config": [float(t) for t in obj.tvd_per_config],
               "restarts": int(obj.restarts)}
    elif isinstance(obj, np.ndarray) and obj.ndim == 2:
        doc = {"schema": _tag("unitary"), "matrix": complex_matrix_to_json(obj)}
    else:
        raise TypeError(f"no JSON schema for {type(obj).__name__}")
    doc.update(extra)
    return doc


def encode_stream(sources, outcomes, indices) -> dict:
    return {"schema": _tag("stream"), "sources": [int(a) for a in sources],
            "outcomes": [list(o) for o in outcomes], "indices": [int(i) for i in indices]}


# --------------------------------------------------------------------------
# Decoders
# --------------------------------------------------------------------------

def _mesh_from(body: dict) -> MeshParameters:
    return MeshParameters(_floats(_field(body, "splitting_ratios")), _floats(_field(body, "phases")))


def _overlaps_from(body: dict) -> OverlapParameters:
    return OverlapParameters(_floats(_field(body, "magnitudes")), _floats(body.get("phases", [])))


def _config_from(body: dict) -> ExperimentConfig:
    if not isinstance(body, dict):
        raise SchemaError("design configs must be JSON objects")
    mesh = _mesh_from(body["mesh"]) if body.get("mesh") is not None else None
    unitary = complex_matrix_from_json(body["unitary"]) if body.get("unitary") is not None else None
    return ExperimentConfig(input=_ints(_field(body, "input")), mesh=mesh, unitary=unitary,
                            sources=_ints(body.get("sources", [])), label=str(body.get("label", "")))


def _design_from(body: dict) -> ExperimentDesign:
    return ExperimentDesign(tuple(_config_from(c) for c in _field(body, "configs")),
                            _floats(body.get("weights", [])))


def _fisher_from(body: dict) -> FisherMatrix:
    entries = np.array(_field(body, "entries"), dtype=float)
    return FisherMatrix(entries, tuple(body.get("parameter_labels", [])), int(body.get("underflow_terms", 0)))


def _params_from(body: dict) -> FullParameters:
    return FullParameters(_overlaps_from(_field(body, "overlaps")), _mesh_from(_field(body, "mesh")))


def decode(doc: Any):
    """Inverse of :func:`encode`, dispatching on the schema tag."""
    if not isinstance(doc, dict) or not isinstance(doc.get("schema"), str):
        raise SchemaError("document has no schema tag")
    name = doc["schema"].rsplit("/", 1)[0]
    try:
        if name == "mesh":
            return _mesh_from(_expect(doc, name))
        if name == "overlaps":
            return _overlaps_from(_expect(doc, name))
        if name == "parameters":
            return _params_from(_expect(doc, name))
        if name == "unitary":
            return complex_matrix_from_json(_field(_expect(doc, name), "matrix"))
        if name == "pmf":
            _expect(doc, name)
            return Pmf([_ints(o) for o in _field(doc, "outcomes")],
                       np.array(_floats(_field(doc, "probabilities"))))
        if name == "counts":
            _expect(doc, name)
            counts = _ints(_field(doc, "counts"))
            if any(c < 0 for c in counts):
                raise SchemaError("counts must be non-negative")
            return CountTable([_ints(o) for o in _field(doc, "outcomes")], np.array(counts, dtype=np.int64),
                              _ints(doc.get("sources", [])))
        if name == "design":
            return _design_from(_expect(doc, name))
        if name == "fisher":
            return _fisher_from(_expect(doc, name))
        if name == "design_result":
            _expect(doc, name)
            theta = doc.get("theta")
            return DesignResult(_design_from(_field(doc, "design")), float(_field(doc, "score")),
                                _fisher_from(_field(doc, "fim")),
                                [(int(k), float(v)) for k, v in doc.get("optimizer_trace", [])],
                                bool(doc.get("converged", True)),
                                None if theta is None else _overlaps_from(theta))
        if name == "fit_result":
            _expect(doc, name)
            return FitResult(_params_from(_field(doc, "estimate")), float(_field(doc, "log_likelihood")),
                             _fisher_from(_field(doc, "observed_fim")), bool(_field(doc, "converged")),
                             list(_floats(doc.get("tvd_per_config", []))), int(doc.get("restarts", 0)))
        if name == "stream":
            _expect(doc, name)
            return (_ints(_field(doc, "sources")), [_ints(o) for o in _field(doc, "outcomes")],
                    np.array(_ints(_field(doc, "indices")), dtype=np.int64))
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed {name} document: {exc}") from None
    raise SchemaError(f"unknown schema {doc['schema']!r}")


# --------------------------------------------------------------------------
# Files
# --------------------------------------------------------------------------

def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def load(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    except OSError as exc:
        raise SchemaError(f"{path}: {exc.strerror}") from None
    return doc


def load_object(path, *expected: str):
    doc = load(path)
    if expected and (not isinstance(doc, dict) or doc.get("schema") not in {_tag(e) for e in expected}):
        found = doc.get("schema") if isinstance(doc, dict) else None
        raise SchemaError(f"{path}: expected one of {[_tag(e) for e in expected]}, found {found!r}")
    return decode(doc)


def atomic_write(path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    """CSV with a header row; floats use the shortest round-trip repr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        values = [row[h] for h in header] if isinstance(row, dict) else list(row)
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in values])
    return buf.getvalue()
