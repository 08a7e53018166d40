"""JSON reading and writing for space files and result records.

Numbers are written with 17 significant digits, which round-trips every
double exactly.  JSON has no infinity, so non-finite numbers are written as
``null``; result records flag an infinite value with ``"value_finite": false``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .mmspace import MetricMeasureSpace, StructuralError, validate_metric


class SpaceFileError(ValueError):
    """A space file that cannot be parsed or fails validation."""


def _number(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    if text in ("-0", "0"):
        return "0" if text == "0" else "-0.0"
    return text


def dumps(obj: Any, indent: int | None = None, _level: int = 0) -> str:
    """Serialize ``obj`` with every float at 17 significant digits."""
    pad = "" if indent is None else "\n" + " " * (indent * (_level + 1))
    end = "" if indent is None else "\n" + " " * (indent * _level)
    sep = "," if indent is None else ","
    colon = ":" if indent is None else ": "
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}{colon}{dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        flat = all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj)
        if flat or indent is None:
            return "[" + ", ".join(dumps(v, None) for v in obj) + "]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[" + sep.join(items) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite_matrix(data, what: str) -> np.ndarray:
    try:
        arr = np.array(data, dtype=float)
    except (TypeError, ValueError):
        raise SpaceFileError(f"{what} must be numeric") from None
    if not np.all(np.isfinite(arr)):
        raise SpaceFileError(f"{what} must be finite")
    return arr


def parse_space(doc: dict, tol: float = 1e-9) -> MetricMeasureSpace:
    """Build and validate a space from a parsed space document."""
    if not isinstance(doc, dict):
        raise SpaceFileError("a space file holds a JSON object")
    if "mass" not in doc:
        raise SpaceFileError("missing 'mass'")
    mass = _finite_matrix(doc["mass"], "mass")
    labels = doc.get("labels")
    try:
        if "dist" in doc:
            space = MetricMeasureSpace(_finite_matrix(doc["dist"], "dist"), mass, labels)
        elif "points" in doc:
            metric = doc.get("metric", "euclidean")
            if metric != "euclidean":
                raise SpaceFileError(f"unsupported metric {metric!r}")
            pts = _finite_matrix(doc["points"], "points")
            if pts.ndim != 2:
                raise SpaceFileError("points must be a list of coordinate lists")
            space = MetricMeasureSpace.from_points(pts, mass, labels)
        else:
            raise SpaceFileError("a space needs 'dist' or 'points'")
    except StructuralError as exc:
        raise SpaceFileError(str(exc)) from None
    report = validate_metric(space, tol)
    if not report.valid:
        v = report.violations[0]
        raise SpaceFileError(f"not a metric: {v.kind} violation {v.magnitude:.3g} at {v.indices}")
    return space


def space_to_doc(space: MetricMeasureSpace) -> dict:
    doc = {}
    if space.labels is not None:
        doc["labels"] = list(space.labels)
    doc["dist"] = space.dist.tolist()
    doc["mass"] = space.mass.tolist()
    return doc


def load_space(path) -> MetricMeasureSpace:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise SpaceFileError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise SpaceFileError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    try:
        return parse_space(doc)
    except SpaceFileError as exc:
        raise SpaceFileError(f"{path}: {exc}") from None


def save_space(space: MetricMeasureSpace, path) -> None:
    Path(path).write_text(dumps(space_to_doc(space), indent=1) + "\n")


def result_record(value: float, preset, gamma, breakdown: dict, diagnostics: dict,
                  version: str, cross_dist=None) -> dict:
    rec = {"value": float(value), "value_finite": bool(math.isfinite(value)),
           "preset": preset.name, "a": preset.a,
           "gamma": np.asarray(gamma, dtype=float).tolist()}
    if cross_dist is not None:
        rec["cross_dist"] = np.asarray(cross_dist, dtype=float).tolist()
    rec["breakdown"] = _plain(breakdown)
    rec["diagnostics"] = _plain(diagnostics)
    rec["version"] = version
    return rec


def _plain(obj):
    """Convert numpy containers and scalars into plain JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, str, bool)) or obj is None:
        return obj
    return str(obj)
