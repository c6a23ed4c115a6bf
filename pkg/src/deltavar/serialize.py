"""Problem and report JSON handling (schema ``deltavar/1``).

A problem file is a JSON object with a ``schema`` tag, a ``kind``
discriminator (``basic`` | ``control`` | ``higher_order``), a ``scale``
(array of points or ``{"uniform": {"a":, "b":, "n":}}`` expanded at load
time), and the kind-specific fields.  Optional blocks: ``candidate``
(trajectory to check), ``oracle`` (grid-search spec), ``refine``
(reference solution for convergence studies), and for control problems
``isoperimetric`` (integral constraint folded in at load time).
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .control import ControlProblem, isoperimetric_reduce
from .expr import Arity, parse
from .higher_order import HigherOrderProblem
from .timescale import GridFunction, TimeScale
from .variational import BasicProblem

SCHEMA = "deltavar/1"


def parse_scale(obj) -> TimeScale:
    if isinstance(obj, dict):
        if set(obj) != {"uniform"}:
            raise ValueError(f"unknown scale generator {sorted(obj)}")
        spec = obj["uniform"]
        return TimeScale.uniform(float(spec["a"]), float(spec["b"]), int(spec["n"]))
    return TimeScale(np.asarray(obj, dtype=float))


def _bc(obj):
    if obj is None:
        return None
    return tuple(None if v is None else float(v) for v in obj)


def parse_problem(doc: dict):
    """Return (kind, problem) from a validated problem document."""
    if not isinstance(doc, dict):
        raise ValueError("problem document must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}, expected {SCHEMA!r}")
    kind = doc.get("kind")
    scale = parse_scale(doc["scale"])
    if kind == "basic":
        n = int(doc.get("n", 1))
        problem = BasicProblem(
            scale=scale,
            lagrangian=parse(doc["L"], Arity(n, 1, 0)),
            form=doc.get("form", "plain"),
            bc_a=_bc(doc.get("bc_a")),
            bc_b=_bc(doc.get("bc_b")),
        )
        return kind, problem
    if kind == "control":
        n = int(doc.get("n", 1))
        m = int(doc.get("m", 1))
        arity = Arity(n, 0, m)
        problem = ControlProblem(
            scale=scale,
            lagrangian=parse(doc["L"], arity),
            phi=tuple(parse(src, arity) for src in doc["phi"]),
            bc_a=_bc(doc.get("bc_a")),
            bc_b=_bc(doc.get("bc_b")),
        )
        iso = doc.get("isoperimetric")
        if iso is not None:
            problem = isoperimetric_reduce(problem, parse(iso["g"], arity), float(iso["beta"]))
        return kind, problem
    if kind == "higher_order":
        n = int(doc.get("n", 1))
        r = int(doc["r"])
        bc = doc.get("bc", {})
        problem = HigherOrderProblem(
            scale=scale,
            lagrangian=parse(doc["L"], Arity(n, r, 0)),
            bc_a=tuple(bc.get("a", [None] * r)),
            bc_b=tuple(bc.get("b", [None] * r)),
        )
        return kind, problem
    raise ValueError(f"unknown problem kind {kind!r}")


def candidate_trajectory(doc: dict, scale: TimeScale):
    """The optional candidate block as grid functions (y, u, psi0, psi)."""
    cand = doc.get("candidate")
    if cand is None:
        return None
    y = GridFunction(scale, np.asarray(cand["y"], dtype=float))
    u = None
    if cand.get("u") is not None:
        u = GridFunction(scale, np.asarray(cand["u"], dtype=float))
    psi = None
    if cand.get("psi") is not None:
        psi = GridFunction(scale, np.asarray(cand["psi"], dtype=float))
    psi0 = float(cand.get("psi0", 1.0))
    return y, u, psi0, psi


def load_problem(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _jsonable(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def report_json(report: dict) -> str:
    """Deterministic rendering: sorted keys, fixed indentation, newline-terminated."""
    return json.dumps(_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_json(report))
