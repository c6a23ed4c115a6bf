"""Refinement studies: solve on uniform scales of growing size and track errors.

This is how the continuum limit is exercised: the same problem is
re-posed on uniform scales from a ladder of point counts, each solution
is compared against a reference (analytic expressions in t, or a fine
uniform grid interpolated down), and the error decay per refinement step
estimates the convergence order.  The error is measured in the sup norm
of the solution class, state error plus delta-derivative error, the
latter compared against the reference's first derivative on T^k.
Alongside the delimited table the study can render a log-log convergence
figure to a file.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .control import ControlProblem, solve_lagrange
from .errors import DeltaVarError
from .expr import Arity, parse
from .higher_order import HigherOrderProblem, solve_higher_order
from .timescale import TimeScale
from .variational import BasicProblem, solve_basic


@dataclass
class RefineStudy:
    ladder: list[int]
    errors: list[float]
    ratios: list[float | None]
    orders: list[float | None]
    reference: str
    segments: str

    def to_dict(self) -> dict:
        return {
            "ladder": self.ladder,
            "errors": self.errors,
            "ratios": self.ratios,
            "orders": self.orders,
            "reference": self.reference,
            "segments": self.segments,
        }


def _rebuild(kind: str, problem, scale: TimeScale):
    if kind == "basic":
        return BasicProblem(scale=scale, lagrangian=problem.lagrangian, form=problem.form,
                            bc_a=problem.bc_a, bc_b=problem.bc_b)
    if kind == "control":
        return ControlProblem(scale=scale, lagrangian=problem.lagrangian, phi=problem.phi,
                              bc_a=problem.bc_a, bc_b=problem.bc_b)
    if kind == "higher_order":
        return HigherOrderProblem(scale=scale, lagrangian=problem.lagrangian,
                                  bc_a=problem.bc_a, bc_b=problem.bc_b)
    raise ValueError(f"unknown problem kind {kind!r}")


def _solve_values(kind: str, problem) -> np.ndarray:
    if kind == "basic":
        return solve_basic(problem)[0].values
    if kind == "control":
        return solve_lagrange(problem)[0].values
    return solve_higher_order(problem)[0].values


def _reference_fn(refine_block: dict, kind: str, template, a: float, b: float):
    """Build t -> reference values and first derivative, from expressions or a fine grid."""
    exprs = refine_block.get("reference")
    if exprs is not None:
        if isinstance(exprs, str):
            exprs = [exprs]
        parsed = [parse(src, Arity(0, 0, 0)) for src in exprs]
        for comp in parsed:
            if comp.used_vars - {"t"}:
                raise ValueError("reference expressions may only involve t")

        def fn(points: np.ndarray) -> np.ndarray:
            return np.stack([np.broadcast_to(c.evaluate_value({"t": points}), points.shape)
                             for c in parsed], axis=1)

        def dfn(points: np.ndarray) -> np.ndarray:
            cols = []
            for c in parsed:
                _, grads = c.evaluate({"t": points})
                cols.append(grads[c.slot("t")])
            return np.stack(cols, axis=1)

        return fn, dfn, "analytic"
    n_ref = refine_block.get("reference_n")
    if n_ref is None:
        raise ValueError("refine block needs 'reference' expressions or 'reference_n'")
    fine = TimeScale.uniform(a, b, int(n_ref))
    ref_vals = _solve_values(kind, _rebuild(kind, template, fine))
    ref_deriv = (ref_vals[1:] - ref_vals[:-1]) / fine.gaps[:, None]

    def fn(points: np.ndarray) -> np.ndarray:
        return np.stack([np.interp(points, fine.points, ref_vals[:, k])
                         for k in range(ref_vals.shape[1])], axis=1)

    def dfn(points: np.ndarray) -> np.ndarray:
        return np.stack([np.interp(points, fine.points[:-1], ref_deriv[:, k])
                         for k in range(ref_deriv.shape[1])], axis=1)

    return fn, dfn, f"fine-grid(n={int(n_ref)})"


def refine_study(kind: str, template, refine_block: dict, ladder, threads: int = 1) -> RefineStudy:
    """Sup-norm solution error (state plus delta derivative) per ladder entry.

    The ladder must hold at least 3 strictly increasing point counts.
    Entries may solve in parallel (``threads`` caps the worker count);
    the report is assembled in ladder order either way.
    """
    ladder = [int(n) for n in ladder]
    if len(ladder) < 3:
        raise ValueError("refinement ladder needs at least 3 entries")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("refinement ladder must be strictly increasing")
    a, b = template.scale.a, template.scale.b
    ref_fn, ref_dfn, ref_label = _reference_fn(refine_block, kind, template, a, b)

    def solve_one(n: int) -> float:
        scale = TimeScale.uniform(a, b, n)
        values = _solve_values(kind, _rebuild(kind, template, scale))
        deriv = (values[1:] - values[:-1]) / scale.gaps[:, None]
        state_err = float(np.max(np.abs(values - ref_fn(scale.points))))
        deriv_err = float(np.max(np.abs(deriv - ref_dfn(scale.points[:-1]))))
        return state_err + deriv_err

    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(ladder))) as pool:
            errors = list(pool.map(solve_one, ladder))
    else:
        errors = [solve_one(n) for n in ladder]

    ratios: list[float | None] = [None]
    orders: list[float | None] = [None]
    for k in range(1, len(ladder)):
        if errors[k] > 0 and errors[k - 1] > 0:
            ratio = errors[k - 1] / errors[k]
            h_ratio = (ladder[k] - 1) / (ladder[k - 1] - 1)
            ratios.append(float(ratio))
            orders.append(float(np.log(ratio) / np.log(h_ratio)))
        else:
            ratios.append(None)
            orders.append(None)
    segments = "uniform" if template.scale.segment_tags else "untagged"
    return RefineStudy(ladder, errors, ratios, orders, ref_label, segments)


def write_convergence_csv(study: RefineStudy, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "error", "ratio", "order"])
        for row in zip(study.ladder, study.errors, study.ratios, study.orders):
            writer.writerow(["" if v is None else v for v in row])


def render_convergence_figure(study: RefineStudy, path: str) -> None:
    """Log-log error-vs-size plot with a first-order guide line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ns = np.array(study.ladder, dtype=float)
    errs = np.array(study.errors, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    keep = errs > 0
    if keep.any():
        ax.loglog(ns[keep], errs[keep], "o-", label="max error")
        anchor = errs[keep][0] * ns[keep][0]
        ax.loglog(ns[keep], anchor / ns[keep], "--", color="gray", label="first order")
    else:
        ax.plot(ns, np.zeros_like(ns), "o-", label="max error (exact)")
    ax.set_xlabel("points")
    ax.set_ylabel("max error vs reference")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
