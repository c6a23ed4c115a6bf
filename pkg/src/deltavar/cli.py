"""Batch front end: solve, check, abnormal, oracle, and refine commands.

All numerics live in the library; this module only loads problem files,
dispatches, and writes machine-readable reports.  Exit codes: 0 on
success, 2 when a certificate fails its tolerances, 1 on any error
(I/O, schema, parse, degenerate or non-convergent solves).  Reports are
deterministic functions of the input: identical configuration and input
bytes produce identical report bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import refine as refine_mod
from .control import ControlProblem, costate_sweep, detect_abnormal, evaluate_objective, wmp_residuals
from .errors import DeltaVarError
from .higher_order import (
    HigherOrderProblem,
    certify_higher_order,
    evaluate_functional_ho,
    reduce_to_control,
    solve_higher_order,
)
from .oracle import GridSearchSpec, brute_force_minimize, kkt_multipliers
from .serialize import SCHEMA, candidate_trajectory, load_problem, parse_problem, report_json, write_report
from .timescale import GridFunction
from .variational import certify, evaluate_functional, solve_basic
from .control import solve_lagrange

DEFAULT_TOL = 1e-8


@dataclass
class RunConfig:
    """One CLI invocation: command, paths, tolerance override, ladder."""

    command: str
    input_path: str
    output_path: str | None = None
    tolerance: float | None = None
    ladder: tuple[int, ...] | None = None
    csv_path: str | None = None
    fig_path: str | None = None
    with_oracle: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.tolerance is not None and not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.ladder is not None and any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("ladder must be strictly increasing")


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    try:
        doc = load_problem(config.input_path)
        tol = config.tolerance if config.tolerance is not None else DEFAULT_TOL
        handler = {
            "solve": _cmd_solve,
            "check": _cmd_check,
            "abnormal": _cmd_abnormal,
            "oracle": _cmd_oracle,
            "refine": _cmd_refine,
        }.get(config.command)
        if handler is None:
            raise ValueError(f"unknown command {config.command!r}")
        report, code = handler(doc, tol, config)
    except (DeltaVarError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"deltavar: error: {exc}", file=sys.stderr)
        return 1
    text = report_json(report)
    if config.output_path:
        with open(config.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


def _base_report(doc: dict, command: str) -> dict:
    return {"schema": SCHEMA, "kind": doc.get("kind"), "command": command}


def _cmd_solve(doc: dict, tol: float, config: RunConfig):
    kind, problem = parse_problem(doc)
    out = _base_report(doc, "solve")
    if kind == "basic":
        y, report = solve_basic(problem, tol=tol)
        out.update(y=y.values, objective=report.objective, report=report.to_dict(), passed=report.passed)
    elif kind == "control":
        y, u, costate, report = solve_lagrange(problem, tol=tol)
        out.update(
            y=y.values,
            u=u.values,
            costate={"psi0": costate.psi0, "psi": costate.psi.values},
            report=report.to_dict(),
            passed=report.passed,
        )
    else:
        y, costates, report = solve_higher_order(problem, tol=tol)
        out.update(
            y=y.values,
            costates=[c.values for c in costates],
            report=report.to_dict(),
            passed=report.passed,
        )
    return out, 0 if out["passed"] else 2


def _cmd_check(doc: dict, tol: float, config: RunConfig):
    kind, problem = parse_problem(doc)
    cand = candidate_trajectory(doc, problem.scale)
    if cand is None:
        raise ValueError("check needs a 'candidate' block with at least 'y'")
    y, u, psi0, psi = cand
    out = _base_report(doc, "check")
    if kind == "basic":
        objective = evaluate_functional(problem, y)
        report = certify(problem, y, tol=tol)
        out.update(objective=objective, report=report.to_dict(), passed=report.passed)
    elif kind == "control":
        if u is None:
            raise ValueError("checking a control problem needs candidate controls 'u'")
        costate = _candidate_costate(problem, y, u, psi0, psi, tol)
        report = wmp_residuals(problem, y, u, costate, tol=tol)
        out.update(
            objective=evaluate_objective(problem, y, u),
            costate={"psi0": costate.psi0, "psi": costate.psi.values},
            report=report.to_dict(),
            passed=report.passed,
        )
    else:
        report = certify_higher_order(problem, y, tol=tol)
        out.update(
            objective=evaluate_functional_ho(problem, y),
            report=report.to_dict(),
            passed=report.passed,
        )
    if config.with_oracle:
        out["oracle"] = _oracle_section(doc, kind, problem, out)
    return out, 0 if out["passed"] else 2


def _candidate_costate(problem: ControlProblem, y, u, psi0, psi, tol):
    from .control import CostateTrajectory

    if psi is not None:
        return CostateTrajectory(psi0, psi)
    # best-effort multipliers give the terminal costate; the sweep fills the rest
    mults = kkt_multipliers(problem, y, u, tol=tol, require_feasible=False)
    mu_last = problem.scale.gaps[-1]
    terminal = np.zeros(problem.n)
    if problem.bc_b is not None:
        for k, want in enumerate(problem.bc_b):
            if want is not None:
                terminal[k] = -mults.multipliers[-1, k] / mu_last
    return costate_sweep(problem, y, u, 1.0, terminal)


def _oracle_section(doc: dict, kind: str, problem, out: dict) -> dict:
    spec = _grid_spec(doc)
    result = brute_force_minimize(problem, spec)
    section = result.to_dict()
    if "objective" in out:
        section["objective_gap"] = out["objective"] - result.objective
    return section


def _grid_spec(doc: dict) -> GridSearchSpec:
    block = doc.get("oracle")
    if block is None:
        raise ValueError("an 'oracle' block with a 'grid' is required")
    return GridSearchSpec(
        grids=tuple(tuple(axis) for axis in block["grid"]),
        budget=int(block.get("budget", 10_000_000)),
        feasibility_tol=float(block.get("feasibility_tol", 1e-9)),
    )


def _cmd_abnormal(doc: dict, tol: float, config: RunConfig):
    kind, problem = parse_problem(doc)
    if kind == "higher_order":
        problem = reduce_to_control(problem)
    elif kind != "control":
        raise ValueError("abnormal analysis applies to control and higher_order problems")
    cand = candidate_trajectory(doc, problem.scale)
    y = u = None
    if cand is not None:
        y, u, _, _ = cand
    basis = detect_abnormal(problem, y, u)
    out = _base_report(doc, "abnormal")
    out.update(
        count=len(basis),
        basis=[{"psi0": c.psi0, "psi": c.psi.values} for c in basis],
    )
    return out, 0


def _cmd_oracle(doc: dict, tol: float, config: RunConfig):
    kind, problem = parse_problem(doc)
    result = brute_force_minimize(problem, _grid_spec(doc))
    out = _base_report(doc, "oracle")
    out.update(result=result.to_dict())
    return out, 0


def _cmd_refine(doc: dict, tol: float, config: RunConfig):
    kind, problem = parse_problem(doc)
    block = doc.get("refine")
    if block is None:
        raise ValueError("a 'refine' block with a reference is required")
    if config.ladder is None:
        raise ValueError("refine needs --ladder with at least 3 entries")
    study = refine_mod.refine_study(kind, problem, block, config.ladder, threads=config.threads)
    if config.csv_path:
        refine_mod.write_convergence_csv(study, config.csv_path)
    fig_path = config.fig_path
    if fig_path is None and config.csv_path:
        # the report path renders a figure next to the delimited output
        fig_path = os.path.splitext(config.csv_path)[0] + ".png"
    if fig_path:
        refine_mod.render_convergence_figure(study, fig_path)
    out = _base_report(doc, "refine")
    out.update(study=study.to_dict())
    return out, 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deltavar",
        description="Variational and optimal-control solving/checking on finite time scales",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve a problem file and certify the result"),
        ("check", "certify a candidate trajectory from the problem file"),
        ("abnormal", "search for abnormal multiplier directions"),
        ("oracle", "exhaustive grid-search minimization"),
        ("refine", "uniform-scale convergence study"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--in", dest="input_path", required=True, help="problem JSON file")
        cmd.add_argument("--out", dest="output_path", help="report JSON file (default: stdout)")
        cmd.add_argument("--tol", dest="tolerance", type=float, help="certificate tolerance override")
        if name == "check":
            cmd.add_argument("--oracle", dest="with_oracle", action="store_true",
                             help="also run the grid-search oracle and report the gap")
        if name == "refine":
            cmd.add_argument("--ladder", required=True,
                             help="comma-separated point counts, e.g. 16,32,64")
            cmd.add_argument("--csv", dest="csv_path", help="write the convergence table as CSV")
            cmd.add_argument("--fig", dest="fig_path",
                             help="render the convergence figure here (default: next to --csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ladder = None
        if getattr(args, "ladder", None):
            ladder = tuple(int(part) for part in args.ladder.split(","))
        config = RunConfig(
            command=args.command,
            input_path=args.input_path,
            output_path=args.output_path,
            tolerance=args.tolerance,
            ladder=ladder,
            csv_path=getattr(args, "csv_path", None),
            fig_path=getattr(args, "fig_path", None),
            with_oracle=getattr(args, "with_oracle", False),
            threads=int(os.environ.get("DELTAVAR_THREADS", "1")),
        )
    except ValueError as exc:
        print(f"deltavar: error: {exc}", file=sys.stderr)
        return 1
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
