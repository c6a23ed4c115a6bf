"""Shared builders for random scales, polynomials, and problem instances."""

from __future__ import annotations

import os

import numpy as np
import pytest

from deltavar import Arity, BasicProblem, ControlProblem, TimeScale, parse
from deltavar.control import forward_simulate

PROBLEMS_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "problems")


def problem_path(name: str) -> str:
    return os.path.abspath(os.path.join(PROBLEMS_DIR, name))


def random_scale(rng, n_min=3, n_max=40, gap_lo=0.1, gap_hi=2.0) -> TimeScale:
    n = int(rng.integers(n_min, n_max + 1))
    gaps = rng.uniform(gap_lo, gap_hi, size=n - 1)
    a = float(rng.uniform(-2.0, 2.0))
    return TimeScale(a + np.concatenate([[0.0], np.cumsum(gaps)]))


def random_polynomial(rng, degree=3):
    coeffs = rng.uniform(-1.0, 1.0, size=degree + 1)
    return lambda t: np.polyval(coeffs, t)


def _join_terms(terms: list[str]) -> str:
    return " + ".join(terms) if terms else "0"


def quadratic_source(names: list[str], rng, t_linear: bool = True) -> str:
    """Strictly convex quadratic in the given variables, random coefficients.

    The quadratic part is M^T M + 0.3 I, so the transcription stays well
    conditioned; linear and t-linear terms are thrown in for coverage.
    """
    d = len(names)
    m = rng.uniform(-1.0, 1.0, size=(d, d))
    q = m.T @ m + 0.3 * np.eye(d)
    terms = []
    for i in range(d):
        terms.append(f"({q[i, i]!r})*{names[i]}^2")
        for j in range(i + 1, d):
            terms.append(f"({2.0 * q[i, j]!r})*{names[i]}*{names[j]}")
    for i in range(d):
        terms.append(f"({rng.uniform(-1.0, 1.0)!r})*{names[i]}")
        if t_linear:
            terms.append(f"({rng.uniform(-0.5, 0.5)!r})*t*{names[i]}")
    return _join_terms(terms)


def random_basic_problem(rng, n_max=3, scale_kw=None) -> BasicProblem:
    """Random strictly convex quadratic basic problem with random bc pattern."""
    n = int(rng.integers(1, n_max + 1))
    scale = random_scale(rng, **(scale_kw or {"n_min": 3, "n_max": 24, "gap_lo": 0.25, "gap_hi": 2.0}))
    names = [f"y[{i}]" for i in range(n)] + [f"dy[{i}]" for i in range(n)]
    src = quadratic_source(names, rng)
    bc_a = tuple(rng.uniform(-1, 1, size=n)) if rng.random() < 0.75 else None
    bc_b = tuple(rng.uniform(-1, 1, size=n)) if rng.random() < 0.75 else None
    return BasicProblem(scale=scale, lagrangian=parse(src, Arity(n, 1, 0)), bc_a=bc_a, bc_b=bc_b)


def random_lq_control(rng, n_max=3) -> ControlProblem:
    """Random linear-dynamics, convex-quadratic-cost control problem.

    Fixed terminal states are generated by forward simulation of a random
    control, so the instance is always feasible.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, n + 1))
    scale = random_scale(rng, n_min=3, n_max=10, gap_lo=0.25, gap_hi=1.5)
    arity = Arity(n, 0, m)
    a_mat = rng.uniform(-0.6, 0.6, size=(n, n))
    b_mat = rng.uniform(-0.6, 0.6, size=(n, m))
    offsets = rng.uniform(-0.3, 0.3, size=n)
    phi = []
    for k in range(n):
        terms = [f"({offsets[k]!r})"]
        terms += [f"({a_mat[k, i]!r})*y[{i}]" for i in range(n)]
        terms += [f"({b_mat[k, j]!r})*u[{j}]" for j in range(m)]
        phi.append(parse(_join_terms(terms), arity))
    names = [f"y[{i}]" for i in range(n)] + [f"u[{j}]" for j in range(m)]
    lag = parse(quadratic_source(names, rng), arity)
    bc_a = tuple(rng.uniform(-1, 1, size=n))
    problem = ControlProblem(scale=scale, lagrangian=lag, phi=tuple(phi), bc_a=bc_a, bc_b=None)
    if rng.random() < 0.5:
        u_probe = rng.uniform(-1, 1, size=(len(scale) - 1, m))
        y_probe = forward_simulate(problem, np.asarray(bc_a), u_probe)
        problem = ControlProblem(
            scale=scale, lagrangian=lag, phi=tuple(phi), bc_a=bc_a,
            bc_b=tuple(float(v) for v in y_probe[-1]),
        )
    return problem
