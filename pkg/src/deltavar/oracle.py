"""Independent verification backends: exhaustive search, multiplier extraction,
and finite-difference gradient checks.

These deliberately re-derive what the solvers compute, from the problem
data alone, so that acceptance tests can compare two routes to the same
answer.  The exhaustive search evaluates the exact transcription
objective over an axis-aligned grid (dynamics are enforced by forward
simulation for control problems, never searched over), the multiplier
extraction solves the transcribed stationarity system at a given
trajectory in a least-squares sense, and the gradient check compares
forward-mode partials against central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .control import ControlProblem
from .errors import BudgetExceededError, DegenerateProblemError, InfeasibleError
from .expr import LagrangianExpr
from .higher_order import HigherOrderProblem, boundary_value_rows
from .timescale import GridFunction
from .variational import BasicProblem, _bc_free_mask, _fixed_values, _free_mask

_CHUNK = 200_000


@dataclass(frozen=True)
class GridSearchSpec:
    """Axis-aligned value grid per unknown, with a hard combination budget."""

    grids: tuple
    budget: int = 10_000_000
    feasibility_tol: float = 1e-9

    def axes(self) -> list[np.ndarray]:
        out = []
        for lo, hi, step in self.grids:
            if step <= 0 or hi < lo:
                raise ValueError(f"bad grid axis (lo={lo}, hi={hi}, step={step})")
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            out.append(lo + step * np.arange(count))
        return out


@dataclass
class BruteForceResult:
    unknown_names: list[str]
    assignment: np.ndarray
    objective: float
    flat_index: int
    evaluations: int
    y_values: np.ndarray
    u_values: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "unknown_names": self.unknown_names,
            "assignment": self.assignment.tolist(),
            "objective": self.objective,
            "flat_index": self.flat_index,
            "evaluations": self.evaluations,
            "y": self.y_values.tolist(),
            "u": None if self.u_values is None else self.u_values.tolist(),
        }


def _iter_chunks(axes: list[np.ndarray], budget: int):
    counts = [len(a) for a in axes]
    total = int(np.prod(counts)) if counts else 1
    if total > budget:
        raise BudgetExceededError(f"{total} grid combinations exceed the budget of {budget}")
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        idx = np.unravel_index(np.arange(start, stop), counts) if counts else ()
        cols = [axes[k][idx[k]] for k in range(len(axes))]
        yield start, np.stack(cols, axis=1) if cols else np.zeros((stop - start, 0))
    if total == 0:
        raise InfeasibleError("a grid axis is empty")


def _argbest(best, start, values):
    """Keep the smallest value, breaking ties by the first (lexicographic) index."""
    if values.size == 0:
        return best
    local = int(np.argmin(values))
    val = float(values[local])
    if not np.isfinite(val):
        return best
    if best is None or val < best[0]:
        return (val, start + local)
    return best


def brute_force_minimize(problem, spec: GridSearchSpec) -> BruteForceResult:
    """Exhaustive minimization of the exact transcription objective.

    Unknown ordering: basic and higher-order problems search their free
    grid values row-major (time then component); control problems search
    free initial-state components first, then controls time-major, with
    states filled in by forward simulation and fixed terminal components
    enforced within ``spec.feasibility_tol``.
    """
    if isinstance(problem, BasicProblem):
        return _brute_basic(problem, spec)
    if isinstance(problem, ControlProblem):
        return _brute_control(problem, spec)
    if isinstance(problem, HigherOrderProblem):
        return _brute_higher_order(problem, spec)
    raise TypeError(f"cannot brute force {type(problem).__name__}")


def _stage_objective_basic(p: BasicProblem, values: np.ndarray) -> np.ndarray:
    # values: (batch, N, n) -> objective per batch entry
    pts = p.scale.points
    mu = p.scale.gaps
    v = (values[..., 1:, :] - values[..., :-1, :]) / mu[:, None]
    arg = values[..., 1:, :] if p.form == "sigma" else values[..., :-1, :]
    env = {"t": pts[:-1], "mu": mu}
    for i in range(p.n):
        env[f"y[{i}]"] = arg[..., i]
        env[f"dy[{i}][1]"] = v[..., i]
    lvals = p.lagrangian.evaluate_value(env)
    return lvals @ mu


def _brute_basic(p: BasicProblem, spec: GridSearchSpec) -> BruteForceResult:
    mask = _free_mask(p)
    slots = np.argwhere(mask)
    names = [f"y[{i}][{k}]" for i, k in slots]
    axes = spec.axes()
    if len(axes) != len(slots):
        raise ValueError(f"{len(slots)} unknowns but {len(axes)} grid axes")
    base = _fixed_values(p)
    best = None
    total = 0
    for start, combos in _iter_chunks(axes, spec.budget):
        values = np.broadcast_to(base, (combos.shape[0],) + base.shape).copy()
        values[:, slots[:, 0], slots[:, 1]] = combos
        best = _argbest(best, start, _stage_objective_basic(p, values))
        total = start + combos.shape[0]
    return _finish_basic(p, spec, axes, slots, names, base, best, total)


def _finish_basic(p, spec, axes, slots, names, base, best, total):
    if best is None:
        raise InfeasibleError("no feasible grid point")
    obj, flat = best
    idx = np.unravel_index(flat, [len(a) for a in axes]) if axes else ()
    assignment = np.array([axes[k][idx[k]] for k in range(len(axes))])
    values = base.copy()
    values[slots[:, 0], slots[:, 1]] = assignment
    return BruteForceResult(names, assignment, obj, flat, total, values)


def _brute_control(p: ControlProblem, spec: GridSearchSpec) -> BruteForceResult:
    from .control import _phi_values, _stage_env  # evaluation plumbing only

    n_pts = len(p.scale)
    free_a = _bc_free_mask(p.bc_a, p.n)
    names = [f"y[0][{k}]" for k in np.nonzero(free_a)[0]]
    names += [f"u[{i}][{j}]" for i in range(n_pts - 1) for j in range(p.m)]
    axes = spec.axes()
    if len(axes) != len(names):
        raise ValueError(f"{len(names)} unknowns but {len(axes)} grid axes")
    y_a_base = np.zeros(p.n)
    if p.bc_a is not None:
        for k, want in enumerate(p.bc_a):
            if want is not None:
                y_a_base[k] = want
    fixed_b = [] if p.bc_b is None else [(k, v) for k, v in enumerate(p.bc_b) if v is not None]
    n_free_a = int(free_a.sum())
    pts, mu = p.scale.points, p.scale.gaps
    best = None
    total = 0
    for start, combos in _iter_chunks(axes, spec.budget):
        batch = combos.shape[0]
        y_a = np.broadcast_to(y_a_base, (batch, p.n)).copy()
        y_a[:, free_a] = combos[:, :n_free_a]
        u = combos[:, n_free_a:].reshape(batch, n_pts - 1, p.m)
        y = np.zeros((batch, n_pts, p.n))
        y[:, 0] = y_a
        for i in range(n_pts - 1):
            env = _stage_env(p, pts[i], mu[i], y[:, i], u[:, i])
            y[:, i + 1] = y[:, i] + mu[i] * _phi_values(p, env)
        env = _stage_env(p, pts[:-1], mu, y[:, :-1], u)
        obj = p.lagrangian.evaluate_value(env) @ mu
        for k, want in fixed_b:
            obj = np.where(np.abs(y[:, -1, k] - want) <= spec.feasibility_tol, obj, np.inf)
        best = _argbest(best, start, obj)
        total = start + batch
    if best is None:
        raise InfeasibleError(
            "no grid point satisfies the terminal conditions within the feasibility tolerance"
        )
    obj, flat = best
    idx = np.unravel_index(flat, [len(a) for a in axes])
    assignment = np.array([axes[k][idx[k]] for k in range(len(axes))])
    y_a = y_a_base.copy()
    y_a[free_a] = assignment[:n_free_a]
    u = assignment[n_free_a:].reshape(n_pts - 1, p.m)
    from .control import forward_simulate

    return BruteForceResult(names, assignment, obj, flat, total, forward_simulate(p, y_a, u), u)


def _brute_higher_order(hp: HigherOrderProblem, spec: GridSearchSpec) -> BruteForceResult:
    determined, free_rows = boundary_value_rows(hp)
    names = [f"y[{row}][{k}]" for row in free_rows for k in range(hp.n)]
    axes = spec.axes()
    if len(axes) != len(names):
        raise ValueError(f"{len(names)} unknowns but {len(axes)} grid axes")
    base = np.zeros((len(hp.scale), hp.n))
    for row, vec in determined.items():
        base[row] = vec
    slots = np.array([(row, k) for row in free_rows for k in range(hp.n)], dtype=int)
    gaps = hp.scale.gaps
    p_red = len(hp.scale) - hp.r
    pts = hp.scale.points
    best = None
    total = 0
    for start, combos in _iter_chunks(axes, spec.budget):
        values = np.broadcast_to(base, (combos.shape[0],) + base.shape).copy()
        if slots.size:
            values[:, slots[:, 0], slots[:, 1]] = combos
        env = {"t": pts[:p_red], "mu": gaps[:p_red]}
        level = values
        for j in range(hp.r + 1):
            for k in range(hp.n):
                env[f"y[{k}]" if j == 0 else f"dy[{k}][{j}]"] = level[:, :p_red, k]
            if j < hp.r:
                level = (level[:, 1:] - level[:, :-1]) / gaps[: level.shape[1] - 1, None]
        obj = hp.lagrangian.evaluate_value(env) @ gaps[:p_red]
        best = _argbest(best, start, obj)
        total = start + combos.shape[0]
    if best is None:
        raise InfeasibleError("no feasible grid point")
    obj, flat = best
    idx = np.unravel_index(flat, [len(a) for a in axes]) if axes else ()
    assignment = np.array([axes[k][idx[k]] for k in range(len(axes))])
    values = base.copy()
    if slots.size:
        values[slots[:, 0], slots[:, 1]] = assignment
    return BruteForceResult(names, assignment, obj, flat, total, values)


# --- multiplier extraction ---------------------------------------------------------


@dataclass
class KktMultipliers:
    """Equality multipliers of the transcribed dynamics constraints, keyed by time."""

    times: np.ndarray
    multipliers: np.ndarray
    stationarity_residual: float
    dynamics_residual: float

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "multipliers": self.multipliers.tolist(),
            "stationarity_residual": self.stationarity_residual,
            "dynamics_residual": self.dynamics_residual,
        }


def kkt_multipliers(p: ControlProblem, y: GridFunction, u: GridFunction, tol: float = 1e-8, require_feasible: bool = True) -> KktMultipliers:
    """Solve the transcribed stationarity system for the dynamics multipliers.

    The constraints are the delta-form residuals ydelta(t) - phi(t, y, u),
    so the multiplier at t corresponds to -psi(sigma(t)) mu(t).  Raises
    InfeasibleError (carrying the residuals) when (y, u) does not satisfy
    the dynamics, unless ``require_feasible`` is disabled for best-effort
    extraction; a large ``stationarity_residual`` in the result flags a
    non-stationary trajectory.
    """
    n_pts, n, m = len(p.scale), p.n, p.m
    pts, mu = p.scale.points, p.scale.gaps
    yv = y.values
    uv = u.values[: n_pts - 1]

    env = {"t": pts[:-1], "mu": mu}
    for i in range(n):
        env[f"y[{i}]"] = yv[:-1, i]
    for j in range(m):
        env[f"u[{j}]"] = uv[:, j]
    _, lgrads = p.lagrangian.evaluate(env)
    ly = np.stack([lgrads[p.lagrangian.slot(f"y[{i}]")] for i in range(n)], axis=1)
    lu = np.stack([lgrads[p.lagrangian.slot(f"u[{j}]")] for j in range(m)], axis=1)
    phival, phiy, phiu = [], [], []
    for comp in p.phi:
        v, g = comp.evaluate(env)
        phival.append(v)
        phiy.append(np.stack([g[comp.slot(f"y[{i}]")] for i in range(n)], axis=1))
        phiu.append(np.stack([g[comp.slot(f"u[{j}]")] for j in range(m)], axis=1))
    phival = np.stack(phival, axis=1)
    phiy = np.stack(phiy, axis=1)
    phiu = np.stack(phiu, axis=1)

    dyn = (yv[1:] - yv[:-1]) / mu[:, None] - phival
    dyn_max = float(np.max(np.abs(dyn)))
    dyn_scale = 1.0 + float(np.max(np.abs(phival))) + float(np.max(np.abs(yv)))
    if require_feasible and dyn_max > tol * dyn_scale:
        raise InfeasibleError(
            f"trajectory violates the dynamics (max residual {dyn_max:.3e})",
            residuals=dyn,
        )

    # unknown layout: free grid values then controls, all time-major
    free = np.ones((n_pts, n), dtype=bool)
    free[0] = _bc_free_mask(p.bc_a, n)
    free[-1] = _bc_free_mask(p.bc_b, n)
    col = -np.ones((n_pts, n), dtype=int)
    col[free] = np.arange(int(free.sum()))
    n_y = int(free.sum())
    n_unknown = n_y + (n_pts - 1) * m

    grad = np.zeros(n_unknown)
    gy = np.zeros((n_pts, n))
    gy[:-1] = mu[:, None] * ly
    grad[:n_y] = gy[free]
    grad[n_y:] = (mu[:, None] * lu).ravel()

    jac = np.zeros(((n_pts - 1) * n, n_unknown))
    for i in range(n_pts - 1):
        for k in range(n):
            row = i * n + k
            if col[i + 1, k] >= 0:
                jac[row, col[i + 1, k]] += 1.0 / mu[i]
            if col[i, k] >= 0:
                jac[row, col[i, k]] -= 1.0 / mu[i]
            for l in range(n):
                if col[i, l] >= 0:
                    jac[row, col[i, l]] -= phiy[i, k, l]
            for l in range(m):
                jac[row, n_y + i * m + l] -= phiu[i, k, l]

    try:
        lam, *_ = np.linalg.lstsq(jac.T, -grad, rcond=None)
    except np.linalg.LinAlgError as exc:
        raise DegenerateProblemError(f"singular KKT system: {exc}") from exc
    stat = float(np.max(np.abs(grad + jac.T @ lam)))
    return KktMultipliers(
        times=pts[:-1].copy(),
        multipliers=lam.reshape(n_pts - 1, n),
        stationarity_residual=stat,
        dynamics_residual=dyn_max,
    )


# --- gradient checking ---------------------------------------------------------------


def finite_diff_check(e: LagrangianExpr, point: Mapping[str, float], h: float) -> float:
    """Max relative gap between forward-mode partials and central differences."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    _, partials = e.eval_with_partials(point)
    env = {name: float(point.get(name, 0.0)) for name in e.arity.var_names()}
    worst = 0.0
    for name in e.arity.var_names():
        up = dict(env)
        down = dict(env)
        up[name] += h
        down[name] -= h
        fd = (float(e.evaluate_value(up)) - float(e.evaluate_value(down))) / (2.0 * h)
        err = abs(fd - partials[name]) / (1.0 + abs(partials[name]))
        worst = max(worst, err)
    return worst
