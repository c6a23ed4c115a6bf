"""The basic variational problem on a finite time scale and its certificates.

The functional is the exact finite sum

    F[y] = sum over t in T^k of mu(t) * L(t, arg(t), ydelta(t))

where arg(t) is y(t) for the plain form and y(sigma(t)) for the sigma
form.  Solving minimizes this sum over the grid values that are not
pinned by boundary conditions; stationarity of the exact transcription
is equivalent to the discrete necessary conditions, which the checkers
then certify independently:

  * integral form     L_ydelta(t) = integral_a^sigma(t) L_y + c   on T^k
  * differentiated    (L_ydelta - mu L_y)_delta = L_y             on T^k2
  * natural (transversality) conditions at free endpoints.

Both forms share one certificate path: for the sigma form the partials
are mapped through y(t) = y(sigma(t)) - mu(t) ydelta(t), under which the
integral/differentiated equations above become the sigma-form ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateProblemError,
    InfeasibleError,
    InsufficientPointsError,
    NonConvergenceError,
    ScaleDomainError,
)
from .expr import Arity, BinOp, LagrangianExpr, Var
from .timescale import GridFunction, TimeScale

STATIONARITY_NOTE = (
    "first-order certificate only: residuals establish stationarity of the exact "
    "transcription, not local minimality"
)

BoundaryCondition = "tuple[float | None, ...] | None"


def normalize_bc(bc, n: int):
    """None (fully free) or a length-n tuple whose entries may be None (free component)."""
    if bc is None:
        return None
    bc = tuple(None if v is None else float(v) for v in np.atleast_1d(np.asarray(bc, dtype=object)))
    if len(bc) != n:
        raise ValueError(f"boundary condition has {len(bc)} components, expected {n}")
    return bc


def _bc_free_mask(bc, n: int) -> np.ndarray:
    if bc is None:
        return np.ones(n, dtype=bool)
    return np.array([v is None for v in bc])


@dataclass(frozen=True, eq=False)
class BasicProblem:
    """min of the delta integral of L(t, y, ydelta) with optional endpoint values."""

    scale: TimeScale
    lagrangian: LagrangianExpr
    form: str = "plain"
    bc_a: tuple | None = None
    bc_b: tuple | None = None

    def __post_init__(self):
        if len(self.scale) < 3:
            raise InsufficientPointsError(
                f"a basic problem needs at least 3 points, got {len(self.scale)}"
            )
        ar = self.lagrangian.arity
        if ar.r != 1 or ar.m != 0:
            raise ValueError(f"basic problem Lagrangian must have arity (n, r=1, m=0), got {ar}")
        if self.form not in ("plain", "sigma"):
            raise ValueError(f"form must be 'plain' or 'sigma', got {self.form!r}")
        object.__setattr__(self, "bc_a", normalize_bc(self.bc_a, ar.n))
        object.__setattr__(self, "bc_b", normalize_bc(self.bc_b, ar.n))

    @property
    def n(self) -> int:
        return self.lagrangian.arity.n


@dataclass
class ExtremalReport:
    """Residuals of every first-order necessary condition, with verdicts."""

    c_estimate: np.ndarray
    el_integral_max_dev: float
    el_integral_tol: float
    el_diff_residuals: np.ndarray
    el_diff_max: float
    el_diff_tol: float
    transversality: dict
    transversality_tol: float
    conditions: dict
    passed: bool
    label: str
    objective: float
    note: str = STATIONARITY_NOTE

    def to_dict(self) -> dict:
        return {
            "c_estimate": self.c_estimate.tolist(),
            "el_integral_max_dev": self.el_integral_max_dev,
            "el_integral_tol": self.el_integral_tol,
            "el_diff_residuals": self.el_diff_residuals.tolist(),
            "el_diff_max": self.el_diff_max,
            "el_diff_tol": self.el_diff_tol,
            "transversality": {
                end: {"residual": res.tolist(), "free_components": free.tolist()}
                for end, (res, free) in self.transversality.items()
            },
            "transversality_tol": self.transversality_tol,
            "conditions": self.conditions,
            "passed": self.passed,
            "label": self.label,
            "objective": self.objective,
            "note": self.note,
        }


# --- trajectory evaluation ---------------------------------------------------


def _check_full(p: BasicProblem, y: GridFunction) -> np.ndarray:
    if y.scale != p.scale:
        raise ScaleDomainError("trajectory lives on a different scale than the problem")
    if not y.is_full:
        raise ScaleDomainError("trajectory must cover the whole scale")
    if y.dim != p.n:
        raise ScaleDomainError(f"trajectory has dimension {y.dim}, problem needs {p.n}")
    return y.values


def _check_bcs(p: BasicProblem, values: np.ndarray, tol: float = 1e-9) -> None:
    for bc, row, end in ((p.bc_a, values[0], "a"), (p.bc_b, values[-1], "b")):
        if bc is None:
            continue
        for k, want in enumerate(bc):
            if want is None:
                continue
            if abs(row[k] - want) > tol * (1.0 + abs(want)):
                raise InfeasibleError(
                    f"boundary condition at {end} violated in component {k}: "
                    f"{row[k]!r} != {want!r}"
                )


def _stage_env(p: BasicProblem, values: np.ndarray):
    """Variable arrays for evaluating L at every point of T^k in one pass."""
    pts = p.scale.points
    mu = p.scale.gaps
    v = (values[1:] - values[:-1]) / mu[:, None]
    arg = values[1:] if p.form == "sigma" else values[:-1]
    env = {"t": pts[:-1], "mu": mu}
    for i in range(p.n):
        env[f"y[{i}]"] = arg[:, i]
        env[f"dy[{i}][1]"] = v[:, i]
    return env, mu


def _stage_partials(p: BasicProblem, values: np.ndarray):
    """L values plus raw partials in the y-slot and dy-slot along T^k, shape (P, n)."""
    env, mu = _stage_env(p, values)
    lvals, grads = p.lagrangian.evaluate(env)
    ar = p.lagrangian.arity
    ly = np.stack([grads[p.lagrangian.slot(f"y[{i}]")] for i in range(ar.n)], axis=1)
    ldy = np.stack([grads[p.lagrangian.slot(f"dy[{i}][1]")] for i in range(ar.n)], axis=1)
    return lvals, ly, ldy, mu


def effective_partials(p: BasicProblem, values: np.ndarray):
    """(F_y, F_dy) on T^k in the plain-argument convention.

    For the plain form these are the raw partials.  For the sigma form
    they are the partials of F(t, y, v) = L(t, y + mu v, v), i.e.
    F_y = L_ysigma and F_dy = mu L_ysigma + L_ydelta, which makes every
    checker below cover both problem forms with one formula.
    """
    _, ly, ldy, mu = _stage_partials(p, values)
    if p.form == "plain":
        return ly, ldy, mu
    return ly, mu[:, None] * ly + ldy, mu


def _objective(p: BasicProblem, values: np.ndarray) -> float:
    env, mu = _stage_env(p, values)
    lvals, _ = p.lagrangian.evaluate(env)
    return float(mu @ lvals)


def _gradient(p: BasicProblem, values: np.ndarray) -> np.ndarray:
    """d objective / d values, shape (N, n), including rows later masked as fixed."""
    _, ly, ldy, mu = _stage_partials(p, values)
    g = np.zeros_like(values)
    if p.form == "sigma":
        g[1:] += mu[:, None] * ly
    else:
        g[:-1] += mu[:, None] * ly
    g[:-1] -= ldy
    g[1:] += ldy
    return g


def evaluate_functional(p: BasicProblem, y: GridFunction) -> float:
    """Exact finite-sum value of the functional at an admissible trajectory."""
    values = _check_full(p, y)
    _check_bcs(p, values)
    return _objective(p, values)


# --- residual checkers ---------------------------------------------------------


def el_integral_residual(p: BasicProblem, y: GridFunction) -> tuple[np.ndarray, float]:
    """Constant estimate and max deviation of the integral-form Euler-Lagrange identity.

    g(t) = F_dy(t) - integral_a^sigma(t) F_y must be a constant c on T^k;
    the estimate is anchored at the first point, g(a).
    """
    values = _check_full(p, y)
    fy, fdy, mu = effective_partials(p, values)
    running = np.cumsum(mu[:, None] * fy, axis=0)
    dev = fdy - running
    c = dev[0].copy()
    max_dev = float(np.max(np.abs(dev - c))) if dev.shape[0] else 0.0
    return c, max_dev


def el_differentiated_residual(p: BasicProblem, y: GridFunction) -> np.ndarray:
    """Pointwise residual of the delta-differentiated Euler-Lagrange equation on T^k2.

    The delta derivative is applied to the sampled sequence
    F_dy(t) - mu(t) F_y(t); mu itself is never differentiated.
    """
    values = _check_full(p, y)
    if len(p.scale) < 3:
        raise InsufficientPointsError("differentiated form needs at least 3 points")
    fy, fdy, mu = effective_partials(p, values)
    s = fdy - mu[:, None] * fy
    s_delta = (s[1:] - s[:-1]) / mu[:-1, None]
    return s_delta - fy[:-1]


def transversality_residuals(p: BasicProblem, y: GridFunction) -> dict:
    """Left-hand sides of the natural boundary conditions at ends with free components.

    Keys "a"/"b" map to (residual vector, boolean mask of free components);
    ends whose components are all fixed do not appear.
    """
    values = _check_full(p, y)
    fy, fdy, mu = effective_partials(p, values)
    out = {}
    free_a = _bc_free_mask(p.bc_a, p.n)
    free_b = _bc_free_mask(p.bc_b, p.n)
    if free_a.any():
        out["a"] = (fdy[0] - mu[0] * fy[0], free_a)
    if free_b.any():
        out["b"] = (fdy[-1].copy(), free_b)
    return out


def certificate_scale(p: BasicProblem, y: GridFunction) -> float:
    """1 + the largest Lagrangian partial along the trajectory (tolerance unit)."""
    values = _check_full(p, y)
    fy, fdy, _ = effective_partials(p, values)
    return float(1.0 + max(np.max(np.abs(fy)), np.max(np.abs(fdy))))


def certify(p: BasicProblem, y: GridFunction, tol: float = 1e-8, label: str = "candidate") -> ExtremalReport:
    """Run every first-order checker and collect verdicts into a report."""
    c, max_dev = el_integral_residual(p, y)
    diff = el_differentiated_residual(p, y)
    trv = transversality_residuals(p, y)
    mag = certificate_scale(p, y)
    tol_integral = tol * (1.0 + float(np.max(np.abs(c))))
    tol_rest = tol * mag
    diff_max = float(np.max(np.abs(diff))) if diff.size else 0.0
    conditions = {
        "el_integral": bool(max_dev <= tol_integral),
        "el_differentiated": bool(diff_max <= tol_rest),
    }
    for end, (res, free) in trv.items():
        conditions[f"transversality_{end}"] = bool(np.max(np.abs(res[free])) <= tol_rest)
    return ExtremalReport(
        c_estimate=c,
        el_integral_max_dev=max_dev,
        el_integral_tol=tol_integral,
        el_diff_residuals=diff,
        el_diff_max=diff_max,
        el_diff_tol=tol_rest,
        transversality=trv,
        transversality_tol=tol_rest,
        conditions=conditions,
        passed=all(conditions.values()),
        label=label,
        objective=_objective(p, _check_full(p, y)),
    )


# --- solving --------------------------------------------------------------------


def _free_mask(p: BasicProblem) -> np.ndarray:
    n_pts = len(p.scale)
    mask = np.ones((n_pts, p.n), dtype=bool)
    mask[0] = _bc_free_mask(p.bc_a, p.n)
    mask[-1] = _bc_free_mask(p.bc_b, p.n)
    return mask


def _fixed_values(p: BasicProblem) -> np.ndarray:
    vals = np.zeros((len(p.scale), p.n))
    for bc, row in ((p.bc_a, 0), (p.bc_b, -1)):
        if bc is None:
            continue
        for k, want in enumerate(bc):
            if want is not None:
                vals[row, k] = want
    return vals


def solve_basic(p: BasicProblem, tol: float = 1e-8, max_iter: int = 500) -> tuple[GridFunction, ExtremalReport]:
    """Stationary point of the exact transcription, plus its certificate.

    Quadratic Lagrangians go through one linear solve of the stationarity
    system; anything else runs damped Newton on the gradient with a
    gradient-descent fallback step.  The report re-checks the necessary
    conditions independently of the solve path.
    """
    mask = _free_mask(p)
    base = _fixed_values(p)
    n_free = int(mask.sum())

    def full(x: np.ndarray) -> np.ndarray:
        v = base.copy()
        v[mask] = x
        return v

    def grad(x: np.ndarray) -> np.ndarray:
        return _gradient(p, full(x))[mask]

    degree = p.lagrangian.polynomial_degree()
    if degree is not None and degree <= 2:
        g0 = grad(np.zeros(n_free))
        columns = np.empty((n_free, n_free))
        eye = np.eye(n_free)
        for j in range(n_free):
            columns[:, j] = grad(eye[j]) - g0
        try:
            x = np.linalg.solve(columns, -g0)
        except np.linalg.LinAlgError as exc:
            raise DegenerateProblemError(f"singular stationarity system: {exc}") from exc
        hess = 0.5 * (columns + columns.T)
        convex = bool(np.min(np.linalg.eigvalsh(hess)) >= -1e-10 * (1.0 + np.max(np.abs(hess))))
        label = "minimizer" if convex else "stationary"
    else:
        x, label = _newton_descent(p, grad, full, n_free, max_iter)

    y = GridFunction(p.scale, full(x))
    report = certify(p, y, tol=tol, label=label)
    return y, report


def _newton_descent(p, grad, full, n_free, max_iter):
    """Damped Newton on the gradient, finite-difference Hessian, descent fallback."""
    x = np.zeros(n_free)
    g = grad(x)
    best = (float(np.max(np.abs(g))), x.copy())
    for _ in range(max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm < best[0]:
            best = (gnorm, x.copy())
        if gnorm <= 1e-10 * (1.0 + abs(_objective(p, full(x)))):
            return x, "stationary"
        hess = np.empty((n_free, n_free))
        h = 1e-6
        for j in range(n_free):
            step = np.zeros(n_free)
            step[j] = h * (1.0 + abs(x[j]))
            hess[:, j] = (grad(x + step) - grad(x - step)) / (2.0 * step[j])
        hess = 0.5 * (hess + hess.T)
        try:
            dx = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            dx = -g
        # backtracking on the gradient norm, falling back to steepest descent
        for candidate in (dx, -g):
            t = 1.0
            accepted = False
            for _ in range(40):
                g_new = grad(x + t * candidate)
                if np.max(np.abs(g_new)) < gnorm * (1.0 - 1e-4 * t) + 1e-16:
                    x = x + t * candidate
                    g = g_new
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
        else:
            break
    gnorm = float(np.max(np.abs(g)))
    if gnorm <= 1e-8 * (1.0 + abs(_objective(p, full(x)))):
        return x, "stationary"
    raise NonConvergenceError(
        f"Newton did not reach stationarity after {max_iter} iterations "
        f"(best gradient norm {best[0]:.3e})",
        best=GridFunction(p.scale, full(best[1])),
    )


# --- form transformation ---------------------------------------------------------


def sigma_form_transform(p: BasicProblem) -> BasicProblem:
    """Rewrite the problem in the other argument convention, same minimizers.

    plain -> sigma substitutes y(t) = y(sigma(t)) - mu(t) ydelta(t) into L;
    sigma -> plain substitutes y(sigma(t)) = y(t) + mu(t) ydelta(t).  The
    transformed Lagrangian references mu, which evaluation binds per point
    from the scale, so both transcriptions are the same finite sum.
    """
    sign = "-" if p.form == "plain" else "+"
    mapping = {}
    for i in range(p.n):
        shift = BinOp("*", Var("mu"), Var(f"dy[{i}][1]"))
        mapping[f"y[{i}]"] = BinOp(sign, Var(f"y[{i}]"), shift)
    new_l = p.lagrangian.substituted(mapping)
    return BasicProblem(
        scale=p.scale,
        lagrangian=new_l,
        form="sigma" if p.form == "plain" else "plain",
        bc_a=p.bc_a,
        bc_b=p.bc_b,
    )
