"""Variational problems with delta derivatives up to order r.

The functional integrates L(t, y, ydelta, ..., ydelta^r) up to the point
r-1 jumps before the scale's maximum, with optional endpoint values for
each derivative order 0..r-1 at both ends.  Everything reduces exactly
to an optimal control problem over the integrator chain

    z = (y, ydelta, ..., ydelta^{r-1}),   zdelta = A z + B u,   u = ydelta^r,

on the scale truncated to the integration window; the reduction is a
bijection on trajectories, so solving the reduced problem solves the
original one.  Certificates cover the stationarity identity
psi^{r-1}(sigma(t)) = -L_u, the recursive integral definitions of the
costate blocks, the nested-integral Euler-Lagrange equation with its
free accumulation constants, and (on unit-spaced scales) the fully
delta-differentiated discrete equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import (
    ControlProblem,
    CostateTrajectory,
    WmpReport,
    costate_sweep,
    solve_lagrange,
    wmp_residuals,
)
from .errors import InfeasibleError, InsufficientPointsError, ScaleDomainError
from .expr import Arity, LagrangianExpr, Var
from .timescale import GridFunction, delta_derivative, derivative_stack
from .variational import STATIONARITY_NOTE


@dataclass(frozen=True, eq=False)
class HigherOrderProblem:
    """min of the delta integral of L(t, y, ..., ydelta^r) over [a, rho^{r-1}(b)).

    ``bc_a``/``bc_b`` hold one optional R^n vector per derivative order
    0..r-1; the b-side conditions apply at the truncated endpoint
    rho^{r-1}(b), which is where the integration window closes.
    """

    scale: TimeScale
    lagrangian: LagrangianExpr
    bc_a: tuple = ()
    bc_b: tuple = ()

    def __post_init__(self):
        ar = self.lagrangian.arity
        if ar.r < 1 or ar.m != 0:
            raise ValueError(f"higher-order Lagrangian must have arity (n, r>=1, m=0), got {ar}")
        if len(self.scale) < 2 * ar.r + 1:
            raise InsufficientPointsError(
                f"an order-{ar.r} problem needs at least {2 * ar.r + 1} points, got {len(self.scale)}"
            )
        object.__setattr__(self, "bc_a", _normalize_blocks(self.bc_a, ar))
        object.__setattr__(self, "bc_b", _normalize_blocks(self.bc_b, ar))

    @property
    def n(self) -> int:
        return self.lagrangian.arity.n

    @property
    def r(self) -> int:
        return self.lagrangian.arity.r


def _normalize_blocks(blocks, ar: Arity) -> tuple:
    blocks = tuple(blocks) if blocks else (None,) * ar.r
    if len(blocks) != ar.r:
        raise ValueError(f"expected {ar.r} boundary blocks, got {len(blocks)}")
    out = []
    for block in blocks:
        if block is None:
            out.append(None)
            continue
        vec = np.asarray(block, dtype=float).reshape(-1)
        if vec.size != ar.n:
            raise ValueError(f"boundary block has {vec.size} components, expected {ar.n}")
        out.append(tuple(float(v) for v in vec))
    return tuple(out)


@dataclass
class HoElReport:
    """Certificate for the nested-integral Euler-Lagrange equation."""

    residuals: np.ndarray
    max_residual: float
    constants: np.ndarray
    method: str
    transversality: dict
    checked_points: np.ndarray
    unchecked_points: np.ndarray
    tol: float
    passed: bool
    note: str = STATIONARITY_NOTE

    def to_dict(self) -> dict:
        return {
            "residuals": self.residuals.tolist(),
            "max_residual": self.max_residual,
            "constants": self.constants.tolist(),
            "method": self.method,
            "transversality": {k: float(v) for k, v in self.transversality.items()},
            "checked_points": self.checked_points.tolist(),
            "unchecked_points": self.unchecked_points.tolist(),
            "tol": self.tol,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass
class HigherOrderReport:
    """All higher-order certificates bundled with the reduced-problem report."""

    wmp: WmpReport
    stationarity_max: float
    recursion_max: float
    ho_el: HoElReport
    discrete_max: float | None
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "wmp": self.wmp.to_dict(),
            "stationarity_max": self.stationarity_max,
            "recursion_max": self.recursion_max,
            "ho_el": self.ho_el.to_dict(),
            "discrete_max": self.discrete_max,
            "tol": self.tol,
            "passed": self.passed,
        }


# --- reduction -------------------------------------------------------------------


def reduce_to_control(hp: HigherOrderProblem) -> ControlProblem:
    """Rewrite as first-order dynamics over the stacked derivative state.

    The reduced state is z = (y, ydelta, ..., ydelta^{r-1}) in R^{n r},
    the control u = ydelta^r in R^n, the dynamics an integrator chain
    (superdiagonal identity blocks), and the scale is truncated to the
    first N - r + 1 points so the reduced endpoint is rho^{r-1}(b).
    """
    n, r = hp.n, hp.r
    wide = Arity(n * r, 0, n)
    mapping = {}
    for k in range(n):
        for j in range(1, r):
            mapping[f"dy[{k}][{j}]"] = Var(f"y[{j * n + k}]")
        mapping[f"dy[{k}][{r}]"] = Var(f"u[{k}]")
    lag = hp.lagrangian.substituted(mapping, wide)
    phi = []
    for block in range(r):
        for k in range(n):
            if block < r - 1:
                phi.append(LagrangianExpr(Var(f"y[{(block + 1) * n + k}]"), wide))
            else:
                phi.append(LagrangianExpr(Var(f"u[{k}]"), wide))
    bc_a = _concat_blocks(hp.bc_a, n)
    bc_b = _concat_blocks(hp.bc_b, n)
    return ControlProblem(
        scale=hp.scale.restrict(r - 1),
        lagrangian=lag,
        phi=tuple(phi),
        bc_a=bc_a,
        bc_b=bc_b,
    )


def _concat_blocks(blocks: tuple, n: int) -> tuple:
    out = []
    for block in blocks:
        out.extend((None,) * n if block is None else block)
    return tuple(out)


def _reconstruct_full(hp: HigherOrderProblem, z_values: np.ndarray, u_values: np.ndarray) -> np.ndarray:
    """Recover y on the whole original scale from the reduced trajectory.

    The reduced problem carries y and its derivatives only up to
    rho^{r-1}(b); the remaining r - 1 values follow from repeated
    application of f(sigma(t)) = f(t) + mu(t) fdelta(t).
    """
    n, r = hp.n, hp.r
    n_pts = len(hp.scale)
    m = n_pts - r + 1
    gaps = hp.scale.gaps
    table = [None] * (r + 1)
    table[r] = np.asarray(u_values, dtype=float)
    for i in range(r - 1, -1, -1):
        arr = np.zeros((n_pts - i, n))
        arr[:m] = z_values[:, i * n : (i + 1) * n]
        for j in range(m - 1, n_pts - i - 1):
            arr[j + 1] = arr[j] + gaps[j] * table[i + 1][j]
        table[i] = arr
    return table[0]


# --- trajectory evaluation ----------------------------------------------------------


def _stack_values(hp: HigherOrderProblem, y: GridFunction) -> list[np.ndarray]:
    if y.scale != hp.scale or not y.is_full or y.dim != hp.n:
        raise ScaleDomainError("trajectory does not match the problem scale/dimension")
    return [f.values for f in derivative_stack(y, hp.r)]


def _stage_partials(hp: HigherOrderProblem, stack: list[np.ndarray]):
    """L values, derivative-slot partials, and top-order partials on T^{k^r}."""
    n, r = hp.n, hp.r
    p_red = len(hp.scale) - r
    pts = hp.scale.points
    env = {"t": pts[:p_red], "mu": hp.scale.gaps[:p_red]}
    for k in range(n):
        env[f"y[{k}]"] = stack[0][:p_red, k]
        for j in range(1, r + 1):
            env[f"dy[{k}][{j}]"] = stack[j][:p_red, k]
    lvals, grads = hp.lagrangian.evaluate(env)
    lag = hp.lagrangian
    ly = []
    for i in range(r):
        names = [f"y[{k}]" if i == 0 else f"dy[{k}][{i}]" for k in range(n)]
        ly.append(np.stack([grads[lag.slot(nm)] for nm in names], axis=1))
    lu = np.stack([grads[lag.slot(f"dy[{k}][{r}]")] for k in range(n)], axis=1)
    return lvals, ly, lu


def evaluate_functional_ho(hp: HigherOrderProblem, y: GridFunction, check_bcs: bool = True) -> float:
    """Exact finite-sum value of the order-r functional at a trajectory."""
    stack = _stack_values(hp, y)
    if check_bcs:
        _check_bcs(hp, stack)
    p_red = len(hp.scale) - hp.r
    lvals, _, _ = _stage_partials(hp, stack)
    return float(hp.scale.gaps[:p_red] @ lvals)


def _check_bcs(hp: HigherOrderProblem, stack: list[np.ndarray], tol: float = 1e-9) -> None:
    end = len(hp.scale) - hp.r
    for i in range(hp.r):
        for block, idx, name in ((hp.bc_a[i], 0, "a"), (hp.bc_b[i], end, "rho^{r-1}(b)")):
            if block is None:
                continue
            got = stack[i][idx]
            want = np.asarray(block)
            if np.max(np.abs(got - want)) > tol * (1.0 + np.max(np.abs(want))):
                raise InfeasibleError(
                    f"derivative-order-{i} boundary condition at {name} violated: {got} != {want}"
                )


def boundary_value_rows(hp: HigherOrderProblem):
    """Grid rows pinned by the boundary blocks, and the remaining free rows.

    Supports prefix-fixed block patterns (orders 0..k fixed, the rest
    free) at each end, which is what the exhaustive-search oracle can
    parametrize directly; other patterns raise ValueError.
    """
    n, r = hp.n, hp.r
    n_pts = len(hp.scale)
    gaps = hp.scale.gaps

    def prefix(blocks):
        count = 0
        while count < r and blocks[count] is not None:
            count += 1
        if any(b is not None for b in blocks[count:]):
            raise ValueError("boundary blocks must be fixed in a prefix pattern for row solving")
        return count

    count_a = prefix(hp.bc_a)
    count_b = prefix(hp.bc_b)
    determined: dict[int, np.ndarray] = {}
    if count_a:
        tri = np.array([hp.bc_a[i] for i in range(count_a)], dtype=float)
        for q in range(count_a):
            determined[q] = tri[0].copy()
            # advance the triangle one sigma step: drops the top order
            tri = tri[:-1] + gaps[q] * tri[1:] if tri.shape[0] > 1 else tri[:0]
    if count_b:
        base = n_pts - r
        tri = np.array([hp.bc_b[i] for i in range(count_b)], dtype=float)
        for q in range(count_b):
            determined[base + q] = tri[0].copy()
            tri = tri[:-1] + gaps[base + q] * tri[1:] if tri.shape[0] > 1 else tri[:0]
    free = [row for row in range(n_pts) if row not in determined]
    return determined, free


# --- solving ---------------------------------------------------------------------


def solve_higher_order(hp: HigherOrderProblem, tol: float = 1e-8, max_iter: int = 500):
    """Solve via the first-order reduction and certify with every checker.

    psi0 is fixed to 1 (the reduced chain admits no abnormal multipliers).
    Returns (y, costates, report): y covers the whole original scale with
    its derivative stack recomputed from values, and costates holds the
    r blocks psi^0..psi^{r-1} on the reduced scale.
    """
    cp = reduce_to_control(hp)
    z, u, costate, wmp = solve_lagrange(cp, tol=tol, max_iter=max_iter)
    y_values = _reconstruct_full(hp, z.values, u.values)
    y = GridFunction(hp.scale, y_values)
    blocks = [
        GridFunction(cp.scale, costate.psi.values[:, i * hp.n : (i + 1) * hp.n])
        for i in range(hp.r)
    ]
    report = certify_higher_order(hp, y, blocks, wmp=wmp, tol=tol)
    return y, blocks, report


def certify_higher_order(hp: HigherOrderProblem, y: GridFunction, costates=None, wmp: WmpReport | None = None, tol: float = 1e-8) -> HigherOrderReport:
    """Bundle the stationarity, recursion, nested-integral, and discrete checks."""
    stack = _stack_values(hp, y)
    if costates is None:
        costates, _ = costate_recursion(hp, y)
    if wmp is None:
        wmp = _checker_wmp(hp, y, costates, tol)
    _, ly, lu = _stage_partials(hp, stack)
    p_red = len(hp.scale) - hp.r
    gaps = hp.scale.gaps[:p_red]
    psi_top = costates[-1].values
    stat = psi_top[1 : p_red + 1] + lu
    stationarity_max = float(np.max(np.abs(stat)))

    # the recursive integral definition of each costate block
    recursion_max = 0.0
    for i in range(hp.r):
        integrand = ly[i].copy()
        if i > 0:
            integrand += costates[i - 1].values[1 : p_red + 1]
        rhs = -np.cumsum(gaps[:, None] * integrand, axis=0) + costates[i].values[0]
        recursion_max = max(recursion_max, float(np.max(np.abs(costates[i].values[1 : p_red + 1] - rhs))))

    ho_el = ho_el_residual(hp, y, costates=costates, tol=tol)
    discrete_max = None
    if hp.scale.is_unit_spaced and len(hp.scale) >= 2 * hp.r + 1:
        discrete_max = float(np.max(np.abs(discrete_el_residual(hp, y))))

    psi_mag = max(float(np.max(np.abs(c.values))) for c in costates)
    mag = 1.0 + psi_mag + float(np.max(np.abs(lu)))
    passed = (
        wmp.passed
        and stationarity_max <= tol * mag
        and recursion_max <= tol * mag
        and ho_el.passed
    )
    return HigherOrderReport(
        wmp=wmp,
        stationarity_max=stationarity_max,
        recursion_max=recursion_max,
        ho_el=ho_el,
        discrete_max=discrete_max,
        tol=tol,
        passed=passed,
    )


def _checker_wmp(hp: HigherOrderProblem, y: GridFunction, costates, tol: float) -> WmpReport:
    cp = reduce_to_control(hp)
    stack = _stack_values(hp, y)
    m = len(hp.scale) - hp.r + 1
    z = np.concatenate([stack[i][:m] for i in range(hp.r)], axis=1)
    u = stack[hp.r][: m - 1]
    psi = np.concatenate([c.values for c in costates], axis=1)
    costate = CostateTrajectory(1.0, GridFunction(cp.scale, psi))
    return wmp_residuals(cp, GridFunction(cp.scale, z), GridFunction(cp.scale, u), costate, tol=tol)


# --- costate recursion ---------------------------------------------------------------


def costate_recursion(hp: HigherOrderProblem, y: GridFunction, u: GridFunction | None = None):
    """Costate blocks psi^0..psi^{r-1} on the reduced scale, plus constants.

    The terminal values are anchored by the stationarity identity
    psi^{r-1}(sigma(t)) = -L_u and by delta-differentiating the recursive
    integral definitions (psi^i(sigma(t)) = -L_{y^{i+1}} - psi^{i+1}delta),
    after which the backward sweep of the reduced problem fills in every
    point.  The constants are the initial values c_i = psi^i(a).  For
    solver output this reproduces the reduced problem's multipliers.
    """
    stack = _stack_values(hp, y)
    n, r = hp.n, hp.r
    n_pts = len(hp.scale)
    m = n_pts - r + 1
    gaps = hp.scale.gaps
    _, ly, lu = _stage_partials(hp, stack)

    known: list[np.ndarray | None] = [None] * r
    full = np.full((m, n), np.nan)
    full[1:] = -lu
    known[r - 1] = full
    for i in range(r - 2, -1, -1):
        arr = np.full((m, n), np.nan)
        start = r - i
        for j in range(start, m):
            arr[j] = -ly[i + 1][j - 1] - (known[i + 1][j] - known[i + 1][j - 1]) / gaps[j - 1]
        known[i] = arr
    terminal = np.concatenate([known[i][m - 1] for i in range(r)])

    cp = reduce_to_control(hp)
    z = np.concatenate([stack[i][:m] for i in range(r)], axis=1)
    u_values = stack[r][: m - 1] if u is None else u.values[: m - 1]
    swept = costate_sweep(
        cp,
        GridFunction(cp.scale, z),
        GridFunction(cp.scale, u_values),
        1.0,
        terminal,
    )
    blocks = [GridFunction(cp.scale, swept.psi.values[:, i * n : (i + 1) * n]) for i in range(r)]
    constants = np.stack([b.values[0] for b in blocks])
    return blocks, constants


# --- Euler-Lagrange checkers ------------------------------------------------------------


def _nested_sigma_integrals(gaps: np.ndarray, vals: np.ndarray, depth: int) -> np.ndarray:
    out = vals
    for _ in range(depth):
        out = np.cumsum(gaps[:, None] * out, axis=0)
    return out


def ho_el_residual(hp: HigherOrderProblem, y: GridFunction, costates=None, method: str = "anchored", tol: float = 1e-8) -> HoElReport:
    """Residual of the nested-integral Euler-Lagrange equation on T^{k^r}.

    The equation is  L_u + sum_i (-1)^{r-i} (nested integral)^{r-i} of
    L_{y^i} + constant terms = 0, where constant c_i enters through
    r-i-1 further integrations of the constant function 1.  Constants are
    identified either by anchoring the costate recursion at the terminal
    end (default; works for any trajectory) or by least squares over the
    checked window (``method="lstsq"``).  The r points past the window are
    reported as unchecked rather than passed.
    """
    stack = _stack_values(hp, y)
    n, r = hp.n, hp.r
    p_red = len(hp.scale) - r
    gaps = hp.scale.gaps[:p_red]
    _, ly, lu = _stage_partials(hp, stack)

    terms = lu.copy()
    for i in range(r):
        terms += (-1.0) ** (r - i) * _nested_sigma_integrals(gaps, ly[i], r - i)
    const_cols = np.empty((p_red, r))
    ones = np.ones((p_red, 1))
    for i in range(r):
        depth = r - 1 - i
        const_cols[:, i] = ((-1.0) ** depth) * _nested_sigma_integrals(gaps, ones, depth)[:, 0]

    if method == "anchored":
        if costates is None:
            costates, constants = costate_recursion(hp, y)
        else:
            constants = np.stack([c.values[0] for c in costates])
    elif method == "lstsq":
        constants, *_ = np.linalg.lstsq(const_cols, -terms, rcond=None)
        if costates is None:
            costates, _ = costate_recursion(hp, y)
    else:
        raise ValueError(f"unknown constant identification method {method!r}")

    residuals = terms + const_cols @ constants
    max_residual = float(np.max(np.abs(residuals)))

    end = len(hp.scale) - r
    transversality = {}
    for i in range(r):
        if hp.bc_a[i] is None:
            transversality[f"a[{i}]"] = float(np.max(np.abs(costates[i].values[0])))
        if hp.bc_b[i] is None:
            transversality[f"b[{i}]"] = float(np.max(np.abs(costates[i].values[end])))

    mag = 1.0 + float(np.max(np.abs(lu))) + float(np.max(np.abs(constants)))
    conditions = [max_residual <= tol * mag]
    conditions += [v <= tol * mag for v in transversality.values()]
    return HoElReport(
        residuals=residuals,
        max_residual=max_residual,
        constants=constants,
        method=method,
        transversality=transversality,
        checked_points=hp.scale.points[:p_red].copy(),
        unchecked_points=hp.scale.points[p_red:].copy(),
        tol=tol * mag,
        passed=all(conditions),
    )


def discrete_el_residual(hp: HigherOrderProblem, y: GridFunction) -> np.ndarray:
    """Fully delta-differentiated Euler-Lagrange residual on a unit-spaced scale.

    Checks  (L_u)^{delta^r} + sum_i (-1)^{r-i} (L_{y^i})^{delta^i} at
    sigma^{r-i}(t) = 0  at each point of T^{k^{2r}}; expanding this far
    needs mu to be delta differentiable, which unit spacing guarantees.
    """
    if not hp.scale.is_unit_spaced:
        raise ScaleDomainError("the delta-differentiated discrete checker needs unit spacing")
    stack = _stack_values(hp, y)
    n, r = hp.n, hp.r
    n_pts = len(hp.scale)
    width = n_pts - 2 * r
    if width < 1:
        raise InsufficientPointsError("not enough points to delta differentiate r more times")
    _, ly, lu = _stage_partials(hp, stack)

    top = delta_derivative(GridFunction(hp.scale, lu), r).values
    residual = top[:width].copy()
    for i in range(r):
        seq = ly[i] if i == 0 else delta_derivative(GridFunction(hp.scale, ly[i]), i).values
        shift = r - i
        residual += (-1.0) ** (r - i) * seq[shift : shift + width]
    return residual


def nested_integral_shift_residual(f: GridFunction, j: int, i: int) -> np.ndarray:
    """Residual of the discrete shift identity behind the differentiated form.

    On a unit-spaced scale, delta differentiating the (j-i)-fold nested
    sigma-integral of f exactly j times returns the i-th delta derivative
    of f shifted forward j-i jumps; the returned array is the pointwise
    difference on the common domain.
    """
    if not 0 <= i < j:
        raise ValueError("need 0 <= i < j")
    if not f.scale.is_unit_spaced:
        raise ScaleDomainError("the shift identity check needs unit spacing")
    n_pts = len(f.scale)
    if n_pts - 1 - j < 1:
        raise InsufficientPointsError("not enough points for the requested differentiations")
    gaps = f.scale.gaps
    vals = f.values[: n_pts - 1]
    nested = _nested_sigma_integrals(gaps[: n_pts - 1], vals, j - i)
    lhs = delta_derivative(GridFunction(f.scale, nested), j).values
    rhs_full = f.values if i == 0 else delta_derivative(f, i).values
    shift = j - i
    width = lhs.shape[0]
    return lhs - rhs_full[shift : shift + width]
