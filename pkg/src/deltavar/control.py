"""Optimal control with delta-differential dynamics on a finite time scale.

The problem is  min sum_{t in T^k} mu(t) L(t, y(t), u(t))  subject to the
pointwise dynamics constraint  ydelta(t) = phi(t, y(t), u(t))  and
optional endpoint values.  The multiplier machinery is Hamiltonian:

    H(t, y, u, psi0, psi_sigma) = psi0 L + psi_sigma . phi

with the costate running backward through the explicit recursion
psi(t) = psi(sigma(t)) + mu(t) H_y(t, ..., psi(sigma(t))) (explicit
because H_y depends on the already-known psi at the next point; no
regressivity assumption is needed).  The certificate checks the dynamics
equation, the costate equation, the stationarity condition H_u = 0, and
psi = 0 at free endpoints, all with relative tolerances that are
invariant under positive scaling of (psi0, psi).

Transcription writes the dynamics residual in delta form,
(y(sigma(t)) - y(t))/mu(t) - phi(t, y(t), u(t)) = 0, and under that
convention the multiplier of the constraint at t equals
-psi(sigma(t)) mu(t); the golden linear-quadratic test pins this
dictionary down and the reports re-assert it on every solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateProblemError,
    InfeasibleError,
    InsufficientPointsError,
    NonConvergenceError,
    ScaleDomainError,
)
from .expr import Arity, LagrangianExpr
from .timescale import GridFunction, TimeScale
from .variational import STATIONARITY_NOTE, _bc_free_mask, normalize_bc


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """States y in R^n driven by controls u in R^m (m <= n) through ydelta = phi."""

    scale: TimeScale
    lagrangian: LagrangianExpr
    phi: tuple
    bc_a: tuple | None = None
    bc_b: tuple | None = None

    def __post_init__(self):
        ar = self.lagrangian.arity
        if ar.r != 0:
            raise ValueError("control Lagrangian takes (t, y, u); derivative variables are not allowed")
        if ar.m > ar.n:
            raise ValueError(f"control dimension {ar.m} exceeds state dimension {ar.n}")
        if ar.m < 1:
            raise ValueError("control problems need at least one control component")
        phi = tuple(self.phi)
        if len(phi) != ar.n:
            raise ValueError(f"phi needs exactly {ar.n} components, got {len(phi)}")
        for comp in phi:
            if comp.arity != ar:
                raise ValueError(f"phi component arity {comp.arity} differs from Lagrangian arity {ar}")
        if len(self.scale) < 2:
            raise InsufficientPointsError("a control problem needs at least 2 points")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "bc_a", normalize_bc(self.bc_a, ar.n))
        object.__setattr__(self, "bc_b", normalize_bc(self.bc_b, ar.n))

    @property
    def n(self) -> int:
        return self.lagrangian.arity.n

    @property
    def m(self) -> int:
        return self.lagrangian.arity.m


@dataclass(frozen=True, eq=False)
class CostateTrajectory:
    """Normalized multipliers: psi0 in {0, 1} plus the costate samples."""

    psi0: float
    psi: GridFunction

    def __post_init__(self):
        if self.psi0 not in (0.0, 1.0):
            raise ValueError("psi0 must be normalized to 0 or 1")
        if self.psi0 == 0.0 and not np.any(self.psi.values):
            raise ValueError("the multipliers (psi0, psi) must not vanish identically")


@dataclass
class WmpReport:
    """Residuals of the weak-maximum-principle equations along a trajectory."""

    dynamics_max: float
    costate_max: float
    stationarity_max: float
    transversality: dict
    scales: dict
    tol: float
    conditions: dict
    passed: bool
    psi0: float
    multiplier_match_max: float | None = None
    note: str = STATIONARITY_NOTE

    def to_dict(self) -> dict:
        return {
            "dynamics_max": self.dynamics_max,
            "costate_max": self.costate_max,
            "stationarity_max": self.stationarity_max,
            "transversality": {k: v.tolist() for k, v in self.transversality.items()},
            "scales": self.scales,
            "tol": self.tol,
            "conditions": self.conditions,
            "passed": self.passed,
            "psi0": self.psi0,
            "multiplier_match_max": self.multiplier_match_max,
            "note": self.note,
        }


# --- pointwise evaluation -----------------------------------------------------


def _stage_env(p: ControlProblem, t, mu, yv, uv) -> dict:
    env = {"t": t, "mu": mu}
    for i in range(p.n):
        env[f"y[{i}]"] = yv[..., i]
    for j in range(p.m):
        env[f"u[{j}]"] = uv[..., j]
    return env


def _lagrangian_partials(p: ControlProblem, env):
    vals, grads = p.lagrangian.evaluate(env)
    ly = np.stack([grads[p.lagrangian.slot(f"y[{i}]")] for i in range(p.n)], axis=-1)
    lu = np.stack([grads[p.lagrangian.slot(f"u[{j}]")] for j in range(p.m)], axis=-1)
    return vals, ly, lu


def _phi_partials(p: ControlProblem, env):
    """phi values (..., n) and Jacobians (..., n, n) wrt y, (..., n, m) wrt u."""
    vals, jy, ju = [], [], []
    for comp in p.phi:
        v, g = comp.evaluate(env)
        vals.append(v)
        jy.append(np.stack([g[comp.slot(f"y[{i}]")] for i in range(p.n)], axis=-1))
        ju.append(np.stack([g[comp.slot(f"u[{j}]")] for j in range(p.m)], axis=-1))
    return np.stack(vals, axis=-1), np.stack(jy, axis=-2), np.stack(ju, axis=-2)


def _phi_values(p: ControlProblem, env) -> np.ndarray:
    shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
    return np.stack(
        [np.broadcast_to(comp.evaluate_value(env), shape) for comp in p.phi], axis=-1
    )


def hamiltonian(p: ControlProblem, t: float, y, u, psi0: float, psi_sigma):
    """H and its partials at one point: (H, H_y, H_u, H_psi_sigma).

    H_psi_sigma is just phi(t, y, u): the corresponding canonical equation
    restates the control system itself.
    """
    try:
        mu = p.scale.mu(t)
    except ScaleDomainError:
        mu = 0.0
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    psi_sigma = np.atleast_1d(np.asarray(psi_sigma, dtype=float))
    env = _stage_env(p, np.asarray(float(t)), np.asarray(mu), y, u)
    lval, ly, lu = _lagrangian_partials(p, env)
    phival, phiy, phiu = _phi_partials(p, env)
    h = float(psi0 * lval + psi_sigma @ phival)
    h_y = psi0 * ly + psi_sigma @ phiy
    h_u = psi0 * lu + psi_sigma @ phiu
    return h, h_y, h_u, phival


def evaluate_objective(p: ControlProblem, y: GridFunction, u: GridFunction) -> float:
    """Exact finite-sum cost of a state/control pair (no feasibility check)."""
    mu = p.scale.gaps
    env = _stage_env(p, p.scale.points[:-1], mu, y.values[:-1], u.values[: len(mu)])
    return float(p.lagrangian.evaluate_value(env) @ mu)


def forward_simulate(p: ControlProblem, y_a, u_values: np.ndarray) -> np.ndarray:
    """Integrate the dynamics forward from y(a); exact on the finite scale.

    ``u_values`` may carry leading batch axes; the returned states have
    shape batch + (N, n).
    """
    pts = p.scale.points
    mu = p.scale.gaps
    u_values = np.asarray(u_values, dtype=float)
    batch = u_values.shape[:-2]
    y = np.zeros(batch + (len(p.scale), p.n))
    y[..., 0, :] = y_a
    for i in range(len(p.scale) - 1):
        env = _stage_env(p, pts[i], mu[i], y[..., i, :], u_values[..., i, :])
        y[..., i + 1, :] = y[..., i, :] + mu[i] * _phi_values(p, env)
    return y


# --- transcription --------------------------------------------------------------


class _Transcription:
    """Index bookkeeping for the finite NLP over free states and controls."""

    def __init__(self, p: ControlProblem):
        self.p = p
        n_pts, n, m = len(p.scale), p.n, p.m
        self.P = n_pts - 1
        mask = np.ones((n_pts, n), dtype=bool)
        mask[0] = _bc_free_mask(p.bc_a, n)
        mask[-1] = _bc_free_mask(p.bc_b, n)
        self.y_mask = mask
        self.n_y = int(mask.sum())
        self.n_u = self.P * m
        self.K = self.n_y + self.n_u
        self.C = self.P * n
        col = -np.ones((n_pts, n), dtype=int)
        col[mask] = np.arange(self.n_y)
        self.y_col = col
        base = np.zeros((n_pts, n))
        for bc, row in ((p.bc_a, 0), (p.bc_b, -1)):
            if bc is not None:
                for k, want in enumerate(bc):
                    if want is not None:
                        base[row, k] = want
        self.base = base

    def split(self, x: np.ndarray):
        values = self.base.copy()
        values[self.y_mask] = x[: self.n_y]
        u = x[self.n_y :].reshape(self.P, self.p.m)
        return values, u

    def join(self, values: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.concatenate([values[self.y_mask], np.asarray(u, dtype=float).ravel()])

    def stage_env(self, values: np.ndarray, u: np.ndarray):
        pts = self.p.scale.points
        mu = self.p.scale.gaps
        return _stage_env(self.p, pts[:-1], mu, values[:-1], u), mu

    def objective(self, x: np.ndarray) -> float:
        values, u = self.split(x)
        env, mu = self.stage_env(values, u)
        lvals, _ = self.p.lagrangian.evaluate(env)
        return float(mu @ lvals)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        values, u = self.split(x)
        env, mu = self.stage_env(values, u)
        _, ly, lu = _lagrangian_partials(self.p, env)
        gy = np.zeros_like(values)
        gy[:-1] = mu[:, None] * ly
        gu = mu[:, None] * lu
        return np.concatenate([gy[self.y_mask], gu.ravel()])

    def constraints(self, x: np.ndarray) -> np.ndarray:
        values, u = self.split(x)
        env, mu = self.stage_env(values, u)
        phival, _, _ = _phi_partials(self.p, env)
        res = (values[1:] - values[:-1]) / mu[:, None] - phival
        return res.ravel()

    def constraint_jacobian(self, x: np.ndarray) -> np.ndarray:
        values, u = self.split(x)
        env, mu = self.stage_env(values, u)
        _, phiy, phiu = _phi_partials(self.p, env)
        p = self.p
        jac = np.zeros((self.C, self.K))
        for i in range(self.P):
            rows = slice(i * p.n, (i + 1) * p.n)
            for k in range(p.n):
                row = i * p.n + k
                col_next = self.y_col[i + 1, k]
                if col_next >= 0:
                    jac[row, col_next] += 1.0 / mu[i]
                col_here = self.y_col[i, k]
                if col_here >= 0:
                    jac[row, col_here] -= 1.0 / mu[i]
            for l in range(p.n):
                col_here = self.y_col[i, l]
                if col_here >= 0:
                    jac[rows, col_here] -= phiy[i, :, l]
            for l in range(p.m):
                jac[rows, self.n_y + i * p.m + l] -= phiu[i, :, l]
        return jac


def is_linear_quadratic(p: ControlProblem) -> bool:
    ldeg = p.lagrangian.polynomial_degree()
    if ldeg is None or ldeg > 2:
        return False
    for comp in p.phi:
        d = comp.polynomial_degree()
        if d is None or d > 1:
            return False
    return True


def solve_lagrange(p: ControlProblem, tol: float = 1e-8, max_iter: int = 500):
    """Solve the transcribed problem and certify the result.

    Linear dynamics with quadratic cost go through one KKT linear solve;
    anything else runs damped Newton on the first-order optimality system.
    Returns (y, u, costate, report); the costate is rebuilt by the
    backward sweep from the terminal multiplier and re-checked against
    the weak-maximum-principle equations.
    """
    if len(p.scale) < 3:
        raise InsufficientPointsError("solving needs at least 3 points")
    tr = _Transcription(p)
    if is_linear_quadratic(p):
        x, lam = _solve_kkt_linear(tr)
    else:
        x, lam = _solve_kkt_newton(tr, max_iter)
    values, u = tr.split(x)
    lam = lam.reshape(tr.P, p.n)

    mu = p.scale.gaps
    psi_terminal = np.zeros(p.n)
    fixed_b = ~_bc_free_mask(p.bc_b, p.n)
    # multiplier of the step constraint at t is -psi(sigma(t)) mu(t)
    psi_terminal[fixed_b] = -lam[-1, fixed_b] / mu[-1]
    y = GridFunction(p.scale, values)
    u_fn = GridFunction(p.scale, u)
    costate = costate_sweep(p, y, u_fn, 1.0, psi_terminal)
    match = float(np.max(np.abs(lam + mu[:, None] * costate.psi.values[1:])))
    report = wmp_residuals(p, y, u_fn, costate, tol=tol)
    report.multiplier_match_max = match
    return y, u_fn, costate, report


def _solve_kkt_linear(tr: _Transcription):
    g0 = tr.gradient(np.zeros(tr.K))
    hess = np.empty((tr.K, tr.K))
    eye = np.eye(tr.K)
    for j in range(tr.K):
        hess[:, j] = tr.gradient(eye[j]) - g0
    jac = tr.constraint_jacobian(np.zeros(tr.K))
    c0 = tr.constraints(np.zeros(tr.K))
    kkt = np.zeros((tr.K + tr.C, tr.K + tr.C))
    kkt[: tr.K, : tr.K] = 0.5 * (hess + hess.T)
    kkt[: tr.K, tr.K :] = jac.T
    kkt[tr.K :, : tr.K] = jac
    rhs = np.concatenate([-g0, -c0])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateProblemError(f"singular KKT system: {exc}") from exc
    return sol[: tr.K], sol[tr.K :]


def _solve_kkt_newton(tr: _Transcription, max_iter: int):
    """Damped Newton on (gradient of the Lagrangian, constraints) = 0."""
    p = tr.p
    y_a = np.zeros(p.n)
    if p.bc_a is not None:
        for k, want in enumerate(p.bc_a):
            if want is not None:
                y_a[k] = want
    u0 = np.zeros((tr.P, p.m))
    values0 = forward_simulate(p, y_a, u0)
    x = tr.join(values0, u0)
    lam = np.zeros(tr.C)

    def optimality(x, lam):
        jac = tr.constraint_jacobian(x)
        return np.concatenate([tr.gradient(x) + jac.T @ lam, tr.constraints(x)]), jac

    f, jac = optimality(x, lam)
    best = (float(np.max(np.abs(f))), x.copy(), lam.copy())
    for _ in range(max_iter):
        fnorm = float(np.max(np.abs(f)))
        if fnorm < best[0]:
            best = (fnorm, x.copy(), lam.copy())
        if fnorm <= 1e-10 * (1.0 + abs(tr.objective(x))):
            return x, lam
        kmat = np.zeros((tr.K + tr.C, tr.K + tr.C))
        # Hessian of the Lagrangian by central differences of its gradient
        for j in range(tr.K):
            step = np.zeros(tr.K)
            step[j] = 1e-6 * (1.0 + abs(x[j]))
            gp = tr.gradient(x + step) + tr.constraint_jacobian(x + step).T @ lam
            gm = tr.gradient(x - step) + tr.constraint_jacobian(x - step).T @ lam
            kmat[: tr.K, j] = (gp - gm) / (2.0 * step[j])
        kmat[: tr.K, : tr.K] = 0.5 * (kmat[: tr.K, : tr.K] + kmat[: tr.K, : tr.K].T)
        kmat[: tr.K, tr.K :] = jac.T
        kmat[tr.K :, : tr.K] = jac
        step_ok = False
        tau = 0.0
        for _ in range(8):
            try:
                dz = np.linalg.solve(kmat + tau * np.eye(tr.K + tr.C), -f)
            except np.linalg.LinAlgError:
                tau = 10.0 * tau if tau else 1e-8
                continue
            t = 1.0
            for _ in range(40):
                x_new = x + t * dz[: tr.K]
                lam_new = lam + t * dz[tr.K :]
                f_new, jac_new = optimality(x_new, lam_new)
                if np.max(np.abs(f_new)) < fnorm * (1.0 - 1e-4 * t) + 1e-16:
                    x, lam, f, jac = x_new, lam_new, f_new, jac_new
                    step_ok = True
                    break
                t *= 0.5
            if step_ok:
                break
            tau = 10.0 * tau if tau else 1e-8
        if not step_ok:
            break
    if float(np.max(np.abs(f))) <= 1e-8 * (1.0 + abs(tr.objective(x))):
        return x, lam
    values, u = tr.split(best[1])
    raise NonConvergenceError(
        f"optimality-system Newton stalled (best residual {best[0]:.3e})",
        best=(GridFunction(tr.p.scale, values), GridFunction(tr.p.scale, u)),
    )


# --- costate and certificates ----------------------------------------------------


def costate_sweep(p: ControlProblem, y: GridFunction, u: GridFunction, psi0: float, terminal) -> CostateTrajectory:
    """Backward recursion psi(t) = psi(sigma(t)) + mu(t) H_y(t, ..., psi(sigma(t))).

    Explicit in the backward direction because H_y takes the costate at
    sigma(t), which is already known; supply terminal = 0 when y(b) is free.
    """
    n_pts = len(p.scale)
    pts = p.scale.points
    mu = p.scale.gaps
    psi = np.zeros((n_pts, p.n))
    psi[-1] = np.asarray(terminal, dtype=float)
    yv, uv = y.values, u.values
    for i in range(n_pts - 2, -1, -1):
        env = _stage_env(p, pts[i], mu[i], yv[i], uv[i])
        _, ly, _ = _lagrangian_partials(p, env)
        _, phiy, _ = _phi_partials(p, env)
        h_y = psi0 * ly + psi[i + 1] @ phiy
        psi[i] = psi[i + 1] + mu[i] * h_y
    return CostateTrajectory(float(psi0), GridFunction(p.scale, psi))


def wmp_residuals(p: ControlProblem, y: GridFunction, u: GridFunction, costate, tol: float = 1e-8) -> WmpReport:
    """Pointwise residuals of the three canonical equations plus transversality.

    ``costate`` is a CostateTrajectory or a raw (psi0, psi) pair; pass/fail
    uses relative scales that are homogeneous of degree one in (psi0, psi),
    so rescaling the multipliers by any positive factor leaves every
    verdict unchanged.
    """
    values = y.values
    uv = u.values
    if isinstance(costate, CostateTrajectory):
        psi0, psi = costate.psi0, costate.psi.values
    else:
        psi0, psi = float(costate[0]), costate[1].values
    pts = p.scale.points
    mu = p.scale.gaps
    env = _stage_env(p, pts[:-1], mu, values[:-1], uv[: len(mu)])
    _, ly, lu = _lagrangian_partials(p, env)
    phival, phiy, phiu = _phi_partials(p, env)

    ydelta = (values[1:] - values[:-1]) / mu[:, None]
    dyn = ydelta - phival
    psidelta = (psi[1:] - psi[:-1]) / mu[:, None]
    h_y = psi0 * ly + np.einsum("ik,ikl->il", psi[1:], phiy)
    h_u = psi0 * lu + np.einsum("ik,ikl->il", psi[1:], phiu)
    costate_res = psidelta + h_y

    psi_mag = float(np.max(np.abs(psi)))
    dyn_scale = 1.0 + float(max(np.max(np.abs(ydelta)), np.max(np.abs(phival))))
    costate_scale = psi0 * (1.0 + float(np.max(np.abs(ly)))) + psi_mag * (1.0 + float(np.max(np.abs(phiy))))
    stat_scale = psi0 * (1.0 + float(np.max(np.abs(lu)))) + psi_mag * (1.0 + float(np.max(np.abs(phiu))))
    trv_scale = psi0 + psi_mag

    transversality = {}
    conditions = {
        "dynamics": bool(np.max(np.abs(dyn)) <= tol * dyn_scale),
        "costate": bool(np.max(np.abs(costate_res)) <= tol * costate_scale),
        "stationarity": bool(np.max(np.abs(h_u)) <= tol * stat_scale),
    }
    free_a = _bc_free_mask(p.bc_a, p.n)
    free_b = _bc_free_mask(p.bc_b, p.n)
    if free_a.any():
        transversality["a"] = np.abs(psi[0, free_a])
        conditions["transversality_a"] = bool(np.max(transversality["a"]) <= tol * trv_scale)
    if free_b.any():
        transversality["b"] = np.abs(psi[-1, free_b])
        conditions["transversality_b"] = bool(np.max(transversality["b"]) <= tol * trv_scale)

    return WmpReport(
        dynamics_max=float(np.max(np.abs(dyn))),
        costate_max=float(np.max(np.abs(costate_res))),
        stationarity_max=float(np.max(np.abs(h_u))),
        transversality=transversality,
        scales={
            "dynamics": dyn_scale,
            "costate": costate_scale,
            "stationarity": stat_scale,
            "transversality": trv_scale,
        },
        tol=tol,
        conditions=conditions,
        passed=all(conditions.values()),
        psi0=psi0,
    )


def detect_abnormal(p: ControlProblem, y: GridFunction | None = None, u: GridFunction | None = None, sv_cutoff: float = 1e-10) -> list[CostateTrajectory]:
    """Nontrivial psi0 = 0 multiplier directions through a reference trajectory.

    Assembles the linear system consisting of the costate recursion with
    psi0 = 0, the stationarity rows psi(sigma(t)) . phi_u = 0, and psi = 0
    at ends with free components, then returns an orthonormal basis of its
    nullspace (scaled to unit max norm).  An empty list means no abnormal
    extremal passes through the given trajectory.
    """
    if y is None or u is None:
        y, u, _, _ = solve_lagrange(p)
    n_pts, n, m = len(p.scale), p.n, p.m
    pts = p.scale.points
    mu = p.scale.gaps
    env = _stage_env(p, pts[:-1], mu, y.values[:-1], u.values[: len(mu)])
    _, phiy, phiu = _phi_partials(p, env)

    rows = []
    nn = n_pts * n

    def unit_rows(count):
        return np.zeros((count, nn))

    for i in range(n_pts - 1):
        block = unit_rows(n)
        for l in range(n):
            block[l, i * n + l] = 1.0
            for k in range(n):
                block[l, (i + 1) * n + k] -= (1.0 if k == l else 0.0) + mu[i] * phiy[i, k, l]
        rows.append(block)
        stat = unit_rows(m)
        for j in range(m):
            for k in range(n):
                stat[j, (i + 1) * n + k] = phiu[i, k, j]
        rows.append(stat)
    for k in np.nonzero(_bc_free_mask(p.bc_a, n))[0]:
        row = unit_rows(1)
        row[0, k] = 1.0
        rows.append(row)
    for k in np.nonzero(_bc_free_mask(p.bc_b, n))[0]:
        row = unit_rows(1)
        row[0, (n_pts - 1) * n + k] = 1.0
        rows.append(row)

    system = np.vstack(rows)
    _, svals, vt = np.linalg.svd(system)
    smax = svals[0] if svals.size else 0.0
    rank = int(np.sum(svals > sv_cutoff * smax)) if smax > 0 else 0
    basis = []
    for vec in vt[rank:]:
        psi = vec.reshape(n_pts, n)
        peak = np.unravel_index(np.argmax(np.abs(psi)), psi.shape)
        psi = psi / psi[peak]  # unit max norm, deterministic sign
        basis.append(CostateTrajectory(0.0, GridFunction(p.scale, psi)))
    return basis


def isoperimetric_reduce(p: ControlProblem, g: LagrangianExpr, beta: float) -> ControlProblem:
    """Fold an integral constraint  int g(t, y, u) = beta  into the dynamics.

    Appends a bookkeeping state s with sdelta = g, s(a) = 0, s(b) = beta,
    so the constraint telescopes exactly on the finite scale.
    """
    if g.arity != p.lagrangian.arity:
        raise ValueError(f"constraint integrand arity {g.arity} differs from the problem's {p.lagrangian.arity}")
    wide = Arity(p.n + 1, 0, p.m)
    lag = LagrangianExpr(p.lagrangian.ast, wide)
    phi = tuple(LagrangianExpr(comp.ast, wide) for comp in p.phi) + (LagrangianExpr(g.ast, wide),)
    bc_a = (tuple(p.bc_a) if p.bc_a is not None else (None,) * p.n) + (0.0,)
    bc_b = (tuple(p.bc_b) if p.bc_b is not None else (None,) * p.n) + (float(beta),)
    return ControlProblem(scale=p.scale, lagrangian=lag, phi=phi, bc_a=bc_a, bc_b=bc_b)
