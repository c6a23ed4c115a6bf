"""Finite time scales and exact delta calculus on them.

A time scale here is a finite strictly increasing set of real points
t_0 < t_1 < ... < t_{N-1}.  The forward jump sigma(t) is the next point
(the maximum maps to itself), the backward jump rho(t) the previous one,
and the graininess mu(t) = sigma(t) - t is the gap width.  On such a set
the delta derivative is the forward difference quotient

    f_delta(t) = (f(sigma(t)) - f(t)) / mu(t)

defined on all points but the last, and the delta integral over [lo, hi)
is the mu-weighted finite sum of f values, so the usual calculus
identities (f(sigma(t)) = f(t) + mu(t) f_delta(t), both product rules,
integration by parts, the fundamental theorem) hold exactly up to
floating-point rounding.

Every interior point of a finite scale is scattered; dense behaviour is
reached only through refinement studies on uniform scales with shrinking
spacing.  ``GridFunction`` values may cover only the first M <= N points
of their scale: that is how restricted domains (derivatives of order r
live on the first N - r points) are represented without losing the
parent scale's gap widths, which the integral of a derivative needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientPointsError, ScaleDomainError


@dataclass(frozen=True, eq=False)
class TimeScale:
    """Strictly increasing finite point set with sigma, rho, and mu.

    ``segment_tags`` optionally labels each gap (e.g. ``"isolated"`` or
    ``"sampled-dense(h)"``); the tags carry no calculus semantics and are
    only echoed by refinement-study reports.
    """

    points: np.ndarray
    segment_tags: tuple[str, ...] | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 1:
            raise ScaleDomainError("a time scale needs a 1-D array with at least one point")
        if not np.all(np.diff(pts) > 0):
            raise ScaleDomainError("time scale points must be strictly increasing")
        if self.segment_tags is not None and len(self.segment_tags) != pts.size - 1:
            raise ScaleDomainError("segment_tags must carry one tag per gap")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "TimeScale":
        """Uniform scale with n points on [a, b], gaps tagged as sampled-dense."""
        if n < 2:
            raise ScaleDomainError("a uniform scale needs n >= 2")
        if not b > a:
            raise ScaleDomainError("uniform scale needs b > a")
        h = (b - a) / (n - 1)
        return cls(np.linspace(a, b, n), segment_tags=(f"sampled-dense({h!r})",) * (n - 1))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeScale):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        n = len(self)
        if n <= 6:
            body = ", ".join(repr(float(p)) for p in self.points)
        else:
            body = f"{self.points[0]!r}, {self.points[1]!r}, ..., {self.points[-1]!r}"
        return f"TimeScale([{body}], n={n})"

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    @property
    def gaps(self) -> np.ndarray:
        """mu at the first N-1 points: differences of consecutive points."""
        return self.points[1:] - self.points[:-1]

    @property
    def mus(self) -> np.ndarray:
        """mu at every point; zero at the maximum."""
        out = np.zeros(len(self))
        out[:-1] = self.gaps
        return out

    @property
    def is_unit_spaced(self) -> bool:
        return bool(np.all(np.abs(self.gaps - 1.0) <= 1e-12))

    def index_of(self, t: float) -> int:
        """Index of an exact point of the scale; ScaleDomainError otherwise."""
        i = int(np.searchsorted(self.points, t))
        if i >= len(self) or self.points[i] != t:
            raise ScaleDomainError(f"t={t!r} is not a point of {self!r}")
        return i

    def sigma(self, t: float) -> float:
        i = self.index_of(t)
        return float(self.points[min(i + 1, len(self) - 1)])

    def rho(self, t: float) -> float:
        i = self.index_of(t)
        return float(self.points[max(i - 1, 0)])

    def mu(self, t: float) -> float:
        return self.sigma(t) - t

    def restrict(self, r: int) -> "TimeScale":
        """Drop the last r points (iterated removal of the maximum)."""
        if r < 0 or r != int(r):
            raise ValueError("restriction order must be a nonnegative integer")
        if r == 0:
            return self
        if len(self) <= r:
            raise InsufficientPointsError(
                f"cannot drop {r} points from a scale with {len(self)} points"
            )
        tags = self.segment_tags[: len(self) - r - 1] if self.segment_tags else None
        return TimeScale(self.points[: len(self) - r], segment_tags=tags)

    def graininess_function(self) -> "GridFunction":
        """mu sampled as a grid function (delta differentiable like any other).

        Computed on request; no necessary-condition checker relies on it.
        """
        return GridFunction(self, self.mus)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Vector-valued samples on the first M points of a time scale.

    ``values`` has shape (M, n) with 1 <= M <= len(scale); full functions
    have M == len(scale), while a delta derivative of order j covers the
    first N - j points.  The parent scale is retained so that sigma and
    mu keep their original meaning on the restricted domain.
    """

    scale: TimeScale
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ScaleDomainError("grid function values must be 1-D or 2-D")
        if not 1 <= vals.shape[0] <= len(self.scale):
            raise ScaleDomainError(
                f"{vals.shape[0]} value rows do not fit a scale with {len(self.scale)} points"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, scale: TimeScale, fn: Callable[[float], Sequence[float] | float]) -> "GridFunction":
        return cls(scale, np.array([np.atleast_1d(fn(t)) for t in scale.points], dtype=float))

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def domain(self) -> np.ndarray:
        """The points this function is defined on (a k-restriction of the scale)."""
        return self.scale.points[: self.n_points]

    @property
    def is_full(self) -> bool:
        return self.n_points == len(self.scale)

    def component(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def delta(self, order: int = 1) -> "GridFunction":
        return delta_derivative(self, order)

    def sigma_shifted(self) -> "GridFunction":
        """f composed with sigma: value at t_i becomes f(t_{i+1}), one fewer point."""
        if self.n_points < 2:
            raise InsufficientPointsError("sigma shift needs at least two points")
        return GridFunction(self.scale, self.values[1:])


def _same_scale(f: GridFunction, g: GridFunction) -> None:
    if f.scale != g.scale:
        raise ScaleDomainError("grid functions live on different scales")


def jump_operators(ts: TimeScale, t: float) -> tuple[float, float, float]:
    """Forward jump, backward jump, and graininess at a point of the scale."""
    sigma = ts.sigma(t)
    return sigma, ts.rho(t), sigma - t


def k_restriction(ts: TimeScale, r: int) -> TimeScale:
    """The sub-scale of the first N - r points (drop the maximum r times)."""
    return ts.restrict(r)


def delta_derivative(f: GridFunction, order: int = 1) -> GridFunction:
    """Delta derivative of the given order: iterated forward difference quotients.

    The result covers the first M - order points of the scale (M = points
    of ``f``); the parent scale is kept so later integrals weight by the
    original gaps.
    """
    if order < 1 or order != int(order):
        raise ValueError("derivative order must be a positive integer")
    if f.n_points <= order:
        raise InsufficientPointsError(
            f"delta derivative of order {order} needs more than {order} points, got {f.n_points}"
        )
    pts = f.scale.points
    vals = f.values
    for _ in range(order):
        m = vals.shape[0]
        mu = (pts[1:m] - pts[: m - 1])[:, None]
        vals = (vals[1:] - vals[:-1]) / mu
    return GridFunction(f.scale, vals)


def derivative_stack(f: GridFunction, order: int) -> list[GridFunction]:
    """[f, f_delta, ..., f_delta^order] with shrinking domains."""
    stack = [f]
    for _ in range(order):
        stack.append(delta_derivative(stack[-1], 1))
    return stack


def delta_integral(f: GridFunction, lo: float, hi: float) -> np.ndarray:
    """Integral of f over [lo, hi): the mu-weighted sum of values at points in it.

    Both bounds must be points of the parent scale (sub-point bounds are
    rejected rather than interpolated) with lo <= hi; the half-open
    interval makes the fundamental theorem exact.
    """
    i0 = f.scale.index_of(lo)
    i1 = f.scale.index_of(hi)
    if i0 > i1:
        raise ScaleDomainError(f"reversed bounds: lo={lo!r} > hi={hi!r}")
    if i1 > f.n_points:
        raise ScaleDomainError("upper bound lies beyond the function's domain")
    if i0 == i1:
        return np.zeros(f.dim)
    pts = f.scale.points
    mu = pts[i0 + 1 : i1 + 1] - pts[i0:i1]
    return mu @ f.values[i0:i1]


def running_sigma_integral(f: GridFunction) -> GridFunction:
    """t -> integral of f over [a, sigma(t)), sampled on f's own domain.

    This is the running sum including the current point; at the scale's
    maximum the extra term has weight mu = 0.
    """
    m = f.n_points
    pts = f.scale.points
    mu = np.zeros(m)
    upto = min(m, len(f.scale) - 1)
    mu[:upto] = pts[1 : upto + 1] - pts[:upto]
    return GridFunction(f.scale, np.cumsum(mu[:, None] * f.values, axis=0))


def integration_by_parts_residuals(f: GridFunction, g: GridFunction) -> tuple[float, float]:
    """Absolute residuals of both integration-by-parts formulas over [a, b].

    res1 checks  int f_sigma g_delta = [fg]_a^b - int f_delta g,
    res2 checks  int f g_delta       = [fg]_a^b - int f_delta g_sigma.
    Both are exact finite-sum identities, so residuals stay at rounding level.
    """
    _same_scale(f, g)
    if f.dim != 1 or g.dim != 1:
        raise ScaleDomainError("integration by parts residuals are defined for scalar functions")
    if not (f.is_full and g.is_full):
        raise ScaleDomainError("integration by parts needs functions on the full scale")
    n = len(f.scale)
    if n < 2:
        raise InsufficientPointsError("integration by parts needs at least two points")
    fv = f.values[:, 0]
    gv = g.values[:, 0]
    mu = f.scale.gaps
    fd = (fv[1:] - fv[:-1]) / mu
    gd = (gv[1:] - gv[:-1]) / mu
    boundary = fv[-1] * gv[-1] - fv[0] * gv[0]
    res1 = abs(np.sum(mu * fv[1:] * gd) - (boundary - np.sum(mu * fd * gv[:-1])))
    res2 = abs(np.sum(mu * fv[:-1] * gd) - (boundary - np.sum(mu * fd * gv[1:])))
    return float(res1), float(res2)
