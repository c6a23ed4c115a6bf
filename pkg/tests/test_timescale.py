import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltavar import (
    GridFunction,
    TimeScale,
    delta_derivative,
    delta_integral,
    derivative_stack,
    integration_by_parts_residuals,
    jump_operators,
    k_restriction,
    running_sigma_integral,
)
from deltavar.errors import InsufficientPointsError, ScaleDomainError


@st.composite
def scales(draw, n_min=3, n_max=12):
    n = draw(st.integers(n_min, n_max))
    gaps = draw(st.lists(st.floats(0.1, 2.0), min_size=n - 1, max_size=n - 1))
    a = draw(st.floats(-5.0, 5.0))
    return TimeScale(a + np.concatenate([[0.0], np.cumsum(gaps)]))


@st.composite
def scale_and_polys(draw, count=1):
    ts = draw(scales())
    funcs = []
    for _ in range(count):
        coeffs = draw(st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4))
        funcs.append(GridFunction(ts, np.polyval(coeffs, ts.points)))
    return (ts, *funcs)


def test_jump_operators_examples():
    ts = TimeScale([1, 2, 4])
    assert jump_operators(ts, 1) == (2, 1, 1)
    assert jump_operators(ts, 4) == (4, 2, 0)
    assert jump_operators(TimeScale([0, 0.5, 0.75, 3]), 0.75) == (3, 0.5, 2.25)


def test_jump_operators_rejects_nonmember():
    with pytest.raises(ScaleDomainError):
        jump_operators(TimeScale([1, 2, 4]), 3.0)


def test_jump_operators_pure():
    ts = TimeScale([1, 2, 4])
    assert jump_operators(ts, 2) == jump_operators(ts, 2)


def test_delta_derivative_examples():
    f = GridFunction(TimeScale([0, 1, 3]), [0, 2, 8])
    np.testing.assert_allclose(delta_derivative(f).values.ravel(), [2, 3])

    squares = GridFunction(TimeScale([0, 1, 2, 3]), [0, 1, 4, 9])
    np.testing.assert_allclose(delta_derivative(squares, 2).values.ravel(), [2, 2])

    const = GridFunction(TimeScale([0, 1]), [5, 5])
    np.testing.assert_allclose(delta_derivative(const).values.ravel(), [0])


def test_delta_derivative_insufficient_points():
    f = GridFunction(TimeScale([0, 1]), [1, 2])
    with pytest.raises(InsufficientPointsError):
        delta_derivative(f, 2)
    with pytest.raises(ValueError):
        delta_derivative(f, 0)


def test_delta_integral_examples():
    f = GridFunction(TimeScale([0, 1, 3]), [0, 2, 8])
    np.testing.assert_allclose(delta_integral(f, 0, 3), [4.0])
    np.testing.assert_allclose(delta_integral(f, 1, 3), [4.0])
    np.testing.assert_allclose(delta_integral(f, 1, 1), [0.0])


def test_delta_integral_rejects_bad_bounds():
    f = GridFunction(TimeScale([0, 1, 3]), [0, 2, 8])
    with pytest.raises(ScaleDomainError):
        delta_integral(f, 3, 0)
    with pytest.raises(ScaleDomainError):
        delta_integral(f, 0, 2.5)


def test_integration_by_parts_constant_and_hand_case():
    ts = TimeScale([0, 1, 2])
    res = integration_by_parts_residuals(GridFunction(ts, [1, 1, 1]), GridFunction(ts, [0, 1, 2]))
    assert res == (0.0, 0.0)

    ts2 = TimeScale([0, 1, 3])
    res2 = integration_by_parts_residuals(GridFunction(ts2, [1, 2, 0]), GridFunction(ts2, [3, 1, 4]))
    assert res2 == (0.0, 0.0)


@given(st.data())
def test_integration_by_parts_exact_on_integers(data):
    # integer points and values keep every sum exact in double precision
    n = data.draw(st.integers(3, 8))
    deltas = data.draw(st.lists(st.integers(1, 3), min_size=n - 1, max_size=n - 1))
    pts = np.concatenate([[0], np.cumsum(deltas)]).astype(float)
    ts = TimeScale(pts)
    fv = data.draw(st.lists(st.integers(-6, 6), min_size=n, max_size=n))
    gv = data.draw(st.lists(st.integers(-6, 6), min_size=n, max_size=n))
    # make delta quotients integral as well: scale values by the gap products
    res1, res2 = integration_by_parts_residuals(
        GridFunction(ts, np.array(fv, dtype=float) * np.prod(deltas)),
        GridFunction(ts, np.array(gv, dtype=float) * np.prod(deltas)),
    )
    assert res1 == 0.0 and res2 == 0.0


def test_k_restriction_examples():
    ts = TimeScale([0, 1, 2, 3])
    np.testing.assert_array_equal(k_restriction(ts, 1).points, [0, 1, 2])
    np.testing.assert_array_equal(k_restriction(ts, 3).points, [0])
    with pytest.raises(InsufficientPointsError):
        k_restriction(TimeScale([0, 1]), 2)
    assert k_restriction(ts, 2) == k_restriction(ts, 2)  # pure


def test_mismatched_scales_rejected():
    f = GridFunction(TimeScale([0, 1, 2]), [1, 1, 1])
    g = GridFunction(TimeScale([0, 1, 3]), [1, 1, 1])
    with pytest.raises(ScaleDomainError):
        integration_by_parts_residuals(f, g)


@given(scale_and_polys())
def test_sigma_shift_identity(case):
    # f(sigma(t)) = f(t) + mu(t) f_delta(t) on all of T^k
    ts, f = case
    fd = delta_derivative(f).values
    lhs = f.values[1:]
    rhs = f.values[:-1] + ts.gaps[:, None] * fd
    mag = 1.0 + np.max(np.abs(lhs))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * mag


@given(scale_and_polys(count=2))
def test_product_rules(case):
    ts, f, g = case
    fv, gv = f.values[:, 0], g.values[:, 0]
    mu = ts.gaps
    fd = (fv[1:] - fv[:-1]) / mu
    gd = (gv[1:] - gv[:-1]) / mu
    pd = (fv[1:] * gv[1:] - fv[:-1] * gv[:-1]) / mu
    mag = 1.0 + np.max(np.abs(pd))
    assert np.max(np.abs(pd - (fd * gv[1:] + fv[:-1] * gd))) <= 1e-12 * mag
    assert np.max(np.abs(pd - (fd * gv[:-1] + fv[1:] * gd))) <= 1e-12 * mag


@given(scale_and_polys())
def test_fundamental_theorem(case):
    ts, f = case
    fd = delta_derivative(f)
    total = delta_integral(fd, ts.a, ts.b)
    mag = 1.0 + np.max(np.abs(f.values))
    assert abs(total[0] - (f.values[-1, 0] - f.values[0, 0])) <= 1e-12 * mag


def test_unit_scale_is_forward_difference():
    ts = TimeScale(np.arange(6.0))
    vals = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0])
    fd = delta_derivative(GridFunction(ts, vals)).values.ravel()
    np.testing.assert_array_equal(fd, np.diff(vals))


def test_running_sigma_integral_matches_pointwise_integrals():
    ts = TimeScale([0, 1, 3, 3.5])
    f = GridFunction(ts, [1.0, 2.0, -1.0, 4.0])
    running = running_sigma_integral(f).values[:, 0]
    for i, t in enumerate(ts.points):
        expected = delta_integral(f, ts.a, ts.sigma(t))
        assert running[i] == pytest.approx(expected[0], abs=1e-14)


def test_derivative_stack_domains():
    ts = TimeScale(np.arange(5.0))
    stack = derivative_stack(GridFunction(ts, ts.points**2), 2)
    assert [s.n_points for s in stack] == [5, 4, 3]
    np.testing.assert_allclose(stack[2].values.ravel(), [2, 2, 2])


def test_graininess_is_delta_differentiable_on_request():
    ts = TimeScale([0, 1, 3, 4])
    mu_fn = ts.graininess_function()
    md = delta_derivative(mu_fn).values.ravel()
    np.testing.assert_allclose(md, [1.0, -0.5, -1.0])


def test_single_point_restriction_allowed_but_not_constructible_ops():
    solo = k_restriction(TimeScale([0, 1]), 1)
    assert len(solo) == 1
    assert solo.sigma(0.0) == 0.0 and solo.rho(0.0) == 0.0


def test_uniform_scale_tags():
    ts = TimeScale.uniform(0, 1, 5)
    assert ts.segment_tags is not None and len(ts.segment_tags) == 4
    assert all(tag.startswith("sampled-dense") for tag in ts.segment_tags)


def test_gridfunction_shape_validation():
    ts = TimeScale([0, 1, 2])
    with pytest.raises(ScaleDomainError):
        GridFunction(ts, np.zeros((4, 1)))
    gf = GridFunction(ts, np.zeros(2))  # restricted domain is fine
    assert gf.n_points == 2 and not gf.is_full
