import numpy as np
import pytest

from deltavar import (
    Arity,
    BasicProblem,
    GridFunction,
    TimeScale,
    certify,
    el_differentiated_residual,
    el_integral_residual,
    evaluate_functional,
    parse,
    sigma_form_transform,
    solve_basic,
    transversality_residuals,
)
from deltavar.errors import InfeasibleError, InsufficientPointsError
from deltavar.oracle import GridSearchSpec, brute_force_minimize

from conftest import random_basic_problem

AR1 = Arity(1, 1, 0)


def basic(points, src, bc_a=None, bc_b=None, form="plain", n=1):
    return BasicProblem(
        scale=TimeScale(points),
        lagrangian=parse(src, Arity(n, 1, 0)),
        form=form,
        bc_a=bc_a,
        bc_b=bc_b,
    )


def test_evaluate_functional_examples():
    p = basic([0, 1, 2], "dy[0]^2", bc_a=(0,), bc_b=(2,))
    assert evaluate_functional(p, GridFunction(p.scale, [0, 1, 2])) == pytest.approx(2.0)

    p2 = basic([0, 1, 3], "dy[0]^2", bc_a=(0,), bc_b=(3,))
    assert evaluate_functional(p2, GridFunction(p2.scale, [0, 1, 3])) == pytest.approx(3.0)

    p3 = basic([0, 1, 3], "dy[0]^2", bc_a=(0,), bc_b=(3,))
    assert evaluate_functional(p3, GridFunction(p3.scale, [0, 0, 3])) == pytest.approx(4.5)


def test_evaluate_functional_rejects_bc_violation():
    p = basic([0, 1, 2], "dy[0]^2", bc_a=(0,), bc_b=(2,))
    with pytest.raises(InfeasibleError):
        evaluate_functional(p, GridFunction(p.scale, [0.5, 1, 2]))


def test_solve_basic_examples():
    y, report = solve_basic(basic([0, 1, 2], "dy[0]^2", bc_a=(0,), bc_b=(2,)))
    np.testing.assert_allclose(y.values.ravel(), [0, 1, 2], atol=1e-12)
    assert report.passed and report.label == "minimizer"

    y2, _ = solve_basic(basic([0, 1, 3], "dy[0]^2", bc_a=(0,), bc_b=(3,)))
    np.testing.assert_allclose(y2.values.ravel(), [0, 1, 3], atol=1e-12)

    y3, report3 = solve_basic(basic([0, 1, 2], "dy[0]^2", bc_a=(0,)))
    np.testing.assert_allclose(y3.values.ravel(), [0, 0, 0], atol=1e-12)
    assert report3.conditions["transversality_b"]


def test_el_integral_residual_examples():
    p = basic([0, 1, 2], "dy[0]^2", bc_a=(0,), bc_b=(2,))
    c, dev = el_integral_residual(p, GridFunction(p.scale, [0, 1, 2]))
    assert c[0] == pytest.approx(2.0) and dev == 0.0

    p2 = basic([0, 1, 3], "dy[0]^2", bc_a=(0,), bc_b=(3,))
    c2, dev2 = el_integral_residual(p2, GridFunction(p2.scale, [0, 1, 3]))
    assert c2[0] == pytest.approx(2.0) and dev2 == 0.0

    p3 = basic([0, 1, 2], "dy[0]^2")
    _, dev3 = el_integral_residual(p3, GridFunction(p3.scale, [0, 0, 2]))
    assert dev3 == pytest.approx(4.0)


def test_el_differentiated_examples():
    p = basic([0, 1, 2], "dy[0]^2", bc_a=(0,), bc_b=(2,))
    y = GridFunction(p.scale, [0, 1, 2])
    np.testing.assert_allclose(el_differentiated_residual(p, y), [[0.0]])

    q = sigma_form_transform(p)
    np.testing.assert_allclose(el_differentiated_residual(q, y), [[0.0]], atol=1e-14)


def test_el_differentiated_on_solver_output():
    p = BasicProblem(
        scale=TimeScale.uniform(0, 1, 64),
        lagrangian=parse("dy[0]^2 + y[0]^2", AR1),
        bc_a=(0.0,),
        bc_b=(1.0,),
    )
    y, _ = solve_basic(p)
    assert np.max(np.abs(el_differentiated_residual(p, y))) <= 1e-8


def test_transversality_examples():
    p = basic([0, 1, 2], "dy[0]^2", bc_a=(0,))
    y = GridFunction(p.scale, [0, 0, 0])
    res = transversality_residuals(p, y)
    assert set(res) == {"b"}
    assert res["b"][0][0] == pytest.approx(0.0)

    p2 = basic([0, 1, 2], "dy[0]^2", bc_b=(0,))
    res2 = transversality_residuals(p2, GridFunction(p2.scale, [0, 0, 0]))
    assert set(res2) == {"a"}
    assert res2["a"][0][0] == pytest.approx(0.0)


def test_transversality_free_a_against_grid_search():
    # min of (ydelta)^2 + 2y with y(2) = 0 and y(0) free; stationarity gives
    # ydelta(0) = 1, so the natural condition 2 ydelta(0) - mu(0)*2 vanishes
    p = basic([0, 1, 2], "dy[0]^2 + 2*y[0]", bc_b=(0,))
    result = brute_force_minimize(p, GridSearchSpec(grids=((-4, 0, 0.05), (-4, 0, 0.05))))
    np.testing.assert_allclose(result.y_values.ravel(), [-3, -2, 0], atol=1e-12)

    y, report = solve_basic(p)
    np.testing.assert_allclose(y.values.ravel(), [-3, -2, 0], atol=1e-10)
    res = transversality_residuals(p, y)
    assert abs(res["a"][0][0]) <= 1e-10
    assert np.max(np.abs(y.values - result.y_values)) <= 0.05
    assert report.passed


def test_sigma_transform_source_and_inverse():
    p_sigma = basic([0, 1, 2], "y[0]", bc_a=(0,), bc_b=(1,), form="sigma")
    plain = sigma_form_transform(p_sigma)
    assert plain.form == "plain"
    assert plain.lagrangian.to_source() == "y[0] + mu*dy[0][1]"

    # transforming twice returns the original functional values exactly
    p = basic([0, 0.5, 2], "dy[0]^2 + y[0]^2", bc_a=(0,), bc_b=(1,))
    twice = sigma_form_transform(sigma_form_transform(p))
    y = GridFunction(p.scale, [0, 0.3, 1])
    assert evaluate_functional(twice, y) == pytest.approx(evaluate_functional(p, y), rel=1e-14)


def test_sigma_transform_functional_equality_and_minimizers():
    rng = np.random.default_rng(3)
    p = random_basic_problem(rng)
    q = sigma_form_transform(p)

    # same finite sum for any trajectory (checked on an unconstrained twin)
    free = BasicProblem(scale=p.scale, lagrangian=p.lagrangian, form=p.form)
    free_q = sigma_form_transform(free)
    y = GridFunction(p.scale, rng.uniform(-1, 1, size=(len(p.scale), p.n)))
    assert evaluate_functional(free, y) == pytest.approx(evaluate_functional(free_q, y), rel=1e-12)

    yp, _ = solve_basic(p)
    yq, _ = solve_basic(q)
    assert np.max(np.abs(yp.values - yq.values)) <= 1e-10


def test_nonextremal_detector_not_vacuous():
    rng = np.random.default_rng(11)
    p = random_basic_problem(rng)
    y, report = solve_basic(p)
    assert report.passed
    perturbed = y.values.copy()
    interior = rng.integers(1, len(p.scale) - 1)
    perturbed[interior, 0] += 1e-3
    _, dev = el_integral_residual(p, GridFunction(p.scale, perturbed))
    assert dev > report.el_integral_tol


def test_nonquadratic_newton_path():
    p = BasicProblem(
        scale=TimeScale([0, 0.5, 1.0, 1.5]),
        lagrangian=parse("dy[0]^2 + exp(y[0])", AR1),
        bc_a=(0.0,),
        bc_b=(1.0,),
    )
    y, report = solve_basic(p)
    assert report.label == "stationary"
    assert report.passed


def test_minimum_points_guard():
    with pytest.raises(InsufficientPointsError):
        basic([0, 1], "dy[0]^2")


def test_vector_problem_with_mixed_bc_components():
    src = "dy[0]^2 + dy[1]^2 + y[0]^2 + y[1]^2 + y[0]*y[1]"
    p = BasicProblem(
        scale=TimeScale([0, 1, 2, 3]),
        lagrangian=parse(src, Arity(2, 1, 0)),
        bc_a=(1.0, None),
        bc_b=(0.5, 0.0),
    )
    y, report = solve_basic(p)
    assert report.passed
    assert y.values[0, 0] == pytest.approx(1.0)
    # component 1 at a is free: its natural condition must hold
    res = transversality_residuals(p, y)
    free_mask = res["a"][1]
    assert free_mask.tolist() == [False, True]
    assert abs(res["a"][0][1]) <= report.transversality_tol


def test_report_serialization_roundtrip():
    p = basic([0, 1, 2], "dy[0]^2", bc_a=(0,), bc_b=(2,))
    _, report = solve_basic(p)
    d = report.to_dict()
    assert d["passed"] is True
    assert "stationarity" in d["note"] or "stationarity" in d["note"].lower()
