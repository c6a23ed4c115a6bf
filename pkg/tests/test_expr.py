import numpy as np
import pytest

from deltavar import Arity, LagrangianExpr, parse
from deltavar.errors import ArityError, EvalDomainError, ParseError
from deltavar.expr import BinOp, Call, Neg, Num, Var, format_expr
from deltavar.oracle import finite_diff_check


def test_parse_single_power_production():
    e = parse("dy[0]^2", Arity(1, 1, 0))
    assert e.ast == BinOp("^", Var("dy[0][1]"), Num(2.0))


def test_parse_mixed_expression():
    e = parse("u[0]^2 + y[0]*y[1]", Arity(2, 0, 1))
    value, partials = e.eval_with_partials({"u[0]": 2.0, "y[0]": 3.0, "y[1]": 5.0})
    assert value == pytest.approx(19.0)
    assert partials["y[0]"] == pytest.approx(5.0)
    assert partials["u[0]"] == pytest.approx(4.0)


def test_arity_violations():
    with pytest.raises(ArityError):
        parse("y[3]", Arity(2, 1, 0))
    with pytest.raises(ArityError):
        parse("dy[0][2]", Arity(1, 1, 0))
    with pytest.raises(ArityError):
        parse("u[0]", Arity(1, 1, 0))


def test_parse_errors_carry_offsets():
    with pytest.raises(ParseError) as err:
        parse("y[0] + $", Arity(1, 0, 0))
    assert err.value.offset == 7
    with pytest.raises(ParseError) as err:
        parse("y[0] y[0]", Arity(1, 0, 0))
    assert err.value.offset == 5
    with pytest.raises(ParseError):
        parse("frob(t)", Arity(0, 0, 0))
    with pytest.raises(ParseError):
        parse("", Arity(0, 0, 0))


def test_abs_is_rejected():
    with pytest.raises(ParseError, match="abs"):
        parse("abs(y[0])", Arity(1, 0, 0))


@pytest.mark.parametrize(
    "src,expected",
    [
        ("-2^2", -4.0),
        ("2^3^2", 512.0),
        ("2+3*4", 14.0),
        ("(2+3)*4", 20.0),
        ("6/3/2", 1.0),
        ("1-2-3", -4.0),
        ("2^-1", 0.5),
        ("2*-3", -6.0),
    ],
)
def test_precedence(src, expected):
    assert float(parse(src, Arity(0, 0, 0)).evaluate_value({})) == expected


def test_eval_with_partials_examples():
    value, partials = parse("dy[0]^2", Arity(1, 1, 0)).eval_with_partials({"dy[0][1]": 3.0})
    assert (value, partials["dy[0][1]"]) == (9.0, 6.0)

    value, partials = parse("u[0]^2 + y[0]", Arity(1, 0, 1)).eval_with_partials({"y[0]": 1.0, "u[0]": 2.0})
    assert (value, partials["y[0]"], partials["u[0]"]) == (5.0, 1.0, 4.0)

    e = parse("exp(y[0])*t", Arity(1, 0, 0))
    value, partials = e.eval_with_partials({"y[0]": 0.0, "t": 2.0})
    assert (value, partials["y[0]"]) == (2.0, 2.0)
    assert finite_diff_check(e, {"y[0]": 0.0, "t": 2.0}, 1e-6) <= 1e-6


def test_missing_assignment_raises():
    e = parse("y[0] + t", Arity(1, 0, 0))
    with pytest.raises(ValueError, match="missing"):
        e.eval_with_partials({"y[0]": 1.0})


@pytest.mark.parametrize(
    "src,point",
    [
        ("log(y[0])", {"y[0]": -1.0}),
        ("log(y[0])", {"y[0]": 0.0}),
        ("sqrt(y[0])", {"y[0]": -4.0}),
        ("sqrt(y[0])", {"y[0]": 0.0}),
        ("1/y[0]", {"y[0]": 0.0}),
        ("y[0]^-1", {"y[0]": 0.0}),
        ("y[0]^0.5", {"y[0]": -2.0}),
    ],
)
def test_domain_errors_never_nan(src, point):
    e = parse(src, Arity(1, 0, 0))
    with pytest.raises(EvalDomainError):
        e.eval_with_partials(point)


_NAMES = ["t", "y[0]", "dy[0][1]", "u[0]"]


def _random_poly_ast(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.4:
            return Num(float(np.round(rng.uniform(0, 2), 3)))
        return Var(_NAMES[rng.integers(len(_NAMES))])
    pick = rng.random()
    if pick < 0.25:
        return BinOp("+", _random_poly_ast(rng, depth - 1), _random_poly_ast(rng, depth - 1))
    if pick < 0.5:
        return BinOp("-", _random_poly_ast(rng, depth - 1), _random_poly_ast(rng, depth - 1))
    if pick < 0.75:
        return BinOp("*", _random_poly_ast(rng, depth - 1), _random_poly_ast(rng, depth - 1))
    if pick < 0.9:
        return Neg(_random_poly_ast(rng, depth - 1))
    return BinOp("^", _random_poly_ast(rng, depth - 1), Num(float(rng.integers(0, 4))))


def test_thousand_random_polynomials_match_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        expr = LagrangianExpr(_random_poly_ast(rng, 3), Arity(1, 1, 1))
        point = {name: float(rng.uniform(-1.5, 1.5)) for name in expr.arity.var_names()}
        assert finite_diff_check(expr, point, 1e-6) <= 1e-6


def test_roundtrip_on_random_asts():
    rng = np.random.default_rng(7)
    arity = Arity(1, 1, 1)
    for _ in range(500):
        expr = LagrangianExpr(_random_poly_ast(rng, 3), arity)
        reparsed = parse(expr.to_source(), arity)
        assert reparsed.ast == expr.ast


@pytest.mark.parametrize(
    "src",
    [
        "dy[0]^2 + y[0]^2",
        "sin(t)*cos(y[0]) - exp(dy[0][1])/2",
        "-(y[0] - 2)^3 + sqrt(t)",
        "u[0]*(t + 1) - 3.5e-2",
        "log(y[0] + 10)",
        "y[0] + mu*dy[0][1]",
    ],
)
def test_roundtrip_on_sources(src):
    arity = Arity(1, 1, 1)
    first = parse(src, arity)
    second = parse(first.to_source(), arity)
    assert first.ast == second.ast


@pytest.mark.parametrize(
    "src,degree",
    [
        ("dy[0]^2", 2),
        ("y[0]*dy[0]", 2),
        ("exp(y[0])", None),
        ("t*y[0]", 1),
        ("y[0]^3", 3),
        ("exp(t)*y[0]^2", 2),
        ("y[0]/2", 1),
        ("1/y[0]", None),
        ("mu*dy[0] + 4", 1),
        ("sin(t)", 0),
    ],
)
def test_polynomial_degree(src, degree):
    assert parse(src, Arity(1, 1, 0)).polynomial_degree() == degree


def test_vectorized_evaluation_broadcasts():
    e = parse("t*y[0] + dy[0]^2", Arity(1, 1, 0))
    t = np.array([0.0, 1.0, 2.0])
    y = np.array([1.0, 2.0, 3.0])
    dy = np.array([0.5, 0.5, 0.5])
    vals, grads = e.evaluate({"t": t, "y[0]": y, "dy[0][1]": dy})
    np.testing.assert_allclose(vals, t * y + 0.25)
    np.testing.assert_allclose(grads[e.slot("y[0]")], t)
    np.testing.assert_allclose(grads[e.slot("dy[0][1]")], 2 * dy)


def test_dy_shorthand_and_canonical_print():
    e = parse("dy[0]", Arity(1, 2, 0))
    assert e.ast == Var("dy[0][1]")
    assert e.to_source() == "dy[0][1]"


def test_substitution_respects_new_arity():
    e = parse("dy[0][2]", Arity(1, 2, 0))
    swapped = e.substituted({"dy[0][2]": Var("u[0]")}, Arity(1, 0, 1))
    assert swapped.ast == Var("u[0]")
    with pytest.raises(ArityError):
        e.substituted({"dy[0][2]": Var("u[5]")}, Arity(1, 0, 1))
