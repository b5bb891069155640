"""Expression kernel: parsing, evaluation, differentiation, simplification."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypoliouville.expr import (
    Const,
    ExprSyntaxError,
    FloatConst,
    Var,
    compile_expr,
    diff,
    evaluate,
    is_polynomial,
    is_zero,
    parse,
    render,
    simplify,
)


def test_unary_minus_binds_looser_than_power():
    assert evaluate(parse("-x1^2", 1), [3.0]) == -9.0


def test_rationals_stay_exact():
    e = simplify(parse("1/3 + 1/6", 1))
    assert e == Const(Fraction(1, 2))


def test_decimal_literal_becomes_float_constant():
    assert isinstance(simplify(parse("0.5 + 1/3", 1)), FloatConst)


def test_time_alias():
    e = parse("t * x1", 3, time_index=3)
    assert evaluate(e, [2.0, 0.0, 5.0]) == 10.0


@pytest.mark.parametrize("bad", ["x1+", "(x1", "foo(x1)", "x1^x2", "2**3", "x4"])
def test_syntax_errors(bad):
    with pytest.raises(ExprSyntaxError):
        parse(bad, 3)


def test_pythagorean_identity_simplifies():
    assert simplify(parse("sin(x1)^2 + cos(x1)^2", 1)) == simplify(parse("1", 1))


def test_polynomial_cancellation_is_exact():
    e = simplify(parse("(x1 + x2)^2 - x1^2 - 2*x1*x2", 2))
    assert e == simplify(parse("x2^2", 2))


def test_derivatives_against_oracle():
    # d/dx1 and d2/dx1dx2 of sin(x1 x2) + x1^3/x2 at (0.7, -1.3); reference values from sympy
    e = parse("sin(x1*x2) + x1^3/x2", 2)
    p = [0.7, -1.3]
    assert evaluate(diff(e, 1), p) == pytest.approx(-1.9286387051046856, rel=1e-13)
    assert evaluate(diff(diff(e, 1), 2), p) == pytest.approx(-0.97452513883614333, rel=1e-13)


def test_sampled_zero_for_transcendental():
    assert is_zero(parse("exp(x1)*exp(-x1) - 1", 1))
    assert not is_zero(parse("exp(x1) - 1", 1))


def test_compile_broadcasts_constants():
    f = compile_expr(parse("3", 2))
    assert f(np.zeros((4, 2))).shape == (4,)


def test_is_polynomial_degree():
    assert is_polynomial(parse("x1^2*x2 + 1", 2)) == 3
    assert is_polynomial(parse("sin(x1)", 1)) is None


def test_render_roundtrip():
    e = simplify(parse("3*x1^2*x2 - x2/4", 2))
    assert simplify(parse(render(e), 2)) == e


# --------------------------------------------------------------- properties

coef = st.integers(-5, 5)


@st.composite
def polys(draw):
    terms = draw(st.lists(st.tuples(coef, st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=4))
    return " + ".join(f"({c})*x1^{a}*x2^{b}" for c, a, b in terms)


@settings(max_examples=40, deadline=None)
@given(polys(), polys())
def test_product_rule(pa, pb):
    a, b = parse(pa, 2), parse(pb, 2)
    lhs = diff(a * b, 1)
    rhs = diff(a, 1) * b + a * diff(b, 1)
    assert is_zero(lhs - rhs)


@settings(max_examples=40, deadline=None)
@given(polys(), st.floats(-2, 2), st.floats(-2, 2))
def test_simplify_preserves_value(pa, x, y):
    e = parse(pa, 2)
    assert evaluate(simplify(e), [x, y]) == pytest.approx(evaluate(e, [x, y]), rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(polys())
def test_mixed_partials_commute(pa):
    e = parse(pa, 2)
    assert simplify(diff(diff(e, 1), 2) - diff(diff(e, 2), 1)) == simplify(parse("0", 2))


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3))
def test_transcendental_derivatives(x):
    e = parse("exp(x1) * sin(x1) + sqrt(1 + x1^2)", 1)
    ref = math.exp(x) * (math.sin(x) + math.cos(x)) + x / math.sqrt(1 + x * x)
    assert evaluate(diff(e, 1), [x]) == pytest.approx(ref, rel=1e-12, abs=1e-12)
