import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from subrumin import dual as D
from subrumin.expr import (
    BinOp,
    Call,
    FieldDomainError,
    FieldParseError,
    FieldSyntaxError,
    Neg,
    Num,
    Pi,
    Pow,
    UnknownIdentifierError,
    Var,
    eval_with_derivatives,
    evaluate,
    free_variables,
    parse,
    to_string,
)
from subrumin.fields import ExprField, X, Y, Z, check_periodic, partial

from conftest import random_expr


def test_parse_basic_shapes():
    assert parse("x + 1") == BinOp("+", Var("x"), Num(1.0))
    assert parse("2*x*y") == BinOp("*", BinOp("*", Num(2.0), Var("x")), Var("y"))
    assert parse("sin(2*pi*y)") == Call("sin", BinOp("*", BinOp("*", Num(2.0), Pi()), Var("y")))
    assert parse("x^2") == Pow(Var("x"), 2)
    assert parse("x^-1") == Pow(Var("x"), -1)
    assert parse("neg(x)") == parse("-x") == Neg(Var("x"))


def test_precedence_and_associativity():
    assert evaluate(parse("2 - 3 - 4"), 0, 0, 0) == -5
    assert evaluate(parse("8 / 4 / 2"), 0, 0, 0) == 1
    assert evaluate(parse("-x^2"), 3.0, 0, 0) == -9.0
    assert evaluate(parse("2 * 3 + 4"), 0, 0, 0) == 10


def test_syntax_error_offset():
    with pytest.raises(FieldSyntaxError) as ei:
        parse("x +")
    assert ei.value.offset == 3
    assert "end of input" in str(ei.value)


@pytest.mark.parametrize("text, offset", [("(x", 2), ("x * * y", 4), ("", 0), ("sin x", 4), ("x^y", 2)])
def test_syntax_error_offsets(text, offset):
    with pytest.raises(FieldParseError) as ei:
        parse(text)
    assert ei.value.offset == offset


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as ei:
        parse("2*w + x")
    assert ei.value.offset == 2


def test_free_variables():
    assert free_variables(parse("sin(2*pi*y) + x")) == {"x", "y"}
    assert free_variables(parse("pi")) == frozenset()


def test_domain_errors():
    with pytest.raises(FieldDomainError):
        evaluate(parse("1/x"), 0.0, 1.0, 1.0)
    with pytest.raises(FieldDomainError):
        evaluate(parse("y^-2"), 1.0, 0.0, 1.0)
    with pytest.raises(FieldDomainError):
        eval_with_derivatives(parse("1/(x - 1)"), (1.0, 0.0, 0.0))


def test_vectorized_evaluation():
    xs = np.linspace(0, 1, 7)
    assert_allclose(evaluate(parse("x^2 + y"), xs, 2.0, 0.0), xs**2 + 2.0)


def _ast_strategy():
    leaves = st.one_of(
        st.builds(Var, st.sampled_from(["x", "y", "z"])),
        st.just(Pi()),
        st.builds(Num, st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False)),
    )

    def extend(children):
        return st.one_of(
            st.builds(Neg, children),
            st.builds(BinOp, st.sampled_from(["+", "-", "*", "/"]), children, children),
            st.builds(Pow, children, st.integers(-3, 4)),
            st.builds(Call, st.sampled_from(["sin", "cos", "exp"]), children),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(_ast_strategy())
def test_round_trip(e):
    assert parse(to_string(e)) == e


def test_derivatives_match_central_differences():
    rng = np.random.default_rng(20240917)
    h = 1e-4
    worst = 0.0
    for _ in range(100):
        e = random_expr(rng)
        p = rng.uniform(-1.0, 1.0, 3)
        d = eval_with_derivatives(e, p)
        for i in range(3):
            step = np.zeros(3)
            step[i] = h
            fd = (evaluate(e, *(p + step)) - evaluate(e, *(p - step))) / (2 * h)
            worst = max(worst, abs(fd - d.grad[i]))
    assert worst <= 1e-6


def test_hessian_symmetric_and_matches_nested_differences():
    rng = np.random.default_rng(7)
    h = 1e-3
    for _ in range(30):
        e = random_expr(rng)
        p = rng.uniform(-1.0, 1.0, 3)
        d = eval_with_derivatives(e, p)
        assert_allclose(d.hessian, d.hessian.T, atol=0)
        ex, ey = np.array([h, 0, 0]), np.array([0, h, 0])
        f = lambda q: evaluate(e, *q)
        fxy = (f(p + ex + ey) - f(p + ex - ey) - f(p - ex + ey) + f(p - ex - ey)) / (4 * h * h)
        assert abs(fxy - d.hessian[0, 1]) <= 1e-4 * max(1.0, abs(fxy))


def test_worked_derivatives():
    d = eval_with_derivatives(parse("2*x*z - x^2*y"), (1.0, 1.0, 1.0))
    assert_allclose(d.grad, [0.0, -1.0, 2.0], atol=1e-15)
    d = eval_with_derivatives(parse("sin(2*pi*y)"), (0.0, 0.0, 0.0))
    assert abs(d.dy - 2 * math.pi) <= 1e-12


def test_frame_derivative_of_xz():
    f = ExprField("x*z")
    assert X(f)(1.0, 1.0, 1.0) == pytest.approx(2.0, abs=1e-15)
    assert Y(f)(1.0, 1.0, 1.0) == 0.0
    assert Z(f)(1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_frame_bracket():
    # [X, Y] = -Z on every smooth function
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = ExprField(random_expr(rng))
        p = rng.uniform(-2, 2, 3)
        lhs = X(Y(f))(*p) - Y(X(f))(*p)
        assert abs(lhs + Z(f)(*p)) <= 1e-12 * max(1.0, abs(Z(f)(*p)))


def test_frame_bracket_discrete_stencils_second_order():
    f = ExprField("sin(x + 2*y)*cos(z) + x*y*z")
    p = np.array([0.3, -0.4, 0.7])

    def Xh(g, h):
        return lambda q: (g(q + h * np.array([1, 0, q[1]])) - g(q - h * np.array([1, 0, q[1]]))) / (2 * h)

    def Yh(g, h):
        return lambda q: (g(q + np.array([0, h, 0])) - g(q - np.array([0, h, 0]))) / (2 * h)

    g = lambda q: f(*q)
    errs = []
    for h in (1e-2, 5e-3):
        br = Xh(Yh(g, h), h)(p) - Yh(Xh(g, h), h)(p)
        errs.append(abs(br + Z(f)(*p)))
    assert errs[1] < errs[0] / 3.0


def test_dual_tags_do_not_confuse():
    # nested derivatives with distinct tags: d/dx d/dy (x*y) = 1
    tx, ty = D.new_tag(), D.new_tag()
    r = D.mul(D.Dual(2.0, 1.0, tx), D.Dual(3.0, 1.0, ty))
    assert D.primal(D.tangent(D.tangent(r, tx), ty)) == 1.0
    assert D.primal(r) == 6.0


def test_partial_and_periodicity():
    f = ExprField("sin(2*pi*y) + cos(pi*x)")
    assert partial(f, "y")(0.0, 0.0, 0.0) == pytest.approx(2 * math.pi)
    assert check_periodic(f, 2).periodic
    assert not check_periodic(f, 1).periodic
    assert not check_periodic(ExprField("z*x"), 1).periodic
