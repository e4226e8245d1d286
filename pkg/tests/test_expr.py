import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradlike import expr as ex
from gradlike.construct import LIBRARY_TEXT


def test_parse_root_and_eval():
    e = ex.parse("cos(x)*(sin(x)^2+exp(-t^2))")
    assert isinstance(e, ex.BinOp) and e.op == "*"
    assert ex.evaluate(e, 0.0, 0.0) == 1.0


def test_identity_and_sine():
    assert ex.evaluate(ex.parse("x"), 7.0, 0.25) == 0.25
    assert ex.evaluate(ex.parse("sin(2*pi*x)"), 0.0, 0.25) == pytest.approx(1.0, abs=1e-15)


def test_parameter_arithmetic():
    e = ex.parse("x^2 + exp(-t^2) - mu", {"mu": 0.25})
    assert ex.evaluate(e, 0.0, 0.0, {"mu": 0.25}) == 0.75


def test_syntax_error_offset():
    with pytest.raises(ex.ExprSyntaxError) as info:
        ex.parse("sin(2*pi*x")
    assert info.value.offset == 11
    assert ")" in info.value.expected


@pytest.mark.parametrize("src", ["2x", "sin(", "x +", "(x))", ""])
def test_syntax_errors(src):
    with pytest.raises(ex.ExprSyntaxError):
        ex.parse(src)


def test_unknown_names():
    with pytest.raises(ex.UnknownNameError):
        ex.parse("foo(x)")
    with pytest.raises(ex.UnknownNameError):
        ex.parse("x + mu", {})


def test_precedence():
    assert ex.evaluate(ex.parse("-2^2"), 0, 0) == -4.0
    assert ex.evaluate(ex.parse("2^3^2"), 0, 0) == 512.0
    assert ex.evaluate(ex.parse("8/4/2"), 0, 0) == 1.0
    assert ex.evaluate(ex.parse("1-2-3"), 0, 0) == -4.0


def test_domain_errors():
    with pytest.raises(ex.EvalDomainError):
        ex.evaluate(ex.parse("ln(x)"), 0.0, -1.0)
    with pytest.raises(ex.EvalDomainError):
        ex.evaluate(ex.parse("1/x"), 0.0, 0.0)


def test_deterministic():
    e = ex.parse("cos(x)*(sin(x)^2+exp(-t^2))")
    t, x = np.random.default_rng(1).normal(size=(2, 100))
    a, b = ex.evaluate(e, t, x), ex.evaluate(e, t, x)
    assert np.array_equal(a, b)
    f = ex.compile_expr(e)
    assert np.array_equal(f(t, x), a)


def test_derivative_examples():
    d = ex.differentiate(ex.parse("sin(2*pi*x)"), "x")
    x = np.linspace(0, 1, 11)
    assert np.allclose(ex.evaluate(d, 0.0, x), 2 * np.pi * np.cos(2 * np.pi * x), atol=1e-13)
    d0 = ex.differentiate(ex.parse("exp(-t^2)*sin(t)"), "x")
    assert ex.evaluate(d0, 1.3, 0.2) == 0.0
    with pytest.raises(ex.NotDifferentiableError):
        ex.differentiate(ex.parse("abs(x)"), "x")


def test_derivative_against_closed_form():
    e = ex.parse("cos(x)*(sin(x)^2+exp(-t^2))")
    d = ex.differentiate(e, "x")
    rng = np.random.default_rng(0)
    t, x = rng.uniform(-3, 3, 100), rng.uniform(-3, 3, 100)
    ref = -np.sin(x) * (np.sin(x) ** 2 + np.exp(-t * t)) + np.cos(x) * 2 * np.sin(x) * np.cos(x)
    assert np.allclose(ex.evaluate(d, t, x), ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", sorted(LIBRARY_TEXT))
def test_library_derivatives_match_fd(name):
    text, params, _ = LIBRARY_TEXT[name]
    e = ex.parse(text, params)
    f = ex.compile_expr(e, params)
    fx = ex.compile_expr(ex.differentiate(e, "x"), params)
    rng = np.random.default_rng(2)
    t, x = rng.uniform(-5, 5, 1000), rng.uniform(0, 1, 1000)
    h = 1e-6 * np.maximum(1.0, np.abs(x))
    fd = (f(t, x + h) - f(t, x - h)) / (2 * h)
    an = fx(t, x)
    scale = max(1.0, float(np.max(np.abs(an))))
    assert np.max(np.abs(fd - an)) <= 1e-5 * scale


# random expression trees for the round-trip property
_leaf = st.one_of(
    st.sampled_from(["x", "t", "pi", "e", "mu"]),
    st.floats(0, 100, allow_nan=False).map(lambda v: repr(round(v, 3))),
)


def _node(children):
    un = st.tuples(st.sampled_from(["sin", "cos", "exp", "tanh", "-"]), children).map(
        lambda p: f"-({p[1]})" if p[0] == "-" else f"{p[0]}({p[1]})"
    )
    bi = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(lambda p: f"({p[0]}){p[1]}({p[2]})")
    return st.one_of(un, bi)


exprs = st.recursive(_leaf, _node, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_print_round_trip(src):
    p = {"mu": 0.3}
    e = ex.parse(src, p)
    assert ex.parse(ex.to_text(e), p) == e


@settings(max_examples=100, deadline=None)
@given(exprs, st.floats(-2, 2), st.floats(-2, 2))
def test_derivative_matches_fd_on_random_trees(src, t, x):
    p = {"mu": 0.3}
    e = ex.parse(src, p)
    d = ex.differentiate(e, "x")
    h = 1e-6 * max(1.0, abs(x))
    try:
        vals = [ex.evaluate(e, t, x + s, p) for s in (-h, h)]
        an = ex.evaluate(d, t, x, p)
    except (ex.EvalDomainError, OverflowError):
        return
    if not all(math.isfinite(v) and abs(v) < 1e6 for v in vals + [an]):
        return
    fd = (vals[1] - vals[0]) / (2 * h)
    # loose bound: fd error grows with the third derivative, which random trees do not control
    assert abs(fd - an) <= 1e-3 * max(1.0, abs(an)) or abs(an) > 1e4
