import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from gradlike import ode
from gradlike.construct import library
from gradlike.ode import OdeSystem, circle_distance, integrate, linear_system, solve, variational

unit = st.floats(0, 1, exclude_max=True, allow_nan=False)


def test_circle_distance_examples():
    assert circle_distance(0.1, 0.9) == pytest.approx(0.2)
    assert circle_distance(0.3, 0.3) == 0.0
    assert circle_distance(0.0, 0.5) == 0.5


@given(unit, unit, unit)
def test_circle_distance_is_metric(x, y, z):
    dxy = circle_distance(x, y)
    assert 0 <= dxy <= 0.5
    assert dxy == pytest.approx(circle_distance(y, x), abs=1e-15)
    assert circle_distance(x, z) <= dxy + circle_distance(y, z) + 1e-12


def test_wrap_never_returns_one():
    assert ode.wrap(-1e-18) == 0.0
    assert 0 <= ode.wrap(-0.25) < 1


def test_constant_and_unit_winding():
    c = integrate(OdeSystem.from_text("0"), 0.0, 0.3, 5.0)
    assert np.allclose(c.lifted, 0.3)
    u = integrate(OdeSystem.from_text("1"), 0.0, 0.0, 1.5)
    assert u(1.5) == pytest.approx(1.5, abs=1e-12)
    assert u.circle(1.5) == pytest.approx(0.5, abs=1e-12)


def test_sine_converges_to_attractor():
    s = library("autonomous_sin")
    c = integrate(s, 0.0, 0.25, 20.0)
    assert circle_distance(c(20.0), 0.5) < 1e-6
    # closed form: tan(pi x) = tan(pi x0) exp(2 pi t)
    t = np.linspace(0, 1, 21)
    exact = np.arctan(np.tan(np.pi * 0.25) * np.exp(2 * np.pi * t)) / np.pi
    assert np.max(np.abs(c(t) - exact)) < 1e-8


def test_backward_integration():
    s = library("autonomous_sin")
    c = integrate(s, 0.0, 0.25, -20.0)
    assert circle_distance(c(-20.0), 0.0) < 1e-6
    assert c.span == (-20.0, 0.0)


def test_curve_invariants():
    s = library("ap_perturbed")
    c = integrate(s, 0.0, 0.73, 30.0)
    assert np.all(np.abs(np.diff(c.lifted)) < 0.25)
    assert ode.wrap(c.lifted[0]) == 0.73
    # dense output against a half-tolerance re-integration
    ref = solve(s, 0.0, [0.73], 30.0, t_eval=np.linspace(0, 30, 301), rtol=1e-12, atol=1e-14).x_eval[:, 0]
    assert np.max(np.abs(c(np.linspace(0, 30, 301)) - ref)) < 1e-7


def test_lift_cap_on_fast_rotation():
    c = integrate(OdeSystem.from_text("40"), 0.0, 0.0, 2.0)
    assert np.all(np.abs(np.diff(c.lifted)) < 0.25)
    assert c(2.0) == pytest.approx(80.0, abs=1e-9)


def test_variational_examples():
    lin = linear_system("-1")
    c = integrate(lin, 0.0, 1.0, 5.0)
    assert variational(lin, c, 0.0, 5.0) == pytest.approx(-5.0, abs=1e-9)
    s = library("autonomous_sin")
    c = integrate(s, 0.0, 0.5, 1.0)
    assert variational(s, c, 0.0, 1.0) == pytest.approx(-2 * np.pi, abs=1e-9)
    with pytest.raises(ValueError):
        variational(s, c, 0.0, 2.0)


def test_variational_closed_form():
    lin = linear_system("-1 + 0.5*sin(t)")
    c = integrate(lin, 0.0, 1.0, 40.0)
    rng = np.random.default_rng(0)
    tau, t = rng.uniform(0, 40, (2, 100))
    got = np.array([variational(lin, c, a, b) for a, b in zip(tau, t)])
    ref = -(t - tau) + 0.5 * (np.cos(tau) - np.cos(t))
    assert np.max(np.abs(got - ref)) < 1e-8 * 40 * 1.5


def test_periodicity_in_x():
    rng = np.random.default_rng(3)
    t, x = rng.uniform(-10, 10, (2, 500))
    for name in ("autonomous_sin", "reversible", "riccati_gauss", "periodic_rough", "ap_perturbed", "slow_transit"):
        s = library(name)
        assert np.max(np.abs(s.f(t, x + 1) - s.f(t, x))) < 1e-12, name


def test_against_scipy():
    s = library("ap_perturbed")
    ours = solve(s, 0.0, [0.1, 0.6], 10.0).x_final
    for x0, y in zip((0.1, 0.6), ours):
        r = solve_ivp(lambda t, x: s.f(t, x), (0, 10), [x0], rtol=1e-12, atol=1e-14, method="DOP853")
        assert y == pytest.approx(r.y[0, -1], abs=1e-8)


def test_nonfinite_rhs_raises():
    bad = OdeSystem(rhs=lambda t, x: np.where(t > 1, np.nan, 0.0 * x))
    with pytest.raises(ode.IntegrationError):
        integrate(bad, 0.0, 0.1, 2.0)


def test_bad_tolerances():
    with pytest.raises(ValueError):
        integrate(library("autonomous_sin"), 0, 0.1, 1, rtol=0.0)


def test_offsets_match_separate_solves():
    s = library("ap_perturbed")
    t0 = np.array([0.0, 1.5, -2.0])
    x0 = np.array([0.1, 0.4, 0.8])
    batch = solve(s, 0.0, x0, 3.0, offsets=t0, rtol=1e-11, atol=1e-14).x_final
    for a, b, y in zip(t0, x0, batch):
        assert y == pytest.approx(solve(s, a, [b], a + 3.0, rtol=1e-11, atol=1e-14).x_final[0], abs=1e-9)


def test_csv_header_and_precision():
    c = integrate(library("autonomous_sin"), 0.0, 0.2, 1.0)
    lines = c.to_csv().splitlines()
    assert lines[0] == "t,x,lifted_x"
    t, x, lx = (float(v) for v in lines[-1].split(","))
    assert lx == c.lifted[-1]


MODELS = ["autonomous_sin", "reversible_mu", "riccati_gauss", "periodic_rough", "ap_perturbed"]
TOL = 1e-9


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(MODELS), unit, st.floats(0.5, 5), st.floats(0.5, 5))
def test_flow_property(name, x0, t1, dt):
    s = library(name)
    t2 = t1 + dt
    direct = solve(s, 0.0, [x0], t2).x_final[0]
    mid = solve(s, 0.0, [x0], t1).x_final[0]
    two = solve(s, t1, [mid], t2).x_final[0]
    assert abs(direct - two) <= 10 * TOL * max(1.0, abs(direct)) + 1e-10


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(MODELS), unit, st.floats(0.5, 5))
def test_time_reversal(name, x0, t1):
    s = library(name)
    fwd = solve(s, 0.0, [x0], t1).x_final[0]
    back = solve(s, t1, [fwd], 0.0).x_final[0]
    # contraction forward means expansion backward; bound by the flow derivative
    res = solve(s, 0.0, [x0], t1)
    gain = float(np.exp(-res.L_final[0]))
    assert abs(back - x0) <= 10 * TOL * max(1.0, gain) + 1e-10


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(MODELS), unit, st.floats(0, 1), st.floats(0, 1))
def test_lambda_additivity(name, x0, a, b):
    s = library(name)
    c = integrate(s, 0.0, x0, 10.0)
    tau, sig, t = 0.0, 10 * min(a, b), 10 * max(a, b)
    lhs = variational(s, c, tau, t)
    rhs = variational(s, c, sig, t) + variational(s, c, tau, sig)
    assert abs(lhs - rhs) < 1e-10
    # and against an independent quadrature of f_x along the curve, over a
    # stretch short enough that starts near a repeller stay comparable
    t = min(t, 2.0)
    ref = solve_ivp(lambda u, y: [s.f(u, y[0]), s.fx(u, y[0])], (0, t), [x0, 0.0], rtol=1e-12, atol=1e-13).y[1, -1] if t > 0 else 0.0
    assert abs(variational(s, c, 0.0, t) - ref) < 1e-6
