import numpy as np
import pytest
from scipy.integrate import quad

from gradlike.equimorph import (
    EquimorphError,
    LinearSystem,
    SemiStrip,
    crossing_time,
    crossing_residual,
    derivative_bounds,
    phi_map,
    phi_point,
    phi_table,
    verify_equimorphism,
)


@pytest.fixture(scope="module")
def A():
    return SemiStrip(LinearSystem.build("-1"))


@pytest.fixture(scope="module")
def B():
    return SemiStrip(LinearSystem.build("-2"))


@pytest.fixture(scope="module")
def Bsin():
    return SemiStrip(LinearSystem.build("-2 - sin(t)"))


def test_lyapunov_scale_constant(A, B):
    t = np.linspace(0, 40, 101)
    assert np.allclose(A.system.s_squared(t), 0.5, atol=1e-12)
    assert np.allclose(B.system.s_squared(t), 0.25, atol=1e-12)


def test_lyapunov_scale_against_quadrature(Bsin):
    # s^2(t) = int_t^inf exp(2 int_t^sigma a), a = -2 - sin
    for t0 in (0.0, 1.3, 12.0):
        ref, _ = quad(lambda s: np.exp(2 * (-2 * (s - t0) + np.cos(s) - np.cos(t0))), t0, t0 + 40, epsabs=1e-14, limit=200)
        assert Bsin.system.s_squared(t0) == pytest.approx(ref, rel=1e-8)  # RK4 at dt = 0.01


def test_crossing_time_closed_form(A):
    assert crossing_time(A, 0.5, 10.0) == pytest.approx(10.0 + np.log(0.5), abs=1e-10)
    assert crossing_time(A, 1.0, 7.0) == 7.0
    rng = np.random.default_rng(0)
    for C, tau in zip(rng.uniform(1e-3, 1, 20), rng.uniform(0, 30, 20)):
        T = crossing_time(A, C, tau)
        assert T == pytest.approx(tau + np.log(C), abs=1e-10)
        assert crossing_residual(A, C, tau, T) < 1e-12


def test_crossing_time_backtrack_growth(A, B):
    # tau - T grows like -ln(C) / lambda as C -> 0
    for strip, lam in ((A, 1.0), (B, 2.0)):
        C = np.array([1e-2, 1e-4, 1e-6])
        back = [20.0 - crossing_time(strip, c, 20.0) for c in C]
        assert np.allclose(back, -np.log(C) / lam, rtol=1e-9)


def test_crossing_time_rejects(A):
    with pytest.raises(EquimorphError):
        crossing_time(A, 0.0, 1.0)
    with pytest.raises(EquimorphError):
        crossing_time(A, 1.5, 1.0)


def test_phi_closed_form(A, B):
    rng = np.random.default_rng(1)
    C, tau = rng.uniform(1e-3, 1, 100), rng.uniform(0, 30, 100)
    C1, tau1 = phi_map(A, B, C, tau)
    assert np.max(np.abs(C1 - C**2)) <= 1e-10
    assert np.array_equal(tau1, tau)


def test_phi_identity_pair(A):
    rng = np.random.default_rng(2)
    C, tau = rng.uniform(1e-3, 1, 50), rng.uniform(0, 30, 50)
    assert np.allclose(phi_map(A, A, C, tau)[0], C, rtol=1e-10)


def test_phi_point_odd_and_fixed_axis(A, B):
    x = np.array([-0.3, 0.0, 0.3])
    y = phi_point(A, B, x, np.full(3, 2.0))
    assert y[1] == 0.0 and y[0] == -y[2]
    # x -> s_a x = C -> C^2 -> x1 = C^2 / s_b
    assert y[2] == pytest.approx((0.3 / np.sqrt(2)) ** 2 * 2, rel=1e-10)


def test_phi_monotone_and_boundary(A, Bsin):
    C = np.linspace(1e-3, 1, 400)
    for tau in (0.0, 5.0, 25.0):
        C1, _ = phi_map(A, Bsin, C, np.full(C.size, tau))
        assert np.all(np.diff(C1) > 0)
        assert C1[-1] == 1.0
        assert np.all((C1 > 0) & (C1 <= 1))


def test_derivative_bounds_constant(A, B):
    R1, R2 = derivative_bounds(A, B, 0.1)
    assert R1 == pytest.approx(40.0, rel=1e-9)
    # the actual derivative 2C stays under R1
    assert 2.0 <= R1


def test_verify_report(A, Bsin):
    r = verify_equimorphism(A, Bsin)
    assert r.conjugacy_residual <= 1e-8
    assert r.tau_preserved and r.monotone
    db = r.derivative_bounds
    assert db["max_dC"] <= db["R1"] and db["max_dtau"] <= db["R2"]
    assert all(m["ok"] for m in r.modulus)
    assert r.boundary_residual == 0.0
    # preimage thresholds d1(v) shrink with v and stay positive
    d1 = [p["d1"] for p in r.preimage]
    assert all(a > b > 0 for a, b in zip(d1, d1[1:]))
    assert r.ok


def test_unstable_coefficient_rejected():
    with pytest.raises(EquimorphError):
        LinearSystem.build("1")


def test_phi_table_header(A, B):
    out = phi_table(A, B, [0.5, 1.0], [0.0, 1.0])
    lines = out.splitlines()
    assert lines[0] == "C,tau,C1" and len(lines) == 5
    c, t, c1 = map(float, lines[1].split(","))
    assert c1 == pytest.approx(c * c, abs=1e-10)
