"""Conjugating map between Lyapunov semi-strips of two scalar linear systems.

For x' = a(t) x with a stable-type dichotomy on R_plus, the Lyapunov scale
s(t)^2 = int_t^inf exp(2 int_t^sigma a) d sigma gives strip coordinates
C = s(t) x. The semi-strip is {0 < C <= C_star, t >= 0}; its right edge is
the level line S = C_star^2.

The map Phi sends (C, tau) to (C1, tau): follow the solution of the first
system back to the edge at time T(C, tau), jump to the edge of the second
strip at the same time, and follow the second system forward to tau.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dichotomy import LAMBDA_MIN, WINDOW, fit_dichotomy
from .expr import compile_expr, parse
from .ode import linear_system, solve

MAX_BACKTRACK = 1e3


class EquimorphError(ValueError):
    pass


def _hermite(t, knots, v, dv):
    t = np.asarray(t, dtype=float)
    i = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2)
    ta, tb = knots[i], knots[i + 1]
    h = tb - ta
    u = (t - ta) / h
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u * u * (3 - 2 * u)
    h11 = u * u * (u - 1)
    return h00 * v[i] + h10 * h * dv[i] + h01 * v[i + 1] + h11 * h * dv[i + 1]


def _coefficient(a, params):
    if callable(a):
        return a, getattr(a, "__name__", "a(t)")
    text = str(a)
    fn = compile_expr(parse(text), params or {})
    return (lambda t: np.broadcast_to(fn(np.asarray(t, dtype=float), 0.0), np.shape(t)).astype(float)), text


@dataclass(frozen=True)
class LinearSystem:
    """x' = a(t) x with its log-flow and Lyapunov scale tabulated on a grid.

    `Lam` is int_0^t a (Gauss-Legendre per cell), `s2` solves
    q' = -1 - 2 a q backwards from the truncation time. Both are evaluated
    between knots by cubic Hermite interpolation with exact derivatives.
    """

    name: str
    t: np.ndarray
    a_values: np.ndarray
    Lam: np.ndarray
    s2: np.ndarray
    M: float
    lam: float
    a0: float
    tau_max: float
    fit_residual: float
    coefficient: object = field(repr=False)

    @classmethod
    def build(
        cls,
        a,
        params=None,
        *,
        t_min: float = -100.0,
        t_max: float = 150.0,
        dt: float = 0.01,
        fit_horizon: float = 100.0,
        window: float = WINDOW,
        lambda_min: float = LAMBDA_MIN,
        tail_tol: float = 1e-12,
    ) -> "LinearSystem":
        fn, name = _coefficient(a, params)
        n = int(round((t_max - t_min) / dt))
        t = np.linspace(t_min, t_max, n + 1)
        av = np.asarray(fn(t), dtype=float)
        nodes, weights = np.polynomial.legendre.leggauss(6)
        mid, half = 0.5 * (t[1:] + t[:-1]), 0.5 * np.diff(t)
        q = np.asarray(fn(mid[:, None] + half[:, None] * nodes[None, :]), dtype=float)
        cell = half * (q @ weights)
        Lam = np.concatenate([[0.0], np.cumsum(cell)])
        Lam -= np.interp(0.0, t, Lam)

        # dichotomy constants on [0, fit_horizon], coarse grid for the O(N^2) fit
        tf = np.linspace(0.0, fit_horizon, int(round(fit_horizon / 0.05)) + 1)
        Lf = _hermite(tf, t, Lam, av)
        est = fit_dichotomy(tf, Lf, "R_plus", window, lambda_min)
        if est.kind != "stable":
            raise EquimorphError(f"coefficient {name!r} has no stable-type dichotomy on R_plus ({est.kind})")

        # s^2 by backward RK4; the truncation error is bounded by the tail estimate
        am = np.asarray(fn(mid), dtype=float)
        s2 = np.zeros(t.size)
        a_l, am_l = av.tolist(), am.tolist()
        qi = 0.0
        for i in range(t.size - 2, -1, -1):
            h = -dt
            k1 = -1 - 2 * a_l[i + 1] * qi
            k2 = -1 - 2 * am_l[i] * (qi + 0.5 * h * k1)
            k3 = -1 - 2 * am_l[i] * (qi + 0.5 * h * k2)
            k4 = -1 - 2 * a_l[i] * (qi + h * k3)
            qi = qi + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
            s2[i] = qi
        margin = max(0.0, np.log(est.C_hat**2 / (2 * est.lambda_hat * tail_tol)) / (2 * est.lambda_hat))
        tau_max = t_max - margin
        if tau_max <= 0:
            raise EquimorphError("grid too short for the Lyapunov tail bound")
        return cls(
            name=name,
            t=t,
            a_values=av,
            Lam=Lam,
            s2=s2,
            M=float(est.C_hat),
            lam=float(est.lambda_hat),
            a0=float(np.max(np.abs(av))),
            tau_max=float(tau_max),
            fit_residual=float(est.max_residual),
            coefficient=fn,
        )

    @property
    def t_min(self) -> float:
        return float(self.t[0])

    def a(self, t):
        return self.coefficient(np.asarray(t, dtype=float))

    def log_flow(self, t):
        """int_0^t a."""
        return _hermite(t, self.t, self.Lam, self.a_values)

    def s_squared(self, t):
        return _hermite(t, self.t, self.s2, -1 - 2 * self.a_values * self.s2)

    def s(self, t):
        return np.sqrt(self.s_squared(t))

    def s2_range(self, t_lo: float, t_hi: float) -> tuple[float, float]:
        sel = (self.t >= t_lo) & (self.t <= t_hi)
        v = self.s2[sel]
        return float(v.min()), float(v.max())

    def dichotomy_residual(self, horizon: float = 50.0, dt: float = 0.1) -> float:
        """max of Lambda(t, tau) - ln M + lam (t - tau) over grid pairs; <= 0 when the bound holds."""
        tg = np.linspace(0.0, horizon, int(round(horizon / dt)) + 1)
        L = self.log_flow(tg)
        g = L + self.lam * tg
        return float(np.max(g - np.minimum.accumulate(g)) - np.log(self.M))


@dataclass(frozen=True)
class SemiStrip:
    system: LinearSystem
    C_star: float = 1.0

    def __post_init__(self):
        if not self.C_star > 0:
            raise EquimorphError("C_star must be positive")

    def coordinates(self, x, t):
        return self.system.s(t) * np.asarray(x, dtype=float), np.asarray(t, dtype=float)

    def position(self, C, t):
        return np.asarray(C, dtype=float) / self.system.s(t)


def crossing_times(strip: SemiStrip, C, tau) -> np.ndarray:
    """Vectorized crossing times; see crossing_time."""
    sys_ = strip.system
    C, tau = np.broadcast_arrays(np.asarray(C, dtype=float), np.asarray(tau, dtype=float))
    shape = C.shape
    C, tau = C.ravel(), tau.ravel()
    if np.any(~(C > 0)) or np.any(C > strip.C_star * (1 + 1e-15)):
        raise EquimorphError(f"C outside (0, C_star={strip.C_star}]")
    base = np.log(np.minimum(C / strip.C_star, 1.0)) - 0.5 * np.log(sys_.s_squared(tau)) - sys_.log_flow(tau)

    def logR(T):
        return base + 0.5 * np.log(sys_.s_squared(T)) + sys_.log_flow(T)

    # bracket: logR(hi) <= 0 <= logR(lo), expanding downwards by doubling
    hi = tau.copy()
    lo = tau.copy()
    step = np.ones_like(tau)
    need = logR(lo) < 0
    while np.any(need):
        hi = np.where(need, lo, hi)
        lo = np.where(need, tau - step, lo)
        step = np.where(need, 2 * step, step)
        bad = need & ((tau - lo > MAX_BACKTRACK) | (lo < sys_.t_min))
        if np.any(bad):
            raise EquimorphError(f"crossing time below tau - {MAX_BACKTRACK:g} or off the grid")
        need = logR(lo) < 0
    # safeguarded Newton: d logR / dT = -1 / (2 s(T)^2)
    T = 0.5 * (lo + hi)
    for _ in range(100):
        r = logR(T)
        lo = np.where(r >= 0, T, lo)
        hi = np.where(r <= 0, T, hi)
        nxt = T + 2 * sys_.s_squared(T) * r
        out = ~((nxt > lo) & (nxt < hi))
        nxt = np.where(out, 0.5 * (lo + hi), nxt)
        done = np.abs(nxt - T) <= 1e-15 * np.maximum(1.0, np.abs(T))
        T = nxt
        if np.all(done | (hi - lo <= 4e-16 * np.maximum(1.0, np.abs(T)))):
            break
    T = np.where(C >= strip.C_star, tau, T)
    return T.reshape(shape)


def crossing_time(strip: SemiStrip, C: float, tau: float) -> float:
    """Time T <= tau at which the solution through (C, tau) meets the edge C = C_star.

    ln R(T) = ln C + ln s(T) + Lambda(T, tau) - ln C_star - ln s(tau) decreases
    strictly in T (its derivative is -1/(2 s(T)^2)), so the root is unique.
    """
    return float(crossing_times(strip, float(C), float(tau)))


def crossing_residual(strip: SemiStrip, C: float, tau: float, T: float) -> float:
    """|R(T, C, tau)| / (C_star s(tau)) in the original (non-log) form."""
    sys_ = strip.system
    R = C * sys_.s(T) * np.exp(sys_.log_flow(T) - sys_.log_flow(tau)) - strip.C_star * sys_.s(tau)
    return float(abs(R) / (strip.C_star * sys_.s(tau)))


def _g(strip2: SemiStrip, T, tau):
    s2 = strip2.system
    return strip2.C_star * np.sqrt(s2.s_squared(tau) / s2.s_squared(T)) * np.exp(s2.log_flow(tau) - s2.log_flow(T))


def phi_map(strip1: SemiStrip, strip2: SemiStrip, C, tau):
    """(C, tau) in strip1 -> (C1, tau) in strip2; vectorized over matching arrays."""
    C, tau = np.broadcast_arrays(np.asarray(C, dtype=float), np.asarray(tau, dtype=float))
    T = crossing_times(strip1, C, tau)
    C1 = _g(strip2, T, tau)
    C1 = np.where(C >= strip1.C_star, strip2.C_star, C1)
    if C1.ndim == 0:
        return float(C1), float(tau)
    return C1, tau.copy()


def phi_point(strip1: SemiStrip, strip2: SemiStrip, x, t):
    """Phi in the original coordinates on the full strip around x = 0 (odd in x)."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    out = np.zeros(x.shape)
    nz = x != 0
    if np.any(nz):
        C = strip1.system.s(t[nz]) * np.abs(x[nz])
        C1, _ = phi_map(strip1, strip2, C, t[nz])
        out[nz] = np.sign(x[nz]) * strip2.position(C1, t[nz])
    return out


def derivative_bounds(strip1: SemiStrip, strip2: SemiStrip, d: float, tau_range=(0.0, 30.0)):
    """R1 and R2 from the sup/inf of s^2, s1^2 over the times reachable from C >= d."""
    s1, s2 = strip1.system, strip2.system
    T_lo = float(np.min(crossing_times(strip1, d, np.linspace(*tau_range, 31))))
    lo_a, hi_a = s1.s2_range(T_lo - 0.01, tau_range[1] + 0.01)
    lo_b, _ = s2.s2_range(T_lo - 0.01, tau_range[1] + 0.01)
    R1 = 2 * strip2.C_star * hi_a / (d * lo_b)
    R2 = strip2.C_star * (strip1.C_star * hi_a / (lo_b * lo_a) + 1 / (2 * lo_b))
    return float(R1), float(R2)


@dataclass
class EquimorphReport:
    conjugacy_residual: float
    tau_preserved: bool
    modulus: list
    cases: dict
    derivative_bounds: dict
    preimage: list
    boundary_residual: float
    monotone: bool

    @property
    def ok(self) -> bool:
        return (
            self.conjugacy_residual <= 1e-8
            and self.tau_preserved
            and self.derivative_bounds["dC_ok"]
            and self.derivative_bounds["dtau_ok"]
            and all(m["ok"] for m in self.modulus)
            and self.monotone
        )

    def to_dict(self) -> dict:
        return {
            "conjugacy_residual": self.conjugacy_residual,
            "tau_preserved": self.tau_preserved,
            "modulus": self.modulus,
            "cases": self.cases,
            "derivative_bounds": self.derivative_bounds,
            "preimage": self.preimage,
            "boundary_residual": self.boundary_residual,
            "monotone": self.monotone,
            "ok": self.ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def verify_equimorphism(
    strip1: SemiStrip,
    strip2: SemiStrip,
    sample_count: int = 100,
    delta_grid=(0.1, 0.03, 0.01, 0.003, 0.001),
    *,
    d: float = 0.1,
    tau_range=(0.0, 30.0),
    track: float = 10.0,
    seed: int = 0,
) -> EquimorphReport:
    rng = np.random.default_rng(seed)
    sA, sB = strip1.system, strip2.system
    lo_t, hi_t = tau_range
    if hi_t + track > min(sA.tau_max, sB.tau_max):
        raise EquimorphError("tau range beyond the tabulated Lyapunov scale")

    # (i) conjugacy against an independent integration of system 2
    lin_b = linear_system(sB.coefficient)
    rel = np.linspace(0.0, track, 11)
    C0 = rng.uniform(0.05, 1.0, sample_count) * strip1.C_star
    t0 = rng.uniform(lo_t, hi_t, sample_count)
    taus = t0[:, None] + rel[None, :]
    x0 = strip1.position(C0, t0)
    C = sA.s(taus) * x0[:, None] * np.exp(sA.log_flow(taus) - sA.log_flow(t0)[:, None])
    C1, tau1 = phi_map(strip1, strip2, C, taus)
    tau_ok = bool(np.array_equal(tau1, taus))
    # one batch: member i runs on its own clock t0_i + s
    y0 = strip2.position(C1[:, 0], t0)
    res = solve(lin_b, 0.0, y0, track, t_eval=rel, offsets=t0, rtol=1e-12, atol=1e-15)
    y = res.x_eval.T
    resid = float(np.max(np.abs(C1 - sB.s(taus) * y)))

    # (iv) finite-difference derivatives on C >= d against R1, R2
    R1, R2 = derivative_bounds(strip1, strip2, d, tau_range)
    Cg = np.linspace(d, strip1.C_star, 12)[:-1] + 1e-4
    tg = np.linspace(lo_t + 0.01, hi_t, 25)
    CC, TT = np.meshgrid(Cg, tg)
    hC, ht = 1e-6, 1e-5
    dC = (phi_map(strip1, strip2, CC + hC, TT)[0] - phi_map(strip1, strip2, CC - hC, TT)[0]) / (2 * hC)
    dT = (phi_map(strip1, strip2, CC, TT + ht)[0] - phi_map(strip1, strip2, CC, TT - ht)[0]) / (2 * ht)
    dmax_C, dmax_T = float(np.max(np.abs(dC))), float(np.max(np.abs(dT)))
    monotone = bool(np.all(dC > 0))
    derivs = {
        "d": d,
        "R1": R1,
        "R2": R2,
        "max_dC": dmax_C,
        "max_dtau": dmax_T,
        "dC_ok": dmax_C <= R1,
        "dtau_ok": dmax_T <= R2,
    }

    # (iii) modulus of continuity with the inner / outer / mixed split
    v_d = float(np.max(phi_map(strip1, strip2, np.full(tg.size, d), tg)[0]))
    modulus, cases = [], {"inner": 0.0, "outer": 0.0, "mixed": 0.0}
    for delta in delta_grid:
        n = 400
        C = rng.uniform(1e-3, 1.0, n) * strip1.C_star
        t = rng.uniform(lo_t, hi_t, n)
        Cp = np.clip(C + rng.uniform(-delta, delta, n), 1e-4, strip1.C_star)
        tp = np.clip(t + rng.uniform(-delta, delta, n), lo_t, hi_t)
        a1, _ = phi_map(strip1, strip2, C, t)
        b1, _ = phi_map(strip1, strip2, Cp, tp)
        disp = np.maximum(np.abs(a1 - b1), np.abs(t - tp))
        inner = (C < d) & (Cp < d)
        outer = (C >= d) & (Cp >= d)
        mixed = ~(inner | outer)
        sup = {k: float(np.max(disp[m], initial=0.0)) for k, m in (("inner", inner), ("outer", outer), ("mixed", mixed))}
        bound = {
            "inner": max(v_d, delta),
            "outer": (R1 + R2) * delta,
            "mixed": max(v_d + (R1 + R2) * delta, delta),
        }
        for k in cases:
            cases[k] = max(cases[k], sup[k])
        modulus.append(
            {
                "delta": delta,
                "sup_displacement": float(disp.max()),
                "bound": max(bound.values()),
                "ok": all(sup[k] <= bound[k] * (1 + 1e-9) for k in sup),
            }
        )

    # Phi^-1 of {C1 >= v} lies in {C >= d1(v)}
    preimage = []
    for v in (0.5, 0.1, 0.01, 0.001):
        vv = v * strip2.C_star
        phis = []
        for tau in np.linspace(lo_t, hi_t, 7):

            def excess(c, tau=tau):
                return phi_map(strip1, strip2, c, tau)[0] - vv

            c = strip1.C_star
            while excess(c) > 0 and c > 1e-200:
                c *= 0.1
            phis.append(brentq(excess, c, strip1.C_star, xtol=1e-300, rtol=1e-12))
        preimage.append({"v": v, "d1": float(min(phis)), "d2": float(max(phis))})

    edge = phi_map(strip1, strip2, np.full(tg.size, strip1.C_star), tg)[0]
    return EquimorphReport(
        conjugacy_residual=resid,
        tau_preserved=tau_ok,
        modulus=modulus,
        cases=cases,
        derivative_bounds=derivs,
        preimage=preimage,
        boundary_residual=float(np.max(np.abs(edge - strip2.C_star))),
        monotone=monotone,
    )


def phi_table(strip1: SemiStrip, strip2: SemiStrip, C_grid, tau_grid) -> str:
    """CSV of the map graph with header C,tau,C1."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["C", "tau", "C1"])
    for tau in tau_grid:
        C1, _ = phi_map(strip1, strip2, np.asarray(C_grid, dtype=float), np.full(len(C_grid), tau))
        for c, c1 in zip(C_grid, C1):
            w.writerow([f"{c:.17g}", f"{tau:.17g}", f"{c1:.17g}"])
    return buf.getvalue()
