"""Circle arithmetic, ODE systems and trajectory integration.

Trajectories are integrated on the lift: the state is a real number whose
reduction mod 1 is the point of the circle. The log of the linearized flow
Lambda(t) = int a(s) ds, a = f_x along the curve, is carried as a second
state component so that it enjoys the same error control as the curve.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex


class IntegrationError(RuntimeError):
    """Step-size underflow or a non-finite right-hand side."""


def circle_distance(x, y):
    """d(x, y) = min(|x - y|, 1 - |x - y|) on R/Z; broadcasts over arrays."""
    d = np.abs(np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), 1.0))
    out = np.minimum(d, 1.0 - d)
    return float(out) if np.ndim(out) == 0 else out


def wrap(x):
    """Reduce to [0, 1); tiny negative inputs would otherwise round to 1.0."""
    out = np.mod(x, 1.0)
    out = np.where(out >= 1.0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- systems


@dataclass(frozen=True)
class TimeStructure:
    kind: str = "generic"  # generic | periodic | asymptotically_autonomous
    period: float | None = None
    f_minus: Callable | None = None
    f_plus: Callable | None = None
    half_width: float | None = None
    minus_text: str | None = None
    plus_text: str | None = None

    def __post_init__(self):
        if self.kind not in ("generic", "periodic", "asymptotically_autonomous"):
            raise ValueError(f"unknown time structure {self.kind!r}")
        if self.kind == "periodic" and not (self.period and self.period > 0):
            raise ValueError("periodic time structure needs a positive period")


def _fd_x(f: Callable) -> Callable:
    def fx(t, x):
        x = np.asarray(x, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (f(t, x + h) - f(t, x - h)) / (2 * h)

    return fx


@dataclass(frozen=True)
class OdeSystem:
    """Right-hand side f(t, x) of x' = f(t, x).

    `rhs` and `rhs_x` take (t, x) with numpy broadcasting. When `rhs_x` is
    omitted a central difference with step 1e-6 max(1, |x|) is used.
    `circle=False` marks systems on the line (linear test systems), where
    1-periodicity in x is not expected.
    """

    rhs: Callable
    rhs_x: Callable | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    time_structure: TimeStructure = field(default_factory=TimeStructure)
    a0_bound: float | None = None
    name: str = ""
    expression: ex.Expr | None = None
    circle: bool = True
    meta: Mapping = field(default_factory=dict)

    @classmethod
    def from_text(
        cls,
        text: str,
        params: Mapping[str, float] | None = None,
        *,
        period: float | None = None,
        limits: Mapping | None = None,
        name: str = "",
        circle: bool = True,
    ) -> "OdeSystem":
        params = dict(params or {})
        e = ex.parse(text, params)
        ex_x = ex.differentiate(e, "x")
        if period is not None:
            ts = TimeStructure("periodic", period=float(period))
        elif limits is not None:
            fm = ex.compile_expr(ex.parse(limits["minus"], params), params)
            fp = ex.compile_expr(ex.parse(limits["plus"], params), params)
            ts = TimeStructure(
                "asymptotically_autonomous",
                f_minus=fm,
                f_plus=fp,
                half_width=float(limits.get("half_width", 1.0)),
                minus_text=limits["minus"],
                plus_text=limits["plus"],
            )
        else:
            ts = TimeStructure()
        return cls(
            rhs=ex.compile_expr(e, params),
            rhs_x=ex.compile_expr(ex_x, params),
            params=params,
            time_structure=ts,
            name=name or text,
            expression=e,
            circle=circle,
        )

    def f(self, t, x):
        return self.rhs(t, x)

    def fx(self, t, x):
        if self.rhs_x is None:
            return _fd_x(self.rhs)(t, x)
        return self.rhs_x(t, x)

    @property
    def text(self) -> str | None:
        return ex.to_text(self.expression) if self.expression is not None else None

    def estimate_a0(self, horizon: float = 50.0, n: int = 256) -> float:
        """sup |f_x| sampled on an n x n grid over [-horizon, horizon] x [0, 1)."""
        if self.a0_bound is not None:
            return float(self.a0_bound)
        t = np.linspace(-horizon, horizon, n)
        x = np.arange(n) / n
        tt, xx = np.meshgrid(t, x, indexing="ij")
        return float(np.max(np.abs(self.fx(tt, xx))))

    def with_params(self, **kw) -> "OdeSystem":
        if self.expression is None:
            raise ValueError("only text-defined systems can be re-parameterized")
        p = dict(self.params)
        p.update(kw)
        return OdeSystem.from_text(ex.to_text(self.expression), p, name=self.name, circle=self.circle)


def linear_system(a: str | Callable, params: Mapping[str, float] | None = None, name: str = "") -> OdeSystem:
    """x' = a(t) x on the line; the zero solution has linearization a(t)."""
    if callable(a):
        return OdeSystem(
            rhs=lambda t, x: a(t) * x,
            rhs_x=lambda t, x: a(t) + 0.0 * np.asarray(x),
            name=name or "linear",
            circle=False,
        )
    return OdeSystem.from_text(f"({a})*x", params, name=name or f"x' = ({a}) x", circle=False)


# ------------------------------------------------------------- integrator

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


# continuous extension of order 4: y(t + theta h) = y + h K^T P [theta, .., theta^4]
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)
DENSE_THETA = (0.25, 0.5, 0.75)


def _dp_interp(y, hs, ks, theta):
    w = _P @ (theta ** np.arange(1, 5))
    return y + hs * sum(c * kk for c, kk in zip(w, ks) if c != 0.0)


def _hermite(ta, tb, ya, yb, fa, fb, t):
    h = tb - ta
    s = (t - ta) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * ya + h10 * h * fa + h01 * yb + h11 * h * fb


@dataclass
class BatchResult:
    t_eval: np.ndarray | None
    x_eval: np.ndarray | None  # (len(t_eval), n)
    L_eval: np.ndarray | None
    x_final: np.ndarray
    L_final: np.ndarray
    knots: tuple | None = None  # (t, x, f, L, a) arrays when dense=True
    n_steps: int = 0


def solve(
    system: OdeSystem,
    t0: float,
    x0,
    t1: float,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    t_eval: Sequence[float] | None = None,
    dense: bool = False,
    offsets=None,
    max_lift_step: float = 0.25,
    max_steps: int = 2_000_000,
    h_min_rel: float = 1e-14,
    use_exact: bool = True,
) -> BatchResult:
    """Integrate a batch of initial points with a shared adaptive step.

    The state of each member is (lifted x, Lambda) with Lambda' = f_x(t, x).
    `offsets` shifts the time argument per member, f(t + offset_i, x_i), so
    members with different start times can share one sweep. Steps are
    rejected when any member moves by max_lift_step or more, which keeps the
    winding count of the lift unambiguous.

    Systems carrying an exact solution operator in ``meta["exact_flow"]``
    (constructed models whose foliation is known in closed form) are
    evaluated through it unless `use_exact` is false.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    n = x0.size
    off = np.zeros(n) if offsets is None else np.asarray(offsets, dtype=float)
    exact = system.meta.get("exact_flow") if use_exact else None
    if exact is not None:
        return _solve_exact(system, exact, t0, x0, t1, off, t_eval, dense)
    f, fx = system.f, system.fx
    # finite-difference derivatives carry ~1e-10 roundoff, which a pure
    # relative test on the log-flow increment would chase forever
    L_floor = 1e-2 * rtol if system.rhs_x is not None else max(1e-2 * rtol, 1e-7)

    both = system.meta.get("rhs_both")

    def rhs(t, y):
        tt = t + off
        if both is not None:
            dx, da = both(tt, y[0])
        else:
            dx = np.asarray(f(tt, y[0]), dtype=float)
            da = np.asarray(fx(tt, y[0]), dtype=float)
        out = np.empty_like(y)
        out[0] = dx
        out[1] = da
        return out

    direction = 1.0 if t1 >= t0 else -1.0
    y = np.zeros((2, n))
    y[0] = x0
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        order = np.argsort(direction * t_eval, kind="stable")
        x_ev = np.full((t_eval.size, n), np.nan)
        L_ev = np.full((t_eval.size, n), np.nan)
        ev_ptr = 0
        ev_sorted = t_eval[order]
        while ev_ptr < ev_sorted.size and ev_sorted[ev_ptr] == t0:
            x_ev[order[ev_ptr]] = y[0]
            L_ev[order[ev_ptr]] = 0.0
            ev_ptr += 1
    span = abs(t1 - t0)
    if span == 0:
        k = rhs(t0, y)
        knots = None
        if dense:
            knots = (np.array([t0]), y[0][None].copy(), k[0][None].copy(), y[1][None].copy(), k[1][None].copy())
        res = BatchResult(t_eval, None, None, y[0].copy(), y[1].copy(), knots)
        if t_eval is not None:
            res.x_eval, res.L_eval = x_ev, L_ev
        return res

    k0 = rhs(t0, y)
    if not np.all(np.isfinite(k0)):
        raise IntegrationError(f"non-finite right-hand side at t={t0}")
    scale = atol + rtol * np.abs(y)
    d0 = np.max(np.abs(y) / scale)
    d1 = np.max(np.abs(k0) / scale)
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, span, max_lift_step / max(np.max(np.abs(k0[0])), 1e-12) * 0.5)
    h = max(h, 1e-10 * max(1.0, span))

    t = t0
    ks = [None] * 7
    ks[0] = k0
    kt, kx, kf, kL, ka = ([t0], [y[0].copy()], [k0[0].copy()], [y[1].copy()], [k0[1].copy()]) if dense else ([],) * 5
    steps = 0
    while direction * (t1 - t) > 0:
        if steps >= max_steps:
            raise IntegrationError(f"too many steps near t={t}")
        h = min(h, abs(t1 - t))
        hs = direction * h
        for i in range(1, 7):
            yi = y + hs * sum(a * kk for a, kk in zip(_A[i], ks[:i]) if a != 0.0)
            ks[i] = rhs(t + _C[i] * hs, yi)
        y_new = yi  # stage 7 evaluates at the 5th-order solution
        err = hs * sum(e * kk for e, kk in zip(_E, ks) if e != 0.0)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(ks[6]))):
            h *= 0.25
            if h < h_min_rel * max(1.0, abs(t)):
                raise IntegrationError(f"non-finite right-hand side near t={t}")
            continue
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        # log-flow error is measured against its own increment so that the
        # global error stays below rtol * int |a| ds
        sc[1] = atol + rtol * np.abs(y_new[1] - y[1]) + L_floor * h
        en = np.max(np.abs(err) / sc)
        jump = np.max(np.abs(y_new[0] - y[0]))
        if en <= 1.0 and jump < max_lift_step:
            t_new = t + hs
            if t_eval is not None:
                while ev_ptr < ev_sorted.size and direction * (ev_sorted[ev_ptr] - t_new) <= 0:
                    te = ev_sorted[ev_ptr]
                    j = order[ev_ptr]
                    ye = _dp_interp(y, hs, ks, (te - t) / hs)
                    x_ev[j], L_ev[j] = ye[0], ye[1]
                    ev_ptr += 1
            if dense:
                # interior knots from the continuous extension keep the cubic
                # Hermite pieces short enough for the step tolerance
                for th in DENSE_THETA:
                    tm = t + th * hs
                    ym = _dp_interp(y, hs, ks, th)
                    km = rhs(tm, ym)
                    kt.append(tm)
                    kx.append(ym[0].copy())
                    kf.append(km[0].copy())
                    kL.append(ym[1].copy())
                    ka.append(km[1].copy())
            t = t_new if direction * (t1 - t_new) > 1e-13 * max(1.0, abs(t1)) else t1
            y = y_new
            ks[0] = ks[6]
            steps += 1
            if dense:
                kt.append(t)
                kx.append(y[0].copy())
                kf.append(ks[0][0].copy())
                kL.append(y[1].copy())
                ka.append(ks[0][1].copy())
            fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            h = h * fac
        else:
            fac = max(0.2, 0.9 * en ** -0.2) if en > 1.0 else 0.5
            if jump >= max_lift_step:
                fac = min(fac, 0.5 * max_lift_step / jump)
            h = h * fac
        if h < h_min_rel * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t}")
    res = BatchResult(None, None, None, y[0].copy(), y[1].copy(), n_steps=steps)
    if t_eval is not None:
        res.t_eval, res.x_eval, res.L_eval = t_eval, x_ev, L_ev
    if dense:
        res.knots = tuple(np.asarray(v) for v in (kt, kx, kf, kL, ka))
    return res


def _solve_exact(system, exact, t0, x0, t1, off, t_eval, dense, knot_dt=0.004) -> BatchResult:
    start = t0 + off
    xf, Lf = exact(start, x0, t1 + off)
    res = BatchResult(None, None, None, np.asarray(xf), np.asarray(Lf))
    if t_eval is not None:
        te = np.asarray(t_eval, dtype=float)
        X, L = exact(start[None, :], x0[None, :], te[:, None] + off[None, :])
        res.t_eval, res.x_eval, res.L_eval = te, X, L
    if dense:
        m = max(1, int(np.ceil(abs(t1 - t0) / knot_dt)))
        kt = np.linspace(t0, t1, m + 1)
        tt = kt[:, None] + off[None, :]
        kx, kL = exact(start[None, :], x0[None, :], tt)
        res.knots = (kt, kx, system.f(tt, kx), kL, system.fx(tt, kx))
        res.n_steps = m
    return res


def flow(system: OdeSystem, t0: float, x0, t1: float, **kw) -> np.ndarray:
    """Lifted endpoints of a batch of initial points."""
    return solve(system, t0, x0, t1, **kw).x_final


# --------------------------------------------------------- integral curves


@dataclass(frozen=True)
class IntegralCurve:
    """A single integrated solution with cubic Hermite dense output.

    `knots` are sorted by time; `lifted` holds the lifted x values and
    `logflow` the running integral of a = f_x from t0.
    """

    t0: float
    x0: float
    knot_t: np.ndarray
    lifted: np.ndarray
    slope: np.ndarray
    logflow: np.ndarray
    a_values: np.ndarray
    rtol: float = 1e-9
    atol: float = 1e-12

    @property
    def span(self) -> tuple[float, float]:
        return float(self.knot_t[0]), float(self.knot_t[-1])

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.knot_t, self.lifted])

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.span
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ValueError(f"time outside curve span [{lo}, {hi}]")
        i = np.clip(np.searchsorted(self.knot_t, t, side="right") - 1, 0, len(self.knot_t) - 2)
        return t, i

    def _interp(self, t, vals, ders):
        if len(self.knot_t) == 1:
            return np.full(np.shape(t), vals[0]) if np.ndim(t) else float(vals[0])
        t, i = self._locate(t)
        out = _hermite(self.knot_t[i], self.knot_t[i + 1], vals[i], vals[i + 1], ders[i], ders[i + 1], t)
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, t):
        """Lifted position at time(s) t."""
        return self._interp(t, self.lifted, self.slope)

    def circle(self, t):
        return wrap(self(t))

    def log_flow_from_start(self, t):
        return self._interp(t, self.logflow, self.a_values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "lifted_x"])
        for t, lx in zip(self.knot_t, self.lifted):
            w.writerow([f"{t:.17g}", f"{wrap(lx):.17g}", f"{lx:.17g}"])
        return buf.getvalue()


def integrate(
    system: OdeSystem,
    t0: float,
    x0: float,
    t1: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    *,
    lift: float | None = None,
    use_exact: bool = True,
) -> IntegralCurve:
    """Integrate one solution from (t0, x0) to t1 (either direction).

    `x0` is reduced mod 1 for circle systems unless an explicit starting
    `lift` is supplied.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    start = float(x0) if lift is None else float(lift)
    if lift is None and system.circle:
        start = wrap(start)
    res = solve(system, t0, [start], t1, rtol=rtol, atol=atol, dense=True, use_exact=use_exact)
    kt, kx, kf, kL, ka = res.knots
    if t1 < t0:
        kt, kx, kf, kL, ka = (v[::-1] for v in (kt, kx, kf, kL, ka))
    return IntegralCurve(
        t0=float(t0),
        x0=wrap(start) if system.circle else start,
        knot_t=np.asarray(kt, dtype=float),
        lifted=kx[:, 0].copy(),
        slope=kf[:, 0].copy(),
        logflow=kL[:, 0].copy(),
        a_values=ka[:, 0].copy(),
        rtol=rtol,
        atol=atol,
    )


def variational(system: OdeSystem, curve: IntegralCurve, tau: float, t: float) -> float:
    """Log of the linearized flow, Lambda(t, tau) = int_tau^t f_x(s, x(s)) ds.

    Returned as a logarithm; exponentiate only when the flow itself is needed.
    """
    lo, hi = curve.span
    if not (lo - 1e-12 <= min(tau, t) and max(tau, t) <= hi + 1e-12):
        raise ValueError(f"[{min(tau, t)}, {max(tau, t)}] not inside curve span [{lo}, {hi}]")
    return float(curve.log_flow_from_start(t) - curve.log_flow_from_start(tau))
