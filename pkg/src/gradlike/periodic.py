"""Poincare maps, rotation numbers and periodic orbits of time-periodic
circle equations, and almost-period scans of single trajectories.

For a T-periodic field the time-T map P of the section t = 0 is an
orientation preserving circle diffeomorphism. Its lift is sampled on a grid
and interpolated by a monotone cubic; periodic orbits are the roots of
lift(P^q)(x) - x - p, located on the grid and polished with brentq against
direct integration. Multipliers are exp(Lambda) over q periods.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .bunch import EquippedSet
from .ode import IntegralCurve, OdeSystem, circle_distance, solve, wrap

Q_MAX = 64
STABILITY_MARGIN = 1e-6


class PeriodicError(ValueError):
    pass


def _period(system: OdeSystem) -> float:
    ts = system.time_structure
    if ts is None or ts.kind != "periodic":
        raise PeriodicError("system is not declared time-periodic")
    return float(ts.period)


@dataclass(frozen=True)
class PoincareMap:
    system: OdeSystem = field(repr=False)
    period: float
    x: np.ndarray
    y: np.ndarray  # lifted images of x, plus the image of x[0] + 1 as y[-1]
    degree: int
    monotone: bool
    rotation_number: float
    rotation_error: float
    rational_guess: Fraction | None
    rtol: float = 1e-11

    def __post_init__(self):
        xs = np.append(self.x, self.x[0] + 1.0)
        disp = np.asarray(self.y) - xs
        object.__setattr__(self, "_disp", PchipInterpolator(xs, disp, extrapolate=False))

    def __call__(self, x):
        """Lifted P(x), interpolated."""
        x = np.asarray(x, dtype=float)
        k = np.floor(x - self.x[0])
        return x + self._disp(x - k)

    def exact(self, x, q: int = 1) -> np.ndarray:
        """Lifted P^q(x) by direct integration over q periods."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return solve(self.system, 0.0, x, q * self.period, rtol=self.rtol, atol=1e-14).x_final

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "grid_size": int(self.x.size),
            "degree": self.degree,
            "monotone": self.monotone,
            "rotation_number": self.rotation_number,
            "rotation_error": self.rotation_error,
            "rational": None if self.rational_guess is None else str(self.rational_guess),
        }


def rotation_number(system_or_map, iterations: int = 200, starts: int = 8, q_max: int = Q_MAX, rtol: float = 1e-9):
    """(rho, error bar, p/q or None) from the lifted displacement over N and 2N periods.

    The error bar combines the spread over starting points with the change
    between N and 2N iterations. A convergent p/q with q <= q_max is proposed
    when it lies within the error bar.
    """
    system = system_or_map.system if isinstance(system_or_map, PoincareMap) else system_or_map
    T = _period(system)
    x0 = np.arange(starts) / starts
    N = int(iterations)
    res = solve(system, 0.0, x0, 2 * N * T, t_eval=[N * T, 2 * N * T], rtol=rtol, atol=1e-14)
    rho_n = (res.x_eval[0] - x0) / N
    rho_2n = (res.x_eval[1] - x0) / (2 * N)
    rho = float(np.mean(rho_2n))
    err = float(np.ptp(rho_2n) + np.max(np.abs(rho_2n - rho_n)) + 1e-12)
    guess = Fraction(rho).limit_denominator(q_max)
    rational = guess if abs(float(guess) - rho) <= max(err, 1e-12) else None
    return rho, err, rational


def poincare_map(system: OdeSystem, grid_size: int = 256, tol: float = 1e-11, iterations: int = 200) -> PoincareMap:
    T = _period(system)
    x = np.arange(grid_size) / grid_size
    xs = np.append(x, 1.0)
    y = solve(system, 0.0, xs, T, rtol=tol, atol=1e-14).x_final
    deg = int(round((y[-1] - y[0])))
    if abs(y[-1] - y[0] - 1.0) > 1e-6:
        raise PeriodicError(f"lifted map is not degree one (got {y[-1] - y[0]:.6g})")
    monotone = bool(np.all(np.diff(y) > 0))
    if not monotone:
        raise PeriodicError("Poincare samples not monotone; tighten the tolerance")
    rho, err, rat = rotation_number(system, iterations)
    return PoincareMap(system, T, x, y, deg, monotone, rho, err, rat, tol)


@dataclass(frozen=True)
class PeriodicOrbit:
    point: float
    period_q: int
    rotation_p: int
    multiplier: float
    stability: str  # stable | unstable | nonhyperbolic
    residual: float
    orbit: tuple = ()

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "q": self.period_q,
            "p": self.rotation_p,
            "multiplier": self.multiplier,
            "stability": self.stability,
            "residual": self.residual,
            "orbit": list(self.orbit),
        }


def _stability(mult: float) -> str:
    if mult > 1 + STABILITY_MARGIN:
        return "unstable"
    if mult < 1 - STABILITY_MARGIN:
        return "stable"
    return "nonhyperbolic"


def periodic_points(P: PoincareMap, q: int, p: int, grid_size: int | None = None, tol: float = 1e-10) -> list:
    """Periodic orbits of type p/q, one entry per orbit (points of one orbit are grouped).

    Grid points where the displacement vanishes without a sign change
    (a tangency or a whole family of periodic points) are reported as
    nonhyperbolic orbits.
    """
    if q < 1:
        raise PeriodicError("q must be positive")
    system, T = P.system, P.period
    n = grid_size or P.x.size
    xg = np.arange(n + 1) / n
    res = solve(system, 0.0, xg, q * T, rtol=P.rtol, atol=1e-14)
    G = res.x_final - xg - p

    def g(x):
        return float(P.exact([x], q)[0] - x - p)

    roots = []
    flat = np.abs(G) <= 1e-9
    Gp = np.concatenate([G[-2:-1], G])  # G[-1 + 1] wraps to G[n - 1]
    for i in range(n):
        if flat[i]:
            # a grid hit is simple when the displacement changes sign across it
            left, right = Gp[i], G[i + 1]
            simple = not flat[(i - 1) % n] and not flat[i + 1] and left * right < 0
            roots.append((xg[i], not simple))
        elif not flat[i + 1] and G[i] * G[i + 1] < 0:
            roots.append((brentq(g, xg[i], xg[i + 1], xtol=tol, rtol=1e-15), False))

    orbits, seen = [], []
    for r, degenerate in roots:
        r = wrap(r)
        if any(circle_distance(r, s) < 10 * tol for s in seen):
            continue
        times = np.arange(q + 1) * T
        sr = solve(system, 0.0, [r], q * T, t_eval=times, rtol=P.rtol, atol=1e-14)
        pts = tuple(sorted(wrap(v) for v in sr.x_eval[:q, 0]))
        seen.extend(pts)
        mult = float(np.exp(sr.L_final[0]))
        resid = abs(float(sr.x_final[0] - r - p))
        stab = "nonhyperbolic" if degenerate else _stability(mult)
        orbits.append(PeriodicOrbit(float(r), int(q), int(p), mult, stab, resid, pts))
    return orbits


def equipped_set_from_periodic(orbits) -> EquippedSet:
    """Trace points of hyperbolic periodic orbits: unstable -> U, stable -> S."""
    pts = []
    for o in orbits:
        if o.stability == "nonhyperbolic":
            raise PeriodicError(f"orbit through {o.point:.6g} is not hyperbolic")
        label = "U" if o.stability == "unstable" else "S"
        pts.extend((x, label) for x in (o.orbit or (o.point,)))
    if not pts:
        raise PeriodicError("no periodic orbits")
    return EquippedSet(tuple(pts))


def periodic_report(P: PoincareMap) -> dict:
    """Rotation data and, for rational rotation, the orbit table."""
    out = P.to_dict()
    if P.rational_guess is None:
        out["orbits"] = []
        out["verdict"] = "rotation number irrational at working precision"
        return out
    q, p = P.rational_guess.denominator, P.rational_guess.numerator
    orbits = periodic_points(P, q, p)
    out["orbits"] = [o.to_dict() for o in orbits]
    hyper = bool(orbits) and all(o.stability != "nonhyperbolic" for o in orbits)
    out["verdict"] = "hyperbolic periodic structure" if hyper else "nonhyperbolic periodic structure"
    if hyper:
        out["equipped_set"] = equipped_set_from_periodic(orbits).to_dict()
    return out


def orbits_csv(orbits) -> str:
    lines = ["point,q,p,multiplier,stability"]
    for o in orbits:
        lines.append(f"{o.point:.12f},{o.period_q},{o.rotation_p},{o.multiplier:.12g},{o.stability}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ almost periods


@dataclass(frozen=True)
class AlmostPeriodReport:
    epsilon: float
    window: tuple
    found_periods: np.ndarray = field(repr=False)
    max_gap: float
    relatively_dense: bool
    sup_distances: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "window": list(self.window),
            "count": int(self.found_periods.size),
            "first_periods": self.found_periods[:20].tolist(),
            "max_gap": self.max_gap,
            "relatively_dense": self.relatively_dense,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def almost_periods(
    trajectory: IntegralCurve,
    epsilon: float,
    l_max: float,
    l_step: float = 0.05,
    *,
    t_start: float | None = None,
    t_end: float | None = None,
) -> AlmostPeriodReport:
    """Shifts l in (0, l_max] with sup_t d(x(t + l), x(t)) < epsilon.

    Samples are taken every l_step so that shifts are index offsets. The
    scanned window is [t_start, t_end] (default: the trajectory span), which
    must be at least 2 l_max long.
    """
    lo, hi = trajectory.span
    a = lo if t_start is None else float(t_start)
    b = hi if t_end is None else float(t_end)
    if a < lo - 1e-12 or b > hi + 1e-12:
        raise PeriodicError("scan window outside the trajectory")
    if b - a < 2 * l_max - 1e-9:
        raise PeriodicError(f"trajectory window {b - a:.4g} shorter than 2 l_max = {2 * l_max:.4g}")
    n = int(np.floor((b - a) / l_step + 1e-9))
    t = a + l_step * np.arange(n + 1)
    x = trajectory(t)
    shifts = np.arange(1, int(np.floor(l_max / l_step + 1e-9)) + 1)
    sup = np.array([np.max(circle_distance(x[j:], x[:-j])) for j in shifts])
    ls = shifts * l_step
    found = ls[sup < epsilon]
    if found.size:
        edges = np.concatenate([[0.0], found, [l_max]])
        max_gap = float(np.max(np.diff(edges)))
    else:
        max_gap = float(l_max)
    return AlmostPeriodReport(
        epsilon=float(epsilon),
        window=(a, b),
        found_periods=found,
        max_gap=max_gap,
        relatively_dense=bool(found.size and max_gap <= l_max / 5),
        sup_distances=sup,
    )

