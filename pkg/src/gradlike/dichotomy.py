"""Exponential dichotomy estimates and quadratic Lyapunov functions.

A dichotomy estimate fits constants (C, lambda) to the log-flow
Lambda(t, tau) sampled along a curve. With pairs tau <= t in the sampled
semi-axis:

* stable type:   Lambda(t, tau) <= ln C - lambda (t - tau)
* unstable type: Lambda(t, tau) >= lambda (t - tau) - ln C

lambda is the worst slope over pairs at least one window apart and C is
then the smallest constant making the bound hold for every pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ode import IntegralCurve, OdeSystem

LAMBDA_MIN = 0.05
WINDOW = 5.0


class DichotomyError(ValueError):
    pass


class HorizonTooShortError(DichotomyError):
    pass


class DichotomyConflictError(DichotomyError):
    pass


class NonHyperbolicError(DichotomyError):
    pass


@dataclass(frozen=True)
class DichotomyEstimate:
    semiaxis: str  # R_plus | R_minus
    kind: str  # stable | unstable | marginal
    C_hat: float
    lambda_hat: float
    horizon: float
    max_residual: float

    def to_dict(self) -> dict:
        return {
            "semiaxis": self.semiaxis,
            "kind": self.kind,
            "C": self.C_hat,
            "lambda": self.lambda_hat,
            "horizon": self.horizon,
            "max_residual": self.max_residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _pair_slopes(t: np.ndarray, L: np.ndarray, window: float, chunk: int = 256):
    """Max and min of (L_j - L_i)/(t_j - t_i) over i < j with t_j - t_i >= window.

    `L` may be (N,) or (N, m) for m curves sampled on the same times.
    """
    L2 = L[:, None] if L.ndim == 1 else L
    m = L2.shape[1]
    hi = np.full(m, -np.inf)
    lo = np.full(m, np.inf)
    dt = t[None, :] - t[:, None]
    mask = dt >= window - 1e-12
    if not mask.any():
        return None, None
    ii, jj = np.nonzero(mask)
    gaps = dt[ii, jj]
    for c in range(0, m, chunk):
        blk = L2[:, c : c + chunk]
        sl = (blk[jj] - blk[ii]) / gaps[:, None]
        hi[c : c + chunk] = sl.max(axis=0)
        lo[c : c + chunk] = sl.min(axis=0)
    if L.ndim == 1:
        return float(hi[0]), float(lo[0])
    return hi, lo


def _log_c(L: np.ndarray, t: np.ndarray, lam, kind: str):
    # running extremum gives max over tau <= t in O(N)
    if kind == "stable":
        g = L + lam * t[:, None] if L.ndim == 2 else L + lam * t
        return np.max(g - np.minimum.accumulate(g, axis=0), axis=0)
    g = lam * t[:, None] - L if L.ndim == 2 else lam * t - L
    return np.max(g - np.minimum.accumulate(g, axis=0), axis=0)


def fit_dichotomy(
    t,
    L,
    semiaxis: str,
    window: float = WINDOW,
    lambda_min: float = LAMBDA_MIN,
    rate_from: float | None = None,
) -> DichotomyEstimate:
    """Fit (kind, C, lambda) to log-flow samples L(t) with t ascending.

    `rate_from` restricts the rate fit to samples at least that far (in |t|)
    from the section t = 0; C is still fitted over every pair. Since a
    dichotomy on a semi-axis is unaffected by a finite transient, this
    separates asymptotic behaviour from the transient.
    """
    t = np.asarray(t, dtype=float)
    L = np.asarray(L, dtype=float)
    horizon = float(np.max(np.abs(t)))
    if horizon < 10 * window - 1e-9:
        raise HorizonTooShortError(f"horizon {horizon} shorter than ten windows of {window}")
    if rate_from is not None:
        sel = np.abs(t) >= rate_from
        hi, lo = _pair_slopes(t[sel], L[sel], window)
    else:
        hi, lo = _pair_slopes(t, L, window)
    if hi is None:
        raise HorizonTooShortError("no sample pairs one window apart")
    lam_s, lam_u = -hi, lo
    ok_s, ok_u = lam_s >= lambda_min, lam_u >= lambda_min
    if ok_s and ok_u:
        raise DichotomyConflictError("both stable and unstable fits succeed")
    if ok_s:
        kind, lam = "stable", lam_s
    elif ok_u:
        kind, lam = "unstable", lam_u
    else:
        return DichotomyEstimate(semiaxis, "marginal", 1.0, max(0.0, lam_s, lam_u), horizon, 0.0)
    lnC = float(_log_c(L, t, lam, kind))
    resid = _residual(t, L, lam, lnC, kind)
    return DichotomyEstimate(semiaxis, kind, float(np.exp(lnC)), float(lam), horizon, resid)


def _residual(t, L, lam, lnC, kind) -> float:
    dt = t[None, :] - t[:, None]
    dL = L[None, :] - L[:, None]
    mask = dt >= 0
    if kind == "stable":
        v = dL - (lnC - lam * dt)
    else:
        v = (lam * dt - lnC) - dL
    return float(np.max(v[mask]))


def classify_many(
    t: np.ndarray,
    L: np.ndarray,
    window: float = WINDOW,
    lambda_min: float = LAMBDA_MIN,
    rate_from: float | None = None,
):
    """Vectorized kinds for curves sampled on common times; L is (N, m).

    Returns (kinds, lambdas) with kinds in {'stable', 'unstable', 'marginal'}.
    """
    t = np.asarray(t, dtype=float)
    sel = np.abs(t) >= rate_from if rate_from is not None else np.ones(t.size, bool)
    order = np.argsort(t[sel])
    hi, lo = _pair_slopes(t[sel][order], L[sel][order], window)
    lam_s, lam_u = -hi, lo
    kinds = np.where(lam_s >= lambda_min, "stable", np.where(lam_u >= lambda_min, "unstable", "marginal"))
    lam = np.maximum(np.maximum(lam_s, lam_u), 0.0)
    return kinds, lam


def _semiaxis_times(semiaxis: str, horizon: float, dt: float) -> np.ndarray:
    n = int(round(horizon / dt))
    t = np.linspace(0.0, horizon, n + 1)
    if semiaxis == "R_plus":
        return t
    if semiaxis == "R_minus":
        return -t[::-1]
    raise ValueError(f"unknown semiaxis {semiaxis!r}")


def estimate_dichotomy(
    system: OdeSystem,
    curve: IntegralCurve,
    semiaxis: str,
    horizon: float,
    window: float = WINDOW,
    *,
    lambda_min: float = LAMBDA_MIN,
    dt: float | None = None,
    rate_from: float | None = None,
) -> DichotomyEstimate:
    if window <= 0:
        raise ValueError("window must be positive")
    if horizon < 10 * window:
        raise HorizonTooShortError(f"horizon {horizon} shorter than ten windows of {window}")
    dt = dt or min(0.05, window / 20)
    t = _semiaxis_times(semiaxis, horizon, dt)
    L = curve.log_flow_from_start(t)
    return fit_dichotomy(t, L, semiaxis, window, lambda_min, rate_from)


# ------------------------------------------------------- time reflection


def reflect_system(system: OdeSystem) -> OdeSystem:
    """g(t, x) = -f(-t, x): solutions are x(-t) for solutions x of f."""
    f, fx = system.f, system.fx
    return OdeSystem(
        rhs=lambda t, x: -f(-np.asarray(t), x),
        rhs_x=lambda t, x: -fx(-np.asarray(t), x),
        params=system.params,
        name=f"reflected({system.name})",
        circle=system.circle,
    )


def reflect_curve(curve: IntegralCurve) -> IntegralCurve:
    return IntegralCurve(
        t0=-curve.t0,
        x0=curve.x0,
        knot_t=-curve.knot_t[::-1],
        lifted=curve.lifted[::-1].copy(),
        slope=-curve.slope[::-1],
        logflow=curve.logflow[::-1].copy(),
        a_values=-curve.a_values[::-1],
        rtol=curve.rtol,
        atol=curve.atol,
    )


# ----------------------------------------------------- Lyapunov functions


@dataclass(frozen=True)
class LyapunovFunction:
    t: np.ndarray
    s2: np.ndarray
    a: np.ndarray
    C_hat: float
    lambda_hat: float
    a0: float
    truncation_tail: float
    nonlinearity_modulus: tuple
    s_residual: float
    system: OdeSystem = field(repr=False)
    curve: IntegralCurve = field(repr=False)

    @property
    def s_values(self) -> np.ndarray:
        return np.column_stack([self.t, np.sqrt(self.s2)])

    @property
    def lower_bound(self) -> float:
        return 1.0 / (2.0 * self.a0)

    @property
    def upper_bound(self) -> float:
        return self.C_hat**2 / (2.0 * self.lambda_hat)

    def s(self, t):
        return np.sqrt(np.interp(t, self.t, self.s2))

    def S(self, t, u):
        return np.interp(t, self.t, self.s2) * np.asarray(u) ** 2

    def h(self, t, u):
        """Nonlinear remainder f(t, g+u) - f(t, g) - a(t) u along the curve."""
        g = self.curve(t)
        sysm = self.system
        return sysm.f(t, g + u) - sysm.f(t, g) - sysm.fx(t, g) * u


def _s_squared(system: OdeSystem, curve: IntegralCurve, grid: np.ndarray):
    """s^2(t) = int_t^H exp(2 Lambda(sigma, t)) d sigma on the grid (grid[-1] = H).

    q = s^2 solves q' = -1 - 2 a q with q(H) = 0; classical RK4 backwards in
    time, which is the contracting direction for a stable-type curve.
    Returns (q, a) with a sampled on the grid.
    """
    mid = 0.5 * (grid[:-1] + grid[1:])
    a = system.fx(grid, curve(grid))
    am = system.fx(mid, curve(mid))
    q = np.zeros(grid.size)
    for i in range(grid.size - 2, -1, -1):
        h = grid[i] - grid[i + 1]
        qi = q[i + 1]
        k1 = -1 - 2 * a[i + 1] * qi
        k2 = -1 - 2 * am[i] * (qi + 0.5 * h * k1)
        k3 = -1 - 2 * am[i] * (qi + 0.5 * h * k2)
        k4 = -1 - 2 * a[i] * (qi + h * k3)
        q[i] = qi + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return q, a


def lyapunov(
    system: OdeSystem,
    curve: IntegralCurve,
    est: DichotomyEstimate,
    *,
    dt: float = 0.01,
    tail_tol: float = 1e-6,
    bound_slack: float = 1e-9,
) -> LyapunovFunction:
    """Quadratic Lyapunov function S(t, u) = s(t)^2 u^2 along a stable curve.

    The improper integral is truncated at the end of the estimate's horizon;
    the grid keeps only times where the exponential tail bound
    C^2 exp(-2 lambda (H - t)) / (2 lambda) is below `tail_tol`.
    Curves of unstable type on R_minus are handled by time reflection.
    """
    if est.kind == "unstable" and est.semiaxis == "R_minus":
        rs = reflect_system(system)
        rc = reflect_curve(curve)
        rest = DichotomyEstimate("R_plus", "stable", est.C_hat, est.lambda_hat, est.horizon, est.max_residual)
        return lyapunov(rs, rc, rest, dt=dt, tail_tol=tail_tol, bound_slack=bound_slack)
    if est.kind != "stable" or est.semiaxis != "R_plus":
        raise NonHyperbolicError(f"need a stable estimate on R_plus, got {est.kind} on {est.semiaxis}")
    H = min(est.horizon, curve.span[1])
    C, lam = est.C_hat, est.lambda_hat
    margin = max(0.0, np.log(C * C / (2 * lam * tail_tol)) / (2 * lam))
    t_max = H - margin
    if t_max <= 0:
        raise HorizonTooShortError(f"tail bound above {tail_tol}: need horizon > {margin:.3g}")
    n = int(np.ceil(H / dt))
    grid = np.linspace(0.0, H, n + 1)
    s2_full, a_full = _s_squared(system, curve, grid)
    keep = grid <= t_max + 1e-12
    t = grid[keep]
    s2 = s2_full[keep]
    tail = C * C * np.exp(-2 * lam * (H - t[-1])) / (2 * lam)

    x = curve(grid)
    a0 = float(np.max(np.abs(a_full)))
    a = a_full[keep]

    lo, hi = 1.0 / (2 * a0), C * C / (2 * lam)
    # the tail allowance carries a 1e-3 margin for the RK4 error on the
    # exponentially small tail component itself
    if np.any(s2 < lo * (1 - bound_slack) - tail * (1 + 1e-3)) or np.any(s2 > hi * (1 + bound_slack)):
        raise NonHyperbolicError("two-sided bound on s^2 violated; estimate inconsistent with the curve")

    s = np.sqrt(s2)
    resid = _s_prime_residual(t, s, a)

    r_vals = np.array([1e-3, 3e-3, 1e-2, 3e-2, 1e-1])
    gx = x[keep]
    mods = []
    for r in r_vals:
        hp = system.f(t, gx + r) - system.f(t, gx) - a * r
        hm = system.f(t, gx - r) - system.f(t, gx) + a * r
        mods.append(float(max(np.max(np.abs(hp)), np.max(np.abs(hm))) / r))
    return LyapunovFunction(
        t=t,
        s2=s2,
        a=a,
        C_hat=C,
        lambda_hat=lam,
        a0=a0,
        truncation_tail=float(tail),
        nonlinearity_modulus=tuple(zip(r_vals.tolist(), mods)),
        s_residual=resid,
        system=system,
        curve=curve,
    )


def _s_prime_residual(t, s, a) -> float:
    """Max |s' + 1/(2s) + a s| with s' from a five-point stencil."""
    if t.size < 5:
        return 0.0
    h = t[1] - t[0]
    ds = (s[:-4] - 8 * s[1:-3] + 8 * s[3:-1] - s[4:]) / (12 * h)
    mid = slice(2, -2)
    return float(np.max(np.abs(ds + 1 / (2 * s[mid]) + a[mid] * s[mid])))


@dataclass(frozen=True)
class DecayReport:
    max_ratio: float
    admissible_u: float
    tested: tuple


def lyapunov_decay_check(
    system: OdeSystem,
    curve: IntegralCurve,
    lyap: LyapunovFunction,
    u_max: float,
    samples: int = 1000,
    *,
    seed: int = 0,
    halvings: int = 20,
) -> DecayReport:
    """Check dS/dt <= -u^2/2 along solutions near the curve.

    With s' = -1/(2s) - a s the derivative reduces to -u^2 + 2 s^2 u h(t, u).
    The amplitude is halved from `u_max` until every sampled (t0, u0) with
    |u0| <= amplitude satisfies the bound.
    """
    rng = np.random.default_rng(seed)
    t0 = rng.uniform(lyap.t[0], lyap.t[-1], samples)
    frac = rng.uniform(-1.0, 1.0, samples)
    frac[frac == 0] = 0.5
    s2 = np.interp(t0, lyap.t, lyap.s2)
    g = curve(t0)
    f0 = system.f(t0, g)
    a = system.fx(t0, g)
    amp = float(u_max)
    tested = []
    worst = np.inf
    for _ in range(halvings + 1):
        u = frac * amp
        h = system.f(t0, g + u) - f0 - a * u
        ratio = 2 * s2 * h / u  # dS/dt = -(1 - ratio) u^2
        worst = float(np.max(ratio))
        tested.append((amp, worst))
        if worst <= 0.5 + 1e-12:
            return DecayReport(max_ratio=worst, admissible_u=amp, tested=tuple(tested))
        amp *= 0.5
    raise NonHyperbolicError(f"decay bound fails down to amplitude {amp * 2:.3g} (ratio {worst:.3g})")


@dataclass(frozen=True)
class IsolatingNeighborhood:
    t: np.ndarray
    upper: np.ndarray  # u(t) = +c / s(t)
    lower: np.ndarray
    c: float
    margin: float


def isolating_neighborhood(
    lyap: LyapunovFunction,
    curve: IntegralCurve,
    c: float,
    admissible_u: float | None = None,
) -> IsolatingNeighborhood:
    """Collar bounded by the level lines S = c^2.

    The margin is the infimum over the grid of -dS/dt on the boundary, i.e.
    the inner product of grad S with the tangent (1, u') of the flow; it must
    be positive for the collar to be isolating.
    """
    s = np.sqrt(lyap.s2)
    if admissible_u is not None and c > admissible_u * float(np.min(s)) * (1 + 1e-12):
        raise NonHyperbolicError(f"level c={c} above admissible level {admissible_u * float(np.min(s)):.4g}")
    t = lyap.t
    up = c / s
    margins = []
    for u in (up, -up):
        h = lyap.h(t, u)
        margins.append(np.min(u * u - 2 * lyap.s2 * u * h))
    margin = float(min(margins))
    if margin <= 0:
        raise NonHyperbolicError(f"non-positive transversality margin {margin:.3g}")
    return IsolatingNeighborhood(t=t, upper=up, lower=-up, c=float(c), margin=margin)
