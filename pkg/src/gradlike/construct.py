"""Model construction: fields with prescribed zeros, glued systems, autonomization.

Glued systems are built from a foliation of the layer [-T, T] x S^1 by the
curves

    Gamma(t, xi) = (1 - s) Phi_minus(t, xi) + s Phi_plus(t, H(xi)),

with s = s((t + T) / 2T) a smootherstep, Phi_minus/plus the flows of the
limit fields started at t = 0, and H a monotone degree-1 map pairing the
section t = 0 of the past with that of the future. The field is
f = d Gamma/dt evaluated at Gamma(t, .)^-1. Outside the layer the blend
weight is constant and f reduces exactly to the limit field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator, RectBivariateSpline

from .invariant import UInvariant
from .ode import OdeSystem, TimeStructure, wrap


class ConstructionError(ValueError):
    pass


# ------------------------------------------------------------------ zeros


@dataclass(frozen=True)
class ZeroSpec:
    """Simple zeros (position, derivative sign) of an autonomous field.

    shape "product": f = amplitude * sigma * prod sin(pi (x - z_i)), sup|f| = amplitude.
    shape "piecewise": on each arc [z_j, z_{j+1}] of length L_j,
    f = +-(rate/pi) L_j sin(pi (x - z_j)/L_j); C^1 with |f'(z)| = rate at every zero
    and an explicit flow.
    """

    zeros: tuple
    amplitude: float = 1.0
    shape: str = "product"
    rate: float = 2 * np.pi

    def __post_init__(self):
        zs = tuple(sorted(((float(p) % 1.0, str(sg)) for p, sg in self.zeros), key=lambda z: z[0]))
        object.__setattr__(self, "zeros", zs)
        if len(zs) == 0 or len(zs) % 2:
            raise ConstructionError(f"zero count must be even and positive, got {len(zs)}")
        for _, sg in zs:
            if sg not in "+-" or len(sg) != 1:
                raise ConstructionError(f"derivative sign must be '+' or '-', got {sg!r}")
        for (_, a), (_, b) in zip(zs, zs[1:] + zs[:1]):
            if a == b:
                raise ConstructionError("derivative signs must alternate around the circle")
        pos = np.array([p for p, _ in zs])
        gaps = np.diff(np.append(pos, pos[0] + 1.0))
        if np.min(gaps) < 1e-3:
            raise ConstructionError("zeros closer than 1e-3")
        if self.amplitude <= 0 or self.rate <= 0:
            raise ConstructionError("amplitude and rate must be positive")
        if self.shape not in ("product", "piecewise"):
            raise ConstructionError(f"unknown shape {self.shape!r}")

    @property
    def positions(self) -> np.ndarray:
        return np.array([p for p, _ in self.zeros])

    @property
    def signs(self) -> np.ndarray:
        return np.array([1.0 if s == "+" else -1.0 for _, s in self.zeros])

    def stable(self) -> np.ndarray:
        return self.positions[self.signs < 0]

    def unstable(self) -> np.ndarray:
        return self.positions[self.signs > 0]

    def to_dict(self) -> dict:
        return {
            "zeros": [[p, s] for p, s in self.zeros],
            "amplitude": self.amplitude,
            "shape": self.shape,
            "rate": self.rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ZeroSpec":
        return cls(
            zeros=tuple((float(p), s) for p, s in d["zeros"]),
            amplitude=float(d.get("amplitude", 1.0)),
            shape=d.get("shape", "product"),
            rate=float(d.get("rate", 2 * np.pi)),
        )


class PiecewiseSineField:
    """Autonomous C^1 field with prescribed simple zeros and a closed-form flow."""

    def __init__(self, spec: ZeroSpec):
        self.spec = spec
        self.z = spec.positions
        self.eps = spec.signs  # sign of f just right of z_j
        self.L = np.diff(np.append(self.z, self.z[0] + 1.0))
        self.kappa = spec.rate / np.pi

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x - self.z[0])
        r = x - k  # in [z0, z0 + 1)
        j = np.clip(np.searchsorted(self.z, r, side="right") - 1, 0, self.z.size - 1)
        w = np.pi * (r - self.z[j]) / self.L[j]
        return k, j, w

    def __call__(self, x):
        _, j, w = self._locate(x)
        return self.eps[j] * self.kappa * self.L[j] * np.sin(w)

    def derivative(self, x):
        _, j, w = self._locate(x)
        return self.eps[j] * self.spec.rate * np.cos(w)

    def flow(self, t, x):
        """Lifted image of x under the time-t flow, and its x-derivative."""
        x1, ld = self.flow_log(t, x)
        return x1, np.exp(ld)

    def flow_log(self, t, x):
        """Lifted image under the time-t flow and the log of its x-derivative.

        Within an arc, w = pi (x - z_j) / L_j obeys tan(w/2) = tan(w0/2) exp(rate eps t).
        """
        k, j, w0 = self._locate(x)
        E = 0.5 * self.spec.rate * self.eps[j] * np.asarray(t, dtype=float)
        c, s = np.cos(0.5 * w0), np.sin(0.5 * w0)
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            w = 2.0 * np.where(E >= 0, np.arctan2(s, c * np.exp(-2 * E)), np.arctan2(s * np.exp(2 * E), c))
            ld = -np.logaddexp(-2 * E + 2 * np.log(np.abs(c)), 2 * E + 2 * np.log(np.abs(s)))
        x1 = k + self.z[j] + self.L[j] * w / np.pi
        return x1, ld


def field_from_zeros(spec: ZeroSpec, name: str = "") -> OdeSystem:
    """Autonomous circle field whose zero set is exactly the prescribed one."""
    if spec.shape == "piecewise":
        F = PiecewiseSineField(spec)
        return OdeSystem(
            rhs=lambda t, x: F(x) + 0.0 * np.asarray(t),
            rhs_x=lambda t, x: F.derivative(x) + 0.0 * np.asarray(t),
            name=name or "piecewise field",
            meta={"zerospec": spec.to_dict()},
        )
    z = spec.positions
    s0 = spec.signs[0]

    def raw(x):
        x = np.asarray(x, dtype=float)
        return np.prod(np.sin(np.pi * (x[..., None] - z)), axis=-1)

    def raw_x(x):
        x = np.asarray(x, dtype=float)
        S = np.sin(np.pi * (x[..., None] - z))
        Cc = np.cos(np.pi * (x[..., None] - z))
        out = np.zeros(x.shape)
        for i in range(z.size):
            out = out + np.pi * Cc[..., i] * np.prod(np.delete(S, i, axis=-1), axis=-1)
        return out

    sigma = s0 * np.sign(raw_x(np.array(z[0])))
    xs = np.arange(8192) / 8192
    sup = float(np.max(np.abs(raw(xs))))
    scale = spec.amplitude * sigma / sup
    return OdeSystem(
        rhs=lambda t, x: scale * raw(x) + 0.0 * np.asarray(t),
        rhs_x=lambda t, x: scale * raw_x(x) + 0.0 * np.asarray(t),
        name=name or "product field",
        meta={"zerospec": spec.to_dict()},
    )


# ------------------------------------------------------------------- glue


def smootherstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10 - 15 * u + 6 * u * u)


def smootherstep_d(u):
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    return np.where(inside, 30 * u * u * (1 - u) ** 2, 0.0)


@dataclass(frozen=True)
class GluePlan:
    """Limit fields and a pairing of the t = 0 sections.

    `pairing` holds (xi, target) anchors: the curve through (0, xi) of the
    past field is joined to the curve through (0, target) of the future field
    (target is lifted, so winding offsets are explicit). With no anchors the
    pairing is the translation xi -> xi + shift.
    """

    f_minus: ZeroSpec
    f_plus: ZeroSpec
    T: float = 1.0
    pairing: tuple = ()
    shift: float = 0.0
    meta: dict = field(default_factory=dict)

    def pairing_map(self) -> Callable:
        if not self.pairing:
            return _translation(self.shift)
        anchors = sorted((float(a) % 1.0, float(b)) for a, b in self.pairing)
        xa = np.array([a for a, _ in anchors])
        ya = np.array([b for _, b in anchors])
        ya = ya - np.floor(ya[0] - xa[0] + 0.5)  # keep the first target near its source
        if np.any(np.diff(ya) <= 0) or ya[-1] >= ya[0] + 1.0:
            raise ConstructionError("pairing paths cross: lifted targets must increase within one turn")
        # periodic extension of the anchors, one turn each side
        X = np.concatenate([xa - 1.0, xa, xa + 1.0])
        Y = np.concatenate([ya - 1.0, ya, ya + 1.0])
        return _PeriodicMonotone(X, Y, xa[0])


class _PeriodicMonotone:
    def __init__(self, X, Y, base):
        self.p = PchipInterpolator(X, Y)
        self.dp = self.p.derivative()
        self.base = base

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        k = np.floor(xi - self.base)
        return self.p(xi - k) + k

    def deriv(self, xi):
        xi = np.asarray(xi, dtype=float)
        k = np.floor(xi - self.base)
        return self.dp(xi - k)

    def inverse_guess(self, y, grid: int = 512):
        xs = self.base + np.arange(grid + 1) / grid
        ys = self(xs)
        y = np.asarray(y, dtype=float)
        k = np.floor(y - ys[0])
        return np.interp(y - k, ys, xs) + k


class _translation:
    def __init__(self, shift):
        self.shift = float(shift)

    def __call__(self, xi):
        return np.asarray(xi, dtype=float) + self.shift

    def deriv(self, xi):
        return np.ones(np.shape(xi))

    def inverse_guess(self, y):
        return np.asarray(y, dtype=float) - self.shift


class GluedField:
    """Evaluates f and f_x of a glued system; see the module docstring."""

    def __init__(self, plan: GluePlan):
        self.plan = plan
        self.Fm = PiecewiseSineField(_piecewise(plan.f_minus))
        self.Fp = PiecewiseSineField(_piecewise(plan.f_plus))
        self.H = plan.pairing_map()
        self.T = float(plan.T)
        self._check()

    def _check(self):
        xs = np.arange(4096) / 4096
        Hx = self.H(xs)
        if np.any(np.diff(np.append(Hx, Hx[0] + 1.0)) <= 0):
            raise ConstructionError("pairing map is not strictly increasing")
        for z in self.plan.f_minus.stable():
            hz = wrap(float(self.H(np.array(z))))
            for u in self.plan.f_plus.unstable():
                if min(abs(hz - u), 1 - abs(hz - u)) < 1e-9:
                    raise ConstructionError(
                        f"stable zero {z:.6g} of f_minus paired to unstable zero {u:.6g} of f_plus"
                    )

    def _blend(self, t):
        u = (np.asarray(t, dtype=float) + self.T) / (2 * self.T)
        return smootherstep(u), smootherstep_d(u) / (2 * self.T)

    def gamma(self, t, xi):
        s, _ = self._blend(t)
        pm, dm = self.Fm.flow(t, xi)
        pp, dp = self.Fp.flow(t, self.H(xi))
        g = (1 - s) * pm + s * pp
        dg = (1 - s) * dm + s * dp * self.H.deriv(xi)
        return g, dg

    def gamma_inverse(self, t, x, tol: float = 1e-13, iters: int = 80):
        """Solve gamma(t, xi) = x for xi by safeguarded Newton steps."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        t, x = np.broadcast_arrays(t, x)
        s, _ = self._blend(t)
        # invert each component flow and blend the guesses
        gm, _ = self.Fm.flow(-t, x)
        gp, _ = self.Fp.flow(-t, x)
        xi = (1 - s) * gm + s * self.H.inverse_guess(gp)
        g, _ = self.gamma(t, xi)
        lo = np.where(g <= x, xi, xi - 1.0)
        hi = np.where(g <= x, xi + 1.0, xi)
        for _ in range(iters):
            g, dg = self.gamma(t, xi)
            r = g - x
            lo = np.where(r <= 0, np.maximum(lo, xi), lo)
            hi = np.where(r > 0, np.minimum(hi, xi), hi)
            step = r / np.where(dg > 0, dg, 1.0)
            nxt = xi - step
            bad = (nxt < lo) | (nxt > hi) | ~np.isfinite(nxt)
            nxt = np.where(bad, 0.5 * (lo + hi), nxt)
            done = np.abs(nxt - xi) <= tol * (1 + np.abs(xi))
            xi = nxt
            if np.all(done):
                break
        return xi

    def propagate(self, t0, x0, t):
        """Exact solution through (t0, x0) evaluated at t, with Lambda(t, t0).

        The curves Gamma(., xi) are the integral curves, so the flow is
        Gamma(t, .) o Gamma(t0, .)^-1 inside the layer and the limit flows
        outside it; the log-derivative of this map is the log-flow.
        """
        t0, x0, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t0, x0, t)))
        T = self.T
        x_out = np.empty(t.shape)
        L_out = np.empty(t.shape)
        same_m = (t0 <= -T) & (t <= -T)
        same_p = (t0 >= T) & (t >= T)
        if np.any(same_m):
            x_out[same_m], L_out[same_m] = self.Fm.flow_log(t[same_m] - t0[same_m], x0[same_m])
        if np.any(same_p):
            x_out[same_p], L_out[same_p] = self.Fp.flow_log(t[same_p] - t0[same_p], x0[same_p])
        rest = ~(same_m | same_p)
        if np.any(rest):
            a, y, b = t0[rest], x0[rest], t[rest]
            b0 = np.clip(a, -T, T)
            b1 = np.clip(b, -T, T)
            y0, l0 = self._outer(a, y, b0)
            xi = self.gamma_inverse(b0, y0)
            _, d0 = self.gamma(b0, xi)
            y1, d1 = self.gamma(b1, xi)
            y2, l2 = self._outer(b1, y1, b)
            x_out[rest] = y2
            L_out[rest] = l0 + np.log(d1) - np.log(d0) + l2
        return x_out, L_out

    def _outer(self, a, y, b):
        """Limit-field flow from time a to time b, both on one side of the layer."""
        out, ld = y.copy(), np.zeros(y.shape)
        m = (a != b) & (np.maximum(a, b) <= -self.T)
        p = (a != b) & (np.minimum(a, b) >= self.T)
        if np.any(m):
            out[m], ld[m] = self.Fm.flow_log(b[m] - a[m], y[m])
        if np.any(p):
            out[p], ld[p] = self.Fp.flow_log(b[p] - a[p], y[p])
        return out, ld

    def _layer(self, t, x):
        xi = self.gamma_inverse(t, x)
        s, sd = self._blend(t)
        pm, dm = self.Fm.flow(t, xi)
        Hx = self.H(xi)
        Hd = self.H.deriv(xi)
        pp, dp = self.Fp.flow(t, Hx)
        fm, fp = self.Fm(pm), self.Fp(pp)
        gt = sd * (pp - pm) + (1 - s) * fm + s * fp
        gxi = (1 - s) * dm + s * dp * Hd
        gtxi = sd * (dp * Hd - dm) + (1 - s) * self.Fm.derivative(pm) * dm + s * self.Fp.derivative(pp) * dp * Hd
        return gt, gtxi / gxi

    def f(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        out = np.where(t <= -self.T, self.Fm(x), self.Fp(x))
        inside = (t > -self.T) & (t < self.T)
        if np.any(inside):
            out = np.array(out, dtype=float)
            out[inside] = self._layer(t[inside], x[inside])[0]
        return out[()] if out.ndim == 0 else out

    def fx(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        out = np.where(t <= -self.T, self.Fm.derivative(x), self.Fp.derivative(x))
        inside = (t > -self.T) & (t < self.T)
        if np.any(inside):
            out = np.array(out, dtype=float)
            out[inside] = self._layer(t[inside], x[inside])[1]
        return out[()] if out.ndim == 0 else out


def _piecewise(spec: ZeroSpec) -> ZeroSpec:
    if spec.shape == "piecewise":
        return spec
    return ZeroSpec(spec.zeros, spec.amplitude, "piecewise", spec.rate)


def glue(plan: GluePlan, name: str = "glued") -> OdeSystem:
    """Asymptotically autonomous system equal to f_minus for t <= -T and f_plus for t >= T."""
    G = GluedField(plan)
    ts = TimeStructure(
        "asymptotically_autonomous",
        f_minus=lambda x: G.Fm(x),
        f_plus=lambda x: G.Fp(x),
        half_width=plan.T,
    )
    return OdeSystem(
        rhs=G.f,
        rhs_x=G.fx,
        time_structure=ts,
        name=name,
        meta={
            "generator": {
                "kind": "glue",
                "f_minus": _piecewise(plan.f_minus).to_dict(),
                "f_plus": _piecewise(plan.f_plus).to_dict(),
                "T": plan.T,
                "pairing": [list(p) for p in plan.pairing],
                "shift": plan.shift,
                **plan.meta,
            },
            "glued": G,
            "exact_flow": G.propagate,
        },
    )


# ------------------------------------------------------------ autonomize


def _midpoints(pos: np.ndarray) -> np.ndarray:
    nxt = np.append(pos[1:], pos[0] + 1.0)
    return np.mod(0.5 * (pos + nxt), 1.0)


def autonomize_plan(inv: UInvariant, rate: float = 2 * np.pi, T: float = 1.0) -> GluePlan:
    word = inv.canonical_rotation
    k = len(word)
    pos = np.arange(k) / k
    u = np.array([p for p, c in zip(pos, word) if c == "U"])
    s = np.array([p for p, c in zip(pos, word) if c == "S"])
    s_mid = _midpoints(s)  # positive zeros u'_k of f_minus
    u_mid = _midpoints(u)  # negative zeros s'_i of f_plus
    zp = [(p, "+") for p in u] + [(p, "-") for p in u_mid]
    zm = [(p, "-") for p in s] + [(p, "+") for p in s_mid]
    f_plus = ZeroSpec(tuple(zp), shape="piecewise", rate=rate)
    f_minus = ZeroSpec(tuple(zm), shape="piecewise", rate=rate)

    # path pairing: each u_j runs to the positive zero of f_minus inside its
    # S-arc, each s_j to the negative zero of f_plus inside its U-arc
    def arc_partner(p, ends, partners):
        ends_l = np.append(ends, ends[0] + 1.0)
        q = p if p >= ends[0] else p + 1.0
        i = int(np.searchsorted(ends_l, q, side="right") - 1) % ends.size
        return float(partners[i])

    u_pairs = [[float(p), arc_partner(p, s, s_mid)] for p in u]
    s_pairs = [[float(p), arc_partner(p, u, u_mid)] for p in s]
    return GluePlan(
        f_minus=f_minus,
        f_plus=f_plus,
        T=T,
        meta={"word": word, "u_paths": u_pairs, "s_paths": s_pairs},
    )


def autonomize(inv: UInvariant | str, rate: float = 2 * np.pi, T: float = 1.0) -> OdeSystem:
    """Asymptotically autonomous model whose u-invariant is `inv`.

    U- and S-points sit at k equally spaced positions given by the canonical
    word. f_plus has unstable zeros at the U-points and stable zeros between
    consecutive U-points; f_minus has stable zeros at the S-points and
    unstable zeros between consecutive S-points. With the identity pairing
    the curves through the word positions at t = 0 are exactly the skeleton.
    """
    if isinstance(inv, str):
        inv = UInvariant.from_word(inv)
    plan = autonomize_plan(inv, rate, T)
    sysm = glue(plan, name=f"autonomize({inv.canonical_rotation})")
    sysm.meta["generator"]["kind"] = "autonomize"
    return sysm


# --------------------------------------------------------------- library


def _ramp(u):
    """Quintic ramp 0 -> 1 on [0, 1] and its derivative."""
    return smootherstep(u), smootherstep_d(u)


def _plateau(x, a, b, c, d):
    """C^2 function equal to 1 on [b, c], 0 outside (a, d); returns value and x-derivative."""
    r1, d1 = _ramp((x - a) / (b - a))
    r2, d2 = _ramp((d - x) / (d - c))
    return r1 * r2, d1 * r2 / (b - a) - r1 * d2 / (d - c)


def slow_transit_times(count: int = 40) -> np.ndarray:
    """Switching times t_0 = 0 < t_1 < ...: gaps t_{2k+1} - t_{2k} = k + 1, pulses of length 1."""
    t = [0.0]
    k = 0
    while len(t) < count:
        t.append(t[-1] + k + 1)  # quiet gap
        t.append(t[-1] + 1.0)  # pulse
        k += 1
    return np.array(t[:count])


def slow_transit(strength: float = 0.6, band=(0.2, 0.3)) -> OdeSystem:
    """Assumption-4 counterexample.

    For t >= 0 the field sin(2 pi x) is flattened to zero on a band inside
    (0, 1/2); between quiet gaps of growing length k + 1 a unit-length pulse
    pushes the band upward. Every curve still has an exponential dichotomy,
    but the time to cross the band grows with the entry time. For t <= -1
    the field is sin(2 pi x), with a smooth blend over [-1, 0].
    """
    lo, hi = band
    times = slow_transit_times(400)
    starts = times[1::2]
    ends = times[2::2]
    n = min(starts.size, ends.size)
    starts, ends = starts[:n], ends[:n]
    two_pi = 2 * np.pi

    def plateau(x, a, b, c, d):
        u = np.minimum(np.maximum((x - a) / (b - a), 0.0), 1.0)
        v = np.minimum(np.maximum((d - x) / (d - c), 0.0), 1.0)
        r1 = u * u * u * (10 - 15 * u + 6 * u * u)
        r2 = v * v * v * (10 - 15 * v + 6 * v * v)
        d1 = 30 * u * u * (1 - u) ** 2 / (b - a)
        d2 = 30 * v * v * (1 - v) ** 2 / (d - c)
        return r1 * r2, d1 * r2 - r1 * d2

    def parts(t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        xm = x - np.floor(x)
        pl, pl_d = plateau(xm, lo - 0.08, lo, hi, hi + 0.08)
        bu, bu_d = plateau(xm, lo - 0.1, lo - 0.05, hi + 0.05, hi + 0.1)
        sn, cs = np.sin(two_pi * x), two_pi * np.cos(two_pi * x)
        g = sn * (1 - pl)
        g_d = cs * (1 - pl) - sn * pl_d
        i = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, n - 1)
        s0 = starts[i]
        pulse = np.where((t >= s0) & (t <= ends[i]), np.sin(np.pi * (t - s0)) ** 2, 0.0)
        f = g + strength * pulse * bu
        f_x = g_d + strength * pulse * bu_d
        if np.any(t < 0):
            sig = smootherstep(t + 1.0)
            f = np.where(t < 0, (1 - sig) * sn + sig * g, f)
            f_x = np.where(t < 0, (1 - sig) * cs + sig * g_d, f_x)
        return f, f_x

    return OdeSystem(
        rhs=lambda t, x: parts(t, x)[0],
        rhs_x=lambda t, x: parts(t, x)[1],
        name="slow_transit",
        params={"strength": strength},
        meta={
            "generator": {"kind": "library", "name": "slow_transit", "params": {"strength": strength}},
            "rhs_both": parts,
        },
    )


LIBRARY_TEXT = {
    "autonomous_sin": ("sin(2*pi*x)", {}, None),
    "reversible": ("cos(2*pi*x)*(sin(2*pi*x)^2+exp(-t^2))/(2*pi)", {}, None),
    "reversible_mu": ("cos(2*pi*x)*(sin(2*pi*x)^2+exp(-t^2)-mu)/(2*pi)", {"mu": 0.04}, None),
    "riccati_gauss": ("(cos(pi*x)^2+sin(pi*x)^2*(exp(-t^2)-mu))/pi", {"mu": 0.25}, None),
    "periodic_rough": ("a*sin(2*pi*x)+c*sin(2*pi*t)", {"a": 0.1, "c": 0.02}, 1.0),
    "periodic_rotating": ("0.5+c*sin(4*pi*x-2*pi*t)", {"c": 0.05}, 1.0),
    "ap_perturbed": ("sin(2*pi*x)+eps*(sin(t)+sin(sqrt(2)*t))", {"eps": 0.05}, None),
}

LIBRARY_NOTES = {
    "autonomous_sin": "x' = sin(2 pi x): one repeller at 0, one attractor at 1/2",
    "reversible": "reversible example with nonhyperbolic limit equilibria (phi = 2 pi x, time unchanged up to scale)",
    "reversible_mu": "mu-perturbation of `reversible`: limit equilibria split into hyperbolic pairs",
    "riccati_gauss": "compactified Riccati equation y' = y^2 + exp(-t^2) - mu with y = -cot(pi x)",
    "periodic_rough": "doubly periodic model with rational rotation number 0",
    "periodic_rotating": "doubly periodic model with rotation number 1/2 and period-2 orbits",
    "ap_perturbed": "sin(2 pi x) plus a small quasi-periodic forcing",
    "slow_transit": "asymptotically flat band crossed by ever sparser pulses; violates Assumption 4",
}


def library_names() -> list[str]:
    return sorted([*LIBRARY_TEXT, "slow_transit"])


def library(name: str, params: dict | None = None) -> OdeSystem:
    params = dict(params or {})
    if name == "slow_transit":
        return slow_transit(**params)
    if name not in LIBRARY_TEXT:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(library_names())}")
    text, defaults, period = LIBRARY_TEXT[name]
    p = {**defaults, **params}
    unknown = set(params) - set(defaults)
    if unknown:
        raise KeyError(f"model {name!r} has no parameters {sorted(unknown)}")
    sysm = OdeSystem.from_text(text, p, period=period, name=name)
    sysm.meta["generator"] = {"kind": "library", "name": name, "params": p}
    return sysm


def reversible_limit_zeros(mu: float) -> np.ndarray:
    """Zeros in x of the limit field cos(2 pi x)(sin^2(2 pi x) - mu) for 0 < mu < 1."""
    a = np.arcsin(np.sqrt(mu)) / (2 * np.pi)
    return np.sort(np.mod([0.25, 0.75, a, -a, 0.5 + a, 0.5 - a], 1.0))


# ---------------------------------------------------------- serialization


def to_spec(system: OdeSystem, *, sampled: bool | None = None, nt: int = 81, nx: int = 256) -> dict:
    """ODE spec document for a system.

    Text-defined systems use the expression form. Constructed systems use the
    sampled form: the field on a (t, x) grid over the layer with the limit
    fields' zero data, plus a generator block that rebuilds the exact model.
    """
    gen = system.meta.get("generator")
    if system.expression is not None and not sampled:
        doc = {"form": "expression", "rhs": system.text, "params": dict(system.params)}
        ts = system.time_structure
        if ts.kind == "periodic":
            doc["period"] = ts.period
        if ts.kind == "asymptotically_autonomous" and ts.minus_text:
            doc["limits"] = {"minus": ts.minus_text, "plus": ts.plus_text, "half_width": ts.half_width}
        return doc
    if gen is None or gen.get("kind") not in ("glue", "autonomize"):
        if gen is not None:
            return {"form": "generator", "generator": gen}
        raise ConstructionError("system has neither a closed form nor a generator")
    T = float(gen["T"])
    t = np.linspace(-T, T, nt)
    x = np.arange(nx) / nx
    vals = system.f(t[:, None], x[None, :])
    return {
        "form": "sampled",
        "rhs": None,
        "params": {},
        "grid": {
            "t": t.tolist(),
            "x": x.tolist(),
            "values": np.round(vals, 15).tolist(),
        },
        "interpolation": "bicubic spline, periodic in x; limit fields outside [t_min, t_max]",
        "limits": {"minus_zeros": gen["f_minus"], "plus_zeros": gen["f_plus"], "half_width": T},
        "generator": gen,
    }


def sampled_system(doc: dict, name: str = "sampled") -> OdeSystem:
    """Rebuild a system from the sampled grid alone (no generator)."""
    grid = doc["grid"]
    t = np.asarray(grid["t"], dtype=float)
    x = np.asarray(grid["x"], dtype=float)
    v = np.asarray(grid["values"], dtype=float)
    pad = 3
    xp = np.concatenate([x[-pad:] - 1.0, x, x[:pad] + 1.0])
    vp = np.concatenate([v[:, -pad:], v, v[:, :pad]], axis=1)
    spl = RectBivariateSpline(t, xp, vp, kx=3, ky=3)
    Fm = PiecewiseSineField(ZeroSpec.from_dict(doc["limits"]["minus_zeros"]))
    Fp = PiecewiseSineField(ZeroSpec.from_dict(doc["limits"]["plus_zeros"]))
    t0, t1 = t[0], t[-1]

    def rhs(tt, xx, dx=0):
        tt, xx = np.broadcast_arrays(np.asarray(tt, dtype=float), np.asarray(xx, dtype=float))
        xm = np.mod(xx, 1.0)
        inner = spl.ev(np.clip(tt, t0, t1), xm, dy=dx)
        if dx:
            out = np.where(tt <= t0, Fm.derivative(xx), np.where(tt >= t1, Fp.derivative(xx), inner))
        else:
            out = np.where(tt <= t0, Fm(xx), np.where(tt >= t1, Fp(xx), inner))
        return out

    return OdeSystem(
        rhs=rhs,
        rhs_x=lambda tt, xx: rhs(tt, xx, 1),
        time_structure=TimeStructure(
            "asymptotically_autonomous", f_minus=Fm, f_plus=Fp, half_width=float(doc["limits"]["half_width"])
        ),
        name=name,
    )


def from_generator(gen: dict) -> OdeSystem:
    kind = gen.get("kind")
    if kind == "library":
        return library(gen["name"], gen.get("params"))
    if kind == "autonomize":
        return autonomize(gen["word"], rate=ZeroSpec.from_dict(gen["f_plus"]).rate, T=float(gen["T"]))
    if kind == "glue":
        plan = GluePlan(
            f_minus=ZeroSpec.from_dict(gen["f_minus"]),
            f_plus=ZeroSpec.from_dict(gen["f_plus"]),
            T=float(gen["T"]),
            pairing=tuple(tuple(p) for p in gen.get("pairing", [])),
            shift=float(gen.get("shift", 0.0)),
        )
        return glue(plan)
    raise ConstructionError(f"unknown generator kind {kind!r}")


def spec_to_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1)


# ------------------------------------------------------------------- SVG


def annulus_svg(system: OdeSystem, size: int = 420) -> str:
    """Annulus diagram: inner circle t = -inf, outer t = +inf, skeleton paths between."""
    gen = system.meta.get("generator", {})
    if gen.get("kind") not in ("glue", "autonomize"):
        raise ConstructionError("annulus diagram needs a glued system")
    fm = ZeroSpec.from_dict(gen["f_minus"])
    fp = ZeroSpec.from_dict(gen["f_plus"])
    c = size / 2
    r_in, r_mid, r_out = 0.22 * size, 0.33 * size, 0.44 * size

    def pt(r, x):
        a = 2 * np.pi * x - np.pi / 2
        return c + r * np.cos(a), c + r * np.sin(a)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<circle cx="{c}" cy="{c}" r="{r_in}" fill="none" stroke="#888"/>',
        f'<circle cx="{c}" cy="{c}" r="{r_out}" fill="none" stroke="#888"/>',
        f'<circle cx="{c}" cy="{c}" r="{r_mid}" fill="none" stroke="#ccc" stroke-dasharray="4 3"/>',
    ]
    word = gen.get("word", "")
    pos = np.arange(len(word)) / max(len(word), 1)
    for key, cls, color in (("u_paths", "u-curve", "#c0392b"), ("s_paths", "s-curve", "#2c6fbb")):
        for a, b in gen.get(key, []):
            # U-curves: f_minus partner (inner) -> section point -> itself outside
            inner = b if key == "u_paths" else a
            outer = a if key == "u_paths" else b
            d = _arc_path(pt, r_in, r_mid, r_out, inner, a, outer)
            parts.append(f'<path class="{cls}" d="{d}" fill="none" stroke="{color}" stroke-width="1.6"/>')
    for p, sg in fm.zeros:
        x, y = pt(r_in, p)
        parts.append(f'<circle class="zero-minus" cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{"#2c6fbb" if sg == "-" else "#c0392b"}"/>')
    for p, sg in fp.zeros:
        x, y = pt(r_out, p)
        parts.append(f'<circle class="zero-plus" cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{"#2c6fbb" if sg == "-" else "#c0392b"}"/>')
    for p, ch in zip(pos, word):
        x, y = pt(r_mid, p)
        parts.append(f'<text x="{x:.2f}" y="{y:.2f}" font-size="11" text-anchor="middle">{ch}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _arc_path(pt, r0, r1, r2, x0, x1, x2) -> str:
    # keep lifted positions within half a turn of the section point
    def near(x, ref):
        return x - np.round(x - ref)

    xs = [near(x0, x1), x1, near(x2, x1)]
    rs = [r0, r1, r2]
    pts = []
    for i in range(2):
        for u in np.linspace(0, 1, 12, endpoint=(i == 1)):
            r = rs[i] + (rs[i + 1] - rs[i]) * u
            x = xs[i] + (xs[i + 1] - xs[i]) * u
            pts.append(pt(r, x))
    return "M " + " L ".join(f"{a:.2f} {b:.2f}" for a, b in pts)
