"""Bunches, the equipped set and the gradient-like verdict.

A grid of initial points on the section is pushed to +H (stable bunches) or
-H (unstable bunches). Flows on the circle preserve order, so consecutive
grid points belong to one bunch exactly when their lifted images at the
horizon have merged; the gaps between bunches bracket the skeleton curves.

Skeleton points are refined by shooting: the curve through the boundary is
repelling in the direction of the sweep, so a point between the two
neighbouring images at the horizon, integrated back to the section,
converges onto it at the exponential rate of the dichotomy.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import dichotomy as dch
from .ode import IntegralCurve, OdeSystem, circle_distance, integrate, solve, wrap

GRID_SIZE = 720
HORIZON = 50.0
CLUSTER_TOL = 1e-3
SEPARATION_TOL = 1e-4
REFINE_TOL = 1e-9
# grid sweeps only need positions to well below CLUSTER_TOL
SWEEP_RTOL = 1e-7
SWEEP_ATOL = 1e-10


class BunchError(ValueError):
    pass


class AmbiguousClusteringError(BunchError):
    """Gaps inside (cluster_tol, 10 cluster_tol): refine the grid or extend the horizon."""

    def __init__(self, msg, gaps=()):
        super().__init__(msg)
        self.gaps = gaps


class RefinementError(BunchError):
    pass


class SeparationError(BunchError):
    pass


# ------------------------------------------------------------------ types


@dataclass(frozen=True)
class Bunch:
    kind: str  # stable_Rplus | unstable_Rminus
    trace_interval: tuple  # lifted (a, b) with a < b <= a + 1; open arc on the section
    representative: float  # middle member on the section
    limit: float  # member images at the horizon, wrapped
    members: int
    boundary_points: tuple = ()  # refined skeleton points closing the arc

    def contains(self, x: float) -> bool:
        a, b = self.trace_interval
        q = a + np.mod(x - a, 1.0)
        return a < q < b

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "trace_interval": list(self.trace_interval),
            "representative": self.representative,
            "limit": self.limit,
            "members": self.members,
            "boundary_points": list(self.boundary_points),
        }


@dataclass(frozen=True)
class EquippedSet:
    points: tuple  # ((position, label), ...) increasing along the circle

    def __post_init__(self):
        pts = tuple(sorted(((wrap(float(p)), str(l)) for p, l in self.points), key=lambda q: q[0]))
        object.__setattr__(self, "points", pts)
        for _, l in pts:
            if l not in ("U", "S"):
                raise BunchError(f"label must be U or S, got {l!r}")

    @property
    def n(self) -> int:
        return sum(1 for _, l in self.points if l == "U")

    @property
    def m(self) -> int:
        return sum(1 for _, l in self.points if l == "S")

    @property
    def u_points(self) -> list:
        return [p for p, l in self.points if l == "U"]

    @property
    def s_points(self) -> list:
        return [p for p, l in self.points if l == "S"]

    def min_separation(self) -> float:
        pos = [p for p, _ in self.points]
        if len(pos) < 2:
            return 0.5
        return min(circle_distance(a, b) for a, b in zip(pos, pos[1:] + pos[:1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["position", "label"])
        for p, l in self.points:
            w.writerow([f"{p:.12f}", l])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"points": [{"position": p, "label": l} for p, l in self.points], "n": self.n, "m": self.m}


@dataclass(frozen=True)
class AssumptionResult:
    status: str  # holds | fails | undetermined
    qualifier: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"status": self.status, "qualifier": self.qualifier, "diagnostics": self.diagnostics}


@dataclass(frozen=True)
class GradientLikeReport:
    assumption1: AssumptionResult
    assumption2: AssumptionResult
    assumption3: AssumptionResult
    assumption4: AssumptionResult
    equipped_set: EquippedSet | None
    horizon: float
    grid_size: int
    stable_bunches: tuple = ()
    unstable_bunches: tuple = ()
    skeleton: tuple = ()  # per skeleton point: dichotomy estimates on both semi-axes
    section: float = 0.0

    @property
    def gradient_like(self) -> bool:
        return self.equipped_set is not None

    @property
    def word(self) -> str | None:
        if self.equipped_set is None:
            return None
        from .invariant import word_of

        return word_of(self.equipped_set).canonical_rotation

    def to_dict(self) -> dict:
        return {
            "gradient_like": self.gradient_like,
            "word": self.word,
            "assumption1": self.assumption1.to_dict(),
            "assumption2": self.assumption2.to_dict(),
            "assumption3": self.assumption3.to_dict(),
            "assumption4": self.assumption4.to_dict(),
            "equipped_set": None if self.equipped_set is None else self.equipped_set.to_dict(),
            "horizon": self.horizon,
            "grid_size": self.grid_size,
            "section": self.section,
            "stable_bunches": [b.to_dict() for b in self.stable_bunches],
            "unstable_bunches": [b.to_dict() for b in self.unstable_bunches],
            "skeleton": list(self.skeleton),
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=1)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


# ------------------------------------------------------------------ sweep


def _sign(kind: str) -> float:
    if kind in ("stable", "stable_Rplus"):
        return 1.0
    if kind in ("unstable", "unstable_Rminus"):
        return -1.0
    raise ValueError(f"unknown bunch kind {kind!r}")


def _kind_name(kind: str) -> str:
    return "stable_Rplus" if _sign(kind) > 0 else "unstable_Rminus"


@dataclass
class _Sweep:
    kind: str
    section: float
    horizon: float
    x0: np.ndarray
    images: np.ndarray  # lifted positions at section + sign * horizon
    gaps: np.ndarray  # gaps[j] between member j and j+1 (last wraps)
    linked: np.ndarray
    ambiguous: np.ndarray
    t_samples: np.ndarray | None = None
    L_samples: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.x0.size

    def runs(self) -> list[tuple[int, int]]:
        """Maximal runs of linked members as (start, length), cyclically."""
        n = self.n
        cuts = np.flatnonzero(~self.linked)
        if cuts.size == 0:
            return [(0, n)]
        out = []
        for a, b in zip(cuts, np.roll(cuts, -1)):
            start = (a + 1) % n
            length = (b - a) % n or n
            out.append((start, length))
        return out

    def brackets(self) -> list[tuple[int, int]]:
        """Member index pairs (j, j+1 mod n) across each cut."""
        return [(int(j), int((j + 1) % self.n)) for j in np.flatnonzero(~self.linked)]

    def lifted_pair(self, j: int, k: int):
        lo, hi = self.x0[j], self.x0[k]
        ylo, yhi = self.images[j], self.images[k]
        if k < j:  # wrap pair
            hi, yhi = hi + 1.0, yhi + 1.0
        return lo, hi, ylo, yhi


def grid_points(grid_size: int, phase: float = 0.5) -> np.ndarray:
    return (np.arange(grid_size) + phase) / grid_size


def _sweep(
    system: OdeSystem,
    kind: str,
    grid_size: int,
    horizon: float,
    cluster_tol: float,
    *,
    phase: float = 0.5,
    section: float = 0.0,
    sample_dt: float | None = None,
) -> _Sweep:
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    sg = _sign(kind)
    x0 = grid_points(grid_size, phase)
    t1 = section + sg * horizon
    t_eval = None
    if sample_dt:
        m = int(round(horizon / sample_dt))
        t_eval = section + sg * np.linspace(0.0, horizon, m + 1)
    res = solve(system, section, x0, t1, t_eval=t_eval, rtol=SWEEP_RTOL, atol=SWEEP_ATOL)
    y = res.x_final
    gaps = np.empty(grid_size)
    gaps[:-1] = np.diff(y)
    gaps[-1] = y[0] + 1.0 - y[-1]
    gaps = np.abs(gaps)
    linked = gaps <= cluster_tol
    ambiguous = (gaps > cluster_tol) & (gaps < 10 * cluster_tol)
    sw = _Sweep(_kind_name(kind), section, horizon, x0, y, gaps, linked, ambiguous)
    if t_eval is not None:
        order = np.argsort(t_eval)
        sw.t_samples = t_eval[order]
        sw.L_samples = res.L_eval[order]
    return sw


def _bunches_from_sweep(sw: _Sweep) -> list[Bunch]:
    out = []
    n = sw.n
    for start, length in sw.runs():
        if length < 2:
            continue
        idx = (start + np.arange(length)) % n
        a = sw.x0[idx[0]]
        b = sw.x0[idx[-1]] + (1.0 if idx[-1] < idx[0] else 0.0)
        if length == n:
            b = a + 1.0
        mid = idx[length // 2]
        out.append(
            Bunch(
                kind=sw.kind,
                trace_interval=(float(a), float(b)),
                representative=float(sw.x0[mid]),
                limit=float(wrap(sw.images[mid])),
                members=int(length),
            )
        )
    out.sort(key=lambda b: b.trace_interval[0])
    return out


def find_bunches(
    system: OdeSystem,
    kind: str,
    grid_size: int = GRID_SIZE,
    horizon: float = HORIZON,
    cluster_tol: float = CLUSTER_TOL,
    *,
    phase: float = 0.5,
    section: float = 0.0,
) -> list[Bunch]:
    """Stable (kind 'stable') or unstable ('unstable') bunches on the section."""
    sw = _sweep(system, kind, grid_size, horizon, cluster_tol, phase=phase, section=section)
    if np.any(sw.ambiguous):
        bad = [(float(sw.x0[j]), float(sw.gaps[j])) for j in np.flatnonzero(sw.ambiguous)]
        raise AmbiguousClusteringError(
            f"{len(bad)} gaps between {cluster_tol} and {10 * cluster_tol}; refine the grid or extend the horizon",
            gaps=bad,
        )
    return _bunches_from_sweep(sw)


# ------------------------------------------------------------- refinement


@dataclass(frozen=True)
class SkeletonCurve:
    point: float  # on the section, wrapped
    label: str  # U | S
    curve: IntegralCurve  # covers the semi-axis on which the curve repels the sweep
    error_bound: float
    method: str


def _shoot(system, section, sg, lo, hi, ylo, yhi, horizon, tol, max_doublings=3):
    """Backward shot from the horizon between two images; returns (point, curve, bound) or None."""
    H = horizon
    for _ in range(max_doublings + 1):
        p = 0.5 * (ylo + yhi)
        curve = integrate(system, section + sg * H, 0.0, section, lift=p)
        x = curve(section)
        L = curve.log_flow_from_start(section)
        bound = abs(yhi - ylo) * float(np.exp(L))
        if not (lo < x < hi):
            return None
        if bound <= tol:
            return float(x), curve, bound
        # push the bracket further out and try again
        r = solve(system, section, np.array([lo, hi]), section + sg * 2 * H)
        ylo, yhi = r.x_final
        H *= 2
    return None


def _bisect(system, section, sg, lo, hi, horizon, tol, max_iter=60):
    r = solve(system, section, np.array([lo, hi]), section + sg * horizon)
    ylo, yhi = r.x_final
    if abs(yhi - ylo) <= CLUSTER_TOL:
        raise RefinementError("bracket endpoints are in the same cluster")
    it = 0
    while hi - lo > tol:
        if it >= max_iter:
            raise RefinementError(f"bisection did not contract within {max_iter} iterations")
        # eight interior probes per round
        probes = lo + (hi - lo) * np.arange(1, 9) / 9
        y = solve(system, section, probes, section + sg * horizon).x_final
        side = np.abs(y - ylo) <= np.abs(y - yhi)
        k = int(np.sum(side))
        new_lo = lo if k == 0 else probes[k - 1]
        new_hi = hi if k == probes.size else probes[k]
        if k > 0:
            ylo = y[k - 1]
        if k < probes.size:
            yhi = y[k]
        lo, hi = new_lo, new_hi
        it += 1
    return 0.5 * (lo + hi)


def refine_boundary(
    system: OdeSystem,
    bracket: tuple,
    kind: str,
    horizon: float = HORIZON,
    tol: float = REFINE_TOL,
    *,
    method: str = "shoot",
    section: float = 0.0,
) -> float:
    """Boundary between two bunches inside a lifted bracket (lo, hi).

    method "shoot" integrates the midpoint of the endpoint images back from the
    horizon; "bisect" bisects on the initial condition with eight probes per
    round. The result is wrapped to [0, 1).
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if hi < lo:
        hi += 1.0
    sg = _sign(kind)
    if method == "shoot":
        r = solve(system, section, np.array([lo, hi]), section + sg * horizon)
        ylo, yhi = r.x_final
        if abs(yhi - ylo) <= CLUSTER_TOL:
            raise RefinementError("bracket endpoints are in the same cluster")
        hit = _shoot(system, section, sg, lo, hi, ylo, yhi, horizon, tol)
        if hit is not None:
            return wrap(hit[0])
        method = "bisect"
    if method == "bisect":
        return wrap(_bisect(system, section, sg, lo, hi, horizon, tol))
    raise ValueError(f"unknown method {method!r}")


def _skeleton_from_sweep(system, sw: _Sweep, tol: float) -> list[SkeletonCurve]:
    sg = 1.0 if sw.kind == "stable_Rplus" else -1.0
    label = "U" if sg > 0 else "S"
    out = []
    for j, k in sw.brackets():
        lo, hi, ylo, yhi = sw.lifted_pair(j, k)
        hit = _shoot(system, sw.section, sg, lo, hi, ylo, yhi, sw.horizon, tol)
        if hit is not None:
            x, curve, bound = hit
            out.append(SkeletonCurve(wrap(x), label, curve, bound, "shoot"))
            continue
        x = _bisect(system, sw.section, sg, lo, hi, sw.horizon, tol)
        # the bisected point is accurate on the section; its curve on the
        # repelling semi-axis still comes from a shot of the final bracket
        curve = integrate(system, sw.section, x, sw.section + sg * sw.horizon)
        out.append(SkeletonCurve(wrap(x), label, curve, tol, "bisect"))
    return out


def equipped_set(
    system: OdeSystem,
    grid_size: int = GRID_SIZE,
    horizon: float = HORIZON,
    cluster_tol: float = CLUSTER_TOL,
    separation_tol: float = SEPARATION_TOL,
    *,
    tol: float = REFINE_TOL,
    phase: float = 0.5,
    section: float = 0.0,
) -> EquippedSet:
    """U-points (boundaries of stable bunches) and S-points (of unstable bunches)."""
    pts = []
    for kind in ("stable", "unstable"):
        sw = _sweep(system, kind, grid_size, horizon, cluster_tol, phase=phase, section=section)
        if np.any(sw.ambiguous):
            raise AmbiguousClusteringError("ambiguous clustering; refine the grid or extend the horizon")
        pts += [(s.point, s.label) for s in _skeleton_from_sweep(system, sw, tol)]
    e = EquippedSet(tuple(pts))
    if e.n < 1 or e.m < 1:
        raise BunchError(f"degenerate equipped set with n={e.n}, m={e.m}")
    if e.min_separation() < separation_tol:
        raise SeparationError(f"skeleton points closer than {separation_tol}")
    return e


# ----------------------------------------------------------- assumptions


@dataclass(frozen=True)
class ClassifyParams:
    grid_size: int = GRID_SIZE
    horizon: float = HORIZON
    cluster_tol: float = CLUSTER_TOL
    separation_tol: float = SEPARATION_TOL
    refine_tol: float = REFINE_TOL
    window: float = dch.WINDOW
    lambda_min: float = dch.LAMBDA_MIN
    sample_dt: float = 0.25
    entry_window: float = 25.0
    passage_cap: float = 25.0
    collar: float = 0.02
    phase: float = 0.5
    section: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _a1_from_sweep(sw: _Sweep, p: ClassifyParams):
    t = sw.t_samples - sw.section
    kinds, lams = dch.classify_many(t, sw.L_samples, p.window, p.lambda_min, rate_from=0.5 * sw.horizon)
    bad = np.flatnonzero(kinds == "marginal")
    axis = "R_plus" if sw.kind == "stable_Rplus" else "R_minus"
    return [{"x0": float(sw.x0[i]), "semiaxis": axis, "lambda": float(lams[i])} for i in bad], kinds


def _fit_curve(curve: IntegralCurve, semiaxis: str, section: float, horizon: float, p: ClassifyParams):
    sg = 1.0 if semiaxis == "R_plus" else -1.0
    m = int(round(horizon / 0.05))
    t = section + sg * np.linspace(0.0, horizon, m + 1)
    t = np.sort(t)
    L = curve.log_flow_from_start(t)
    return dch.fit_dichotomy(t - section, L, semiaxis, p.window, p.lambda_min, rate_from=0.5 * horizon)


def _skeleton_estimates(system, skel: list[SkeletonCurve], p: ClassifyParams, H: float):
    """Dichotomy of each skeleton curve on both semi-axes."""
    rows = []
    for s in skel:
        if s.label == "U":
            plus_curve = s.curve
            minus_curve = integrate(system, p.section, s.point, p.section - H)
        else:
            minus_curve = s.curve
            plus_curve = integrate(system, p.section, s.point, p.section + H)
        est = {}
        for axis, c in (("R_plus", plus_curve), ("R_minus", minus_curve)):
            lo, hi = c.span
            avail = (hi - p.section) if axis == "R_plus" else (p.section - lo)
            try:
                est[axis] = _fit_curve(c, axis, p.section, min(H, avail), p)
            except dch.DichotomyError as e:
                est[axis] = str(e)
        rows.append((s, est))
    return rows


def _passage_times(system, skel, bunches, p: ClassifyParams, sg: float):
    """Max passage time from the collar of each skeleton curve into its neighbouring bunches.

    Entries are taken at skel(t_e) +- collar for t_e in [0, 2W] (sweep direction);
    a passage ends when the solution comes within `collar` of the bunch's
    representative curve. Returns (max over [0, W], max over [0, 2W], censored).
    """
    W, Hp, d = p.entry_window, p.passage_cap, p.collar
    sec = p.section
    t_far = 2 * W + Hp + p.horizon
    te = np.linspace(0.0, 2 * W, int(round(2 * W / 0.25)) + 1)
    samples = np.linspace(0.0, Hp, int(round(Hp / 0.05)) + 1)
    results = []
    for s in skel:
        # skeleton curve along the entry window: shoot from far out
        c = s.curve
        lo_t, hi_t = c.span
        if not (lo_t <= sec + sg * (2 * W + Hp) <= hi_t):
            x_far = solve(system, sec, np.array([s.point - 1e-3, s.point + 1e-3]), sec + sg * t_far).x_final
            c = integrate(system, sec + sg * t_far, 0.0, sec, lift=0.5 * (x_far[0] + x_far[1]))
            if abs(wrap(c(sec)) - s.point) > 1e-6 and abs(abs(wrap(c(sec)) - s.point) - 1) > 1e-6:
                results.append(None)
                continue
        base = c(sec + sg * te)
        for side in (1.0, -1.0):
            entry = base + side * d
            # neighbouring bunch on this side: the one containing the section point just beside s
            probe = wrap(s.point + side * 2 * d)
            b = next((bb for bb in bunches if bb.contains(probe)), None)
            if b is None:
                continue
            rep = integrate(system, sec, b.representative, sec + sg * (2 * W + Hp))
            offs = sg * te
            r = solve(
                system, sec, entry, sec + sg * Hp, offsets=offs, t_eval=sec + sg * samples, rtol=SWEEP_RTOL, atol=SWEEP_ATOL
            )
            X = r.x_eval  # (len(samples), len(te))
            tt = sec + offs[None, :] + sg * samples[:, None]
            R = rep(tt)
            dist = np.abs(np.mod(X - R + 0.5, 1.0) - 0.5)
            hit = dist < d
            first = np.where(hit.any(axis=0), np.argmax(hit, axis=0), -1)
            pt = np.where(first >= 0, samples[np.maximum(first, 0)], np.inf)
            results.append((float(s.point), side, te, pt))
    return results


def check_assumptions(system: OdeSystem, params: ClassifyParams | None = None, **kw) -> GradientLikeReport:
    """Assumptions 1-4 at finite horizon, with witnesses for any failure."""
    p = params or ClassifyParams(**kw)
    H = p.horizon
    sweeps = {}
    for kind in ("stable", "unstable"):
        sweeps[kind] = _sweep(
            system, kind, p.grid_size, H, p.cluster_tol, phase=p.phase, section=p.section, sample_dt=p.sample_dt
        )
    s_b = _bunches_from_sweep(sweeps["stable"])
    u_b = _bunches_from_sweep(sweeps["unstable"])
    ambiguous = any(np.any(sw.ambiguous) for sw in sweeps.values())

    # A1: every grid curve hyperbolic on both semi-axes
    witnesses = []
    for sw in sweeps.values():
        w, _ = _a1_from_sweep(sw, p)
        witnesses += w

    skel, skel_err = [], None
    if not ambiguous:
        try:
            for kind in ("stable", "unstable"):
                skel += _skeleton_from_sweep(system, sweeps[kind], p.refine_tol)
        except BunchError as e:
            skel_err = str(e)
    estimates = _skeleton_estimates(system, skel, p, H)
    skel_rows = []
    for s, est in estimates:
        row = {"point": s.point, "label": s.label, "method": s.method, "error_bound": s.error_bound}
        for axis, e in est.items():
            row[axis] = e.to_dict() if isinstance(e, dch.DichotomyEstimate) else {"error": e}
            if isinstance(e, dch.DichotomyEstimate) and e.kind == "marginal":
                witnesses.append({"x0": s.point, "semiaxis": axis, "lambda": e.lambda_hat, "skeleton": s.label})
        skel_rows.append(row)
    if witnesses:
        a1 = AssumptionResult(
            "fails",
            f"lambda < {p.lambda_min} on the tail [{H / 2:g}, {H:g}]",
            {"marginal_curves": witnesses[:50], "count": len(witnesses)},
        )
    else:
        a1 = AssumptionResult("holds", f"up to horizon {H:g}", {"curves_checked": 2 * p.grid_size + len(skel)})

    # A2: counts stable under doubling the grid
    counts = (len(s_b), len(u_b))
    try:
        dbl = tuple(
            len(_bunches_from_sweep(_sweep(system, k, 2 * p.grid_size, H, p.cluster_tol, phase=p.phase, section=p.section)))
            for k in ("stable", "unstable")
        )
    except Exception as e:  # numerical failure in the doubled sweep
        dbl = None
        a2 = AssumptionResult("undetermined", "doubled grid failed", {"error": str(e)})
    if dbl is not None:
        diag = {"stable": counts[0], "unstable": counts[1], "stable_doubled": dbl[0], "unstable_doubled": dbl[1]}
        if ambiguous:
            gaps = [float(g) for sw in sweeps.values() for g in sw.gaps[sw.ambiguous]]
            diag["ambiguous_gaps"] = gaps[:20]
            a2 = AssumptionResult("undetermined", "ambiguous clustering at the horizon", diag)
        elif dbl == counts and min(counts) >= 1:
            a2 = AssumptionResult("holds", f"up to horizon {H:g}, grid doubling stable", diag)
        else:
            a2 = AssumptionResult("fails", "bunch count changes under grid doubling", diag)

    # A3: no U-curve is stable on R_minus (no S-curve unstable on R_plus); separation
    a3_diag = {}
    a3_bad = []
    for s, est in estimates:
        if s.label == "U" and getattr(est.get("R_minus"), "kind", None) == "stable":
            a3_bad.append({"point": s.point, "label": "U", "R_minus": "stable"})
        if s.label == "S" and getattr(est.get("R_plus"), "kind", None) == "unstable":
            a3_bad.append({"point": s.point, "label": "S", "R_plus": "unstable"})
    e_set = EquippedSet(tuple((s.point, s.label) for s in skel)) if skel else None
    if e_set is not None:
        a3_diag["min_separation"] = e_set.min_separation()
        if e_set.min_separation() < p.separation_tol:
            a3_bad.append({"separation": e_set.min_separation()})
    if skel_err or ambiguous or not skel:
        a3 = AssumptionResult("undetermined", "skeleton not refined", {"error": skel_err or "ambiguous clustering"})
    elif a3_bad:
        a3 = AssumptionResult("fails", "", {"violations": a3_bad, **a3_diag})
    else:
        a3 = AssumptionResult("holds", f"up to horizon {H:g}", a3_diag)

    # A4: passage times across the transitory strips stay bounded
    a4 = _check_a4(system, skel, s_b, u_b, p) if skel else AssumptionResult("undetermined", "no skeleton")

    gradient_like = all(a.status == "holds" for a in (a1, a2, a3, a4))
    if gradient_like and (e_set.n < 1 or e_set.m < 1):
        raise BunchError("gradient-like verdict with an empty U or S family")
    if gradient_like and p.section != 0.0:
        # report traces on the section t = 0; the flow keeps the cyclic order
        pos = solve(system, p.section, np.array([q for q, _ in e_set.points]), 0.0).x_final
        e_set = EquippedSet(tuple(zip(pos.tolist(), [l for _, l in e_set.points])))
    s_b = _attach_boundaries(s_b, [s.point for s in skel if s.label == "U"])
    u_b = _attach_boundaries(u_b, [s.point for s in skel if s.label == "S"])
    return GradientLikeReport(
        assumption1=a1,
        assumption2=a2,
        assumption3=a3,
        assumption4=a4,
        equipped_set=e_set if gradient_like else None,
        horizon=H,
        grid_size=p.grid_size,
        stable_bunches=tuple(s_b),
        unstable_bunches=tuple(u_b),
        skeleton=tuple(skel_rows),
        section=p.section,
    )


def _attach_boundaries(bunches, points):
    out = []
    for b in bunches:
        a, c = b.trace_interval
        # the skeleton point closest to each end of the arc
        ends = []
        for end in (a, c):
            cands = sorted(points, key=lambda q: circle_distance(q, wrap(end)))
            if cands:
                ends.append(cands[0])
        out.append(
            Bunch(b.kind, b.trace_interval, b.representative, b.limit, b.members, tuple(sorted(set(ends))))
        )
    return out


def _check_a4(system, skel, s_b, u_b, p: ClassifyParams) -> AssumptionResult:
    rows = []
    grow = []
    censored = []
    W = p.entry_window
    for sg, label, bunches in ((1.0, "U", s_b), (-1.0, "S", u_b)):
        sk = [s for s in skel if s.label == label]
        for item in _passage_times(system, sk, bunches, p, sg):
            if item is None:
                censored.append({"label": label, "reason": "skeleton curve lost along the entry window"})
                continue
            point, side, te, pt = item
            first = te <= W + 1e-12
            m1 = float(np.max(pt[first]))
            m2 = float(np.max(pt))
            row = {"point": point, "label": label, "side": side, "max_W": m1, "max_2W": m2}
            rows.append(row)
            if not np.isfinite(m1):
                censored.append(row)
            elif not np.isfinite(m2) or m2 - m1 > max(0.5, 0.1 * m1):
                grow.append(row)
    diag = {"entry_window": W, "passage_cap": p.passage_cap, "collar": p.collar, "strips": rows}
    if grow:
        diag["growing"] = grow
        return AssumptionResult("fails", "passage-time maximum grows when the entry window doubles", diag)
    if censored:
        diag["censored"] = censored
        return AssumptionResult("undetermined", f"passages exceed the cap {p.passage_cap:g}", diag)
    return AssumptionResult("holds", f"up to entry window {2 * W:g}, window doubling stable", diag)


def classify(system: OdeSystem, params: ClassifyParams | None = None, **kw) -> GradientLikeReport:
    return check_assumptions(system, params, **kw)
