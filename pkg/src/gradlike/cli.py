"""Command-line front end.

Exit codes: 0 success / positive verdict, 1 negative verdict, 2 usage or
input error, 3 numerical failure.

A model argument is either a path to an ODE spec JSON file, `lib:NAME`
for a library model, or `word:USUS` for the autonomization of a word.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bunch, construct, equimorph, invariant, periodic
from .expr import EvalDomainError, ExprError
from .ode import IntegrationError, OdeSystem, integrate, solve, wrap

EXIT_OK, EXIT_NO, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_default)


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text)


# ------------------------------------------------------------ spec loading


def system_from_doc(doc: dict, name: str = "spec") -> OdeSystem:
    if not isinstance(doc, dict):
        raise UsageError("spec must be a JSON object")
    form = doc.get("form", "expression")
    if form == "sampled":
        if doc.get("generator"):
            return construct.from_generator(doc["generator"])
        return construct.sampled_system(doc, name=name)
    if form != "expression":
        raise UsageError(f"unknown form {form!r}")
    if "rhs" not in doc:
        raise UsageError("spec needs an 'rhs' expression")
    period = doc.get("period")
    if period is not None and not float(period) > 0:
        raise UsageError("period must be positive")
    return OdeSystem.from_text(
        str(doc["rhs"]), doc.get("params") or {}, period=period, limits=doc.get("limits"), name=doc.get("name", name)
    )


def load_system(arg: str) -> OdeSystem:
    if arg.startswith("lib:"):
        name = arg[4:]
        if name not in construct.library_names():
            raise UsageError(f"unknown model {name!r}; see list-models")
        return construct.library(name)
    if arg.startswith("word:"):
        return construct.autonomize(_word(arg[5:]))
    path = Path(arg)
    if not path.is_file():
        raise UsageError(f"no such spec file: {arg}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed JSON in {arg}: {e}") from e
    return system_from_doc(doc, name=path.stem)


def _word(token: str) -> invariant.UInvariant:
    try:
        return invariant.UInvariant.from_word(token.strip().upper())
    except invariant.InvariantError as e:
        raise UsageError(str(e)) from e


def load_linear(arg: str, **kw) -> equimorph.LinearSystem:
    """`expr:-2-sin(t)` or a JSON file {"coefficient": text, "params": {...}}."""
    if arg.startswith("expr:"):
        return equimorph.LinearSystem.build(arg[5:], **kw)
    path = Path(arg)
    if not path.is_file():
        raise UsageError(f"no such spec file: {arg}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed JSON in {arg}: {e}") from e
    if "coefficient" not in doc:
        raise UsageError("linear spec needs a 'coefficient' expression a(t)")
    return equimorph.LinearSystem.build(doc["coefficient"], doc.get("params") or {}, **kw)


# ------------------------------------------------------------------ plots


def foliation_svg(system: OdeSystem, report: bunch.GradientLikeReport, t_span=(-3.0, 3.0), fan: int = 24) -> str:
    """Integral-curve fan over (t, x) with the skeleton curves highlighted."""
    W, Hpx, pad = 640, 360, 30
    t0, t1 = t_span

    def px(t, x):
        return pad + (t - t0) / (t1 - t0) * (W - 2 * pad), Hpx - pad - x * (Hpx - 2 * pad)

    def path(ts, xs):
        segs, cur = [], []
        prev = None
        for t, x in zip(ts, xs):
            w = wrap(x)
            if prev is not None and abs(w - prev) > 0.5:
                segs.append(cur)
                cur = []
            cur.append(px(t, w))
            prev = w
        segs.append(cur)
        return " ".join("M" + " L".join(f"{a:.1f},{b:.1f}" for a, b in s) for s in segs if len(s) > 1)

    ts = np.linspace(t0, t1, 121)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{Hpx}" viewBox="0 0 {W} {Hpx}">',
        f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{Hpx - 2 * pad}" fill="none" stroke="#888"/>',
    ]
    x0 = (np.arange(fan) + 0.5) / fan
    for tt in (ts[ts >= 0], ts[ts <= 0][::-1]):
        r = solve(system, 0.0, x0, float(tt[-1]), t_eval=tt)
        for j in range(fan):
            out.append(f'<path class="fan" d="{path(tt, r.x_eval[:, j])}" fill="none" stroke="#bbb"/>')
    if report.equipped_set is not None:
        for pos, label in report.equipped_set.points:
            cls, color = ("u-curve", "#c0392b") if label == "U" else ("s-curve", "#2c6fbb")
            for tt in (ts[ts >= 0], ts[ts <= 0][::-1]):
                r = solve(system, 0.0, [pos], float(tt[-1]), t_eval=tt)
                out.append(f'<path class="{cls}" d="{path(tt, r.x_eval[:, 0])}" fill="none" stroke="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------- commands


def _params(a) -> bunch.ClassifyParams:
    phase = 0.5 if a.seed is None else float(np.random.default_rng(a.seed).uniform(0.05, 0.95))
    return bunch.ClassifyParams(
        grid_size=a.grid,
        horizon=a.horizon,
        cluster_tol=a.cluster_tol,
        separation_tol=a.separation_tol,
        refine_tol=a.refine_tol,
        window=a.window,
        lambda_min=a.lambda_min,
        phase=phase,
        section=a.section,
    )


def cmd_classify(a) -> int:
    system = load_system(a.spec)
    rep = bunch.classify(system, _params(a))
    _write(a.json, rep.to_json())
    if a.csv and rep.equipped_set is not None:
        _write(a.csv, rep.equipped_set.to_csv())
    if a.svg:
        _write(a.svg, foliation_svg(system, rep))
    return EXIT_OK if rep.gradient_like else EXIT_NO


def cmd_equiv(a) -> int:
    reps = [bunch.classify(load_system(s), _params(a)) for s in (a.spec_a, a.spec_b)]
    words = [r.word for r in reps]
    out = {"words": words, "gradient_like": [r.gradient_like for r in reps]}
    if None in words:
        out["equivalent"] = False
        out["reason"] = "not gradient-like"
        _write(None, _dump(out))
        return EXIT_NO
    ua, ub = (invariant.UInvariant.from_word(w) for w in words)
    out["orientation_preserving"] = invariant.equivalent(ua, ub)
    out["with_reflection"] = invariant.equivalent(ua, ub, allow_reflection=True)
    out["equivalent"] = out["with_reflection"] if a.allow_reflection else out["orientation_preserving"]
    _write(None, _dump(out))
    return EXIT_OK if out["equivalent"] else EXIT_NO


def cmd_autonomize(a) -> int:
    inv = _word(a.word)
    system = construct.autonomize(inv)
    doc = construct.to_spec(system, sampled=True)
    doc["word"] = inv.canonical_rotation
    _write(a.out, construct.spec_to_json(doc))
    if a.svg:
        _write(a.svg, construct.annulus_svg(system))
    return EXIT_OK


def cmd_poincare(a) -> int:
    system = load_system(a.spec)
    try:
        P = periodic.poincare_map(system, a.grid, iterations=a.iterations)
    except periodic.PeriodicError as e:
        if "not declared" in str(e):
            raise UsageError(str(e)) from e
        raise
    rho, err, rat = periodic.rotation_number(P, a.iterations, q_max=a.q_max)
    P = periodic.PoincareMap(P.system, P.period, P.x, P.y, P.degree, P.monotone, rho, err, rat, P.rtol)
    rep = periodic.periodic_report(P)
    _write(a.json, _dump(rep))
    if a.csv and rep["orbits"]:
        q, p = rat.denominator, rat.numerator
        _write(a.csv, periodic.orbits_csv(periodic.periodic_points(P, q, p)))
    return EXIT_OK


def cmd_equimorph(a) -> int:
    s1 = equimorph.SemiStrip(load_linear(a.spec_a), a.c_star)
    s2 = equimorph.SemiStrip(load_linear(a.spec_b), a.c1_star)
    rep = equimorph.verify_equimorphism(s1, s2, a.samples, d=a.d, seed=a.seed or 0)
    out = rep.to_dict()
    out["systems"] = [
        {"name": s.system.name, "M": s.system.M, "lambda": s.system.lam, "a0": s.system.a0} for s in (s1, s2)
    ]
    _write(a.json, _dump(out))
    if a.csv:
        C = np.linspace(0.05, 1.0, 20) * s1.C_star
        _write(a.csv, equimorph.phi_table(s1, s2, C, np.linspace(0.0, 20.0, 11)))
    return EXIT_OK if rep.ok else EXIT_NO


def cmd_simulate(a) -> int:
    system = load_system(a.spec)
    curve = integrate(system, a.t0, a.x0, a.t1)
    _write(a.csv, curve.to_csv())
    return EXIT_OK


def cmd_almost_periods(a) -> int:
    system = load_system(a.spec)
    curve = integrate(system, -a.burn_in, a.x0, a.window)
    l_max = a.l_max if a.l_max is not None else a.window / 2
    rep = periodic.almost_periods(curve, a.epsilon, l_max, a.l_step, t_start=0.0)
    _write(a.json, rep.to_json())
    return EXIT_OK if rep.relatively_dense else EXIT_NO


def cmd_list_models(a) -> int:
    for name in construct.library_names():
        sys.stdout.write(f"{name}\t{construct.LIBRARY_NOTES.get(name, '')}\n")
    return EXIT_OK


# ----------------------------------------------------------------- parser


def _classify_flags(p):
    d = bunch.ClassifyParams()
    p.add_argument("--horizon", type=float, default=d.horizon)
    p.add_argument("--grid", type=int, default=d.grid_size)
    p.add_argument("--cluster-tol", type=float, default=d.cluster_tol)
    p.add_argument("--separation-tol", type=float, default=d.separation_tol)
    p.add_argument("--refine-tol", type=float, default=d.refine_tol)
    p.add_argument("--window", type=float, default=d.window)
    p.add_argument("--lambda-min", type=float, default=d.lambda_min)
    p.add_argument("--section", type=float, default=d.section)
    p.add_argument("--seed", type=int, default=None, help="fixes the sampling grid phase")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gradlike", description="Gradient-like scalar ODEs on the circle.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="check the assumptions and compute the equipped set")
    p.add_argument("spec")
    _classify_flags(p)
    p.add_argument("--json", default=None, help="report path (default stdout)")
    p.add_argument("--csv", default=None, help="equipped set as position,label")
    p.add_argument("--svg", default=None, help="foliation plot")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("equiv", help="compare the u-invariants of two models")
    p.add_argument("spec_a")
    p.add_argument("spec_b")
    p.add_argument("--allow-reflection", action="store_true")
    _classify_flags(p)
    p.set_defaults(fn=cmd_equiv)

    p = sub.add_parser("autonomize", help="asymptotically autonomous model with a given word")
    p.add_argument("word")
    p.add_argument("--out", default=None, help="spec path (default stdout)")
    p.add_argument("--svg", default=None, help="annulus diagram")
    p.set_defaults(fn=cmd_autonomize)

    p = sub.add_parser("poincare", help="Poincare map, rotation number and periodic orbits")
    p.add_argument("spec")
    p.add_argument("--q-max", type=int, default=periodic.Q_MAX)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--json", default=None)
    p.add_argument("--csv", default=None, help="orbit table")
    p.set_defaults(fn=cmd_poincare)

    p = sub.add_parser("equimorph", help="semi-strip conjugacy of two linear systems")
    p.add_argument("spec_a", help="expr:A(t) or JSON with 'coefficient'")
    p.add_argument("spec_b")
    p.add_argument("--c-star", type=float, default=1.0)
    p.add_argument("--c1-star", type=float, default=1.0)
    p.add_argument("--d", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", default=None)
    p.add_argument("--csv", default=None, help="map graph as C,tau,C1")
    p.set_defaults(fn=cmd_equimorph)

    p = sub.add_parser("simulate", help="integrate one solution and print it as CSV")
    p.add_argument("spec")
    p.add_argument("t0", type=float)
    p.add_argument("x0", type=float)
    p.add_argument("t1", type=float)
    p.add_argument("--csv", default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("almost-periods", help="epsilon-almost periods of one tracked solution")
    p.add_argument("spec")
    p.add_argument("x0", type=float)
    p.add_argument("epsilon", type=float)
    p.add_argument("--window", type=float, default=400.0)
    p.add_argument("--burn-in", type=float, default=30.0)
    p.add_argument("--l-max", type=float, default=None)
    p.add_argument("--l-step", type=float, default=0.05)
    p.add_argument("--json", default=None)
    p.set_defaults(fn=cmd_almost_periods)

    p = sub.add_parser("list-models", help="library models")
    p.set_defaults(fn=cmd_list_models)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return a.fn(a)
    except EvalDomainError as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERIC
    except (UsageError, ExprError, construct.ConstructionError, invariant.InvariantError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except (
        IntegrationError,
        bunch.BunchError,
        periodic.PeriodicError,
        equimorph.EquimorphError,
        FloatingPointError,
        ArithmeticError,
        np.linalg.LinAlgError,
    ) as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
