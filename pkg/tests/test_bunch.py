import json

import numpy as np
import pytest

from gradlike import bunch
from gradlike.bunch import BunchError, ClassifyParams, EquippedSet, classify, equipped_set, find_bunches, refine_boundary
from gradlike.construct import autonomize, library
from gradlike.ode import OdeSystem, circle_distance, solve
from gradlike.invariant import word_of

from oracles import limit_zeros, reversible_mu_oracle

SIN = library("autonomous_sin")
SIN4 = OdeSystem.from_text("-sin(4*pi*x)")


def test_find_bunches_single_attractor():
    bs = find_bunches(SIN, "stable")
    assert len(bs) == 1
    b = bs[0]
    assert circle_distance(b.limit, 0.5) < 1e-6
    # a lone bunch is the circle punctured at the repeller; its trace spans a full turn
    assert b.contains(0.3) and b.contains(0.9)
    assert b.trace_interval[1] - b.trace_interval[0] == pytest.approx(1.0)


def test_find_bunches_two_attractors():
    bs = find_bunches(SIN4, "stable")
    assert sorted(round(b.limit % 1.0, 6) % 1.0 for b in bs) == [0.0, 0.5]


def test_find_bunches_reversible_mu_three():
    s = library("reversible_mu")
    bs = find_bunches(s, "stable")
    tp = 2 * np.pi
    z, sg = limit_zeros(lambda x: np.cos(tp * x) * (np.sin(tp * x) ** 2 - 0.04))
    assert len(bs) == int(np.sum(sg < 0)) == 3
    for b in bs:
        assert min(circle_distance(b.limit, q) for q in z[sg < 0]) < 1e-6


def test_bunch_members_converge():
    for b in find_bunches(SIN4, "stable"):
        a, c = b.trace_interval
        pts = np.linspace(a, c, 9)[1:-1]
        y = solve(SIN4, 0.0, pts, 50.0).x_final
        assert np.max(circle_distance(y, y[0])) < 1e-3


def test_refine_boundary_examples():
    assert circle_distance(refine_boundary(SIN, (-0.1, 0.1), "stable"), 0.0) < 1e-9
    assert refine_boundary(SIN4, (0.1, 0.4), "stable") == pytest.approx(0.25, abs=1e-9)
    assert refine_boundary(SIN4, (0.1, 0.4), "stable", method="bisect") == pytest.approx(0.25, abs=1e-9)
    with pytest.raises(bunch.RefinementError):
        refine_boundary(SIN, (0.3, 0.4), "stable")


def test_refine_boundary_glued_design_point():
    sysm = autonomize("US")
    word = sysm.meta["generator"]["word"]
    u = [k / 2 for k, c in enumerate(word) if c == "U"][0]
    x = refine_boundary(sysm, (u - 0.1, u + 0.1), "stable")
    assert circle_distance(x, u) < 1e-6


def test_refined_point_separates_bunches():
    from gradlike.dichotomy import estimate_dichotomy
    from gradlike.ode import integrate

    x = refine_boundary(SIN4, (0.1, 0.4), "stable")
    y = solve(SIN4, 0.0, [x - 1e-6, x + 1e-6], 50.0).x_final
    assert circle_distance(y[0], 0.0) < 1e-6 and circle_distance(y[1], 0.5) < 1e-6
    # followed backwards the boundary curve stays at the repeller
    est = estimate_dichotomy(SIN4, integrate(SIN4, 0.0, x, -50.0), "R_minus", 50.0)
    assert est.kind == "unstable"


def test_equipped_set_examples():
    e = equipped_set(SIN)
    assert [l for _, l in e.points] == ["U", "S"]
    assert circle_distance(e.points[0][0], 0.0) < 1e-6 and circle_distance(e.points[1][0], 0.5) < 1e-6
    e4 = equipped_set(SIN4)
    ref = {0.0: "S", 0.25: "U", 0.5: "S", 0.75: "U"}
    for p, l in e4.points:
        q = min(ref, key=lambda r: circle_distance(r, p))
        assert circle_distance(q, p) < 1e-6 and ref[q] == l
    assert word_of(e4).canonical_rotation == "USUS"


def test_equipped_set_reversible_mu_against_oracle():
    pts, word = reversible_mu_oracle()
    e = equipped_set(library("reversible_mu"))
    assert e.n == 3 and e.m == 3
    assert word_of(e).canonical_rotation == word
    for (p, l), (q, k) in zip(e.points, pts):
        assert l == k and circle_distance(p, q) < 1e-6


def test_equipped_set_validation():
    with pytest.raises(BunchError):
        EquippedSet(((0.0, "U"), (0.5, "X")))
    e = EquippedSet(((0.7, "S"), (0.2, "U")))
    assert [p for p, _ in e.points] == [0.2, 0.7]
    assert e.to_csv().splitlines() == ["position,label", "0.200000000000,U", "0.700000000000,S"]


def _check_report_invariants(r):
    holds = all(getattr(r, f"assumption{i}").status == "holds" for i in range(1, 5))
    assert r.gradient_like == holds
    if r.gradient_like:
        e = r.equipped_set
        assert e.n >= 1 and e.m >= 1
        assert len(r.stable_bunches) == e.n
        assert len(r.unstable_bunches) == e.m
        pos = [p for p, _ in e.points]
        assert all(a < b for a, b in zip(pos, pos[1:]))
        assert e.min_separation() >= 1e-4
        # every U-point lies inside an unstable bunch, every S-point inside a stable one
        for p in e.u_points:
            assert sum(b.contains(p) for b in r.unstable_bunches) == 1
        for p in e.s_points:
            assert sum(b.contains(p) for b in r.stable_bunches) == 1


@pytest.mark.parametrize("name", ["autonomous_sin", "riccati_gauss", "reversible_mu", "periodic_rough"])
def test_classify_library(name):
    r = classify(library(name))
    _check_report_invariants(r)
    assert r.gradient_like
    json.loads(r.to_json())


def test_classify_sin4_and_glued():
    for sysm, word in ((SIN4, "USUS"), (autonomize("UUS"), "UUS")):
        r = classify(sysm)
        _check_report_invariants(r)
        assert r.word == word


def test_reversible_fails_a1():
    r = classify(library("reversible"))
    _check_report_invariants(r)
    assert not r.gradient_like
    assert r.assumption1.status == "fails"
    assert r.assumption1.diagnostics["count"] > 0


def test_u_points_in_backward_clusters():
    # the skeleton U-curve tends backwards to the limit of the unstable bunch containing it
    r = classify(SIN4)
    for p in r.equipped_set.u_points:
        (b,) = [b for b in r.unstable_bunches if b.contains(p)]
        y = solve(SIN4, 0.0, [p], -50.0).x_final[0]
        assert circle_distance(y, b.limit) < 1e-3


def test_grid_refinement_invariance():
    tol = 1e-9
    for sysm in (SIN4, library("riccati_gauss")):
        a = equipped_set(sysm, grid_size=360, tol=tol)
        b = equipped_set(sysm, grid_size=720, tol=tol)
        assert word_of(a).canonical_rotation == word_of(b).canonical_rotation
        assert len(a.points) == len(b.points)
        for p, l in a.points:
            q, k = min(b.points, key=lambda z: circle_distance(z[0], p))
            assert l == k and circle_distance(p, q) < 2 * tol + 1e-12


def test_section_flag_maps_back():
    s = library("riccati_gauss")
    r0 = classify(s)
    r1 = classify(s, ClassifyParams(section=0.3))
    assert r1.word == r0.word
    for (p, l), (q, k) in zip(r0.equipped_set.points, r1.equipped_set.points):
        assert l == k and circle_distance(p, q) < 1e-7


def test_separation_and_degenerate_errors():
    with pytest.raises(BunchError):
        equipped_set(OdeSystem.from_text("0.3"))
