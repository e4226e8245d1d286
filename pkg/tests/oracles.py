"""Independent reference computations shared by the test modules."""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from gradlike.invariant import canonical


def limit_zeros(f, n=4000):
    """Simple zeros of an autonomous 1-periodic field with derivative signs."""
    x = np.arange(n + 1) / n
    v = f(x)
    out = []
    for a, b, fa, fb in zip(x[:-1], x[1:], v[:-1], v[1:]):
        if fa == 0.0:
            out.append(a)
        elif fa * fb < 0:
            out.append(brentq(f, a, b, xtol=1e-15))
    z = np.array(sorted(set(np.round(np.mod(out, 1.0), 14))))
    h = 1e-7
    slope = (f(z + h) - f(z - h)) / (2 * h)
    return z, np.sign(slope)


def skeleton_from_limits(rhs, f_limit, t_far=8.0):
    """Equipped set of an asymptotically autonomous field whose limits agree.

    Unstable zeros of the limit are followed backwards from t_far to 0 and
    stable zeros forwards from -t_far; both directions are contracting, so a
    general-purpose integrator is accurate. Valid when exp-small forcing at
    |t| >= t_far is negligible.
    """
    z, sg = limit_zeros(f_limit)
    pts = []
    for p, s in zip(z, sg):
        t0 = t_far if s > 0 else -t_far
        r = solve_ivp(lambda t, y: rhs(t, y), (t0, 0.0), [p], rtol=1e-12, atol=1e-14, method="DOP853")
        pts.append((float(np.mod(r.y[0, -1], 1.0)), "U" if s > 0 else "S"))
    pts.sort()
    return pts, canonical("".join(l for _, l in pts))


def reversible_mu_oracle(mu=0.04):
    tp = 2 * np.pi

    def rhs(t, x):
        return np.cos(tp * x) * (np.sin(tp * x) ** 2 + np.exp(-t * t) - mu) / tp

    def lim(x):
        return np.cos(tp * x) * (np.sin(tp * x) ** 2 - mu) / tp

    return skeleton_from_limits(rhs, lim)
