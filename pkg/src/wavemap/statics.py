"""Harmonic-map connectors between consecutive roots of g.

Radial harmonic maps solve r Q'(r) = +-g(Q), which in s = log r is the
autonomous flow dQ/ds = +-g(Q).  A finite-energy connector joins two
consecutive roots l = Q(0) and m = Q(inf) monotonically, approaches them
like powers r^{+-|g'(endpoint)|}, and carries energy

    E(Q) = 2 |G(m) - G(l)|.

Profiles are built once by fixed-step RK4 in s from the normalization
Q(r=1) = (l+m)/2, sampled on a uniform s-grid (plus the s=0 anchor so the
normalization is exact), and interpolated by a cubic Hermite spline whose
nodal derivatives are the ODE right-hand side itself.  Beyond the sampled
range the stored power-law tails take over.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .geometry import GeometryError, Metric, eval_G, find_vanishing_set

RK4_STEP = 1e-3
ENDPOINT_TOL = 1e-10   # integration stops this close to the target root
STITCH_TOL = 1e-6      # eval switches to the tail model this close
N_SAMPLES = 4096


class StaticsError(GeometryError):
    pass


@dataclass
class HarmonicMap:
    """A connector Q with Q(0) = ell, Q(inf) = m, normalized Q(1) = (ell+m)/2."""
    metric: Metric
    ell: float             # endpoint at r = 0
    m: float               # endpoint at r = inf
    sign: int              # branch of r Q' = sign * g(Q)
    energy: float          # 2 |G(m) - G(ell)|
    profile: CubicHermiteSpline
    s_lo: float
    s_hi: float
    stitch_lo: float       # s below which the inner tail model is used
    stitch_hi: float
    c_lo: float            # Q - ell ~ c_lo * r^{k_lo} as r -> 0
    c_hi: float            # Q - m  ~ c_hi * r^{-k_hi} as r -> inf
    k_lo: float            # |g'(ell)|
    k_hi: float            # |g'(m)|

    def __call__(self, r):
        return eval_Q(self, r)

    def d_dlogr(self, r):
        """r Q'(r), exact through the ODE: sign * g(Q(r))."""
        return self.sign * self.metric.g(eval_Q(self, r))


def _rk4_until(metric, sign, q0, target, h, s_max):
    """Integrate dQ/ds = sign*g(Q) from s=0 until |Q - target| < ENDPOINT_TOL.

    Returns (s_end, stitch_s, q_at_stitch).  h may be negative.  Raises on
    stagnation, reporting the achieved endpoint gap.
    """
    g = metric.g
    q, s = q0, 0.0
    stitch_s, q_stitch = None, None
    gap0 = abs(q0 - target)
    n_max = int(abs(s_max / h)) + 1
    for _ in range(n_max):
        k1 = sign * float(g(q))
        k2 = sign * float(g(q + 0.5 * h * k1))
        k3 = sign * float(g(q + 0.5 * h * k2))
        k4 = sign * float(g(q + h * k3))
        q = q + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
        gap = abs(q - target)
        if stitch_s is None and gap < STITCH_TOL:
            stitch_s, q_stitch = s, q
        if gap < ENDPOINT_TOL:
            return s, stitch_s, q_stitch
        if gap > 2 * gap0 + 1.0:
            break  # running away from the target: wrong branch or bad root
    raise StaticsError(
        f"harmonic map integration stagnated toward {target}: "
        f"endpoint gap {abs(q - target):.3e} after |s| = {abs(s):.1f}")


def _rk4_to_targets(metric, sign, q0, s_targets, h):
    """Q at prescribed s values (sorted away from 0), landing exactly."""
    g = metric.g
    out = np.empty(len(s_targets))
    q, s = q0, 0.0
    for i, st in enumerate(s_targets):
        while True:
            step = h if abs(st - s) > abs(h) else (st - s)
            if step == 0.0:
                break
            k1 = sign * float(g(q))
            k2 = sign * float(g(q + 0.5 * step * k1))
            k3 = sign * float(g(q + 0.5 * step * k2))
            k4 = sign * float(g(q + step * k3))
            q = q + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            s = st if abs(step) < abs(h) else s + h
            if s == st:
                break
        out[i] = q
    return out


@lru_cache(maxsize=64)
def build_harmonic_map(metric, ell, direction):
    """Construct the connector starting at the root `ell` (value at r = 0)
    and joining the adjacent root above it (direction=+1) or below (-1).

    Raises StaticsError when no adjacent root exists inside the metric's
    search window, or when the ODE integration stagnates.
    """
    vset = find_vanishing_set(metric)
    root_l = vset.root_at(ell)
    root_m = vset.neighbor(root_l.value, +1 if direction > 0 else -1)
    if root_m is None:
        raise StaticsError(
            f"target endpoint outside search window: no root "
            f"{'above' if direction > 0 else 'below'} {root_l.value}")
    lo, hi = root_l.value, root_m.value

    mid = 0.5 * (lo + hi)
    sigma_g = 1.0 if metric.g(mid) > 0 else -1.0
    # monotone from lo at r=0 to hi at r=inf: dQ/ds must carry the sign of hi-lo
    sign = int(sigma_g if hi > lo else -sigma_g)

    k_lo = abs(float(metric.g_prime(lo)))
    k_hi = abs(float(metric.g_prime(hi)))
    s_max = max(80.0, 80.0 / min(k_lo, k_hi, 1.0))

    s_hi, st_hi, q_st_hi = _rk4_until(metric, sign, mid, hi, RK4_STEP, s_max)
    s_lo, st_lo, q_st_lo = _rk4_until(metric, sign, mid, lo, -RK4_STEP, s_max)

    # uniform s-samples over the integrated range, with an exact s=0 anchor
    # so that profile(r=1) is the midpoint by construction
    s_grid = np.linspace(s_lo, s_hi, N_SAMPLES)
    s_neg = s_grid[s_grid < 0.0]
    s_pos = s_grid[s_grid > 0.0]
    q_pos = _rk4_to_targets(metric, sign, mid, s_pos, RK4_STEP)
    q_neg = _rk4_to_targets(metric, sign, mid, s_neg[::-1], -RK4_STEP)[::-1]
    s_all = np.concatenate([s_neg, [0.0], s_pos])
    q_all = np.concatenate([q_neg, [mid], q_pos])
    dq_all = sign * np.asarray(metric.g(q_all), dtype=float)
    profile = CubicHermiteSpline(s_all, q_all, dq_all)

    c_lo = (q_st_lo - lo) * math.exp(-k_lo * st_lo)
    c_hi = (q_st_hi - hi) * math.exp(k_hi * st_hi)
    energy = 2.0 * abs(eval_G(metric, hi) - eval_G(metric, lo))

    return HarmonicMap(metric=metric, ell=lo, m=hi, sign=sign, energy=energy,
                       profile=profile, s_lo=s_lo, s_hi=s_hi,
                       stitch_lo=st_lo, stitch_hi=st_hi,
                       c_lo=c_lo, c_hi=c_hi, k_lo=k_lo, k_hi=k_hi)


def eval_Q(qmap, r):
    """Q(r) for scalar or array r >= 0, tails included.

    Q(0) = ell and Q(inf) = m are honored exactly; in between the spline
    covers log r in [s_lo, s_hi] and the power tails take over beyond the
    stitch radii (|Q - endpoint| < 1e-6).
    """
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    out = np.empty_like(r)
    zero = r == 0.0
    inf = np.isinf(r)
    pos = ~zero & ~inf
    out[zero] = qmap.ell
    out[inf] = qmap.m
    if np.any(pos):
        s = np.log(r[pos])
        vals = np.empty_like(s)
        lo_tail = s < qmap.stitch_lo
        hi_tail = s > qmap.stitch_hi
        mid = ~lo_tail & ~hi_tail
        if np.any(mid):
            vals[mid] = qmap.profile(s[mid])
        if np.any(lo_tail):
            vals[lo_tail] = qmap.ell + qmap.c_lo * np.exp(qmap.k_lo * s[lo_tail])
        if np.any(hi_tail):
            vals[hi_tail] = qmap.m + qmap.c_hi * np.exp(-qmap.k_hi * s[hi_tail])
        out[pos] = vals
    return float(out[0]) if scalar else out


def rescale_Q(qmap, lam, grid):
    """Sample the bubble (Q(r/lam), 0) on a radial grid as a RadialField.

    Warns when lam is below four grid spacings: the transition region of
    the bubble is then unresolved by the grid.
    """
    from .evolution import RadialField  # deferred: statics stays grid-free
    if lam <= 0:
        raise ValueError("scale must be positive")
    if lam < 4.0 * grid.dr:
        warnings.warn(f"under-resolved bubble: scale {lam:.3e} < 4 dr "
                      f"= {4 * grid.dr:.3e}", RuntimeWarning, stacklevel=2)
    psi = eval_Q(qmap, grid.r / lam)
    return RadialField(grid, psi, np.zeros_like(psi), ell0=qmap.ell,
                       ell_inf=qmap.m, time=0.0)
