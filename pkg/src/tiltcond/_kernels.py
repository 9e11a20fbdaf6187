"""Compiled inner loops for the sequential kernel quadrature and inversion.

Component laws are passed as a kind code and four parameters:
``0`` Gaussian ``(mean, sd, 0, 0)``; ``1`` gamma form ``(shape, rate, shift, lgamma(shape))``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy.special import gammaln

from .distributions import ComponentSpec

GAUSSIAN = 0
GAMMA = 1
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def law_code(spec: ComponentSpec) -> tuple[int, float, float, float, float]:
    if spec.kind == "gaussian":
        mu, sd = spec.params
        return GAUSSIAN, float(mu), float(sd), 0.0, 0.0
    shape, rate, shift = spec._gamma_form()
    return GAMMA, float(shape), float(rate), float(shift), float(gammaln(shape))


@njit(cache=True)
def _log_kernel_point(kind, p0, p1, p2, p3, t, m, v, c, flo, fhi, bounded, y):
    if bounded and not (flo < y < fhi):
        return -np.inf
    if kind == 0:
        z = (y - (p0 + p1 * p1 * t)) / p1
        lp = -0.5 * z * z - math.log(p1) - _LOG_SQRT_2PI
    else:
        u = y - p2
        if u <= 0.0:
            return -np.inf
        r = p1 - t
        lp = p0 * math.log(r) - r * u - p3
        if p0 != 1.0:
            lp += (p0 - 1.0) * math.log(u)
    d = y - m
    return lp - d * d / (2.0 * v) + c * y


@njit(cache=True)
def quad_level(kind, p0, p1, p2, p3, t, m, v, c, lo, hi, flo, fhi, bounded, power, panels, gx, gw):
    """Scaled node values, panel masses, totals and log shifts for each path.

    Panels are uniform in ``u`` with ``y = lo + u**power`` (``power == 1`` is
    the identity); node values include the Jacobian.
    """
    P = t.shape[0]
    Q = gx.shape[0]
    vals = np.empty((P, panels, Q))
    mass = np.empty((P, panels))
    total = np.empty(P)
    scale = np.empty(P)
    for r in range(P):
        b = power[r]
        span = hi[r] - lo[r] if b == 1.0 else (hi[r] - lo[r]) ** (1.0 / b)
        width = span / panels
        half = 0.5 * width
        best = -np.inf
        for j in range(panels):
            left = j * width
            for q in range(Q):
                u = left + half * (gx[q] + 1.0)
                if b == 1.0:
                    y = lo[r] + u
                    jac = 0.0
                else:
                    y = lo[r] + u ** b
                    jac = math.log(b) + (b - 1.0) * math.log(u)
                lk = _log_kernel_point(kind, p0, p1, p2, p3, t[r], m[r], v[r], c[r], flo[r], fhi[r], bounded, y)
                lk += jac
                vals[r, j, q] = lk
                if lk > best:
                    best = lk
        scale[r] = best
        acc = 0.0
        for j in range(panels):
            pm = 0.0
            for q in range(Q):
                e = math.exp(vals[r, j, q] - best) if best > -np.inf else 0.0
                vals[r, j, q] = e
                pm += gw[q] * e
            pm *= half
            mass[r, j] = pm
            acc += pm
        total[r] = acc
    return vals, mass, total, scale


@njit(cache=True)
def invert_legendre_cdf(coef, target, full, iters):
    """Solve ``int_{-1}^x sum_m c_m P_m = target`` for x in [-1, 1], per row."""
    R, Q = coef.shape
    out = np.empty(R)
    leg = np.empty(Q + 1)
    for r in range(R):
        lo = -1.0
        hi = 1.0
        x = 2.0 * (target[r] / full[r]) - 1.0 if full[r] > 0 else 0.0
        if x < -1.0:
            x = -1.0
        elif x > 1.0:
            x = 1.0
        tol = 1e-14 * max(full[r], 1e-300)
        for _ in range(iters):
            leg[0] = 1.0
            leg[1] = x
            for k in range(1, Q):
                leg[k + 1] = ((2 * k + 1) * x * leg[k] - k * leg[k - 1]) / (k + 1)
            integral = coef[r, 0] * (x + 1.0)
            dens = coef[r, 0]
            for k in range(1, Q):
                integral += coef[r, k] * (leg[k + 1] - leg[k - 1]) / (2 * k + 1)
                dens += coef[r, k] * leg[k]
            F = integral - target[r]
            if abs(F) <= tol:
                break
            if F < 0:
                lo = x
            else:
                hi = x
            if hi - lo <= 4e-16:
                break
            cand = x - F / dens if dens > 0 else np.nan
            if cand > lo and cand < hi:
                x = cand
            else:
                x = 0.5 * (lo + hi)
        out[r] = x
    return out
