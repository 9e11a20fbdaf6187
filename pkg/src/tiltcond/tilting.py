"""Exponential tilting and the mean-matching tilt equations.

The solver inverts ``mbar_{l,n}(theta) = (1/(n-l+1)) sum_{j=l}^n m_j(theta)``,
which is strictly increasing on the mgf domain. It brackets by geometric
expansion from a starting point, then runs Newton steps safeguarded by
bisection (the derivative, a mean of variances, is available in closed form).
The batch form solves many targets at once and is what the sequential
sampler uses; the scalar API wraps it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .distributions import DistributionFamily, law_cumulant_stack
from .errors import BracketFailure, IndexOutOfRange, TargetOutsideSupport

__all__ = [
    "TiltSolution",
    "AggregateMoments",
    "tilted_density",
    "mean_tilt_function",
    "solve_mean_tilt",
    "solve_mean_tilt_batch",
    "aggregate_moments",
    "aggregate_arrays",
    "sample_tilted",
]

MAX_EXPANSIONS = 200
MAX_ITERATIONS = 200


@dataclass(frozen=True)
class TiltSolution:
    theta: float
    residual: float
    iterations: int
    bracket: tuple[float, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bracket"] = list(self.bracket)
        return d


@dataclass(frozen=True)
class AggregateMoments:
    """Sums of tilted-component moments over the index range ``p..q``.

    ``mu4``, ``mu5`` and ``mu6`` are sums of centred moments (what the
    Edgeworth polynomials consume); ``lambda_sum`` is the sum of fourth
    cumulants ``mu4_j - 3 (s_j^2)^2``.
    """

    range: tuple[int, int]
    theta: float
    s2: float
    sigma: float
    mu3: float
    mu4: float
    mu5: float
    mu6: float
    sum_s4: float
    sum_mu3_s2: float
    lambda_sum: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["range"] = list(self.range)
        return d


def tilted_density(family: DistributionFamily, j: int, theta: float, x):
    """Density of the tilted component ``exp(theta x) p_j(x) / Phi_j(theta)``."""
    spec = family.component(j)
    family.check_theta(theta)
    out = np.exp(spec.log_tilted_density(theta, x))
    return float(out) if np.ndim(out) == 0 else out


def sample_tilted(family: DistributionFamily, j: int, theta: float,
                  rng: np.random.Generator, size=None):
    spec = family.component(j)
    family.check_theta(theta)
    return spec.sample_tilted(theta, rng, size)


def _range_weights(family: DistributionFamily, p: int, q: int) -> np.ndarray:
    if p > q:
        raise IndexOutOfRange(f"empty range {p}..{q}")
    return family.range_counts(p, q)


def mean_tilt_function(family: DistributionFamily, p: int, q: int, theta):
    """``(mbar_{p,q}(theta), d mbar / d theta)``, vectorised over theta."""
    w = _range_weights(family, p, q)
    theta = np.asarray(theta, dtype=float)
    k = law_cumulant_stack(family, theta, 2)
    count = q - p + 1
    mbar = np.tensordot(w, k[:, 0], axes=1) / count
    slope = np.tensordot(w, k[:, 1], axes=1) / count
    return mbar, slope


def _theta_bounds(family: DistributionFamily) -> tuple[float, float]:
    lo, hi = family.theta_domain
    if math.isfinite(lo) and math.isfinite(hi):
        margin = 1e-9 * (hi - lo)
        return lo + margin, hi - margin
    lb = lo + 1e-9 * max(1.0, abs(lo)) if math.isfinite(lo) else -math.inf
    ub = hi - 1e-9 * max(1.0, abs(hi)) if math.isfinite(hi) else math.inf
    return lb, ub


def solve_mean_tilt_batch(family: DistributionFamily, p: int, q: int, targets,
                          warm_start=None, tol: float | None = None):
    """Solve ``mbar_{p,q}(theta) = target`` for an array of targets.

    Returns ``(theta, residual, iterations, lo, hi)`` arrays. ``tol`` defaults
    to ``1e-12 * max(1, |target|)`` per element.
    """
    s = np.atleast_1d(np.asarray(targets, dtype=float))
    inside = family.inside_support(s)
    if not np.all(inside):
        bad = s[~inside][0]
        raise TargetOutsideSupport(f"target {bad} not inside support {family.support}")
    tol_arr = 1e-12 * np.maximum(1.0, np.abs(s)) if tol is None else np.full_like(s, tol)
    lb, ub = _theta_bounds(family)
    if warm_start is None:
        theta0 = np.zeros_like(s)
    else:
        theta0 = np.broadcast_to(np.asarray(warm_start, dtype=float), s.shape).copy()
    theta0 = np.clip(theta0, lb, ub)

    def F(th, target):
        m, d = mean_tilt_function(family, p, q, th)
        return m - target, d

    # --- bracket expansion ------------------------------------------------
    f0, d0 = F(theta0, s)
    lo = np.where(f0 <= 0, theta0, -np.inf)
    hi = np.where(f0 >= 0, theta0, np.inf)
    newton = np.abs(f0) / np.maximum(d0, 1e-300)
    step = np.maximum(2.0 * newton, 1e-12 * (1.0 + np.abs(theta0)))
    step = np.where(np.isfinite(step), step, 1.0)
    need_up = f0 < 0
    need_dn = f0 > 0
    probe_base = theta0.copy()
    for _ in range(MAX_EXPANSIONS):
        active = need_up | need_dn
        if not active.any():
            break
        idx = np.flatnonzero(active)
        direction = np.where(need_up[idx], 1.0, -1.0)
        trial = np.clip(probe_base[idx] + direction * step[idx], lb, ub)
        ft, _ = F(trial, s[idx])
        up = need_up[idx]
        dn = need_dn[idx]
        got_up = up & (ft >= 0)
        got_dn = dn & (ft <= 0)
        hi[idx[got_up]] = trial[got_up]
        lo[idx[got_dn]] = trial[got_dn]
        # tighten the other side with the failed probe
        lo[idx[up & ~got_up]] = trial[up & ~got_up]
        hi[idx[dn & ~got_dn]] = trial[dn & ~got_dn]
        stuck_up = up & ~got_up & (trial >= ub)
        stuck_dn = dn & ~got_dn & (trial <= lb)
        if stuck_up.any() or stuck_dn.any():
            bad = idx[stuck_up | stuck_dn][0]
            raise BracketFailure(
                f"cannot bracket target {s[bad]} for range {p}..{q} inside theta domain "
                f"{family.theta_domain}: target too close to the support boundary")
        need_up[idx[got_up]] = False
        need_dn[idx[got_dn]] = False
        step[idx] *= 2.0
    else:
        raise BracketFailure(f"bracket expansion did not terminate for range {p}..{q}")

    # --- safeguarded Newton -------------------------------------------------
    theta = theta0.copy()
    fa = f0.copy()
    da = d0.copy()
    iters = np.zeros(s.shape, dtype=int)
    done = np.abs(fa) <= tol_arr
    for it in range(MAX_ITERATIONS):
        if done.all():
            break
        idx = np.flatnonzero(~done)
        cand = theta[idx] - fa[idx] / da[idx]
        l, h = lo[idx], hi[idx]
        ok = np.isfinite(cand) & (cand > l) & (cand < h)
        cand = np.where(ok, cand, 0.5 * (l + h))
        fc, dc = F(cand, s[idx])
        theta[idx] = cand
        fa[idx] = fc
        da[idx] = dc
        iters[idx] += 1
        lo[idx] = np.where(fc < 0, cand, l)
        hi[idx] = np.where(fc > 0, cand, h)
        conv = np.abs(fc) <= tol_arr[idx]
        # bracket collapsed to adjacent floats: accept
        conv |= (hi[idx] - lo[idx]) <= 4 * np.spacing(np.abs(cand) + 1e-300)
        done[idx] = conv
    else:
        if not done.all():
            raise BracketFailure("tilt solver did not converge")
    lo = np.where(np.isfinite(lo), lo, theta)
    hi = np.where(np.isfinite(hi), hi, theta)
    return theta, np.abs(fa), iters, lo, hi


def solve_mean_tilt(family: DistributionFamily, range_: tuple[int, int], target: float,
                    warm_start: float = 0.0, tol: float | None = None) -> TiltSolution:
    """Unique ``theta`` with ``mbar_{l,n}(theta) = target``."""
    p, q = range_
    th, res, it, lo, hi = solve_mean_tilt_batch(family, p, q, [target], [warm_start], tol)
    return TiltSolution(float(th[0]), float(res[0]), int(it[0]), (float(lo[0]), float(hi[0])))


def aggregate_arrays(family: DistributionFamily, p: int, q: int, theta) -> dict[str, np.ndarray]:
    """Vectorised aggregate moments over ``p..q`` for an array of tilts."""
    w = _range_weights(family, p, q)
    theta = np.asarray(theta, dtype=float)
    k = law_cumulant_stack(family, theta, 6)  # (U, 6, ...)
    k2, k3, k4, k5, k6 = k[:, 1], k[:, 2], k[:, 3], k[:, 4], k[:, 5]

    def tot(a):
        return np.tensordot(w, a, axes=1)

    s2 = tot(k2)
    return {
        "s2": s2,
        "sigma": np.sqrt(s2),
        "mu3": tot(k3),
        "mu4": tot(k4 + 3.0 * k2 * k2),
        "mu5": tot(k5 + 10.0 * k3 * k2),
        "mu6": tot(k6 + 15.0 * k4 * k2 + 10.0 * k3 * k3 + 15.0 * k2 ** 3),
        "sum_s4": tot(k2 * k2),
        "sum_mu3_s2": tot(k3 * k2),
        "lambda_sum": tot(k4),
    }


def aggregate_moments(family: DistributionFamily, theta: float, range_: tuple[int, int]) -> AggregateMoments:
    family.check_theta(theta)
    p, q = range_
    arr = aggregate_arrays(family, p, q, float(theta))
    return AggregateMoments(range=(p, q), theta=float(theta), **{k: float(v) for k, v in arr.items()})
