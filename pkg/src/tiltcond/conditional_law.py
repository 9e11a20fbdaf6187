"""Approximations G_k to the law of X_1..X_k given S_{1,n} = n a.

Two constructions:

* small k: the product of components tilted at the single ``theta_n^a``
  solving ``mbar_{1,n}(theta) = a``;
* large k: the sequential kernel

      g(y | y_1..y_i) = C_i^{-1} p~_{i+1}(y)
                        exp(-(y - m_{i+1}(t))^2 / (2 s^2_{i+2,n}(t)))
                        exp(3 alpha3_{i+2,n}(t) y / sigma_{i+2,n}(t)),

  with ``t = t_{i,n}`` re-solved from the running partial sum at each step.

Each step's normaliser is a composite Gauss-Legendre rule on the window
``m_{i+1}(t) +/- 12 s_{i+1}(t)``, widened where the kernel has not yet
decayed to 1e-17 of its value at the mean, refined by panel doubling until two
successive rules agree to 1e-11. Sampling inverts the same rule: the panel
is picked from cumulative panel masses, and inside it the CDF of the
polynomial interpolant through the node values is inverted by safeguarded
Newton, so the sampled law matches the evaluated density to interpolation
accuracy.

For supports with a finite edge the kernel is restricted to values that
keep the next residual mean inside the support; prefixes outside that set
have zero conditional density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import invert_legendre_cdf, law_code, quad_level
from .distributions import DistributionFamily, law_cumulant_stack
from .errors import (
    ConfigError,
    EmptyTailRange,
    GridUnderflow,
    QuadratureFailure,
    ResidualMeanOutOfSupport,
)
from .tilting import TiltSolution, solve_mean_tilt, solve_mean_tilt_batch

__all__ = [
    "RegimeConfig",
    "RegimeChoice",
    "ConditionalState",
    "GkSample",
    "choose_regime",
    "make_state",
    "kernel_unnormalized",
    "kernel_normalizer",
    "g_k_log_density",
    "g_k_log_density_paths",
    "sample_g_k",
    "sample_g_k_paths",
    "small_k_tilt",
]

WINDOW_SDS = 12.0
GL_NODES = 16
START_PANELS = 4
MAX_PANELS = 1024
QUAD_RTOL = 1e-11
NEWTON_ITERS = 60
TAIL_RATIO = 1e-17
WIDEN_STEPS = 50
EDGE_SMOOTHNESS = 7  # integrand near a gamma edge is at least u**6 after the power map

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


# ---------------------------------------------------------------------------
# regime
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeConfig:
    mode: str = "auto"
    rho: float = 0.3
    tau: float = 6.5

    def __post_init__(self):
        mode = {"small": "small_k", "large": "large_k"}.get(self.mode, self.mode)
        object.__setattr__(self, "mode", mode)
        errors = []
        if mode not in ("small_k", "large_k", "auto"):
            errors.append({"field": "regime", "message": f"unknown mode {self.mode!r}"})
        if not 0.0 < self.rho < 0.5:
            errors.append({"field": "rho", "message": "rho must lie in (0, 1/2)"})
        if not self.tau > 6.0:
            errors.append({"field": "tau", "message": "tau must exceed 6"})
        if errors:
            raise ConfigError("invalid regime config", errors)


@dataclass(frozen=True)
class RegimeChoice:
    regime: str
    in_theory: bool


def choose_regime(n: int, k: int, config: RegimeConfig = RegimeConfig()) -> RegimeChoice:
    """Pick small_k when ``k <= n^rho``, large_k when ``n - k >= (log n)^tau``.

    When both or neither condition holds (in auto mode) the choice falls back
    to ``k <= sqrt(n)`` and is flagged as outside the proven regimes.
    """
    if not 1 <= k <= n - 2:
        raise ConfigError(f"need 1 <= k <= n-2, got n={n}, k={k}",
                          [{"field": "k", "message": "need 1 <= k <= n-2"}])
    small_ok = k <= n ** config.rho
    large_ok = (n - k) >= math.log(n) ** config.tau
    if config.mode == "small_k":
        return RegimeChoice("small_k", small_ok)
    if config.mode == "large_k":
        return RegimeChoice("large_k", large_ok)
    if small_ok != large_ok:
        return RegimeChoice("small_k" if small_ok else "large_k", True)
    return RegimeChoice("small_k" if k <= math.sqrt(n) else "large_k", False)


def _resolve_regime(n: int, k: int, regime) -> str:
    if isinstance(regime, RegimeConfig):
        return choose_regime(n, k, regime).regime if regime.mode == "auto" else regime.mode
    cfg = RegimeConfig(mode=regime)
    return choose_regime(n, k, cfg).regime if cfg.mode == "auto" else cfg.mode


# ---------------------------------------------------------------------------
# sequential step machinery (vectorised over paths)
# ---------------------------------------------------------------------------

@dataclass
class _Step:
    i: int
    t: np.ndarray
    mean_next: np.ndarray
    sd_next: np.ndarray
    var_tail: np.ndarray
    skew: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    feas_lo: np.ndarray
    feas_hi: np.ndarray
    power: np.ndarray   # panel map y = lo + u**power; > 1 only at a singular edge

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.feas_lo[0]) or np.isfinite(self.feas_hi[0]))


def _check_sizes(family: DistributionFamily, n: int, k: int) -> None:
    if n > len(family):
        raise ConfigError(f"family has {len(family)} components, need n={n}",
                          [{"field": "n", "message": f"family has only {len(family)} components"}])
    if not 0 <= k <= n - 1:
        raise ConfigError(f"need 0 <= k <= n-1, got k={k}", [{"field": "k", "message": "out of range"}])


def _residual_targets(family: DistributionFamily, n: int, a: float, i: int, partial: np.ndarray) -> np.ndarray:
    r = (n * a - partial) / (n - i)
    ok = family.inside_support(r)
    if not np.all(ok):
        bad = r[~ok][0]
        raise ResidualMeanOutOfSupport(
            f"residual mean {bad} at step i={i} outside support {family.support}")
    return r


def _step_from_tilt(family: DistributionFamily, n: int, a: float, i: int,
                    partial: np.ndarray, t: np.ndarray) -> _Step:
    if i + 2 > n:
        raise EmptyTailRange(f"tail range {i + 2}..{n} is empty")
    spec = family.component(i + 1)
    cum_next = spec.cumulants(t, 2)
    w = family.range_counts(i + 2, n)
    k = law_cumulant_stack(family, t, 3)
    var_tail = np.tensordot(w, k[:, 1], axes=1)
    mu3_tail = np.tensordot(w, k[:, 2], axes=1)
    # 3 alpha3 / sigma with alpha3 = mu3 / (6 s2^{3/2})
    skew = mu3_tail / (2.0 * var_tail * var_tail)
    mean_next = cum_next[0]
    sd_next = np.sqrt(cum_next[1])
    A, B = family.support
    budget = n * a - partial
    rest = n - i - 1
    # values keeping the next residual mean strictly inside the support
    feas_lo = budget - rest * B if math.isfinite(B) else np.full_like(budget, -np.inf)
    feas_hi = budget - rest * A if math.isfinite(A) else np.full_like(budget, np.inf)
    lo = np.maximum(mean_next - WINDOW_SDS * sd_next, np.maximum(feas_lo, A))
    hi = np.minimum(mean_next + WINDOW_SDS * sd_next, np.minimum(feas_hi, B))
    step = _Step(i, t, mean_next, sd_next, var_tail, skew, lo, hi, feas_lo, feas_hi, _edge_power(spec, lo))
    _widen(family, step)
    return step


def _widen(family: DistributionFamily, step: _Step) -> None:
    """Push window ends outwards while the kernel there exceeds TAIL_RATIO of its value at the mean.

    Exponential tails keep ~1e-6 of their mass beyond 12 sd.
    """
    A, B = family.component(step.i + 1).support
    cap_lo = np.maximum(step.feas_lo, A)
    cap_hi = np.minimum(step.feas_hi, B)
    with np.errstate(invalid="ignore"):
        ref = _log_kernel(family, step, step.mean_next[:, None])[:, 0] + math.log(TAIL_RATIO)
    for end, cap, sign in ((step.hi, cap_hi, 1.0), (step.lo, cap_lo, -1.0)):
        for _ in range(WIDEN_STEPS):
            with np.errstate(invalid="ignore"):
                grow = (sign * (cap - end) > 0) & (_log_kernel(family, step, end[:, None])[:, 0] > ref)
            if not grow.any():
                break
            end[grow] = np.clip(end[grow] + sign * 4.0 * step.sd_next[grow], cap_lo[grow], cap_hi[grow])


def _edge_power(spec, lo: np.ndarray) -> np.ndarray:
    """Power for windows starting at a gamma edge with non-integer shape.

    The density behaves like ``(y - A)**(shape - 1)`` there, which uniform
    panels integrate slowly; under ``y = A + u**b`` the integrand is
    ``u**(b shape - 1)`` times a smooth factor.
    """
    power = np.ones_like(lo)
    if spec.kind == "gaussian":
        return power
    shape = spec._gamma_form()[0]
    if shape == round(shape):
        return power
    power[lo <= spec.support[0]] = math.ceil(EDGE_SMOOTHNESS / shape)
    return power


def _solve_step(family, n, a, i, partial, warm) -> _Step:
    r = _residual_targets(family, n, a, i, partial)
    th = solve_mean_tilt_batch(family, i + 1, n, r, warm)[0]
    return _step_from_tilt(family, n, a, i, partial, th)


def _log_kernel(family: DistributionFamily, step: _Step, y, rows=None) -> np.ndarray:
    """Log of the unnormalised kernel; ``rows`` selects paths (broadcast over y's trailing axes)."""
    sel = slice(None) if rows is None else rows
    t = step.t[sel]
    m = step.mean_next[sel]
    v = step.var_tail[sel]
    c = step.skew[sel]
    y = np.asarray(y, dtype=float)
    extra = (None,) * (y.ndim - 1)
    idx = (slice(None),) + extra
    spec = family.component(step.i + 1)
    lp = spec.log_tilted_density(t[idx], y)
    d = y - m[idx]
    out = lp - d * d / (2.0 * v[idx]) + c[idx] * y
    if step.bounded:
        feasible = (y > step.feas_lo[sel][idx]) & (y < step.feas_hi[sel][idx])
        out = np.where(feasible, out, -np.inf)
    return out


@dataclass
class _Level:
    """Converged quadrature for the paths ``rows`` at one panel count."""

    rows: np.ndarray
    panels: int
    scale: np.ndarray   # per-path shift M; node values are exp(log kernel - M)
    values: np.ndarray  # (R, panels, Q) scaled kernel values at the GL nodes
    mass: np.ndarray    # (R, panels) scaled panel masses
    total: np.ndarray   # (R,)


@dataclass
class _Quad:
    levels: list
    log_c: np.ndarray


def _quad_level(family, step, rows, panels):
    everything = rows.size == step.t.shape[0]

    def sel(a):
        return a if everything else a[rows]

    code = law_code(family.component(step.i + 1))
    return quad_level(*code, sel(step.t), sel(step.mean_next), sel(step.var_tail), sel(step.skew),
                      sel(step.lo), sel(step.hi), sel(step.feas_lo), sel(step.feas_hi), step.bounded,
                      sel(step.power), panels, _GL_X, _GL_W)


def _normalize(family: DistributionFamily, step: _Step) -> _Quad:
    P = step.t.shape[0]
    if np.any(step.hi <= step.lo):
        raise GridUnderflow(f"empty integration window at step i={step.i}")
    pending = np.arange(P)
    prev_total = prev_scale = None
    panels = START_PANELS
    levels = []
    log_c = np.empty(P)
    while pending.size:
        vals, mass, total, scale = _quad_level(family, step, pending, panels)
        if np.any(~np.isfinite(scale)):
            raise GridUnderflow(f"kernel underflows over the whole window at step i={step.i}")
        if prev_total is not None:
            # compare on a common scale
            other = prev_total * np.exp(prev_scale - scale)
            conv = np.abs(total - other) <= QUAD_RTOL * total
            if conv.any():
                rows = pending[conv]
                levels.append(_Level(rows, panels, scale[conv], vals[conv], mass[conv], total[conv]))
                log_c[rows] = scale[conv] + np.log(total[conv])
            keep = ~conv
            pending = pending[keep]
            prev_total = total[keep]
            prev_scale = scale[keep]
        else:
            prev_total, prev_scale = total, scale
        if pending.size and panels >= MAX_PANELS:
            raise QuadratureFailure(
                f"kernel normaliser did not converge with {panels} panels at step i={step.i}")
        panels *= 2
    if not np.all(np.isfinite(log_c)):
        raise GridUnderflow(f"kernel mass below representable range at step i={step.i}")
    return _Quad(levels, log_c)


# Legendre coefficients of the degree Q-1 interpolant through the GL nodes:
# c_m = (2m+1)/2 sum_i w_i f_i P_m(x_i), exact by discrete orthogonality.
def _legendre_table(x: np.ndarray, deg: int) -> np.ndarray:
    out = np.empty(x.shape + (deg + 1,))
    out[..., 0] = 1.0
    if deg:
        out[..., 1] = x
    for m in range(1, deg):
        out[..., m + 1] = ((2 * m + 1) * x * out[..., m] - m * out[..., m - 1]) / (m + 1)
    return out


_TO_COEF = (_legendre_table(_GL_X, GL_NODES - 1) * _GL_W[:, None]).T * (2 * np.arange(GL_NODES)[:, None] + 1) / 2.0


def _span(step: _Step, rows) -> np.ndarray:
    """Length of the integration interval in the panel variable ``u``."""
    w = step.hi[rows] - step.lo[rows]
    b = step.power[rows]
    return np.where(b == 1.0, w, w ** (1.0 / b))


def _inverse_cdf(family: DistributionFamily, step: _Step, quad: _Quad, u: np.ndarray) -> np.ndarray:
    """Invert the piecewise-polynomial CDF defined by the converged quadrature.

    On each panel the kernel is represented by its Legendre interpolant at
    the GL nodes, whose integral is exactly the GL panel mass; inversion
    needs no further kernel evaluations.
    """
    y = np.empty(step.t.shape[0])
    for lev in quad.levels:
        R = lev.rows.size
        ar = np.arange(R)
        csum = np.cumsum(lev.mass, axis=1)
        target = u[lev.rows] * lev.total
        j = np.minimum((csum < target[:, None]).sum(axis=1), lev.panels - 1)
        before = np.where(j > 0, csum[ar, np.maximum(j - 1, 0)], 0.0)
        pmass = lev.mass[ar, j]
        resid = np.clip(target - before, 0.0, pmass)
        lo, b = step.lo[lev.rows], step.power[lev.rows]
        width = _span(step, lev.rows) / lev.panels
        coef = lev.values[ar, j] @ _TO_COEF.T
        x = invert_legendre_cdf(coef, 2.0 * resid / width, 2.0 * pmass / width, NEWTON_ITERS)
        u = j * width + 0.5 * width * (x + 1.0)
        y[lev.rows] = np.where(b == 1.0, lo + u, lo + u ** b)
    return y


# ---------------------------------------------------------------------------
# public state-based API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalState:
    n: int
    a: float
    k: int
    i: int
    partial_sum: float
    tilt: TiltSolution


def make_state(family: DistributionFamily, n: int, a: float, k: int, prefix=(),
               warm_start: float = 0.0) -> ConditionalState:
    """State after observing ``prefix = (y_1..y_i)``; solves ``t_{i,n}``."""
    _check_sizes(family, n, k)
    prefix = np.asarray(prefix, dtype=float).ravel()
    i = prefix.size
    if not 0 <= i <= k - 1:
        raise ConfigError(f"prefix length {i} outside 0..k-1 (k={k})",
                          [{"field": "prefix", "message": "length must be < k"}])
    partial = float(prefix.sum())
    r = (n * a - partial) / (n - i)
    if not family.inside_support(r):
        raise ResidualMeanOutOfSupport(f"residual mean {r} outside support {family.support}")
    sol = solve_mean_tilt(family, (i + 1, n), r, warm_start=warm_start)
    return ConditionalState(n, float(a), k, i, partial, sol)


def _state_step(family: DistributionFamily, state: ConditionalState) -> _Step:
    return _step_from_tilt(family, state.n, state.a, state.i,
                           np.array([state.partial_sum]), np.array([state.tilt.theta]))


def kernel_unnormalized(family: DistributionFamily, state: ConditionalState, y):
    step = _state_step(family, state)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.exp(_log_kernel(family, step, y_arr[None, :])[0])
    return float(out[0]) if np.ndim(y) == 0 else out


def kernel_log_normalizer(family: DistributionFamily, state: ConditionalState) -> float:
    step = _state_step(family, state)
    return float(_normalize(family, step).log_c[0])


def kernel_normalizer(family: DistributionFamily, state: ConditionalState) -> float:
    """``C_i = integral of kernel_unnormalized over y``."""
    return math.exp(kernel_log_normalizer(family, state))


# ---------------------------------------------------------------------------
# g_k: evaluation and sampling
# ---------------------------------------------------------------------------

def small_k_tilt(family: DistributionFamily, n: int, a: float) -> TiltSolution:
    """``theta_n^a``: the solution of ``mbar_{1,n}(theta) = a``."""
    if not family.inside_support(a):
        raise ResidualMeanOutOfSupport(f"level a={a} outside support {family.support}")
    return solve_mean_tilt(family, (1, n), a)


@dataclass
class GkSample:
    """Paths drawn from G_k with their log-densities and tilt diagnostics."""

    paths: np.ndarray        # (P, k)
    log_density: np.ndarray  # (P,)
    tilts: np.ndarray        # (P, k): t_{i,n} per step (constant theta_n^a for small_k)
    step_log_density: np.ndarray = field(repr=False, default=None)  # (P, k)
    regime: str = "large_k"

    @property
    def last_tilt(self) -> np.ndarray:
        return self.tilts[:, -1]


def _large_k_pass(family, n, a, k, values=None, uniforms=None):
    P = values.shape[0] if values is not None else uniforms.shape[0]
    partial = np.zeros(P)
    t = np.zeros(P)
    paths = np.empty((P, k))
    tilts = np.empty((P, k))
    steps = np.empty((P, k))
    for i in range(k):
        step = _solve_step(family, n, a, i, partial, t)
        quad = _normalize(family, step)
        if uniforms is not None:
            y = _inverse_cdf(family, step, quad, uniforms[:, i])
        else:
            y = values[:, i]
        lk = _log_kernel(family, step, y[:, None])[:, 0]
        steps[:, i] = lk - quad.log_c
        paths[:, i] = y
        tilts[:, i] = step.t
        partial = partial + y
        t = step.t
    return GkSample(paths, steps.sum(axis=1), tilts, steps, "large_k")


def _small_k_logpdf(family, n, a, Y):
    theta = small_k_tilt(family, n, a).theta
    out = np.zeros(Y.shape[0])
    for j in range(Y.shape[1]):
        out += family.component(j + 1).log_tilted_density(theta, Y[:, j])
    return out, theta


def g_k_log_density_paths(family: DistributionFamily, n: int, a: float, k: int, Y,
                          regime="auto") -> np.ndarray:
    """Vectorised ``log g_k`` for rows of ``Y`` (shape ``(P, k)``)."""
    _check_sizes(family, n, k)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != k:
        raise ConfigError(f"expected {k} coordinates, got {Y.shape[1]}",
                          [{"field": "y", "message": f"need {k} coordinates"}])
    mode = _resolve_regime(n, k, regime)
    if mode == "small_k":
        return _small_k_logpdf(family, n, a, Y)[0]
    return _large_k_pass(family, n, a, k, values=Y).log_density


def g_k_log_density(family: DistributionFamily, n: int, a: float, k: int, y, regime="auto") -> float:
    return float(g_k_log_density_paths(family, n, a, k, np.asarray(y, dtype=float)[None, :], regime)[0])


def sample_g_k_paths(family: DistributionFamily, n: int, a: float, k: int, n_paths: int,
                     rng: np.random.Generator, regime="auto") -> GkSample:
    """Draw ``n_paths`` independent paths from G_k.

    Large-k paths consume one uniform per coordinate, ``rng.random((n_paths, k))``,
    so a row depends only on its own uniforms.
    """
    _check_sizes(family, n, k)
    mode = _resolve_regime(n, k, regime)
    if mode == "small_k":
        theta = small_k_tilt(family, n, a).theta
        Y = np.empty((n_paths, k))
        for j in range(k):
            Y[:, j] = family.component(j + 1).sample_tilted(theta, rng, n_paths)
        logd, _ = _small_k_logpdf(family, n, a, Y)
        tilts = np.full((n_paths, k), theta)
        steps = np.stack([family.component(j + 1).log_tilted_density(theta, Y[:, j]) for j in range(k)], axis=1)
        return GkSample(Y, logd, tilts, steps, "small_k")
    u = rng.random((n_paths, k))
    return _large_k_pass(family, n, a, k, uniforms=u)


def sample_g_k(family: DistributionFamily, n: int, a: float, k: int, regime, rng: np.random.Generator) -> np.ndarray:
    """One path ``y_1..y_k`` from G_k."""
    return sample_g_k_paths(family, n, a, k, 1, rng, regime).paths[0]
