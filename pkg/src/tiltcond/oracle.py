"""Reference conditional laws and total-variation estimation.

The exact conditional density of ``X_1..X_k`` given ``S_{1,n} = s`` is

    prod_{j<=k} p_j(y_j) * p_{S_{k+1,n}}(s - sum y) / p_{S_{1,n}}(s),

with both sum densities computed on a grid by FFT convolution. The ratio is
unchanged when every component is tilted by the same theta, so by default
the oracle tilts the family at ``theta_n^a``; the conditioning point then
sits at the centre of the sum law instead of in its far tail, where FFT
round-off would dominate.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import signal, stats

from .distributions import ComponentSpec, DistributionFamily
from .errors import (
    ConfigError,
    GridTooCoarse,
    IndexOutOfRange,
    NonFiniteLogDensity,
    NotGaussianFamily,
    ZeroDenominator,
)
from .tilting import solve_mean_tilt

__all__ = [
    "GridDensity",
    "TvEstimate",
    "ConditionalOracle",
    "grid_sum_density",
    "exact_conditional_density",
    "gaussian_conditional_params",
    "gaussian_conditional_log_density",
    "gaussian_conditional_sample",
    "tv_distance",
    "tv_from_log_ratios",
    "standardized_sum_density",
]

GRID_MAGIC = b"TGRD"
GRID_VERSION = 1
_GRID_HEADER = struct.Struct("<4sHddQ")

WIDTH_SDS = 12.0
POINTS_PER_SD = 512
TRIM = 1e-18
COARSE_TOL = 1e-6
REFINE_STEPS = 2  # halvings allowed when the spacing is automatic


# ---------------------------------------------------------------------------
# grid densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridDensity:
    origin: float
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("grid values must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.values.size)

    @property
    def mass(self) -> float:
        return float(self.spacing * self.values.sum())

    def pdf(self, s):
        """Interpolated density: log-linear between positive nodes, linear otherwise."""
        s = np.asarray(s, dtype=float)
        pos = (s - self.origin) / self.spacing
        i = np.floor(pos).astype(np.int64)
        inside = (i >= 0) & (i < self.values.size - 1)
        # exact hit on the last node
        last = pos == self.values.size - 1
        ic = np.clip(i, 0, max(self.values.size - 2, 0))
        frac = np.clip(pos - ic, 0.0, 1.0)
        v0 = self.values[ic]
        v1 = self.values[np.minimum(ic + 1, self.values.size - 1)]
        both = (v0 > 0) & (v1 > 0)
        with np.errstate(divide="ignore"):
            logint = np.exp(np.log(np.where(both, v0, 1.0)) * (1 - frac)
                            + np.log(np.where(both, v1, 1.0)) * frac)
        lin = v0 * (1 - frac) + v1 * frac
        out = np.where(both, logint, lin)
        out = np.where(inside, out, 0.0)
        out = np.where(last, self.values[-1], out)
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("x,density\n")
            for xv, dv in zip(self.x, self.values):
                fh.write(f"{xv:.17g},{dv:.17g}\n")

    def to_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_GRID_HEADER.pack(GRID_MAGIC, GRID_VERSION, self.origin, self.spacing, self.values.size))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "GridDensity":
        raw = Path(path).read_bytes()
        magic, version, origin, spacing, count = _GRID_HEADER.unpack_from(raw)
        if magic != GRID_MAGIC or version != GRID_VERSION:
            raise ValueError(f"{path}: not a version-{GRID_VERSION} TGRD file")
        vals = np.frombuffer(raw, dtype="<f8", count=count, offset=_GRID_HEADER.size)
        return cls(origin, spacing, vals.copy())


def _component_window(spec: ComponentSpec, h: float) -> tuple[float, int]:
    """Grid origin and node count covering the component; a finite edge sits on a node."""
    k = spec.cumulants(0.0, 2)
    mean, sd = float(k[0]), math.sqrt(float(k[1]))
    A, B = spec.support
    lo = mean - WIDTH_SDS * sd
    hi = mean + WIDTH_SDS * sd
    # skewed laws keep visible mass past 12 sd: widen until the density is
    # below TRIM of its peak
    probe = np.linspace(max(lo, A), min(hi, B), 513)
    with np.errstate(divide="ignore"):
        floor = float(np.max(spec.log_density(probe[1:-1]))) + math.log(TRIM)
        while spec.log_density(hi) > floor and hi < B:
            hi += 4.0 * sd
        while spec.log_density(lo) > floor and lo > A:
            lo -= 4.0 * sd
    origin = A if math.isfinite(A) and lo <= A else lo
    return origin, int(math.ceil((hi - origin) / h)) + 1


def _frozen(spec: ComponentSpec):
    if spec.kind == "gaussian":
        return stats.norm(*spec.params)
    shape, rate, shift = spec._gamma_form()
    return stats.gamma(shape, loc=shift, scale=1.0 / rate)


def _component_grid(spec: ComponentSpec, h: float) -> GridDensity:
    """Point-sampled component density (zero at a finite edge if unbounded there)."""
    origin, count = _component_window(spec, h)
    x = origin + h * np.arange(count)
    with np.errstate(divide="ignore"):
        vals = np.exp(spec.log_density(x))
    if origin == spec.support[0]:
        edge = spec.boundary_density(0.0)
        vals[0] = edge if math.isfinite(edge) else 0.0
    return GridDensity(origin, h, vals)


def _component_cells(spec: ComponentSpec, h: float) -> tuple[float, np.ndarray]:
    """Exact mass of the cell around each node, divided by h.

    Convolving cell masses is exact for the sum of the variables rounded to
    the grid, so a density singular or discontinuous at a support edge adds
    no low-order error; what remains is the O(h^2) smoothing by the rounding.
    """
    origin, count = _component_window(spec, h)
    x = origin + h * np.arange(count)
    A, B = spec.support
    left = np.clip(x - 0.5 * h, A, B)
    right = np.clip(x + 0.5 * h, A, B)
    law = _frozen(spec)
    # cdf differences below the median, survival differences above
    lower = x <= law.median()
    mass = np.where(lower, law.cdf(right) - law.cdf(left), law.sf(left) - law.sf(right))
    return origin, np.maximum(mass, 0.0) / h


def _trim(origin: float, h: float, v: np.ndarray) -> tuple[float, np.ndarray]:
    v = np.where(v > 0, v, 0.0)
    keep = np.flatnonzero(v > TRIM * v.max())
    a, b = keep[0], keep[-1] + 1
    return origin + a * h, v[a:b]


# A grid part is (origin, values) with values = cell mass / h.

def _convolve(g1, g2, h: float):
    o1, v1 = g1
    o2, v2 = g2
    v = signal.fftconvolve(v1, v2) * h
    o, v = _trim(o1 + o2, h, v)
    return o, v / (h * v.sum())


def _power(base, count: int, h: float):
    result = None
    while count:
        if count & 1:
            result = base if result is None else _convolve(result, base, h)
        count >>= 1
        if count:
            base = _convolve(base, base, h)
    return result


def _default_spacing(family: DistributionFamily, p: int, q: int) -> float:
    w = family.range_counts(p, q)
    sds = [math.sqrt(float(law.cumulants(0.0, 2)[1])) for law, c in zip(family.laws, w) if c]
    return min(sds) / POINTS_PER_SD


def _sum_grid(family: DistributionFamily, p: int, q: int, h: float) -> GridDensity:
    w = family.range_counts(p, q)
    if int(w.sum()) == 1:
        return _component_grid(family.laws[int(np.flatnonzero(w)[0])], h)
    acc = None
    for law, c in zip(family.laws, w):
        if not c:
            continue
        origin, vals = _component_cells(law, h)
        part = _power((origin, vals / (h * vals.sum())), int(c), h)
        acc = part if acc is None else _convolve(acc, part, h)
    origin, vals = acc
    edges = [law.support[0] for law, c in zip(family.laws, w) if c]
    if all(math.isfinite(e) for e in edges):
        edge = sum(float(e) * int(c) for e, c in zip(edges, w[w > 0]))
        shape = sum(law._gamma_form()[0] * int(c) for law, c in zip(family.laws, w) if c)
        if shape > 1.0 and abs(origin - edge) < 0.5 * h:
            # the lattice keeps P(every term rounds to its edge) / h = O(h) at
            # the edge node, where the sum density itself vanishes
            vals = vals.copy()
            vals[0] = 0.0
    return GridDensity(origin, h, vals)


def grid_sum_density(family: DistributionFamily, range_: tuple[int, int], spacing: float | None = None,
                     check: bool = True) -> GridDensity:
    """Density of ``S_{p,q}`` by iterated FFT convolution, renormalised to unit mass.

    With ``check`` the result is compared to the same computation at twice
    the spacing; an estimated sup-norm error above 1e-6 raises
    :class:`GridTooCoarse`.
    """
    p, q = range_
    if not 1 <= p <= q <= len(family):
        raise IndexOutOfRange(f"range {p}..{q} outside 1..{len(family)}")
    auto = spacing is None
    h = _default_spacing(family, p, q) if auto else float(spacing)
    fine = _sum_grid(family, p, q, h)
    if not check or q == p:
        return fine
    coarse = _sum_grid(family, p, q, 2 * h)
    for attempt in range(REFINE_STEPS + 1):
        diff = np.abs(fine.pdf(coarse.x) - coarse.values)
        # second-order scheme: the fine error is about a third of the difference
        err = float(diff.max()) / 3.0
        if err <= COARSE_TOL:
            break
        if not auto or attempt == REFINE_STEPS:
            raise GridTooCoarse(f"estimated discretisation error {err:.3g} exceeds {COARSE_TOL:g} "
                                f"at spacing {h:g}")
        # automatic spacing: halve and reuse the current grid as the coarse one
        h /= 2
        coarse, fine = fine, _sum_grid(family, p, q, h)
    return fine


# ---------------------------------------------------------------------------
# exact conditional density
# ---------------------------------------------------------------------------

class ConditionalOracle:
    """Exact density of ``X_1..X_k`` given ``S_{1,n} = n a``, vectorised over points.

    ``tilt`` selects the tilt used for the internal computation: ``"auto"``
    (``theta_n^a``), ``None`` (no tilt) or a number.
    """

    def __init__(self, family: DistributionFamily, n: int, a: float, k: int, tilt="auto",
                 spacing: float | None = None, check: bool = True):
        if n > len(family):
            raise ConfigError(f"family has {len(family)} components, need n={n}",
                              [{"field": "n", "message": "too few components"}])
        if not 1 <= k <= n - 1:
            raise ConfigError(f"need 1 <= k <= n-1, got k={k}", [{"field": "k", "message": "out of range"}])
        base = family.head(n)
        if tilt == "auto":
            theta = solve_mean_tilt(base, (1, n), a).theta if base.inside_support(a) else 0.0
        elif tilt is None:
            theta = 0.0
        else:
            theta = float(tilt)
        self.theta = theta
        self.family = base.tilt(theta) if theta != 0.0 else base
        self.n, self.a, self.k = n, float(a), k
        self.total = grid_sum_density(self.family, (1, n), spacing, check)
        self.rest = grid_sum_density(self.family, (k + 1, n), spacing, check)
        self.denominator = self.total.pdf(n * a)
        if not self.denominator > 0:
            raise ZeroDenominator(f"sum density at n a = {n * a} is zero on the grid")

    def log_density(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.k:
            raise ConfigError(f"expected {self.k} coordinates, got {Y.shape[1]}",
                              [{"field": "y", "message": f"need {self.k} coordinates"}])
        out = np.zeros(Y.shape[0])
        for j in range(self.k):
            out += self.family.component(j + 1).log_density(Y[:, j])
        with np.errstate(divide="ignore"):
            out += np.log(self.rest.pdf(self.n * self.a - Y.sum(axis=1)))
        return out - math.log(self.denominator)

    def density(self, Y) -> np.ndarray:
        return np.exp(self.log_density(Y))


def exact_conditional_density(family: DistributionFamily, n: int, a: float, k: int, y, tilt="auto",
                              spacing: float | None = None) -> float:
    y = np.asarray(y, dtype=float).ravel()
    oracle = ConditionalOracle(family, n, a, k, tilt=tilt, spacing=spacing)
    return float(oracle.density(y[None, :])[0])


# ---------------------------------------------------------------------------
# Gaussian closed forms
# ---------------------------------------------------------------------------

def _gaussian_params(family: DistributionFamily, n: int):
    if n > len(family):
        raise ConfigError(f"family has {len(family)} components, need n={n}",
                          [{"field": "n", "message": "too few components"}])
    head = family.head(n)
    if not head.is_gaussian:
        raise NotGaussianFamily("closed-form conditioning needs every component Gaussian")
    mu = np.array([head.component(j).params[0] for j in range(1, n + 1)])
    var = np.array([head.component(j).params[1] ** 2 for j in range(1, n + 1)])
    return mu, var


def gaussian_conditional_params(family: DistributionFamily, n: int, a: float, k: int):
    """Mean vector and covariance of ``X_1..X_k`` given ``S_{1,n} = n a`` (all-Gaussian family)."""
    mu, var = _gaussian_params(family, n)
    T = var.sum()
    shift = (n * a - mu.sum()) / T
    mean = mu[:k] + var[:k] * shift
    cov = np.diag(var[:k]) - np.outer(var[:k], var[:k]) / T
    return mean, cov


def gaussian_conditional_log_density(family: DistributionFamily, n: int, a: float, k: int, Y) -> np.ndarray:
    """Closed-form conditional log-density, O(k) per point (``k <= n-1``)."""
    if not 1 <= k <= n - 1:
        raise ConfigError(f"need 1 <= k <= n-1, got k={k}", [{"field": "k", "message": "out of range"}])
    mu, var = _gaussian_params(family, n)
    T = var.sum()
    R = var[k:].sum()
    mean = mu[:k] + var[:k] * (n * a - mu.sum()) / T
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    d = Y - mean
    # inverse covariance is diag(1/var) + 1 1^T / R; determinant is prod(var) R / T
    quad = np.sum(d * d / var[:k], axis=1) + d.sum(axis=1) ** 2 / R
    logdet = np.sum(np.log(var[:k])) + math.log(R / T)
    return -0.5 * (k * math.log(2 * math.pi) + logdet + quad)


def gaussian_conditional_sample(family: DistributionFamily, n: int, a: float, size: int,
                                rng: np.random.Generator, k: int | None = None) -> np.ndarray:
    """Exact draws of the conditioned vector by the Gaussian bridge ``X + var (n a - sum X) / sum var``."""
    mu, var = _gaussian_params(family, n)
    if k is None or k >= n:
        X = rng.normal(mu, np.sqrt(var), size=(size, n))
        Y = X + np.outer(n * a - X.sum(axis=1), var / var.sum())
        return Y if k is None else Y[:, :k]
    # only the leading block and the sum of the rest enter the first k coordinates
    X = rng.normal(mu[:k], np.sqrt(var[:k]), size=(size, k))
    rest = rng.normal(mu[k:].sum(), math.sqrt(var[k:].sum()), size=size)
    return X + np.outer(n * a - X.sum(axis=1) - rest, var[:k] / var.sum())


# ---------------------------------------------------------------------------
# total variation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TvEstimate:
    estimate: float
    std_error: float
    n_samples: int
    method: str

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "std_error": self.std_error,
                "n_samples": self.n_samples, "method": self.method}


def _tv_grid(true_log_density, approx_log_density, pilot: np.ndarray, points: int | None) -> TvEstimate:
    k = pilot.shape[1]
    points = points or (4001 if k == 1 else 601)
    centre = pilot.mean(axis=0)
    sd = pilot.std(axis=0)
    axes = [np.linspace(c - WIDTH_SDS * s, c + WIDTH_SDS * s, points) for c, s in zip(centre, sd)]
    cell = np.prod([ax[1] - ax[0] for ax in axes])
    mesh = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    with np.errstate(divide="ignore", over="ignore"):
        p = np.exp(true_log_density(mesh))
        g = np.exp(approx_log_density(mesh))
    p = np.where(np.isnan(p), 0.0, p)
    g = np.where(np.isnan(g), 0.0, g)
    est = 0.5 * cell * float(np.sum(np.abs(p - g)))
    return TvEstimate(float(min(est, 1.0)), 0.0, int(mesh.shape[0]), "grid")


def tv_distance(true_log_density: Callable, approx_log_density: Callable, approx_sampler: Callable,
                N: int, rng: np.random.Generator, method: str = "auto",
                grid_points: int | None = None) -> TvEstimate:
    """Estimate ``TV(P, G) = (1/2) E_G |exp(log p - log g) - 1|``.

    ``approx_sampler(m, rng)`` returns an ``(m, k)`` array drawn from G; the
    log-density callables take such arrays. ``method="auto"`` uses a Riemann
    sum over a grid when ``k <= 2`` and Monte Carlo otherwise.
    """
    if N < 1:
        raise ConfigError("N must be >= 1", [{"field": "N", "message": "must be >= 1"}])
    Y = np.atleast_2d(np.asarray(approx_sampler(N, rng), dtype=float))
    k = Y.shape[1]
    if method == "auto":
        method = "grid" if k <= 2 else "monte_carlo"
    if method == "grid":
        if k > 2:
            raise ConfigError("grid TV needs k <= 2", [{"field": "method", "message": "grid needs k <= 2"}])
        return _tv_grid(true_log_density, approx_log_density, Y, grid_points)
    if method != "monte_carlo":
        raise ConfigError(f"unknown TV method {method!r}", [{"field": "method", "message": "unknown"}])
    lp = np.asarray(true_log_density(Y), dtype=float)
    lg = np.asarray(approx_log_density(Y), dtype=float)
    delta = lp - lg
    if not np.all(np.isfinite(delta)):
        raise NonFiniteLogDensity(f"{np.count_nonzero(~np.isfinite(delta))} samples with non-finite log-ratio")
    return tv_from_log_ratios(delta)


def tv_from_log_ratios(delta: np.ndarray) -> TvEstimate:
    """Monte Carlo TV from log-ratios ``log p - log g`` at draws from G."""
    w = np.abs(np.expm1(delta))
    N = w.size
    se = 0.5 * float(w.std(ddof=1)) / math.sqrt(N) if N > 1 else 0.0
    return TvEstimate(0.5 * float(w.mean()), se, int(N), "monte_carlo")


# ---------------------------------------------------------------------------
# standardized sums
# ---------------------------------------------------------------------------

def standardized_sum_density(family: DistributionFamily, range_: tuple[int, int], theta: float, x):
    """Density of ``(S_{p,q} - mean) / sd`` under components tilted at ``theta``.

    Closed form when the range is all Gaussian or all gamma-type with one
    shared rate, FFT convolution otherwise. Returns ``(values, method)``.
    """
    p, q = range_
    fam = family.tilt(theta) if theta != 0.0 else family
    specs = [fam.component(j) for j in range(p, q + 1)]
    k = np.array([s.cumulants(0.0, 2) for s in specs])
    mean, sd = float(k[:, 0].sum()), math.sqrt(float(k[:, 1].sum()))
    x = np.asarray(x, dtype=float)
    s = mean + sd * x
    if all(sp.kind == "gaussian" for sp in specs):
        return sd * stats.norm(mean, sd).pdf(s), "closed_form"
    if all(sp.kind != "gaussian" for sp in specs):
        forms = [sp._gamma_form() for sp in specs]
        rates = {f[1] for f in forms}
        if len(rates) == 1:
            rate = rates.pop()
            shape = sum(f[0] for f in forms)
            shift = sum(f[2] for f in forms)
            return sd * stats.gamma(shape, loc=shift, scale=1.0 / rate).pdf(s), "closed_form"
    grid = grid_sum_density(fam, (p, q))
    return sd * grid.pdf(s), "fft_convolution"
