"""Importance sampling for ``P(S_{1,n} >= n a)`` with a proposal built from G_k.

The proposal draws its first k coordinates from G_k. The remaining ``n - k``
coordinates are independent, each tilted at ``t*`` solving
``mbar_{k+1,n}(t*) = (n a - sum_{j<=k} y_j) / (n - k)`` for the realised
prefix, so the tail stage is centred on the budget the prefix leaves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conditional_law import RegimeConfig, sample_g_k_paths, g_k_log_density_paths, small_k_tilt
from .distributions import DistributionFamily
from .errors import ConfigError, DegenerateWeights
from .tilting import solve_mean_tilt_batch

__all__ = ["ISReport", "Proposal", "build_gbar", "is_estimate", "naive_mc_estimate", "log_density_product"]

EPS = 1e-300


@dataclass(frozen=True)
class ISReport:
    estimate: float
    variance_of_weights: float
    relative_std_error: float
    n_samples: int
    hit_count: int
    max_weight: float

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "variance_of_weights": self.variance_of_weights,
            "relative_std_error": self.relative_std_error,
            "n_samples": self.n_samples,
            "hit_count": self.hit_count,
            "max_weight": self.max_weight,
        }

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance_of_weights / self.n_samples)


def _law_columns(family: DistributionFamily, p: int, q: int):
    """Group indices ``p..q`` by distinct law; columns are 0-based offsets from ``p``."""
    groups: dict[int, list[int]] = {}
    for j in range(p, q + 1):
        groups.setdefault(int(family.law_index[j - 1]), []).append(j - p)
    return [(family.laws[u], np.array(cols)) for u, cols in groups.items()]


def log_density_product(family: DistributionFamily, X: np.ndarray, first: int = 1, theta=0.0) -> np.ndarray:
    """``sum_j log p~_j^theta(x_j)`` over columns of X (component ``first`` is column 0).

    ``theta`` may be a scalar or one tilt per row.
    """
    X = np.atleast_2d(X)
    theta = np.asarray(theta, dtype=float)
    th = theta[:, None] if theta.ndim == 1 else theta
    out = np.zeros(X.shape[0])
    for spec, cols in _law_columns(family, first, first + X.shape[1] - 1):
        out += spec.log_tilted_density(th, X[:, cols]).sum(axis=1)
    return out


def _sample_product(family: DistributionFamily, first: int, last: int, theta, rng: np.random.Generator,
                    size: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    th = theta[:, None] if theta.ndim == 1 else theta
    X = np.empty((size, last - first + 1))
    for spec, cols in _law_columns(family, first, last):
        X[:, cols] = spec.sample_tilted(th, rng, (size, cols.size))
    return X


@dataclass(frozen=True)
class Proposal:
    """Two-stage proposal density ``gbar_n`` on R^n."""

    family: DistributionFamily
    n: int
    a: float
    k: int
    regime: object = "auto"

    def _tail_tilt(self, prefix_sum: np.ndarray, warm=None) -> np.ndarray:
        target = (self.n * self.a - prefix_sum) / (self.n - self.k)
        return solve_mean_tilt_batch(self.family, self.k + 1, self.n, target, warm)[0]

    def sample(self, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``size`` points; returns ``(X, log gbar(X))``."""
        if self.k == 0:
            theta = small_k_tilt(self.family, self.n, self.a).theta
            X = _sample_product(self.family, 1, self.n, theta, rng, size)
            return X, log_density_product(self.family, X, 1, theta)
        head = sample_g_k_paths(self.family, self.n, self.a, self.k, size, rng, self.regime)
        t = self._tail_tilt(head.paths.sum(axis=1), head.last_tilt)
        tail = _sample_product(self.family, self.k + 1, self.n, t, rng, size)
        logq = head.log_density + log_density_product(self.family, tail, self.k + 1, t)
        return np.hstack([head.paths, tail]), logq

    def log_density(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.k == 0:
            theta = small_k_tilt(self.family, self.n, self.a).theta
            return log_density_product(self.family, X, 1, theta)
        head = g_k_log_density_paths(self.family, self.n, self.a, self.k, X[:, :self.k], self.regime)
        t = self._tail_tilt(X[:, :self.k].sum(axis=1))
        return head + log_density_product(self.family, X[:, self.k:], self.k + 1, t)


def build_gbar(family: DistributionFamily, n: int, a: float, k: int, regime="auto") -> Proposal:
    if n > len(family):
        raise ConfigError(f"family has {len(family)} components, need n={n}",
                          [{"field": "n", "message": "too few components"}])
    if not (k == 0 or 1 <= k <= n - 2):
        raise ConfigError(f"need k = 0 or 1 <= k <= n-2, got k={k}", [{"field": "k", "message": "out of range"}])
    if not isinstance(regime, RegimeConfig):
        regime = RegimeConfig(mode=regime)
    return Proposal(family, n, float(a), k, regime)


def _report(w: np.ndarray, hits: int) -> ISReport:
    N = w.size
    est = float(w.mean())
    var = float(w.var(ddof=1)) if N > 1 else 0.0
    return ISReport(est, var, math.sqrt(var / N) / max(est, EPS), int(N), int(hits), float(w.max()))


def is_weights(family: DistributionFamily, n: int, a: float, proposal, size: int,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Weights ``p / gbar * 1{sum >= n a}`` and hit indicators for one batch."""
    X, logq = proposal.sample(size, rng)
    logp = log_density_product(family, X, 1, 0.0)
    hit = X.sum(axis=1) >= n * a
    with np.errstate(over="ignore"):
        w = np.where(hit, np.exp(logp - logq), 0.0)
    return w, hit


def weights_report(w: np.ndarray, hit: np.ndarray) -> ISReport:
    if not np.all(np.isfinite(w)):
        raise DegenerateWeights(f"{np.count_nonzero(~np.isfinite(w))} non-finite importance weights")
    if not np.any(w > 0):
        raise DegenerateWeights("every importance weight is zero: the proposal never reaches the event")
    return _report(w, int(hit.sum()))


def is_estimate(family: DistributionFamily, n: int, a: float, proposal, N: int,
                rng: np.random.Generator) -> ISReport:
    """``(1/N) sum p(X_i)/gbar(X_i) 1{S(X_i) >= n a}`` with ``X_i ~ gbar``."""
    if N < 1:
        raise ConfigError("N must be >= 1", [{"field": "N", "message": "must be >= 1"}])
    w, hit = is_weights(family, n, a, proposal, N, rng)
    return weights_report(w, hit)


def naive_hits(family: DistributionFamily, n: int, a: float, size: int, rng: np.random.Generator) -> np.ndarray:
    X = _sample_product(family, 1, n, 0.0, rng, size)
    return (X.sum(axis=1) >= n * a).astype(float)


def naive_mc_estimate(family: DistributionFamily, n: int, a: float, N: int,
                      rng: np.random.Generator) -> ISReport:
    """Frequency of ``S_{1,n} >= n a`` under the untilted components."""
    if N < 1:
        raise ConfigError("N must be >= 1", [{"field": "N", "message": "must be >= 1"}])
    w = naive_hits(family, n, a, N, rng)
    return _report(w, int(w.sum()))
