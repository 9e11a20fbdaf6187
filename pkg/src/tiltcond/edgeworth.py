"""Hermite polynomials and Edgeworth expansions for non-iid standardized sums.

The expansion of order m is ``n(x) * (1 + sum_{nu=3}^m P_nu(x))`` with

    P3 = alpha3 H3
    P4 = beta6 H6 + beta4 H4
    P5 = gamma9 H9 + gamma7 H7 + gamma5 H5

Coefficients come from :class:`~tiltcond.tilting.AggregateMoments`, so the
tilted variants (fixed tilt over an index subset, or a per-step tilt over a
tail range) are the same code fed different moments.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateVariance, UnsupportedDegree, UnsupportedOrder
from .tilting import AggregateMoments

__all__ = [
    "EdgeworthCoefficients",
    "hermite",
    "edgeworth_coefficients",
    "edgeworth_density",
    "normal_pdf",
]

MAX_DEGREE = 9


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def hermite(nu: int, x):
    """Probabilists' Hermite polynomial ``He_nu(x)`` by the three-term recurrence."""
    if not (isinstance(nu, (int, np.integer)) and 0 <= nu <= MAX_DEGREE):
        raise UnsupportedDegree(f"Hermite degree must be an integer in 0..{MAX_DEGREE}, got {nu}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if nu == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for k in range(1, nu):
        h_prev, h = h, x * h - k * h_prev
    return h if h.ndim else float(h)


@dataclass(frozen=True)
class EdgeworthCoefficients:
    alpha3: float
    beta6: float
    beta4: float
    gamma9: float
    gamma7: float
    gamma5: float

    def to_dict(self) -> dict:
        return asdict(self)


def edgeworth_coefficients(moments: AggregateMoments) -> EdgeworthCoefficients:
    s2 = moments.s2
    if not s2 > 0:
        raise DegenerateVariance(f"aggregate variance must be > 0, got {s2}")
    mu3 = moments.mu3
    excess4 = moments.mu4 - 3.0 * moments.sum_s4
    excess5 = moments.mu5 - 10.0 * moments.sum_mu3_s2
    return EdgeworthCoefficients(
        alpha3=mu3 / (6.0 * s2 ** 1.5),
        beta6=mu3 * mu3 / (72.0 * s2 ** 3),
        beta4=excess4 / (24.0 * s2 ** 2),
        gamma9=mu3 ** 3 / (1296.0 * s2 ** 4.5),
        gamma7=mu3 * excess4 / (144.0 * s2 ** 3.5),
        gamma5=excess5 / (120.0 * s2 ** 2.5),
    )


def edgeworth_density(moments: AggregateMoments, order: int, x):
    """Order-3/4/5 Edgeworth approximation to the standardized-sum density.

    The result is a signed approximation and can dip below zero in the far
    tails; it is returned as computed.
    """
    if order not in (3, 4, 5):
        raise UnsupportedOrder(f"Edgeworth order must be 3, 4 or 5, got {order}")
    c = edgeworth_coefficients(moments)
    x = np.asarray(x, dtype=float)
    corr = c.alpha3 * hermite(3, x)
    if order >= 4:
        corr = corr + c.beta6 * hermite(6, x) + c.beta4 * hermite(4, x)
    if order >= 5:
        corr = corr + c.gamma9 * hermite(9, x) + c.gamma7 * hermite(7, x) + c.gamma5 * hermite(5, x)
    out = normal_pdf(x) * (1.0 + corr)
    return out if out.ndim else float(out)
