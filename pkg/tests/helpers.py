"""Random families for property-style tests."""

import numpy as np

from tiltcond.distributions import ComponentSpec, DistributionFamily

KINDS = ("gaussian_iid", "gaussian_mixed", "exponential", "gamma_mixed", "shifted_mixed")


def random_family(rng: np.random.Generator, n: int, kind: str | None = None) -> DistributionFamily:
    kind = kind or KINDS[rng.integers(len(KINDS))]
    if kind == "gaussian_iid":
        spec = ComponentSpec.gaussian(rng.uniform(-2, 2), rng.uniform(0.5, 2))
        return DistributionFamily((spec,) * n)
    if kind == "gaussian_mixed":
        pattern = [ComponentSpec.gaussian(rng.uniform(-2, 2), rng.uniform(0.5, 2)) for _ in range(3)]
        return DistributionFamily(tuple(pattern[j % 3] for j in range(n)))
    rate = float(rng.uniform(0.5, 2.0))
    if kind == "exponential":
        return DistributionFamily((ComponentSpec.exponential(rate),) * n)
    if kind == "gamma_mixed":
        pattern = [ComponentSpec.gamma(float(rng.uniform(1.0, 5.0)), rate) for _ in range(3)]
        return DistributionFamily(tuple(pattern[j % 3] for j in range(n)))
    # components share one lower edge: the family support is common
    shift = float(rng.uniform(-1, 1))
    pattern = [ComponentSpec.shifted_exponential(float(rng.uniform(0.5, 2.0)), shift) for _ in range(3)]
    return DistributionFamily(tuple(pattern[j % 3] for j in range(n)))


def random_theta(rng: np.random.Generator, family: DistributionFamily) -> float:
    lo, hi = family.theta_domain
    if np.isfinite(hi):
        return float(hi - np.exp(rng.uniform(-1.5, 2.0)))
    return float(rng.uniform(-3, 3))
