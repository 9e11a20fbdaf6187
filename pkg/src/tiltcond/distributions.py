"""Independent, non-identically distributed component sequences.

A :class:`DistributionFamily` is a finite ordered list of closed-form
component laws (Gaussian, Gamma, Exponential, shifted Exponential) sharing a
common mgf domain and support. All cumulant machinery is analytic up to order
six, so downstream Edgeworth coefficients never rely on numeric
differentiation.

Range sums over indices ``p..q`` are computed from per-law prefix counts, which
makes every aggregate O(number of distinct laws) instead of O(q - p).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import (
    CompactOutsideTheta,
    ConfigError,
    IndexOutOfRange,
    ThetaOutOfDomain,
    UnsupportedOrder,
)

__all__ = [
    "ComponentSpec",
    "DistributionFamily",
    "AssumptionCheck",
    "AssumptionReport",
    "kappa",
    "cumulant_derivatives",
    "density",
    "validate_family",
    "load_family",
    "family_from_dict",
    "family_to_dict",
    "iid_family",
]

KINDS = ("gaussian", "gamma", "exponential", "shifted_exponential")
MAX_ORDER = 6
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ComponentSpec:
    """One closed-form component law.

    ``params`` holds ``(mean, sd)`` for gaussian, ``(shape, rate)`` for gamma,
    ``(rate,)`` for exponential and ``(rate, shift)`` for shifted_exponential.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown component kind {self.kind!r}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        expected = {"gaussian": 2, "gamma": 2, "exponential": 1, "shifted_exponential": 2}[self.kind]
        if len(p) != expected:
            raise ConfigError(f"{self.kind} takes {expected} parameters, got {len(p)}")
        if not all(math.isfinite(v) for v in p):
            raise ConfigError(f"{self.kind} parameters must be finite: {p}")
        if self.kind == "gaussian" and p[1] <= 0:
            raise ConfigError("gaussian sd must be > 0")
        if self.kind == "gamma" and (p[0] <= 0 or p[1] <= 0):
            raise ConfigError("gamma shape and rate must be > 0")
        if self.kind in ("exponential", "shifted_exponential") and p[0] <= 0:
            raise ConfigError(f"{self.kind} rate must be > 0")

    # -- constructors -------------------------------------------------------
    @classmethod
    def gaussian(cls, mean: float = 0.0, sd: float = 1.0) -> "ComponentSpec":
        return cls("gaussian", (mean, sd))

    @classmethod
    def gamma(cls, shape: float, rate: float = 1.0) -> "ComponentSpec":
        return cls("gamma", (shape, rate))

    @classmethod
    def exponential(cls, rate: float = 1.0) -> "ComponentSpec":
        return cls("exponential", (rate,))

    @classmethod
    def shifted_exponential(cls, rate: float = 1.0, shift: float = 0.0) -> "ComponentSpec":
        return cls("shifted_exponential", (rate, shift))

    # -- shape parameters in gamma form -------------------------------------
    def _gamma_form(self) -> tuple[float, float, float]:
        """(shape, rate, shift) for the three gamma-like kinds."""
        if self.kind == "gamma":
            return self.params[0], self.params[1], 0.0
        if self.kind == "exponential":
            return 1.0, self.params[0], 0.0
        return 1.0, self.params[0], self.params[1]

    @property
    def theta_domain(self) -> tuple[float, float]:
        if self.kind == "gaussian":
            return (-math.inf, math.inf)
        return (-math.inf, self._gamma_form()[1])

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "gaussian":
            return (-math.inf, math.inf)
        return (self._gamma_form()[2], math.inf)

    def to_dict(self) -> dict:
        names = {
            "gaussian": ("mean", "sd"),
            "gamma": ("shape", "rate"),
            "exponential": ("rate",),
            "shifted_exponential": ("rate", "shift"),
        }[self.kind]
        return {"kind": self.kind, **dict(zip(names, self.params))}

    # -- analytic machinery (vectorised in theta / x) -----------------------
    def kappa(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "gaussian":
            mu, sd = self.params
            return mu * theta + 0.5 * sd * sd * theta * theta
        shape, rate, shift = self._gamma_form()
        return shift * theta - shape * np.log1p(-theta / rate)

    def cumulants(self, theta, max_order: int = MAX_ORDER) -> np.ndarray:
        """Derivatives ``d^l kappa / d theta^l`` for l = 1..max_order.

        Returns an array of shape ``(max_order,) + theta.shape``.
        """
        theta = np.asarray(theta, dtype=float)
        out = np.zeros((max_order,) + theta.shape)
        if self.kind == "gaussian":
            mu, sd = self.params
            out[0] = mu + sd * sd * theta
            if max_order >= 2:
                out[1] = sd * sd
            return out
        shape, rate, shift = self._gamma_form()
        inv = 1.0 / (rate - theta)
        power = inv.copy()
        for ell in range(1, max_order + 1):
            out[ell - 1] = shape * math.factorial(ell - 1) * power
            power = power * inv
        out[0] += shift
        return out

    def log_density(self, x):
        return self.log_tilted_density(0.0, x)

    def log_tilted_density(self, theta, x):
        """Log of ``exp(theta x) p(x) / Phi(theta)``, in closed form."""
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if self.kind == "gaussian":
            mu, sd = self.params
            z = (x - (mu + sd * sd * theta)) / sd
            return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI
        shape, rate, shift = self._gamma_form()
        r = rate - theta
        u = x - shift
        inside = u > 0
        safe = np.where(inside, u, 1.0)
        val = shape * np.log(r) - r * safe - gammaln(shape)
        if shape != 1.0:
            val = val + (shape - 1.0) * np.log(safe)
        return np.where(inside, val, -np.inf)

    def dlog_density(self, theta, x):
        """d/dx of the tilted log-density on the interior of the support."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            mu, sd = self.params
            return -(x - (mu + sd * sd * theta)) / (sd * sd)
        shape, rate, shift = self._gamma_form()
        return (shape - 1.0) / (x - shift) - (rate - theta)

    def tilt(self, theta: float) -> "ComponentSpec":
        """The tilted law as a member of the same closed-form family."""
        if self.kind == "gaussian":
            mu, sd = self.params
            return ComponentSpec.gaussian(mu + sd * sd * theta, sd)
        shape, rate, shift = self._gamma_form()
        if self.kind == "gamma":
            return ComponentSpec.gamma(shape, rate - theta)
        if self.kind == "exponential":
            return ComponentSpec.exponential(rate - theta)
        return ComponentSpec.shifted_exponential(rate - theta, shift)

    def sample_tilted(self, theta: float, rng: np.random.Generator, size=None):
        if self.kind == "gaussian":
            mu, sd = self.params
            return rng.normal(mu + sd * sd * theta, sd, size=size)
        shape, rate, shift = self._gamma_form()
        r = rate - theta
        if self.kind == "gamma":
            return rng.gamma(shape, 1.0 / r, size=size)
        return shift + rng.exponential(1.0 / r, size=size)

    def boundary_density(self, theta: float) -> float:
        """Right limit of the tilted density at a finite lower support edge."""
        if self.kind == "gaussian":
            return 0.0
        shape, rate, _ = self._gamma_form()
        if shape > 1.0:
            return 0.0
        if shape == 1.0:
            return rate - theta
        return math.inf


def _parse_bound(v) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s in ("-inf", "-infinity"):
            return -math.inf
        raise ConfigError(f"cannot parse bound {v!r}")
    return float(v)


def _bound_to_json(v: float):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return v


@dataclass(frozen=True)
class DistributionFamily:
    """Finite list of independent components ``X_1, ..., X_N`` (1-based).

    ``theta_domain`` and ``support`` are the declared common mgf domain and
    support; when omitted they are taken as the intersection over components.
    """

    components: tuple[ComponentSpec, ...]
    theta_domain: tuple[float, float] | None = None
    support: tuple[float, float] | None = None
    laws: tuple[ComponentSpec, ...] = field(init=False, repr=False, compare=False)
    law_index: np.ndarray = field(init=False, repr=False, compare=False)
    _prefix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ConfigError("family needs at least one component")
        object.__setattr__(self, "components", comps)
        if self.theta_domain is None:
            lo = max(c.theta_domain[0] for c in comps)
            hi = min(c.theta_domain[1] for c in comps)
            object.__setattr__(self, "theta_domain", (lo, hi))
        if self.support is None:
            lo = max(c.support[0] for c in comps)
            hi = min(c.support[1] for c in comps)
            object.__setattr__(self, "support", (lo, hi))
        for name in ("theta_domain", "support"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo < hi:
                raise ConfigError(f"{name} must be a non-empty open interval, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        laws: dict[ComponentSpec, int] = {}
        idx = np.empty(len(comps), dtype=np.intp)
        for j, c in enumerate(comps):
            idx[j] = laws.setdefault(c, len(laws))
        object.__setattr__(self, "laws", tuple(laws))
        object.__setattr__(self, "law_index", idx)
        onehot = np.zeros((len(laws), len(comps) + 1))
        onehot[idx, np.arange(1, len(comps) + 1)] = 1.0
        object.__setattr__(self, "_prefix", np.cumsum(onehot, axis=1))

    def __len__(self) -> int:
        return len(self.components)

    def __eq__(self, other):
        if not isinstance(other, DistributionFamily):
            return NotImplemented
        return (
            self.components == other.components
            and self.theta_domain == other.theta_domain
            and self.support == other.support
        )

    def __hash__(self):
        return hash((self.components, self.theta_domain, self.support))

    def component(self, j: int) -> ComponentSpec:
        if not 1 <= j <= len(self.components):
            raise IndexOutOfRange(f"component index {j} outside 1..{len(self.components)}")
        return self.components[j - 1]

    def range_counts(self, p: int, q: int) -> np.ndarray:
        """Number of components of each distinct law among indices p..q."""
        if not 1 <= p <= q <= len(self.components):
            raise IndexOutOfRange(f"range {p}..{q} outside 1..{len(self.components)}")
        return self._prefix[:, q] - self._prefix[:, p - 1]

    def check_theta(self, theta) -> None:
        lo, hi = self.theta_domain
        t = np.asarray(theta, dtype=float)
        if not np.all((t > lo) & (t < hi)):
            raise ThetaOutOfDomain(f"theta {theta} outside ({lo}, {hi})")

    def inside_support(self, s) -> np.ndarray:
        lo, hi = self.support
        s = np.asarray(s, dtype=float)
        return (s > lo) & (s < hi)

    @property
    def is_gaussian(self) -> bool:
        return all(c.kind == "gaussian" for c in self.laws)

    def tilt(self, theta: float) -> "DistributionFamily":
        """Componentwise tilted family (closed form)."""
        self.check_theta(theta)
        comps = tuple(c.tilt(theta) for c in self.components)
        lo, hi = self.theta_domain
        return DistributionFamily(comps, (lo - theta, hi - theta), self.support)

    def head(self, n: int) -> "DistributionFamily":
        if not 1 <= n <= len(self.components):
            raise IndexOutOfRange(f"need {n} components, family has {len(self.components)}")
        if n == len(self.components):
            return self
        return DistributionFamily(self.components[:n], self.theta_domain, self.support)


def iid_family(spec: ComponentSpec, n: int) -> DistributionFamily:
    return DistributionFamily((spec,) * n)


# ---------------------------------------------------------------------------
# config (de)serialisation
# ---------------------------------------------------------------------------

_PARAM_NAMES = {
    "gaussian": ("mean", "sd"),
    "gamma": ("shape", "rate"),
    "exponential": ("rate",),
    "shifted_exponential": ("rate", "shift"),
}
_DEFAULTS = {"mean": 0.0, "sd": 1.0, "rate": 1.0, "shift": 0.0}


def _component_from_dict(d: Mapping[str, Any], where: str) -> ComponentSpec:
    if not isinstance(d, Mapping) or "kind" not in d:
        raise ConfigError(f"{where}: component must be an object with a 'kind'",
                          [{"field": where, "message": "missing kind"}])
    kind = str(d["kind"]).lower().replace("-", "_")
    if kind not in _PARAM_NAMES:
        raise ConfigError(f"{where}: unknown kind {d['kind']!r}",
                          [{"field": f"{where}.kind", "message": f"unknown kind {d['kind']!r}"}])
    names = _PARAM_NAMES[kind]
    extra = set(d) - set(names) - {"kind"}
    if extra:
        raise ConfigError(f"{where}: unexpected keys {sorted(extra)}",
                          [{"field": where, "message": f"unexpected keys {sorted(extra)}"}])
    vals = []
    for nm in names:
        if nm in d:
            vals.append(d[nm])
        elif nm in _DEFAULTS:
            vals.append(_DEFAULTS[nm])
        else:
            raise ConfigError(f"{where}: missing parameter {nm!r}",
                              [{"field": f"{where}.{nm}", "message": "required"}])
    try:
        return ComponentSpec(kind, tuple(float(v) for v in vals))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", [{"field": where, "message": str(exc)}]) from exc


def _expand_repeat(rep: Mapping[str, Any], where: str) -> list[ComponentSpec]:
    pattern = rep.get("pattern")
    count = rep.get("count")
    if not isinstance(pattern, list) or not pattern:
        raise ConfigError(f"{where}.pattern must be a non-empty list",
                          [{"field": f"{where}.pattern", "message": "non-empty list required"}])
    if not isinstance(count, int) or count < 1:
        raise ConfigError(f"{where}.count must be a positive integer",
                          [{"field": f"{where}.count", "message": "positive integer required"}])
    one = [_component_from_dict(c, f"{where}.pattern[{i}]") for i, c in enumerate(pattern)]
    return one * count


def family_from_dict(d: Mapping[str, Any]) -> DistributionFamily:
    """Build a family from the JSON config layout.

    ``components`` is a list of component objects; any entry may instead be
    ``{"repeat": {"pattern": [...], "count": N}}``, which appends the pattern
    N times. A top-level ``repeat`` is accepted in place of ``components``.
    """
    if not isinstance(d, Mapping):
        raise ConfigError("family config must be a JSON object")
    comps: list[ComponentSpec] = []
    items = list(d.get("components", []))
    if "repeat" in d:
        items.append({"repeat": d["repeat"]})
    for i, item in enumerate(items):
        if isinstance(item, Mapping) and "repeat" in item:
            comps.extend(_expand_repeat(item["repeat"], f"components[{i}].repeat"))
        else:
            comps.append(_component_from_dict(item, f"components[{i}]"))
    if not comps:
        raise ConfigError("family has no components",
                          [{"field": "components", "message": "at least one component required"}])
    bounds = {}
    for name in ("theta_domain", "support"):
        if name in d and d[name] is not None:
            v = d[name]
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                raise ConfigError(f"{name} must be a pair",
                                  [{"field": name, "message": "expected [lo, hi]"}])
            bounds[name] = (_parse_bound(v[0]), _parse_bound(v[1]))
    return DistributionFamily(tuple(comps), bounds.get("theta_domain"), bounds.get("support"))


def family_to_dict(family: DistributionFamily) -> dict:
    return {
        "theta_domain": [_bound_to_json(v) for v in family.theta_domain],
        "support": [_bound_to_json(v) for v in family.support],
        "components": [c.to_dict() for c in family.components],
    }


def load_family(path: str | Path) -> DistributionFamily:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})",
                          [{"field": "family", "message": f"invalid JSON: {exc}"}]) from exc
    except OSError as exc:
        raise ConfigError(f"cannot read family file {path}: {exc}",
                          [{"field": "family", "message": str(exc)}]) from exc
    return family_from_dict(d)


# ---------------------------------------------------------------------------
# per-index operations
# ---------------------------------------------------------------------------

def _checked(family: DistributionFamily, j: int, theta) -> ComponentSpec:
    spec = family.component(j)
    family.check_theta(theta)
    lo, hi = spec.theta_domain
    t = np.asarray(theta, dtype=float)
    if not np.all((t > lo) & (t < hi)):
        raise ThetaOutOfDomain(f"theta {theta} outside component {j} domain ({lo}, {hi})")
    return spec


def kappa(family: DistributionFamily, j: int, theta: float) -> float:
    """Cumulant generating function ``log Phi_j(theta)``."""
    spec = _checked(family, j, theta)
    return float(spec.kappa(theta))


def cumulant_derivatives(family: DistributionFamily, j: int, theta: float,
                         max_order: int = MAX_ORDER) -> np.ndarray:
    """``(m_j, s_j^2, kappa_j''', ..., kappa_j^(max_order))`` at ``theta``.

    Entries of order >= 3 are derivatives of the cumulant function, i.e.
    cumulants of the tilted law, not centred moments.
    """
    if not 1 <= max_order <= MAX_ORDER:
        raise UnsupportedOrder(f"max_order must be in 1..{MAX_ORDER}, got {max_order}")
    spec = _checked(family, j, theta)
    return spec.cumulants(float(theta), max_order)


def density(family: DistributionFamily, j: int, x):
    spec = family.component(j)
    out = np.exp(spec.log_density(x))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------

@dataclass
class AssumptionCheck:
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class AssumptionReport:
    compact: tuple[float, float]
    grid_size: int
    checks: dict[str, AssumptionCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "compact": list(self.compact),
            "grid_size": self.grid_size,
            "passed": self.passed,
            "checks": {k: {"passed": v.passed, **v.detail} for k, v in self.checks.items()},
        }


def _same_bound(a: float, b: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def _centered_sixth(k: np.ndarray) -> np.ndarray:
    k2, k3, k4, k6 = k[1], k[2], k[3], k[5]
    return k6 + 15.0 * k4 * k2 + 10.0 * k3 * k3 + 15.0 * k2 ** 3


def tilted_density_variation(spec: ComponentSpec, theta: float) -> float:
    """``|| d p~/dx ||_L1`` including the jump at a finite lower support edge."""
    jump = spec.boundary_density(theta)
    if math.isinf(jump):
        return math.inf

    def integrand(x):
        return abs(float(spec.dlog_density(theta, x))) * math.exp(float(spec.log_tilted_density(theta, x)))

    lo, _ = spec.support
    t = spec.tilt(theta)
    mean = float(t.cumulants(0.0, 2)[0])
    sd = math.sqrt(float(t.cumulants(0.0, 2)[1]))
    if spec.kind == "gaussian":
        mode = mean
    else:
        shape, rate, shift = t._gamma_form()
        mode = shift + max(shape - 1.0, 0.0) / rate
    a = lo if math.isfinite(lo) else mean - 40.0 * sd
    b = mean + 60.0 * sd
    total = jump
    for left, right in ((a, mode), (mode, b)):
        if right > left:
            val, _ = integrate.quad(integrand, left, right, limit=200, epsabs=1e-12, epsrel=1e-10)
            total += val
    return total


def validate_family(family: DistributionFamily, compact: tuple[float, float],
                    grid_size: int = 21, variance_floor: float = 1e-6) -> AssumptionReport:
    """Machine-check the standing assumptions on a theta-grid over ``compact``.

    Checks are evaluated on the finite component list. For the envelope
    assumption the empirical envelopes ``min_j m_j`` and ``max_j m_j`` are
    reported and required to be strictly increasing on the grid.
    """
    k_lo, k_hi = float(compact[0]), float(compact[1])
    t_lo, t_hi = family.theta_domain
    if not (t_lo < k_lo <= k_hi < t_hi):
        raise CompactOutsideTheta(f"compact [{k_lo}, {k_hi}] not strictly inside ({t_lo}, {t_hi})")
    if grid_size < 3:
        raise ConfigError("grid_size must be >= 3", [{"field": "grid_size", "message": ">= 3"}])
    grid = np.linspace(k_lo, k_hi, grid_size)
    checks: dict[str, AssumptionCheck] = {}

    # Supp
    a, b = family.support
    bad_supp = []
    for u, law in enumerate(family.laws):
        la, lb = law.support
        ok = _same_bound(la, a) and _same_bound(lb, b)
        if ok:
            # positive just inside the support, zero just outside any finite edge
            probe_in = [v for v in (a + 1e-6 if math.isfinite(a) else None,
                                    b - 1e-6 if math.isfinite(b) else None) if v is not None]
            mean = float(law.cumulants(0.0, 1)[0])
            probe_in.append(mean)
            ok = all(np.exp(law.log_density(x)) > 0 for x in probe_in)
            if math.isfinite(a):
                ok = ok and np.exp(law.log_density(a - 1e-6)) == 0
            if math.isfinite(b):
                ok = ok and np.exp(law.log_density(b + 1e-6)) == 0
        if not ok:
            bad_supp.append({"law": law.to_dict(), "support": [_bound_to_json(v) for v in law.support]})
    checks["Supp"] = AssumptionCheck(not bad_supp, {"mismatches": bad_supp})

    # Mgf
    bad_mgf = []
    for law in family.laws:
        la, lb = law.theta_domain
        ok = _same_bound(la, t_lo) and _same_bound(lb, t_hi)
        if ok:
            near = []
            if math.isfinite(t_lo):
                near.append(t_lo + 1e-6 * max(1.0, abs(t_lo)))
            if math.isfinite(t_hi):
                near.append(t_hi - 1e-6 * max(1.0, abs(t_hi)))
            ok = all(np.isfinite(law.kappa(t)) for t in near)
        if not ok:
            bad_mgf.append({"law": law.to_dict(), "theta_domain": [_bound_to_json(v) for v in law.theta_domain]})
    checks["Mgf"] = AssumptionCheck(not bad_mgf, {"mismatches": bad_mgf})

    cums = np.stack([law.cumulants(grid) for law in family.laws])  # (U, 6, G)
    means = cums[:, 0, :]
    variances = cums[:, 1, :]

    # H-kappa: strict monotonicity on the grid; limits of m_j match the support
    increasing = bool(np.all(np.diff(means, axis=1) > 0))
    limits_ok = not bad_supp
    checks["Hkappa"] = AssumptionCheck(increasing and limits_ok,
                                       {"strictly_increasing": increasing, "limits_match_support": limits_ok})

    # Cv
    inf_s2 = float(variances.min())
    sup_s2 = float(variances.max())
    checks["Cv"] = AssumptionCheck(
        bool(inf_s2 >= variance_floor and math.isfinite(sup_s2)),
        {"inf_s2": inf_s2, "sup_s2": sup_s2, "floor": variance_floor},
    )

    # AM6
    sup_abs6 = float(np.max(np.abs(np.stack([_centered_sixth(cums[u]) for u in range(len(family.laws))]))))
    checks["AM6"] = AssumptionCheck(math.isfinite(sup_abs6), {"sup_abs_mu6": sup_abs6})

    # Cf
    sup_var = 0.0
    for law in family.laws:
        for t in grid:
            sup_var = max(sup_var, tilted_density_variation(law, float(t)))
            if math.isinf(sup_var):
                break
    checks["Cf"] = AssumptionCheck(math.isfinite(sup_var), {"sup_derivative_l1": sup_var})

    # Uf: empirical envelopes
    env_lo = means.min(axis=0)
    env_hi = means.max(axis=0)
    uf_ok = bool(np.all(np.diff(env_lo) > 0) and np.all(np.diff(env_hi) > 0)) and limits_ok
    checks["Uf"] = AssumptionCheck(uf_ok, {
        "theta_grid": grid.tolist(),
        "envelope_min": env_lo.tolist(),
        "envelope_max": env_hi.tolist(),
    })
    return AssumptionReport((k_lo, k_hi), grid_size, checks)


def law_cumulant_stack(family: DistributionFamily, theta: np.ndarray, max_order: int = MAX_ORDER) -> np.ndarray:
    """Cumulant derivatives of every distinct law: shape ``(U, max_order) + theta.shape``."""
    return np.stack([law.cumulants(theta, max_order) for law in family.laws])


def component_laws(family: DistributionFamily, indices: Iterable[int]) -> list[ComponentSpec]:
    return [family.component(j) for j in indices]
