"""Structured errors raised by tiltcond.

Every numeric failure derives from :class:`TiltcondError`; the CLI maps those
to exit status 3. :class:`ConfigError` covers malformed inputs (exit 2).
"""

from __future__ import annotations


class TiltcondError(Exception):
    """Base class for numeric/structured failures."""

    code = "tiltcond_error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class ConfigError(TiltcondError, ValueError):
    code = "config_error"

    def __init__(self, message: str, errors: list[dict] | None = None):
        super().__init__(message)
        self.errors = errors or [{"field": None, "message": message}]

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), "errors": self.errors}


class ThetaOutOfDomain(TiltcondError, ValueError):
    code = "theta_out_of_domain"


class IndexOutOfRange(TiltcondError, IndexError):
    code = "index_out_of_range"


class UnsupportedOrder(TiltcondError, ValueError):
    code = "unsupported_order"


class UnsupportedDegree(TiltcondError, ValueError):
    code = "unsupported_degree"


class CompactOutsideTheta(TiltcondError, ValueError):
    code = "compact_outside_theta"


class TargetOutsideSupport(TiltcondError, ValueError):
    code = "target_outside_support"


class BracketFailure(TiltcondError, RuntimeError):
    code = "bracket_failure"


class DegenerateVariance(TiltcondError, ValueError):
    code = "degenerate_variance"


class EmptyTailRange(TiltcondError, ValueError):
    code = "empty_tail_range"


class QuadratureFailure(TiltcondError, RuntimeError):
    code = "quadrature_failure"


class ResidualMeanOutOfSupport(TiltcondError, ValueError):
    """A prefix pushes the residual mean outside the support.

    The exact conditional law gives such prefixes zero density, so callers may
    read this as ``log density = -inf``.
    """

    code = "residual_mean_out_of_support"


class GridUnderflow(TiltcondError, RuntimeError):
    code = "grid_underflow"


class GridTooCoarse(TiltcondError, RuntimeError):
    code = "grid_too_coarse"


class ZeroDenominator(TiltcondError, ZeroDivisionError):
    code = "zero_denominator"


class NotGaussianFamily(TiltcondError, ValueError):
    code = "not_gaussian_family"


class NonFiniteLogDensity(TiltcondError, ValueError):
    code = "non_finite_log_density"


class DegenerateWeights(TiltcondError, RuntimeError):
    code = "degenerate_weights"
