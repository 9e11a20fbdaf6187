"""Conditional laws of partial sums under large deviations of the total.

Approximates the law of ``X_1..X_k`` given ``X_1 + ... + X_n = n a`` for
independent, non-identically distributed summands, with an exact reference
law and an importance-sampling application.
"""

from .distributions import ComponentSpec, DistributionFamily, iid_family, load_family
from .errors import TiltcondError

__version__ = "0.1.0"

__all__ = ["ComponentSpec", "DistributionFamily", "iid_family", "load_family", "TiltcondError", "__version__"]
