"""Numerical laboratory for moderate deviations of the Random Energy Model free energy."""

from remlab.errors import (
    ConfigError,
    DomainError,
    NumericalFailure,
    QuadratureError,
    RemlabError,
    UnsupportedRegime,
)
from remlab.theory import BETA_C, BETA_CRIT, ModelParams, Regime

__version__ = "0.1.0"

__all__ = [
    "BETA_C",
    "BETA_CRIT",
    "ConfigError",
    "DomainError",
    "ModelParams",
    "NumericalFailure",
    "QuadratureError",
    "Regime",
    "RemlabError",
    "UnsupportedRegime",
    "__version__",
]
