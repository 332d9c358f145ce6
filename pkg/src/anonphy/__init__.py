"""Sender-anonymous multi-antenna uplink testbed.

Subpackages cover the numerical helpers, Rayleigh channel registry, sender
detectors, a canonical-form conic solver front end, the anonymity-constrained
precoders with their benchmarks, the Monte-Carlo block simulator and the
experiment command line.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    RankDeficientError,
    RankExtractionError,
    SolverFailureError,
    UnsupportedConfigurationError,
)

__all__ = [
    "ConfigError",
    "RankDeficientError",
    "RankExtractionError",
    "SolverFailureError",
    "UnsupportedConfigurationError",
    "__version__",
]
