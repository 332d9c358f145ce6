"""Exception types shared across the package."""


class RankDeficientError(ValueError):
    """Matrix rank is too low for the requested operation."""

    def __init__(self, message, estimated_rank=None):
        super().__init__(message)
        self.estimated_rank = estimated_rank


class UnsupportedConfigurationError(ValueError):
    """Antenna regime or mode combination outside an operation's domain."""


class RankExtractionError(RuntimeError):
    """Beamformer extraction from a PSD matrix stalled above rank one."""

    def __init__(self, message, fidelity=None):
        super().__init__(message)
        self.fidelity = fidelity


class SolverFailureError(RuntimeError):
    """Interior-point solve ended without a certified answer."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """Invalid experiment configuration."""
