"""Exception types shared across the package."""


class PolaronVqeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PolaronVqeError):
    """Invalid or unparseable experiment configuration."""


class ResourceLimitError(PolaronVqeError):
    """A requested computation exceeds a configured size cap."""


class TruncationError(PolaronVqeError):
    """A Fock-space truncation is too small for the requested operation."""


class EstimationError(PolaronVqeError):
    """A shot-based estimate cannot be formed (e.g. no retained shots)."""


class NumericalError(PolaronVqeError):
    """A numerical routine failed (non-convergence, singular system, ...)."""
