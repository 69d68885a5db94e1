"""Exception types shared across the package."""


class SeasfiltError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(SeasfiltError):
    """Malformed or incomplete run configuration."""


class FactorizationError(SeasfiltError):
    """Spectral factorization could not be computed.

    Carries the residual history of the iteration when available.
    """

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history) if residual_history else []


class ConditioningError(SeasfiltError):
    """A linear solve was rejected because the operator is too ill-conditioned."""


class InfeasibleClassError(SeasfiltError):
    """An admissible-density class is empty or cannot be projected onto."""
