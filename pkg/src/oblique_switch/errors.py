"""Exception hierarchy.

Each class carries the process exit code used by the command-line front end,
so library callers and scripts see the same classification.
"""


class ObliqueSwitchError(Exception):
    exit_code = 1


class ConfigError(ObliqueSwitchError):
    exit_code = 2


class StructuralError(ObliqueSwitchError, ValueError):
    """Inconsistent shapes or dimensions in the problem data."""

    exit_code = 2


class ValidationError(ObliqueSwitchError, ValueError):
    """Problem data has the right shape but violates a model assumption."""

    exit_code = 2


class DomainError(ObliqueSwitchError):
    """Geometric precondition failed (empty domain, reducible chain, ...)."""

    exit_code = 3


class ProjectionError(DomainError):
    pass


class ConstructionError(DomainError):
    """A reflection operator could not be built or certified."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class StabilityError(ObliqueSwitchError):
    def __init__(self, message, max_dt=None):
        super().__init__(message)
        self.max_dt = max_dt

    exit_code = 4


class CapabilityError(ObliqueSwitchError):
    """Requested computation is outside what the routine supports."""

    exit_code = 5
