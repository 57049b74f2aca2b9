"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(ValueError):
    """An experiment or fading configuration is malformed or inconsistent."""


class AssumptionError(ValueError):
    """A utility model lacks a property the caller relies on."""


class NonConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap."""
