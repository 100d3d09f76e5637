"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain of a cost or kinematics function."""


class ConfigurationError(ValueError):
    """A scenario or configuration cannot be realized."""


class SimulationError(RuntimeError):
    """A world invariant was violated while stepping (e.g. two vehicles overlap)."""
