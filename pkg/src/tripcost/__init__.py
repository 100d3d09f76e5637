"""Trip-cost based platoon formation on a simulated freeway."""

from .costs import CostParams, TripEstimate, total_trip_cost
from .errors import ConfigurationError, DomainError, SimulationError

__all__ = [
    "ConfigurationError",
    "CostParams",
    "DomainError",
    "SimulationError",
    "TripEstimate",
    "total_trip_cost",
]
__version__ = "0.1.0"
