"""Monetary total trip cost: fuel cost plus opportunity cost of travel time."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

MAX_TIME_COST = 75.0
"""Upper bound for the hourly value of time in EUR/h."""

DEFAULT_FUEL_PRICE = 1.84
"""Euro-super 95 price in Germany in April 2023, EUR/L."""


def _check_nonnegative(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise DomainError(f"{name} must be finite and non-negative, got {value!r}")


@dataclass(frozen=True)
class CostParams:
    """Prices a driver assigns to fuel and to time."""

    time_cost_per_hour: float
    fuel_price_per_liter: float = DEFAULT_FUEL_PRICE

    def __post_init__(self) -> None:
        _check_nonnegative("time_cost_per_hour", self.time_cost_per_hour)
        _check_nonnegative("fuel_price_per_liter", self.fuel_price_per_liter)
        if self.time_cost_per_hour > MAX_TIME_COST:
            raise DomainError(
                f"time_cost_per_hour must be <= {MAX_TIME_COST}, got {self.time_cost_per_hour}"
            )


@dataclass(frozen=True)
class TripEstimate:
    """Fuel volume and duration of a (partial) trip."""

    fuel_liters: float
    duration_hours: float
    distance_m: float = 0.0

    def __post_init__(self) -> None:
        _check_nonnegative("fuel_liters", self.fuel_liters)
        _check_nonnegative("duration_hours", self.duration_hours)
        _check_nonnegative("distance_m", self.distance_m)

    @classmethod
    def from_seconds(cls, fuel_liters: float, duration_s: float, distance_m: float = 0.0) -> TripEstimate:
        return cls(fuel_liters, duration_s / 3600.0, distance_m)

    def __add__(self, other: TripEstimate) -> TripEstimate:
        return TripEstimate(
            self.fuel_liters + other.fuel_liters,
            self.duration_hours + other.duration_hours,
            self.distance_m + other.distance_m,
        )


def total_trip_cost(estimate: TripEstimate, params: CostParams) -> float:
    """
    Return the total cost of a trip in EUR.

    The cost is ``fuel * fuel_price + hours * time_cost`` and is linear in each
    price, so it is additive over trip segments.
    """
    return (
        estimate.fuel_liters * params.fuel_price_per_liter
        + estimate.duration_hours * params.time_cost_per_hour
    )
