"""
Assigning drivers an hourly value of time and a matching desired speed.

Values are drawn from a monthly gross income distribution, converted to an
hourly rate (160 working hours per month) and capped at 75 EUR/h.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats

from .costs import MAX_TIME_COST
from .errors import DomainError

HOURS_PER_MONTH = 160.0
MAX_MONTHLY_INCOME = MAX_TIME_COST * HOURS_PER_MONTH  # 12000 EUR

MIN_DESIRED_SPEED = 22.0
MAX_DESIRED_SPEED = 55.0


class DistributionKind(str, Enum):
    INCOME = "income"
    BATHTUB = "bathtub"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class TimeCostDistribution:
    """
    Distribution of the hourly time cost.

    ``income`` is a generalized hyperbolic fit (scipy parametrization) of the
    German monthly gross income of full-time workers in April 2023.
    ``bathtub`` is a symmetric beta over ``[0, bathtub_max_income]`` monthly
    income that emphasizes both extremes. ``degenerate`` always yields
    ``value``.
    """

    kind: DistributionKind = DistributionKind.INCOME
    # generalized hyperbolic fit
    a: float = 0.62
    b: float = 0.39
    p: float = 1.23
    loc: float = 2498.26
    scale: float = 363.96
    # bathtub
    bathtub_shape: tuple[float, float] = (0.2, 0.2)
    bathtub_max_income: float = 12100.0
    # degenerate
    value: float = 25.0
    hours_per_month: float = HOURS_PER_MONTH
    hourly_cap: float = MAX_TIME_COST

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DistributionKind(self.kind))
        if self.kind is DistributionKind.DEGENERATE and not 0.0 <= self.value <= self.hourly_cap:
            raise DomainError(f"degenerate value must lie in [0, {self.hourly_cap}], got {self.value}")

    @classmethod
    def income(cls) -> TimeCostDistribution:
        return cls(DistributionKind.INCOME)

    @classmethod
    def bathtub(cls, shape: tuple[float, float] = (0.2, 0.2), max_income: float = 12100.0) -> TimeCostDistribution:
        return cls(DistributionKind.BATHTUB, bathtub_shape=shape, bathtub_max_income=max_income)

    @classmethod
    def degenerate(cls, value: float) -> TimeCostDistribution:
        return cls(DistributionKind.DEGENERATE, value=value)

    def monthly(self):
        """The frozen scipy distribution of monthly income (not for ``degenerate``)."""
        if self.kind is DistributionKind.INCOME:
            return stats.genhyperbolic(self.p, self.a, self.b, loc=self.loc, scale=self.scale)
        if self.kind is DistributionKind.BATHTUB:
            return stats.beta(*self.bathtub_shape, loc=0.0, scale=self.bathtub_max_income)
        raise DomainError("a degenerate distribution has no monthly income model")


def monthly_to_hourly(monthly, hours_per_month: float = HOURS_PER_MONTH, cap: float = MAX_TIME_COST):
    """Convert monthly income samples to hourly time cost, clamped to ``[0, cap]``."""
    return np.clip(np.asarray(monthly, dtype=float) / hours_per_month, 0.0, cap)


def sample_time_costs(dist: TimeCostDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` hourly time costs in EUR/h from ``dist``."""
    if dist.kind is DistributionKind.DEGENERATE:
        return np.full(size, float(dist.value))
    monthly = dist.monthly().rvs(size=size, random_state=rng)
    monthly = np.clip(monthly, 0.0, dist.hourly_cap * dist.hours_per_month)
    return monthly_to_hourly(monthly, dist.hours_per_month, dist.hourly_cap)


def sample_time_cost(dist: TimeCostDistribution, rng: np.random.Generator) -> float:
    """Draw a single hourly time cost in EUR/h."""
    return float(sample_time_costs(dist, rng, 1)[0])


def desired_speed_from_time_cost(c_time: float) -> float:
    """Map a time cost in ``[0, 75]`` EUR/h linearly onto ``[22, 55]`` m/s."""
    if not 0.0 <= c_time <= MAX_TIME_COST:
        raise DomainError(f"time cost must lie in [0, {MAX_TIME_COST}], got {c_time}")
    slope = (MAX_DESIRED_SPEED - MIN_DESIRED_SPEED) / (MAX_TIME_COST - 0.0)
    return slope * c_time + MIN_DESIRED_SPEED


def time_cost_from_desired_speed(speed: float) -> float:
    """Inverse of :func:`desired_speed_from_time_cost`."""
    if not MIN_DESIRED_SPEED <= speed <= MAX_DESIRED_SPEED:
        raise DomainError(f"speed must lie in [{MIN_DESIRED_SPEED}, {MAX_DESIRED_SPEED}], got {speed}")
    return (speed - MIN_DESIRED_SPEED) * MAX_TIME_COST / (MAX_DESIRED_SPEED - MIN_DESIRED_SPEED)


def histogram_mode(samples: np.ndarray, bin_width: float = 0.1, smoothing_bins: float = 4.0) -> float:
    """Estimate the mode of ``samples`` from a Gaussian-smoothed histogram."""
    from scipy.ndimage import gaussian_filter1d

    samples = np.asarray(samples, dtype=float)
    edges = np.arange(samples.min(), samples.max() + bin_width, bin_width)
    counts, edges = np.histogram(samples, bins=edges)
    smooth = gaussian_filter1d(counts.astype(float), smoothing_bins)
    k = int(np.argmax(smooth))
    return float(0.5 * (edges[k] + edges[k + 1]))
