"""
Instantaneous fuel consumption and the slipstream effect.

The fuel-rate model is a polynomial in speed and acceleration whose
coefficients are read from a small key-value file (see ``data/pc_g_eu4.ini``).
All rate functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

_COEFFICIENT_KEYS = ("f0", "f1", "f2", "f3", "f4", "f5")


@dataclass(frozen=True)
class FuelModelCoefficients:
    """Coefficients of ``f0 + f1*v*a + f2*v*a^2 + f3*v + f4*v^2 + f5*v^3``."""

    emission_class: str
    f0: float
    f1: float
    f2: float
    f3: float
    f4: float
    f5: float
    scale: float = 3.6
    fuel_density_g_per_l: float = 790.0

    @property
    def to_liters_per_second(self) -> float:
        """Divisor mapping the raw polynomial to L/s."""
        return self.scale * self.fuel_density_g_per_l * 1000.0


def load_coefficients(path: str | Path) -> FuelModelCoefficients:
    """Read a ``[fuel_model]`` coefficient file."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section("fuel_model"):
        raise ConfigurationError(f"{path}: missing [fuel_model] section")
    section = dict(parser["fuel_model"])
    known = {f.name for f in fields(FuelModelCoefficients)}
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}")
    missing = {"emission_class", *_COEFFICIENT_KEYS} - set(section)
    if missing:
        raise ConfigurationError(f"{path}: missing keys {sorted(missing)}")
    values = {k: (v if k == "emission_class" else float(v)) for k, v in section.items()}
    return FuelModelCoefficients(**values)


def default_coefficients() -> FuelModelCoefficients:
    """Coefficients for the PC_G_EU4 class shipped with the package."""
    with resources.as_file(resources.files(__package__) / "data" / "pc_g_eu4.ini") as path:
        return load_coefficients(path)


DEFAULT_COEFFICIENTS = default_coefficients()


def fuel_rate(speed, acceleration, coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS):
    """
    Return the fuel consumption rate in L/s.

    Negative polynomial values (hard deceleration) are clamped to zero since a
    combustion engine cannot produce fuel.

    Parameters
    ----------
    speed : float or ndarray
        Speed in m/s.
    acceleration : float or ndarray
        Acceleration in m/s^2.
    coeffs : FuelModelCoefficients
        Coefficient set of the emission class.
    """
    v = speed
    a = acceleration
    raw = (
        coeffs.f0
        + coeffs.f1 * v * a
        + coeffs.f2 * v * a * a
        + coeffs.f3 * v
        + coeffs.f4 * v * v
        + coeffs.f5 * v * v * v
    )
    rate = np.maximum(raw, 0.0) / coeffs.to_liters_per_second
    if np.ndim(rate) == 0:
        return float(rate)
    return rate


def fuel_for_constant_speed(
    speed: float, distance: float, coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS
) -> float:
    """Fuel in liters needed to cover ``distance`` meters at constant ``speed``."""
    if distance < 0:
        raise DomainError(f"distance must be non-negative, got {distance}")
    if distance == 0:
        return 0.0
    if speed <= 0:
        raise DomainError(f"cannot cover {distance} m at speed {speed}")
    return fuel_rate(speed, 0.0, coeffs) * (distance / speed)


@dataclass(frozen=True)
class SpeedChange:
    """Time, distance and fuel of a constant-acceleration speed change."""

    time: float
    distance: float
    fuel: float


def fuel_for_speed_change(
    v_from: float,
    v_to: float,
    accel_magnitude: float,
    coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS,
) -> SpeedChange:
    """
    Estimate a speed change from ``v_from`` to ``v_to`` at constant acceleration.

    Fuel is the duration times the fuel rate at the mean speed of the change,
    evaluated with the signed acceleration.
    """
    if accel_magnitude <= 0:
        raise DomainError(f"accel_magnitude must be positive, got {accel_magnitude}")
    dv = v_to - v_from
    if dv == 0:
        return SpeedChange(0.0, 0.0, 0.0)
    time = abs(dv) / accel_magnitude
    distance = abs(v_to * v_to - v_from * v_from) / (2.0 * accel_magnitude)
    signed = accel_magnitude if dv > 0 else -accel_magnitude
    fuel = time * fuel_rate(0.5 * (v_from + v_to), signed, coeffs)
    return SpeedChange(time, distance, fuel)


class Role(str, Enum):
    """Position of a vehicle with respect to platooning."""

    ALONE = "alone"
    LEADER = "leader"
    MID = "mid"
    LAST = "last"


@dataclass(frozen=True)
class SlipstreamModel:
    """
    Fuel reductions by platoon position.

    Middle members save 12.42 % (27 % air-drag reduction times the 46 %
    drag-to-fuel ratio), leaders 5 % and last members 11 %.
    """

    mid_platoon_reduction: float = 0.1242
    leader_reduction: float = 0.05
    last_vehicle_reduction: float = 0.11

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not 0.0 <= value < 1.0:
                raise DomainError(f"{f.name} must lie in [0, 1), got {value}")


DEFAULT_SLIPSTREAM = SlipstreamModel()


def slipstream_factor(role: Role | str, model: SlipstreamModel = DEFAULT_SLIPSTREAM) -> float:
    """Multiplier applied to the fuel rate of a vehicle in ``role``."""
    role = Role(role)
    if role is Role.ALONE:
        return 1.0
    if role is Role.LEADER:
        return 1.0 - model.leader_reduction
    if role is Role.MID:
        return 1.0 - model.mid_platoon_reduction
    return 1.0 - model.last_vehicle_reduction
