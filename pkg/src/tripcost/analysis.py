"""
Single-vehicle numerical analysis of the trip cost metric.

A vehicle drives a fixed trip on an empty freeway at the desired speed given
by its time cost. Human driving uses the desired speed as is; a hypothetical
platoon member drives at the desired speed plus a constant adjustment (capped
at the maximum speed) and saves the mid-platoon slipstream fraction of fuel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .costs import CostParams, TripEstimate, total_trip_cost
from .fuel import DEFAULT_COEFFICIENTS, DEFAULT_SLIPSTREAM, FuelModelCoefficients, Role, SlipstreamModel, fuel_for_constant_speed, slipstream_factor
from .monetization import MAX_DESIRED_SPEED, desired_speed_from_time_cost

CSV_HEADER = ("c_time", "adjustment", "fuel_price", "mode", "travel_time_s", "fuel_l", "trip_cost_eur")


@dataclass(frozen=True)
class AnalysisConfig:
    trip_length_m: float = 50_000.0
    time_costs: tuple[float, ...] = tuple(float(c) for c in range(0, 80, 5))
    adjustments: tuple[float, ...] = tuple(float(a) for a in range(-5, 6))
    fuel_prices: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)
    max_speed: float = MAX_DESIRED_SPEED
    coefficients: FuelModelCoefficients = DEFAULT_COEFFICIENTS
    slipstream: SlipstreamModel = DEFAULT_SLIPSTREAM


class AnalysisRow(NamedTuple):
    c_time: float
    adjustment: float
    fuel_price: float
    mode: str
    travel_time_s: float
    fuel_l: float
    trip_cost_eur: float


def run_numerical_analysis(config: AnalysisConfig = AnalysisConfig()) -> list[AnalysisRow]:
    """
    Evaluate travel time, fuel and trip cost over the configured grid.

    Returns rows for both modes (``human`` and ``platoon``), ordered by
    mode, time cost, adjustment and fuel price. Human rows do not depend on
    the adjustment and are repeated for every adjustment value.
    """
    rows: list[AnalysisRow] = []
    factor = slipstream_factor(Role.MID, config.slipstream)
    distance = config.trip_length_m
    for mode in ("human", "platoon"):
        for c_time in config.time_costs:
            desired = desired_speed_from_time_cost(c_time)
            for adjustment in config.adjustments:
                if mode == "human":
                    speed = desired
                    fuel = fuel_for_constant_speed(speed, distance, config.coefficients)
                else:
                    speed = min(desired + adjustment, config.max_speed)
                    fuel = factor * fuel_for_constant_speed(speed, distance, config.coefficients)
                travel_time = distance / speed
                estimate = TripEstimate.from_seconds(fuel, travel_time, distance)
                for price in config.fuel_prices:
                    cost = total_trip_cost(estimate, CostParams(c_time, price))
                    rows.append(AnalysisRow(c_time, adjustment, price, mode, travel_time, fuel, cost))
    return rows


def average_over_adjustments(rows: Iterable[AnalysisRow]) -> dict[tuple[str, float, float], tuple[float, float, float]]:
    """
    Mean travel time, fuel and trip cost per ``(mode, c_time, fuel_price)``.

    These are the averaged curves the figures of the analysis show.
    """
    groups: dict[tuple[str, float, float], list[AnalysisRow]] = {}
    for row in rows:
        groups.setdefault((row.mode, row.c_time, row.fuel_price), []).append(row)
    return {
        key: (
            float(np.mean([r.travel_time_s for r in grp])),
            float(np.mean([r.fuel_l for r in grp])),
            float(np.mean([r.trip_cost_eur for r in grp])),
        )
        for key, grp in groups.items()
    }


def write_analysis_csv(rows: Iterable[AnalysisRow], path: str | Path) -> None:
    """Write rows with a header; floats use their shortest round-trip repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_analysis_tables(rows: Iterable[AnalysisRow], out_dir: str | Path) -> list[Path]:
    """Write one CSV per mode (``analysis_human.csv``, ``analysis_platoon.csv``)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    paths = []
    for mode in ("human", "platoon"):
        path = out_dir / f"analysis_{mode}.csv"
        write_analysis_csv((r for r in rows if r.mode == mode), path)
        paths.append(path)
    return paths
