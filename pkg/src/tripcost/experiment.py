"""Run matrices of simulations and turn per-vehicle outcomes into binned statistics and gains."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigurationError, SimulationError
from .formation import DecisionRecord, FormationConfig
from .mobility import CompletedTrip
from .simulation import ACC_APPROACH, APPROACHES, ScenarioConfig, Simulation

log = logging.getLogger(__name__)

RECORD_COLUMNS = (
    "vehicle", "approach", "density", "seed", "c_time", "depart_time", "arrival_time",
    "travel_time", "distance", "speed", "fuel", "trip_cost", "platoon_time",
)
METRICS = ("speed", "travel_time", "fuel", "trip_cost")
GAIN_COLUMNS = ("density", "bin_lo", "bin_hi", "approach", "baseline_cost", "cost", "gain")


class ExperimentRecord(NamedTuple):
    vehicle: int
    approach: str
    density: float
    seed: int
    c_time: float
    depart_time: float
    arrival_time: float
    travel_time: float
    distance: float
    speed: float
    fuel: float
    trip_cost: float
    platoon_time: float


def realized_trip_cost(fuel: float, travel_time_s: float, c_time: float, fuel_price: float) -> float:
    return fuel * fuel_price + travel_time_s / 3600.0 * c_time


def records_from_trips(
    trips: Iterable[CompletedTrip], approach: str, density: float, seed: int, warmup_s: float
) -> list[ExperimentRecord]:
    """Records for completed trips that departed from a ramp after the warmup."""
    out = []
    for trip in trips:
        if trip.prefilled or trip.depart_time < warmup_s:
            continue
        travel = trip.arrival_time - trip.depart_time
        distance = trip.destination - trip.depart_position
        out.append(ExperimentRecord(
            trip.id, approach, density, seed, trip.time_cost, trip.depart_time, trip.arrival_time, travel,
            distance, distance / travel, trip.fuel, realized_trip_cost(trip.fuel, travel, trip.time_cost, trip.fuel_price),
            trip.platoon_time,
        ))
    return out


@dataclass(frozen=True)
class ExperimentMatrix:
    approaches: tuple[str, ...] = APPROACHES
    densities: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self) -> None:
        for a in self.approaches:
            if a not in APPROACHES:
                raise ConfigurationError(f"unknown approach {a!r}")

    def cells(self) -> list[tuple[str, float, int]]:
        return [(a, d, s) for d in self.densities for a in self.approaches for s in self.seeds]


@dataclass
class RunResult:
    approach: str
    density: float
    seed: int
    records: list[ExperimentRecord] = field(default_factory=list)
    decisions: list[DecisionRecord] = field(default_factory=list)
    failed: bool = False
    error: str = ""
    inserted: int = 0
    removed: int = 0
    deferred: int = 0
    incomplete: int = 0  # departed after warmup, still driving at the end
    joins_started: int = 0
    joins_completed: int = 0


def run_cell(
    scenario: ScenarioConfig,
    approach: str,
    density: float,
    seed: int,
    formation: FormationConfig | None = None,
    trace=None,
) -> RunResult:
    """One simulation; a fatal simulation error marks the cell failed instead of raising."""
    demand = replace(scenario.demand, density=density, seed=seed)
    cell = replace(scenario, demand=demand)
    result = RunResult(approach, density, seed)
    try:
        sim = Simulation(cell, approach, seed, formation, trace)
        sim.run()
    except SimulationError as exc:
        log.error("run %s/%s/%s failed: %s", approach, density, seed, exc)
        result.failed, result.error = True, str(exc)
        return result
    world = sim.world
    result.records = records_from_trips(world.completed, approach, density, seed, scenario.warmup_s)
    result.decisions = list(sim.decisions)
    result.inserted, result.removed, result.deferred = world.inserted, world.removed, sim.demand.deferred
    result.incomplete = int(np.count_nonzero(~world.prefilled & (world.depart_time >= scenario.warmup_s)))
    if sim.engine is not None:
        result.joins_started = sim.engine.stats.started
        result.joins_completed = sim.engine.stats.completed
    return result


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(
    matrix: ExperimentMatrix,
    scenario: ScenarioConfig,
    formation: FormationConfig | None = None,
    workers: int = 1,
) -> list[RunResult]:
    """Run every (approach, density, seed) cell; cells are independent and may run in parallel."""
    jobs = [(scenario, a, d, s, formation) for a, d, s in matrix.cells()]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_cell_args(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_args, jobs))


def records_frame(records: Iterable[ExperimentRecord]) -> pd.DataFrame:
    return pd.DataFrame(list(records), columns=list(RECORD_COLUMNS))


def bin_and_aggregate(records: pd.DataFrame, bin_width: float = 5.0) -> pd.DataFrame:
    """
    Mean and (population) standard deviation of each metric per approach, density and bin.

    Bins are left-closed: ``[k * bin_width, (k + 1) * bin_width)``. Empty bins
    produce no row.
    """
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    columns = ["approach", "density", "bin_lo", "bin_hi", "n"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
    if records.empty:
        return pd.DataFrame(columns=columns)
    df = records.copy()
    df["bin_lo"] = np.floor(df["c_time"] / bin_width + 1e-9) * bin_width
    grouped = df.groupby(["approach", "density", "bin_lo"], sort=True)
    out = grouped[list(METRICS)].agg(["mean", lambda x: x.std(ddof=0)])
    out.columns = [f"{m}_{'mean' if s == 'mean' else 'std'}" for m, s in out.columns]
    out["n"] = grouped.size()
    out = out.reset_index()
    out["bin_hi"] = out["bin_lo"] + bin_width
    return out[columns]


def gain_vs_baseline(stats: pd.DataFrame, baseline: str = ACC_APPROACH) -> pd.DataFrame:
    """
    Relative trip-cost reduction of each approach with respect to ``baseline``.

    ``gain = (baseline - approach) / baseline`` on the binned mean trip cost,
    so positive values mean cheaper than the baseline.
    """
    if stats.empty:
        return pd.DataFrame(columns=list(GAIN_COLUMNS))
    base = stats[stats["approach"] == baseline]
    if base.empty:
        raise ConfigurationError(f"no records for baseline approach {baseline!r}")
    base = base.set_index(["density", "bin_lo"])["trip_cost_mean"]
    rows = []
    for r in stats.itertuples(index=False):
        key = (r.density, r.bin_lo)
        if key not in base.index:
            warnings.warn(f"no {baseline} baseline for density {r.density}, bin {r.bin_lo}; skipped", stacklevel=2)
            continue
        b = float(base.loc[key])
        rows.append((r.density, r.bin_lo, r.bin_hi, r.approach, b, r.trip_cost_mean, (b - r.trip_cost_mean) / b))
    return pd.DataFrame(rows, columns=list(GAIN_COLUMNS)).sort_values(
        ["density", "bin_lo", "approach"], kind="stable"
    ).reset_index(drop=True)


# --------------------------------------------------------------------------
# files


def write_records(records: Iterable[ExperimentRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def read_records(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = set(RECORD_COLUMNS) - set(df.columns)
    if missing:
        raise ConfigurationError(f"{path}: missing columns {sorted(missing)}")
    return df


def write_frame(df: pd.DataFrame, path: str | Path) -> None:
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def write_manifest(path: str | Path, scenario: ScenarioConfig, matrix: ExperimentMatrix, runs: Sequence[RunResult], extra: dict | None = None) -> None:
    """Everything needed to repeat a run: full configuration, seeds and per-cell status."""

    def plain(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {k: plain(v) for k, v in asdict(obj).items()}
        if isinstance(obj, dict):
            return {str(k): plain(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        if isinstance(obj, float) and not np.isfinite(obj):
            return str(obj)
        if hasattr(obj, "value"):
            return obj.value
        return obj

    manifest = {
        "scenario": plain(scenario),
        "matrix": plain(matrix),
        "runs": [
            {
                "approach": r.approach, "density": r.density, "seed": r.seed, "failed": r.failed, "error": r.error,
                "records": len(r.records), "inserted": r.inserted, "removed": r.removed, "deferred": r.deferred,
                "incomplete": r.incomplete, "joins_started": r.joins_started, "joins_completed": r.joins_completed,
            }
            for r in runs
        ],
    }
    if extra:
        manifest.update(plain(extra))
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
