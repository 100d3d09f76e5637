"""
INI configuration for the command line tools.

Every key carries its unit in the name (``trip_length_m``, ``duration_s``)
and unknown sections or keys are rejected, so a misspelt or unit-less key
fails loudly instead of silently falling back to a default. All sections and
keys are optional.

Example::

    [scenario]
    road_length_m = 30000
    trip_length_m = 20000
    duration_s = 4500
    warmup_s = 900

    [sweep]
    approaches = human, acc, similarity, trip-cost
    densities_veh_per_km_lane = 5, 15
    seeds = 0, 1, 2
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analysis import AnalysisConfig
from .errors import ConfigurationError
from .experiment import ExperimentMatrix
from .formation import FormationConfig, ManeuverConfig, SimilarityConfig
from .monetization import TimeCostDistribution
from .scenario import DemandConfig, Freeway
from .simulation import ACC_APPROACH, APPROACHES, ScenarioConfig

SCHEMA: dict[str, tuple[str, ...]] = {
    "analysis": ("trip_length_m", "time_costs_eur_per_h", "adjustments_m_per_s", "fuel_prices_eur_per_l"),
    "scenario": (
        "road_length_m", "lanes", "ramp_interval_m", "trip_length_m", "density_veh_per_km_lane",
        "departure_rate_veh_per_h", "duration_s", "warmup_s", "step_s", "fuel_price_eur_per_l",
        "time_cost_distribution", "time_cost_eur_per_h", "approach", "seed",
    ),
    "formation": (
        "interval_s", "communication_range_m", "cacc_gap_m", "approach_coefficient",
        "approach_accel_m_per_s2", "approach_decel_m_per_s2", "speed_window", "search_range_m", "alpha",
    ),
    "sweep": ("approaches", "densities_veh_per_km_lane", "seeds", "bin_width_eur_per_h", "workers"),
}


@dataclass(frozen=True)
class RunConfig:
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    formation: FormationConfig = field(default_factory=FormationConfig)
    matrix: ExperimentMatrix = field(default_factory=ExperimentMatrix)
    approach: str = ACC_APPROACH
    bin_width: float = 5.0
    workers: int = 1


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigurationError(f"{source}: unknown section [{section}]")
        unknown = set(parser[section]) - set(SCHEMA[section])
        if unknown:
            raise ConfigurationError(f"{source}: unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    try:
        return _build(parser)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc


def load_config(path: str | Path | None) -> RunConfig:
    """Read ``path``; ``None`` gives the built-in defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def _get(parser, section, key, conv, default):
    if parser.has_option(section, key):
        return conv(parser.get(section, key))
    return default


def _build(parser: configparser.ConfigParser) -> RunConfig:
    base = RunConfig()

    a = base.analysis
    analysis = replace(
        a,
        trip_length_m=_get(parser, "analysis", "trip_length_m", float, a.trip_length_m),
        time_costs=_get(parser, "analysis", "time_costs_eur_per_h", _floats, a.time_costs),
        adjustments=_get(parser, "analysis", "adjustments_m_per_s", _floats, a.adjustments),
        fuel_prices=_get(parser, "analysis", "fuel_prices_eur_per_l", _floats, a.fuel_prices),
    )

    s = "scenario"
    fw = base.scenario.freeway
    freeway = Freeway(
        length=_get(parser, s, "road_length_m", float, fw.length),
        lanes=_get(parser, s, "lanes", int, fw.lanes),
        ramp_interval=_get(parser, s, "ramp_interval_m", float, fw.ramp_interval),
    )
    dm = base.scenario.demand
    kind = _get(parser, s, "time_cost_distribution", str.strip, "income")
    if kind == "income":
        dist = TimeCostDistribution.income()
    elif kind == "bathtub":
        dist = TimeCostDistribution.bathtub()
    elif kind == "degenerate":
        if not parser.has_option(s, "time_cost_eur_per_h"):
            raise ConfigurationError("time_cost_distribution = degenerate needs time_cost_eur_per_h")
        dist = TimeCostDistribution.degenerate(parser.getfloat(s, "time_cost_eur_per_h"))
    else:
        raise ConfigurationError(f"unknown time_cost_distribution {kind!r}")
    demand = DemandConfig(
        density=_get(parser, s, "density_veh_per_km_lane", float, dm.density),
        trip_length=_get(parser, s, "trip_length_m", float, dm.trip_length),
        departure_rate=_get(parser, s, "departure_rate_veh_per_h", float, dm.departure_rate),
        time_cost=dist,
        fuel_price=_get(parser, s, "fuel_price_eur_per_l", float, dm.fuel_price),
        seed=_get(parser, s, "seed", int, dm.seed),
    )
    sc = base.scenario
    scenario = ScenarioConfig(
        freeway=freeway,
        demand=demand,
        duration_s=_get(parser, s, "duration_s", float, sc.duration_s),
        warmup_s=_get(parser, s, "warmup_s", float, sc.warmup_s),
        dt=_get(parser, s, "step_s", float, sc.dt),
    )
    approach = _get(parser, s, "approach", str.strip, base.approach)
    if approach not in APPROACHES:
        raise ConfigurationError(f"unknown approach {approach!r}; choose from {', '.join(APPROACHES)}")

    f = "formation"
    fc, mc, sm = base.formation, base.formation.maneuver, base.formation.similarity
    formation = replace(
        fc,
        interval=_get(parser, f, "interval_s", float, fc.interval),
        communication_range=_get(parser, f, "communication_range_m", float, fc.communication_range),
        cacc_gap=_get(parser, f, "cacc_gap_m", float, fc.cacc_gap),
        maneuver=ManeuverConfig(
            approach_coefficient=_get(parser, f, "approach_coefficient", float, mc.approach_coefficient),
            approach_accel=_get(parser, f, "approach_accel_m_per_s2", float, mc.approach_accel),
            approach_decel=_get(parser, f, "approach_decel_m_per_s2", float, mc.approach_decel),
            max_speed=mc.max_speed,
            min_speed_difference=mc.min_speed_difference,
        ),
        similarity=SimilarityConfig(
            speed_window=_get(parser, f, "speed_window", float, sm.speed_window),
            search_range=_get(parser, f, "search_range_m", float, sm.search_range),
            alpha=_get(parser, f, "alpha", float, sm.alpha),
        ),
    )

    w = "sweep"
    mx = base.matrix
    matrix = ExperimentMatrix(
        approaches=_get(parser, w, "approaches", _names, mx.approaches),
        densities=_get(parser, w, "densities_veh_per_km_lane", _floats, mx.densities),
        seeds=_get(parser, w, "seeds", _ints, mx.seeds),
    )
    bin_width = _get(parser, w, "bin_width_eur_per_h", float, base.bin_width)
    if bin_width <= 0:
        raise ConfigurationError("bin_width_eur_per_h must be positive")
    workers = _get(parser, w, "workers", int, base.workers)
    return RunConfig(analysis, scenario, formation, matrix, approach, bin_width, max(workers, 1))
