"""Single simulation runs: scenario setup and the per-step world update."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .errors import ConfigurationError, SimulationError
from .formation import SIMILARITY, TRIP_COST, DecisionRecord, FormationConfig, FormationEngine
from .mobility import ACC, HUMAN, MODE_NAMES, CompletedTrip, World, apply_lane_policy, move_vehicles
from .scenario import Demand, DemandConfig, Freeway, prefill

HUMAN_APPROACH = "human"
ACC_APPROACH = "acc"
APPROACHES = (HUMAN_APPROACH, ACC_APPROACH, SIMILARITY, TRIP_COST)
TRACE_HEADER = ("t", "id", "pos", "lane", "speed", "mode", "platoon_id")


@dataclass(frozen=True)
class ScenarioConfig:
    freeway: Freeway = field(default_factory=Freeway)
    demand: DemandConfig = field(default_factory=DemandConfig)
    duration_s: float = 7200.0  # simulated time after prefill, warmup included
    warmup_s: float = 1800.0
    dt: float = 1.0
    spawn: bool = True

    def __post_init__(self) -> None:
        if self.duration_s < 0 or self.warmup_s < 0 or self.dt <= 0:
            raise ConfigurationError("duration and warmup must be >= 0 and dt > 0")


class Simulation:
    """
    One run of one approach.

    Prefill and demand draw from independent streams derived from the seed, so
    all approaches see the same drivers and the same departure sequence.
    """

    def __init__(
        self,
        scenario: ScenarioConfig,
        approach: str = ACC_APPROACH,
        seed: int | None = None,
        formation: FormationConfig | None = None,
        trace: IO[str] | None = None,
    ):
        if approach not in APPROACHES:
            raise ConfigurationError(f"unknown approach {approach!r}; choose from {', '.join(APPROACHES)}")
        self.scenario = scenario
        self.approach = approach
        self.seed = scenario.demand.seed if seed is None else seed
        fw = scenario.freeway
        self.world = World(road_length=fw.length, lanes=fw.lanes, dt=scenario.dt)
        prefill_seq, demand_seq = np.random.SeedSequence(self.seed).spawn(2)
        mode = HUMAN if approach == HUMAN_APPROACH else ACC
        prefill(self.world, fw, scenario.demand, np.random.default_rng(prefill_seq), mode)
        self.demand = Demand(fw, scenario.demand, np.random.default_rng(demand_seq), mode)
        self.engine: FormationEngine | None = None
        if approach in (SIMILARITY, TRIP_COST):
            cfg = formation or FormationConfig()
            if cfg.approach != approach:
                cfg = FormationConfig(**{**cfg.__dict__, "approach": approach})
            self.engine = FormationEngine(cfg, self.world.coefficients, self.world.slipstream)
        self._trace = csv.writer(trace, lineterminator="\n") if trace is not None else None
        if self._trace is not None:
            self._trace.writerow(TRACE_HEADER)
            self._write_trace()

    @property
    def t(self) -> float:
        return self.world.t

    @property
    def decisions(self) -> list[DecisionRecord]:
        return self.engine.decisions if self.engine is not None else []

    def step(self) -> None:
        world = self.world
        if self.engine is not None:
            self.engine.step(world)
        apply_lane_policy(world)
        move_vehicles(world)
        arrived = world.ids[world.pos >= world.dest]
        if len(arrived):
            if self.engine is not None:
                self.engine.handle_departures(world, arrived.tolist())
            world.remove_vehicles(arrived.tolist())
        if self.scenario.spawn:
            self.demand.spawn_step(world)
        gap = world.min_gap()
        if gap < 0:
            raise SimulationError(f"vehicles overlap at t={world.t} (gap {gap:.3f} m)")
        if self._trace is not None:
            self._write_trace()

    def run(self, duration_s: float | None = None) -> list[CompletedTrip]:
        duration = self.scenario.duration_s if duration_s is None else duration_s
        steps = int(round(duration / self.scenario.dt))
        for _ in range(steps):
            self.step()
        return self.world.completed

    def _write_trace(self) -> None:
        w = self.world
        t = repr(float(w.t))
        for i in range(w.n):
            pid = int(w.platoon[i])
            self._trace.writerow((
                t, int(w.ids[i]), repr(float(w.pos[i])), int(w.lane[i]), repr(float(w.speed[i])),
                MODE_NAMES[int(w.mode[i])], "" if pid < 0 else pid,
            ))
