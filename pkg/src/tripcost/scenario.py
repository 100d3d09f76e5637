"""Freeway geometry, trip assignment, road pre-filling and constant-rate demand."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .costs import DEFAULT_FUEL_PRICE
from .errors import ConfigurationError
from .mobility import ACC, LaneIndex, World, safe_speed
from .monetization import TimeCostDistribution, desired_speed_from_time_cost, sample_time_costs

# Departure rates (veh/h) keeping a 100 km, 3 lane freeway with 50 km trips at a
# given density (veh/km/lane).
TABLE_DEPARTURE_RATES = {5: 3564.0, 10: 7129.0, 15: 10693.0, 20: 14257.0, 25: 17822.0}
# The table rates correspond to every vehicle covering its trip at this mean
# speed; used to scale the rate for other geometries.
RATE_REFERENCE_SPEED = 33.0  # m/s
FORMATION_INTERVAL = 60.0  # s
# entering below this share of the desired speed is not allowed
MIN_INSERTION_SPEED_FRACTION = 0.5


@dataclass(frozen=True)
class Freeway:
    length: float = 100_000.0
    lanes: int = 3
    ramp_interval: float = 10_000.0
    ramp_at_start: bool = True

    def __post_init__(self) -> None:
        if self.lanes < 1:
            raise ConfigurationError("a freeway needs at least one lane")
        if not (self.length > 0 and self.ramp_interval > 0):
            raise ConfigurationError("length and ramp interval must be positive")

    def ramps(self) -> np.ndarray:
        count = int(np.floor(self.length / self.ramp_interval + 1e-9))
        ramps = self.ramp_interval * np.arange(0 if self.ramp_at_start else 1, count + 1)
        return ramps

    def feasible_origins(self, trip_length: float) -> np.ndarray:
        ramps = self.ramps()
        ends = ramps + trip_length
        ok = ends <= self.length + 1e-9
        ok &= np.isclose(np.mod(ends, self.ramp_interval), 0.0) | np.isclose(np.mod(ends, self.ramp_interval), self.ramp_interval)
        return ramps[ok]


@dataclass(frozen=True)
class TripPlan:
    origin: float
    destination: float

    @property
    def trip_length(self) -> float:
        return self.destination - self.origin


def sample_trip(freeway: Freeway, rng: np.random.Generator, trip_length: float = 50_000.0) -> TripPlan:
    """Pick an origin ramp uniformly among those that admit a trip of ``trip_length``."""
    origins = freeway.feasible_origins(trip_length)
    if len(origins) == 0:
        raise ConfigurationError(f"no ramp pair {trip_length} m apart on a {freeway.length} m freeway")
    origin = float(origins[rng.integers(len(origins))])
    return TripPlan(origin, origin + trip_length)


@dataclass(frozen=True)
class DemandConfig:
    density: float = 5.0  # veh/km/lane
    trip_length: float = 50_000.0
    departure_rate: float | None = None  # veh/h, derived when omitted
    time_cost: TimeCostDistribution = field(default_factory=TimeCostDistribution.income)
    fuel_price: float = DEFAULT_FUEL_PRICE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.density < 0 or self.trip_length <= 0:
            raise ConfigurationError("density must be >= 0 and trip length > 0")
        if self.departure_rate is not None and self.departure_rate < 0:
            raise ConfigurationError("departure rate must be >= 0")

    def vehicle_count(self, freeway: Freeway) -> int:
        return int(round(self.density * freeway.lanes * freeway.length / 1000.0))

    def rate(self, freeway: Freeway) -> float:
        if self.departure_rate is not None:
            return self.departure_rate
        if freeway == Freeway() and self.trip_length == 50_000.0 and self.density in TABLE_DEPARTURE_RATES:
            return TABLE_DEPARTURE_RATES[self.density]
        return self.vehicle_count(freeway) * RATE_REFERENCE_SPEED * 3600.0 / self.trip_length


# --------------------------------------------------------------------------
# placement


def insertion_speed(world: World, index: LaneIndex, lane: int, x: float, desired: float) -> float | None:
    """
    Speed at which a vehicle can be placed at ``x`` in ``lane``, or ``None``.

    The vehicle gets its desired speed unless the vehicle ahead forces a
    lower one. Both the new vehicle and its new follower must keep at least
    the equal-speed safety gap (standstill gap plus one headway) and stay
    below their safe speed.
    """
    p = world.params
    speed = desired
    lead = index.leader(lane, x)
    if lead >= 0:
        gap = world.pos[lead] - p.length - x
        if gap < p.min_gap:
            return None
        speed = min(speed, (gap - p.min_gap) / p.headway, safe_speed(gap, world.speed[lead], p, world.dt))
    fol = index.follower(lane, x)
    if fol >= 0:
        if world.pos[fol] == x:
            return None
        gap = x - p.length - world.pos[fol]
        vf = world.speed[fol]
        if gap < p.min_gap + p.headway * vf or vf > safe_speed(gap, speed, p, world.dt):
            return None
    if speed <= 0.0:
        return None
    return float(speed)


def choose_lane(world: World, index: LaneIndex, x: float, desired: float, min_speed_fraction: float):
    """
    Lane and speed for a vehicle entering at ``x``.

    The right-most lane that admits the desired speed wins. Otherwise the lane
    admitting the highest speed is used, provided that speed is at least
    ``min_speed_fraction`` of the desired one; returns ``(None, None)`` if
    no lane qualifies.
    """
    best_lane, best_speed = None, -1.0
    for lane in range(world.lanes):
        speed = insertion_speed(world, index, lane, x, desired)
        if speed is None:
            continue
        if speed >= desired - 1e-9:
            return lane, speed
        if speed > best_speed:
            best_lane, best_speed = lane, speed
    if best_lane is None or best_speed < min_speed_fraction * desired:
        return None, None
    return best_lane, best_speed


@dataclass
class Driver:
    trip: TripPlan
    time_cost: float
    desired_speed: float


class DriverSource:
    """Seeded stream of drivers; drawn in fixed-size batches so sequences are reproducible."""

    BATCH = 512

    def __init__(self, freeway: Freeway, demand: DemandConfig, rng: np.random.Generator):
        self.freeway = freeway
        self.demand = demand
        self.rng = rng
        self.origins = freeway.feasible_origins(demand.trip_length)
        if len(self.origins) == 0:
            raise ConfigurationError(
                f"no ramp pair {demand.trip_length} m apart on a {freeway.length} m freeway"
            )
        self._costs = np.zeros(0)
        self._origin_draws = np.zeros(0, dtype=np.int64)
        self._k = 0

    def _refill(self) -> None:
        self._costs = sample_time_costs(self.demand.time_cost, self.rng, self.BATCH)
        self._origin_draws = self.rng.integers(len(self.origins), size=self.BATCH)
        self._k = 0

    def next(self) -> Driver:
        if self._k >= len(self._costs):
            self._refill()
        c = float(self._costs[self._k])
        o = float(self.origins[self._origin_draws[self._k]])
        self._k += 1
        return Driver(TripPlan(o, o + self.demand.trip_length), c, desired_speed_from_time_cost(c))


def prefill(
    world: World,
    freeway: Freeway,
    demand: DemandConfig,
    rng: np.random.Generator,
    mode: int = ACC,
    max_attempts: int = 1000,
) -> int:
    """
    Place the desired number of vehicles on an empty road.

    Positions are uniform over the road; each vehicle gets a trip that covers
    its position, starts at its desired speed (capped for safety) on the
    right-most lane that admits it and has its trip truncated to the distance
    left. Formation search phases are staggered over one interval.
    """
    if world.n:
        raise ConfigurationError("prefill needs an empty world")
    count = demand.vehicle_count(freeway)
    if count == 0:
        return 0
    origins = freeway.feasible_origins(demand.trip_length)
    if len(origins) == 0:
        raise ConfigurationError("no feasible trips for this freeway")
    lo, hi = float(origins.min()), float(origins.max() + demand.trip_length)
    costs = sample_time_costs(demand.time_cost, rng, count)
    index = world.lane_index()
    for k in range(count):
        desired = desired_speed_from_time_cost(float(costs[k]))
        for _ in range(max_attempts):
            x = float(rng.uniform(lo, hi))
            covering = origins[(origins <= x) & (x < origins + demand.trip_length)]
            if len(covering) == 0:
                continue
            origin = float(covering[rng.integers(len(covering))])
            placed = False
            lane, speed = choose_lane(world, index, x, desired, MIN_INSERTION_SPEED_FRACTION)
            if lane is not None:
                vid = world.add_vehicle(
                    position=x, lane=lane, speed=speed, desired_speed=desired, time_cost=float(costs[k]),
                    fuel_price=demand.fuel_price, origin=origin, destination=origin + demand.trip_length,
                    mode=mode, prefilled=True, next_formation=world.t + float(rng.uniform(0, FORMATION_INTERVAL)),
                )
                index.insert(lane, world.index_of[vid], x)
                placed = True
            if placed:
                break
        else:
            raise ConfigurationError(f"could not place vehicle {k + 1} of {count} without overlap")
    return count


class Demand:
    """
    Constant-rate departures at the origin ramps.

    New drivers accumulate in per-ramp queues; each step, the head of every
    queue is inserted if the ramp has room, otherwise it waits (counted in
    ``deferred``).
    """

    def __init__(
        self,
        freeway: Freeway,
        demand: DemandConfig,
        rng: np.random.Generator,
        mode: int = ACC,
        min_speed_fraction: float = MIN_INSERTION_SPEED_FRACTION,
    ):
        self.min_speed_fraction = min_speed_fraction
        self.freeway = freeway
        self.config = demand
        self.rate = demand.rate(freeway)
        self.mode = mode
        self.source = DriverSource(freeway, demand, rng)
        self.accumulator = 0.0
        self.queues: dict[float, deque[Driver]] = {}
        self.generated = 0
        self.deferred = 0

    @property
    def waiting(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def spawn_step(self, world: World, dt: float | None = None) -> list[int]:
        dt = world.dt if dt is None else dt
        self.accumulator += self.rate * dt / 3600.0
        while self.accumulator >= 1.0 - 1e-12:
            self.accumulator -= 1.0
            driver = self.source.next()
            self.queues.setdefault(driver.trip.origin, deque()).append(driver)
            self.generated += 1
        inserted: list[int] = []
        if not self.waiting:
            return inserted
        index = world.lane_index()
        for origin in sorted(self.queues):
            queue = self.queues[origin]
            while queue:
                driver = queue[0]
                lane, speed = self._free_lane(world, index, origin, driver.desired_speed)
                if lane is None:
                    self.deferred += 1
                    break
                queue.popleft()
                vid = world.add_vehicle(
                    position=origin, lane=lane, speed=speed, desired_speed=driver.desired_speed,
                    time_cost=driver.time_cost, fuel_price=self.config.fuel_price, origin=origin,
                    destination=driver.trip.destination, mode=self.mode,
                )
                index.insert(lane, world.index_of[vid], origin)
                inserted.append(vid)
        return inserted

    def _free_lane(self, world: World, index: LaneIndex, x: float, desired: float):
        return choose_lane(world, index, x, desired, self.min_speed_fraction)
