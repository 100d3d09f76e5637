"""
Platoon formation.

A searching vehicle compares the cost of finishing its trip alone with the
cost of joining each platooning opportunity in communication range. The cost
of an opportunity consists of the join maneuver, the distance shared with the
platoon (at the platoon's desired speed, with slipstream savings) and the rest
of the trip driven alone. The similarity baseline instead picks the closest
opportunity with a similar desired speed, whatever the cost.

The estimators exist in two flavours: scalar functions working on single
opportunities and array versions used by :class:`FormationEngine` to evaluate
all pairs of one simulation step at once. Both share the same arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .costs import CostParams, TripEstimate, total_trip_cost
from .fuel import DEFAULT_COEFFICIENTS, DEFAULT_SLIPSTREAM, FuelModelCoefficients, Role, SlipstreamModel, fuel_rate, slipstream_factor
from .mobility import ACC, World, safe_speed_scalar

TRIP_COST = "trip-cost"
SIMILARITY = "similarity"


class JoinPosition(str, Enum):
    FRONT = "front"
    BACK = "back"


@dataclass(frozen=True)
class ManeuverConfig:
    approach_coefficient: float = 0.15
    approach_accel: float = 2.5
    approach_decel: float = 2.0
    max_speed: float = 55.0
    min_speed_difference: float = 1.0

    def __post_init__(self) -> None:
        if self.approach_coefficient <= 0:
            raise ValueError("approach coefficient must be positive")
        if self.approach_accel <= 0 or self.approach_decel <= 0:
            raise ValueError("approach acceleration and deceleration must be positive")


@dataclass(frozen=True)
class SimilarityConfig:
    speed_window: float = 0.2
    search_range: float = 1000.0
    alpha: float = 0.5

    def __post_init__(self) -> None:
        if self.speed_window < 0 or self.search_range <= 0 or not 0 <= self.alpha <= 1:
            raise ValueError("invalid similarity configuration")


@dataclass(frozen=True)
class FormationConfig:
    approach: str = TRIP_COST
    interval: float = 60.0
    communication_range: float = 500.0
    cacc_gap: float = 5.0
    maneuver: ManeuverConfig = field(default_factory=ManeuverConfig)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    # multiplies both prices in every estimate; decisions must not depend on it
    cost_scale: float = 1.0
    # a maneuver is given up after this many times its estimated duration plus the slack
    timeout_factor: float = 2.0
    timeout_slack: float = 60.0
    # docking requires the joiner to be this close to the target's speed
    dock_speed_tolerance: float = 2.0
    # braking a vehicle may need right after a joiner snaps in ahead of it (m/s^2)
    snap_decel: float = 4.0

    def __post_init__(self) -> None:
        if self.approach not in (TRIP_COST, SIMILARITY):
            raise ValueError(f"unknown formation approach {self.approach!r}")
        if self.cost_scale <= 0:
            raise ValueError("cost_scale must be positive")


@dataclass(frozen=True)
class PlatooningOpportunity:
    """
    An advertised join target: a lone vehicle or a platoon (through its leader).

    ``displacement`` is the signed distance from the joiner's front bumper to
    the slot it has to reach (positive means the slot is ahead).
    """

    target_id: int
    join_position: JoinPosition
    target_speed: float
    target_desired_speed: float
    displacement: float
    furthest_destination: float
    platoon_id: int | None = None
    size: int = 1


@dataclass(frozen=True)
class Phase:
    time: float = 0.0
    distance: float = 0.0
    fuel: float = 0.0


@dataclass(frozen=True)
class JoinEstimate:
    """Three-phase join maneuver: adjust speed, approach at constant speed, match speed."""

    adjust: Phase
    approach: Phase
    match: Phase
    approach_speed: float
    feasible: bool = True

    @property
    def time(self) -> float:
        return self.adjust.time + self.approach.time + self.match.time

    @property
    def distance(self) -> float:
        return self.adjust.distance + self.approach.distance + self.match.distance

    @property
    def fuel(self) -> float:
        return self.adjust.fuel + self.approach.fuel + self.match.fuel

    def cost(self, params: CostParams) -> float:
        if not self.feasible:
            return math.inf
        return total_trip_cost(TripEstimate.from_seconds(self.fuel, self.time, self.distance), params)


INFEASIBLE = JoinEstimate(Phase(), Phase(), Phase(), math.nan, feasible=False)


# --------------------------------------------------------------------------
# array estimators


class JoinArrays(NamedTuple):
    t1: np.ndarray
    s1: np.ndarray
    f1: np.ndarray
    t2: np.ndarray
    s2: np.ndarray
    f2: np.ndarray
    t3: np.ndarray
    s3: np.ndarray
    f3: np.ndarray
    approach_speed: np.ndarray
    feasible: np.ndarray

    @property
    def time(self):
        return self.t1 + self.t2 + self.t3

    @property
    def distance(self):
        return self.s1 + self.s2 + self.s3

    @property
    def fuel(self):
        return self.f1 + self.f2 + self.f3


def _speed_change(v_from, v_to, cfg: ManeuverConfig, coeffs):
    dv = v_to - v_from
    a = np.where(dv >= 0, cfg.approach_accel, cfg.approach_decel)
    t = np.abs(dv) / a
    s = 0.5 * (v_from + v_to) * t
    f = t * fuel_rate(0.5 * (v_from + v_to), np.sign(dv) * a, coeffs)
    return t, s, f


def approach_speeds(joiner_speed, target_speed, displacement, cfg: ManeuverConfig = ManeuverConfig()):
    """Constant approach speed and a feasibility mask."""
    v0 = np.asarray(joiner_speed, dtype=float)
    vt = np.asarray(target_speed, dtype=float)
    d = np.asarray(displacement, dtype=float)
    direction = np.sign(d)
    direction = np.where(direction == 0, np.sign(vt - v0), direction)
    direction = np.where(direction == 0, 1.0, direction)
    offset = np.maximum(cfg.approach_coefficient * vt, cfg.min_speed_difference)
    vc = np.clip(vt + direction * offset, 0.0, cfg.max_speed)
    feasible = np.abs(vc - vt) >= cfg.min_speed_difference - 1e-9
    return vc, feasible


def join_arrays(joiner_speed, target_speed, displacement, cfg: ManeuverConfig = ManeuverConfig(), coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS) -> JoinArrays:
    """
    Vectorized join maneuver estimate.

    Phase 1 brings the joiner from its speed to the approach speed, phase 3
    from the approach speed to the target speed. Phase 2 drives at the
    approach speed for as long as needed to close whatever gap is left after
    phases 1 and 3, taking into account that the target keeps moving. If
    phases 1 and 3 alone already close the gap, phase 2 is skipped.
    """
    v0, vt, d = np.broadcast_arrays(
        np.asarray(joiner_speed, dtype=float), np.asarray(target_speed, dtype=float), np.asarray(displacement, dtype=float)
    )
    vc, feasible = approach_speeds(v0, vt, d, cfg)
    trivial = (np.abs(d) < 1e-9) & (np.abs(v0 - vt) < 1e-9)
    vc = np.where(trivial, vt, vc)
    feasible = feasible | trivial
    t1, s1, f1 = _speed_change(v0, vc, cfg, coeffs)
    t3, s3, f3 = _speed_change(vc, vt, cfg, coeffs)
    closed = s1 + s3 - vt * (t1 + t3)
    rel = vc - vt
    with np.errstate(divide="ignore", invalid="ignore"):
        t2 = np.where(rel != 0, (d - closed) / rel, 0.0)
    t2 = np.where(trivial | ~np.isfinite(t2), 0.0, np.maximum(t2, 0.0))
    s2 = vc * t2
    f2 = t2 * fuel_rate(vc, np.zeros_like(vc), coeffs)
    zero = np.zeros_like(v0)
    out = [np.where(trivial, zero, x) for x in (t1, s1, f1, t2, s2, f2, t3, s3, f3)]
    return JoinArrays(*out, approach_speed=vc, feasible=feasible)


def option_cost_arrays(
    own_remaining,
    furthest_remaining,
    joins: JoinArrays,
    platoon_speed,
    own_speed,
    role_factor,
    time_cost,
    fuel_price,
    coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS,
):
    """
    Estimated trip cost of each platoon option and the shared distance.

    Options whose maneuver is infeasible or does not finish before the
    destination get an infinite cost.
    """
    own_remaining = np.asarray(own_remaining, dtype=float)
    join_distance = joins.distance
    shared = np.maximum(0.0, np.minimum(own_remaining, furthest_remaining) - join_distance)
    rest = np.maximum(0.0, own_remaining - shared - join_distance)
    vp = np.asarray(platoon_speed, dtype=float)
    vd = np.asarray(own_speed, dtype=float)
    fuel = (
        joins.fuel
        + fuel_rate(vp, np.zeros_like(vp), coeffs) * shared / vp * role_factor
        + fuel_rate(vd, np.zeros_like(vd), coeffs) * rest / vd
    )
    hours = (joins.time + shared / vp + rest / vd) / 3600.0
    cost = fuel * fuel_price + hours * time_cost
    ok = joins.feasible & ((join_distance < own_remaining) | (own_remaining <= 0) & (join_distance <= 0))
    return np.where(ok, cost, np.inf), shared


# --------------------------------------------------------------------------
# scalar estimators


def estimate_individual_cost(
    remaining_distance: float,
    desired_speed: float,
    params: CostParams,
    coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS,
) -> float:
    """Cost of driving the remaining distance alone at the desired speed."""
    if remaining_distance < 0:
        raise ValueError("remaining distance must be non-negative")
    if remaining_distance == 0:
        return 0.0
    fuel = fuel_rate(desired_speed, 0.0, coeffs) * remaining_distance / desired_speed
    return total_trip_cost(TripEstimate.from_seconds(fuel, remaining_distance / desired_speed, remaining_distance), params)


def estimate_join_maneuver(
    joiner_speed: float,
    opportunity: PlatooningOpportunity,
    config: ManeuverConfig = ManeuverConfig(),
    coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS,
) -> JoinEstimate:
    """Per-phase estimate of the maneuver needed to reach ``opportunity``'s slot."""
    values = [
        float(x)
        for x in join_arrays(joiner_speed, opportunity.target_speed, opportunity.displacement, config, coeffs)
    ]
    t1, s1, f1, t2, s2, f2, t3, s3, f3, vc, feasible = values
    if not math.isfinite(opportunity.displacement) or not feasible:
        return INFEASIBLE
    return JoinEstimate(Phase(t1, s1, f1), Phase(t2, s2, f2), Phase(t3, s3, f3), vc)


def shared_distance(own_remaining: float, furthest_remaining: float, join_distance: float) -> float:
    """Distance the joiner can drive inside the platoon after the maneuver."""
    return max(0.0, min(own_remaining, furthest_remaining) - join_distance)


def estimate_platoon_option(
    own_remaining: float,
    desired_speed: float,
    params: CostParams,
    opportunity: PlatooningOpportunity,
    join: JoinEstimate,
    own_position: float = 0.0,
    coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS,
    slipstream: SlipstreamModel = DEFAULT_SLIPSTREAM,
) -> float:
    """Estimated cost of the rest of the trip when taking ``opportunity``."""
    if not join.feasible or (join.distance >= own_remaining and join.distance > 0):
        return math.inf
    role = Role.LEADER if opportunity.join_position is JoinPosition.FRONT else Role.LAST
    shared = shared_distance(own_remaining, opportunity.furthest_destination - own_position, join.distance)
    rest = max(0.0, own_remaining - shared - join.distance)
    vp = opportunity.target_desired_speed
    fuel = join.fuel + slipstream_factor(role, slipstream) * fuel_rate(vp, 0.0, coeffs) * shared / vp
    seconds = join.time + shared / vp
    if rest > 0:
        fuel += fuel_rate(desired_speed, 0.0, coeffs) * rest / desired_speed
        seconds += rest / desired_speed
    return total_trip_cost(TripEstimate.from_seconds(fuel, seconds), params)


@dataclass(frozen=True)
class Decision:
    opportunity: PlatooningOpportunity | None = None
    cost: float = math.inf

    @property
    def join(self) -> bool:
        return self.opportunity is not None


STAY_ALONE = Decision()


def select_assignment_trip_cost(
    individual_cost: float,
    options: Sequence[tuple[PlatooningOpportunity, float, float]],
) -> Decision:
    """
    Cheapest option whose cost is strictly below the individual cost.

    ``options`` holds ``(opportunity, estimated cost, join distance)``;
    ties go to the shorter maneuver, then to the lower target id.
    """
    feasible = [o for o in options if o[1] < individual_cost]
    if not feasible:
        return STAY_ALONE
    best = min(feasible, key=lambda o: (o[1], o[2], o[0].target_id))
    return Decision(best[0], best[1])


def similarity_score(speed_deviation: float, distance: float, config: SimilarityConfig = SimilarityConfig()) -> float:
    speed_term = speed_deviation / config.speed_window if config.speed_window > 0 else 0.0
    return config.alpha * speed_term + (1.0 - config.alpha) * distance / config.search_range


def select_assignment_similarity(
    desired_speed: float,
    opportunities: Sequence[PlatooningOpportunity],
    config: SimilarityConfig = SimilarityConfig(),
) -> Decision:
    """
    Most similar opportunity within the speed window and search range.

    Joining is mandatory as soon as one candidate qualifies. Distance is the
    absolute displacement to the join slot. Ties go to the lower target id.
    """
    best = None
    for o in opportunities:
        deviation = abs(o.target_desired_speed - desired_speed) / desired_speed
        distance = abs(o.displacement)
        if deviation > config.speed_window + 1e-12 or distance > config.search_range:
            continue
        key = (similarity_score(deviation, distance, config), o.target_id)
        if best is None or key < best[0]:
            best = (key, o)
    if best is None:
        return STAY_ALONE
    return Decision(best[1], best[0][0])


# --------------------------------------------------------------------------
# execution in the simulation


@dataclass
class Maneuver:
    joiner: int
    position: JoinPosition
    target_vehicle: int  # lone target, or the platoon leader at decision time
    platoon_id: int | None
    approach_speed: float
    started: float
    deadline: float


class DecisionRecord(NamedTuple):
    t: float
    vehicle: int
    approach: str
    individual_cost: float
    best_platoon_cost: float
    chosen_cost: float
    target: int | None
    join_position: str | None
    speed_deviation: float
    distance: float

    @property
    def decision(self) -> str:
        return "alone" if self.target is None else f"join-{self.join_position}"


AUDIT_HEADER = ("t", "vehicle", "individual_cost", "best_platoon_cost", "target", "decision")


@dataclass
class FormationStats:
    started: int = 0
    completed: int = 0
    aborted: int = 0


class FormationEngine:
    """Runs periodic assignment decisions and drives join maneuvers to completion."""

    def __init__(
        self,
        config: FormationConfig = FormationConfig(),
        coeffs: FuelModelCoefficients = DEFAULT_COEFFICIENTS,
        slipstream: SlipstreamModel = DEFAULT_SLIPSTREAM,
    ):
        self.config = config
        self.coeffs = coeffs
        self.slipstream = slipstream
        self.maneuvers: dict[int, Maneuver] = {}
        self.locked_vehicles: dict[int, int] = {}  # lone target -> joiner
        self.locked_platoons: dict[int, int] = {}  # platoon id -> joiner
        self.decisions: list[DecisionRecord] = []
        self.stats = FormationStats()

    # -- lifecycle ---------------------------------------------------------

    def step(self, world: World) -> None:
        self.update_maneuvers(world)
        self.search(world)

    def _unlock(self, m: Maneuver) -> None:
        if m.platoon_id is None:
            self.locked_vehicles.pop(m.target_vehicle, None)
        else:
            self.locked_platoons.pop(m.platoon_id, None)

    def abort(self, world: World, joiner: int) -> None:
        m = self.maneuvers.pop(joiner)
        self._unlock(m)
        if joiner in world.index_of:
            world.release(joiner)
        self.stats.aborted += 1

    def handle_departures(self, world: World, vids: Sequence[int]) -> None:
        """
        Platoon bookkeeping for vehicles about to leave the road.

        A leaving leader hands over to the next member, which keeps the
        platoon's desired speed. A platoon reduced to one vehicle dissolves and
        the survivor searches again right away. Maneuvers by or toward leaving
        vehicles are aborted.
        """
        leaving = set(int(v) for v in vids)
        for vid in sorted(leaving):
            if vid in self.maneuvers:
                m = self.maneuvers.pop(vid)
                self._unlock(m)
                self.stats.aborted += 1
            if vid in self.locked_vehicles:
                joiner = self.locked_vehicles[vid]
                if joiner in self.maneuvers:
                    self.abort(world, joiner)
        index = world.index_of
        for vid in sorted(leaving):
            pid = int(world.platoon[index[vid]])
            if pid < 0 or pid not in world.platoons:
                continue
            platoon = world.platoons[pid]
            platoon.members.remove(vid)
            world.platoon[index[vid]] = -1
            if len(platoon.members) >= 2:
                world.sync_platoon(platoon)
                continue
            del world.platoons[pid]
            for survivor in platoon.members:
                if survivor not in leaving:
                    world.release(survivor)
                    world.next_formation[index[survivor]] = world.t
            if pid in self.locked_platoons:
                joiner = self.locked_platoons[pid]
                if joiner in self.maneuvers:
                    self.abort(world, joiner)

    # -- maneuvers ---------------------------------------------------------

    def _target_rows(self, world: World, m: Maneuver):
        index = world.index_of
        if m.platoon_id is None:
            row = index.get(m.target_vehicle)
            return (row, row) if row is not None else None
        platoon = world.platoons.get(m.platoon_id)
        if platoon is None:
            return None
        return index[platoon.leader], index[platoon.last]

    def update_maneuvers(self, world: World) -> None:
        if not self.maneuvers:
            return
        p = world.params
        gap_to_slot = self.config.cacc_gap
        mc = self.config.maneuver
        for joiner in sorted(self.maneuvers):
            m = self.maneuvers[joiner]
            rows = self._target_rows(world, m)
            if rows is None or world.t > m.deadline:
                self.abort(world, joiner)
                continue
            lead, last = rows
            j = world.index_of[joiner]
            vt = float(world.speed[lead])
            lane = int(world.lane[lead])
            if m.position is JoinPosition.BACK:
                slot = float(world.pos[last] - p.length - gap_to_slot)
                vref = vt
            else:
                slot = float(world.pos[lead] + p.length + gap_to_slot)
                # A front target ends up following the joiner; steering by its
                # current speed would feed back into an ever slower approach.
                vref = float(world.cruise[lead])
            d = slot - float(world.pos[j])
            threshold = 1.25 * (p.min_gap + p.headway * max(vt, float(world.speed[j]))) + gap_to_slot
            matched = abs(float(world.speed[j]) - vt) <= self.config.dock_speed_tolerance
            if abs(d) <= threshold and matched and self._slot_free(world, m, j, lead, last, slot, lane):
                self._complete(world, m, j, lead, last, slot, lane)
                continue
            offset = max(mc.approach_coefficient * vref, mc.min_speed_difference)
            closing = math.sqrt(2.0 * mc.approach_decel * max(abs(d) - gap_to_slot, 0.0))
            cruise = vref + math.copysign(min(offset, closing), d)
            world.cruise[j] = min(max(cruise, 0.0), mc.max_speed)
            # a joiner that has to get past the target vehicles stays beside
            # them until it snaps in
            passing = (d > 0) if m.position is JoinPosition.FRONT else (d < 0)
            own_lane = int(world.lane[j])
            if passing and world.lanes > 1:
                if own_lane == lane:
                    own_lane = lane + 1 if lane + 1 < world.lanes else lane - 1
                world.target_lane[j] = own_lane
                world.join_target[j] = -1
            else:
                world.target_lane[j] = lane
                world.join_target[j] = world.ids[last] if m.position is JoinPosition.BACK else -1

    def _slot_free(self, world: World, m: Maneuver, j: int, lead: int, last: int, slot: float, lane: int) -> bool:
        """Whether the joiner can be placed at ``slot`` in ``lane`` at the target's speed without conflict."""
        p = world.params
        others = np.flatnonzero(world.lane == lane)
        others = others[others != j]
        x = world.pos[others]
        v = float(world.speed[lead])
        brake = self.config.snap_decel * world.dt
        if m.position is JoinPosition.BACK:
            between = (x > slot - p.length) & (x < world.pos[last])
            if between.any():
                return False
            behind = others[x <= slot - p.length]
            if len(behind):
                f = behind[np.argmax(world.pos[behind])]
                gap = slot - p.length - world.pos[f]
                if gap < p.min_gap or world.speed[f] - brake > safe_speed_scalar(float(gap), v, p, world.dt):
                    return False
            return True
        between = (x > world.pos[lead]) & (x < slot + p.length)
        if between.any():
            return False
        ahead = others[x >= slot + p.length]
        if len(ahead):
            a = ahead[np.argmin(world.pos[ahead])]
            gap = world.pos[a] - p.length - slot
            if gap < p.min_gap or v - brake > safe_speed_scalar(float(gap), float(world.speed[a]), p, world.dt):
                return False
        return True

    def _complete(self, world: World, m: Maneuver, j: int, lead: int, last: int, slot: float, lane: int) -> None:
        """Snap the joiner into its slot at the platoon's speed and update membership."""
        if m.platoon_id is None:
            members = [m.target_vehicle]
            desired = float(world.desired[lead])
        else:
            members = list(world.platoons[m.platoon_id].members)
            desired = world.platoons[m.platoon_id].desired_speed
        world.pos[j] = slot
        world.lane[j] = lane
        world.speed[j] = world.speed[lead]
        world.accel[j] = world.accel[lead]
        if m.position is JoinPosition.BACK:
            members = members + [m.joiner]
        else:
            members = [m.joiner] + members
        if m.platoon_id is None:
            world.new_platoon(members, desired)
        else:
            platoon = world.platoons[m.platoon_id]
            platoon.members = members
            world.sync_platoon(platoon)
        del self.maneuvers[m.joiner]
        self._unlock(m)
        self.stats.completed += 1

    # -- decisions ---------------------------------------------------------

    def search(self, world: World) -> list[DecisionRecord]:
        """Evaluate opportunities for every vehicle whose search is due."""
        cfg = self.config
        n = world.n
        if n < 2:
            return []
        ids = world.ids
        index = world.index_of
        joining = np.zeros(n, dtype=bool)
        locked = np.zeros(n, dtype=bool)
        for v in self.maneuvers:
            joining[index[v]] = True
        for v in self.locked_vehicles:
            locked[index[v]] = True
        alone = world.platoon < 0
        due = alone & ~joining & ~locked & (world.next_formation <= world.t + 1e-9) & (world.pos < world.dest)
        searchers = np.flatnonzero(due)
        if len(searchers) == 0:
            return []
        world.next_formation[searchers] = world.t + cfg.interval

        # advertisers: lone vehicles and platoon leaders that are free
        adv_front = world.pos.copy()
        adv_last = world.pos.copy()
        adv_desired = world.desired.copy()
        adv_far = world.dest.copy()
        adv_size = np.ones(n, dtype=np.int64)
        advertising = alone & ~joining & ~locked
        if world.platoons:
            layout = world.platoon_layout()
            leaders = layout.rows[layout.starts]
            pids = world.platoon[leaders]
            locked_ids = np.fromiter(self.locked_platoons, dtype=np.int64, count=len(self.locked_platoons))
            advertising[leaders] = ~np.isin(pids, locked_ids)
            adv_last[leaders] = world.pos[layout.rows[layout.ends - 1]]
            adv_desired[leaders] = world.cruise[leaders]
            adv_far[leaders] = np.maximum.reduceat(world.dest[layout.rows], layout.starts)
            adv_size[leaders] = layout.ends - layout.starts
        adv = np.flatnonzero(advertising)
        adv = adv[np.argsort(world.pos[adv], kind="stable")]
        adv_pos = world.pos[adv]

        x = world.pos[searchers]
        lo = np.searchsorted(adv_pos, x - cfg.communication_range, side="left")
        hi = np.searchsorted(adv_pos, x + cfg.communication_range, side="right")
        counts = hi - lo
        total = int(counts.sum())
        owner = np.repeat(np.arange(len(searchers)), counts)
        offsets = np.repeat(np.cumsum(counts) - counts, counts)
        tgt = adv[np.arange(total) - offsets + np.repeat(lo, counts)]
        src = searchers[owner]
        keep = tgt != src
        owner, src, tgt = owner[keep], src[keep], tgt[keep]

        p = world.params
        back = world.pos[src] < adv_front[tgt]
        slot = np.where(back, adv_last[tgt] - p.length - cfg.cacc_gap, adv_front[tgt] + p.length + cfg.cacc_gap)
        disp = slot - world.pos[src]
        vt = world.speed[tgt]
        joins = join_arrays(world.speed[src], vt, disp, cfg.maneuver, self.coeffs)
        own_remaining = world.dest[src] - world.pos[src]
        factor = np.where(
            back,
            slipstream_factor(Role.LAST, self.slipstream),
            slipstream_factor(Role.LEADER, self.slipstream),
        )
        time_cost = world.time_cost[src] * cfg.cost_scale
        fuel_price = world.fuel_price[src] * cfg.cost_scale
        costs, shared = option_cost_arrays(
            own_remaining, adv_far[tgt] - world.pos[src], joins, adv_desired[tgt], world.desired[src], factor,
            time_cost, fuel_price, self.coeffs,
        )
        deviation = np.abs(adv_desired[tgt] - world.desired[src]) / world.desired[src]
        distance = np.abs(disp)

        vs = world.desired[searchers]
        rem = world.dest[searchers] - world.pos[searchers]
        rate = fuel_rate(vs, np.zeros_like(vs), self.coeffs)
        individual = (
            rate * rem / vs * world.fuel_price[searchers] * cfg.cost_scale
            + rem / vs / 3600.0 * world.time_cost[searchers] * cfg.cost_scale
        )

        order = np.argsort(owner, kind="stable")
        starts = np.searchsorted(owner[order], np.arange(len(searchers)), side="left")
        ends = np.searchsorted(owner[order], np.arange(len(searchers)), side="right")
        new_records = []
        sim = cfg.similarity
        for k, row in enumerate(searchers):
            vid = int(ids[row])
            if vid in self.locked_vehicles or vid in self.maneuvers:
                continue  # became a target earlier in this round
            sel = order[starts[k]:ends[k]]
            if len(sel):
                tid = ids[tgt[sel]]
                tpid = world.platoon[tgt[sel]]
                free = np.array(
                    [
                        (int(a) not in self.locked_vehicles and int(a) not in self.maneuvers)
                        if pid < 0 else (int(pid) not in self.locked_platoons)
                        for a, pid in zip(tid, tpid)
                    ],
                    dtype=bool,
                )
                sel = sel[free]
            # nothing to share means nothing to gain from joining
            sel = sel[shared[sel] > 0]
            best_cost = float(costs[sel].min()) if len(sel) else math.inf
            choice = -1
            if len(sel):
                if cfg.approach == TRIP_COST:
                    ok = sel[costs[sel] < individual[k]]
                    if len(ok):
                        pick = np.lexsort((ids[tgt[ok]], joins.distance[ok], costs[ok]))[0]
                        choice = int(ok[pick])
                else:
                    ok = sel[
                        (deviation[sel] <= sim.speed_window + 1e-12)
                        & (distance[sel] <= sim.search_range)
                        & joins.feasible[sel]
                        & (joins.distance[sel] < own_remaining[sel])
                    ]
                    if len(ok):
                        speed_term = deviation[ok] / sim.speed_window if sim.speed_window > 0 else 0.0 * deviation[ok]
                        score = sim.alpha * speed_term + (1 - sim.alpha) * distance[ok] / sim.search_range
                        pick = np.lexsort((ids[tgt[ok]], score))[0]
                        choice = int(ok[pick])
            if choice < 0:
                record = DecisionRecord(
                    world.t, vid, cfg.approach, float(individual[k]), best_cost, math.inf, None, None, math.nan, math.nan
                )
            else:
                position = JoinPosition.BACK if back[choice] else JoinPosition.FRONT
                trow = int(tgt[choice])
                target_vid = int(ids[trow])
                pid = int(world.platoon[trow])
                record = DecisionRecord(
                    world.t, vid, cfg.approach, float(individual[k]), best_cost, float(costs[choice]), target_vid,
                    position.value, float(deviation[choice]), float(distance[choice]),
                )
                self._start(world, Maneuver(
                    vid, position, target_vid, None if pid < 0 else pid, float(joins.approach_speed[choice]),
                    world.t, world.t + cfg.timeout_factor * float(joins.time[choice]) + cfg.timeout_slack,
                ))
            new_records.append(record)
        self.decisions.extend(new_records)
        return new_records

    def execute_join(self, world: World, joiner: int, target: int, position: JoinPosition) -> Maneuver:
        """
        Start a join maneuver of ``joiner`` toward ``target``.

        ``target`` is a lone vehicle or the leader of a platoon. The joiner
        then approaches on every step until it snaps into its slot, or gives
        up once the deadline derived from the estimated duration has passed.
        """
        if joiner in self.maneuvers or joiner == target:
            raise ValueError(f"vehicle {joiner} cannot start a join now")
        p = world.params
        index = world.index_of
        j, t = index[joiner], index[target]
        pid = int(world.platoon[t])
        if pid >= 0:
            members = world.platoons[pid].members
            if members[0] != target:
                raise ValueError("platoons are joined through their leader")
            front, last = world.pos[t], world.pos[index[members[-1]]]
        else:
            front = last = world.pos[t]
        if position is JoinPosition.BACK:
            slot = last - p.length - self.config.cacc_gap
        else:
            slot = front + p.length + self.config.cacc_gap
        est = join_arrays(world.speed[j], world.speed[t], slot - world.pos[j], self.config.maneuver, self.coeffs)
        m = Maneuver(
            joiner, position, target, None if pid < 0 else pid, float(est.approach_speed),
            world.t, world.t + self.config.timeout_factor * float(est.time) + self.config.timeout_slack,
        )
        self._start(world, m)
        return m

    def _start(self, world: World, m: Maneuver) -> None:
        self.maneuvers[m.joiner] = m
        if m.platoon_id is None:
            self.locked_vehicles[m.target_vehicle] = m.joiner
        else:
            self.locked_platoons[m.platoon_id] = m.joiner
        j = world.index_of[m.joiner]
        world.mode[j] = ACC
        self.stats.started += 1


def audit_rows(decisions: Sequence[DecisionRecord]):
    """Rows of the decision audit log."""
    for d in decisions:
        yield (
            repr(float(d.t)), d.vehicle, repr(d.individual_cost), repr(d.best_platoon_cost),
            "" if d.target is None else d.target, d.decision,
        )
