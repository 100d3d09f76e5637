"""
Longitudinal and lateral vehicle dynamics.

Vehicles live in a column store (:class:`World`) so that a simulation step is a
handful of numpy operations. Car-following laws are written elementwise and
accept scalars as well as arrays:

* human drivers follow the Krauss model without imperfection,
* ACC uses a constant time-headway law with a spacing and a speed gain,
* platoon followers use a simplified CACC that mirrors the leader's
  acceleration and corrects the deviation from a constant 5 m gap.

Every vehicle except platoon followers is additionally bounded by a safe speed
which guarantees that it can stop behind its predecessor even if the
predecessor brakes as hard as possible. Positions denote the front bumper.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fuel import DEFAULT_COEFFICIENTS, DEFAULT_SLIPSTREAM, FuelModelCoefficients, Role, SlipstreamModel, fuel_rate, slipstream_factor

HUMAN = 0
ACC = 1
CACC = 2
MODE_NAMES = {HUMAN: "human", ACC: "acc", CACC: "cacc-follower"}


@dataclass(frozen=True)
class VehicleParams:
    length: float = 4.0
    min_gap: float = 2.5
    max_speed: float = 55.0
    max_accel: float = 2.5
    max_decel: float = 10.0
    headway: float = 1.0


@dataclass(frozen=True)
class AccGains:
    spacing: float = 0.23  # 1/s^2
    speed: float = 0.74  # 1/s
    cruise: float = 0.5  # 1/s, speed tracking without a relevant predecessor


@dataclass(frozen=True)
class CaccGains:
    """
    Gains of the follower law; defaults correspond to C1 = 0.5, xi = 1 and
    omega_n = 0.2 rad/s of the classic predecessor-leader CACC.
    """

    spacing: float = 0.04  # 1/s^2
    speed: float = 0.3  # 1/s, toward the predecessor's speed
    leader_speed: float = 0.1  # 1/s, toward the leader's speed
    predecessor_weight: float = 0.5  # share of the predecessor's acceleration in the feed-forward
    gap: float = 5.0  # m
    max_gap_error: float = 10.0  # m, larger gaps are closed at a bounded rate
    min_gap: float = 0.5  # m, hard floor used as a last-resort speed cap


@dataclass(frozen=True)
class LaneChangeParams:
    lookahead_time: float = 4.0  # s
    lookahead_min: float = 50.0  # m
    speed_gain: float = 1.0  # m/s required to bother overtaking
    cooldown: float = 5.0  # s between two lane changes of one vehicle


@dataclass
class DriverProfile:
    """Preferences and trip of a driver."""

    time_cost: float
    fuel_price: float
    desired_speed: float
    origin: float
    destination: float


@dataclass
class VehicleState:
    """Snapshot of one vehicle, materialized from the world's columns."""

    id: int
    position: float
    lane: int
    speed: float
    acceleration: float
    mode: str
    profile: DriverProfile
    fuel: float
    depart_time: float
    platoon_id: int | None

    @property
    def remaining_distance(self) -> float:
        return max(0.0, self.profile.destination - self.position)


@dataclass
class Platoon:
    """Ordered platoon members (front to rear) sharing one desired speed."""

    id: int
    members: list[int]
    desired_speed: float
    lane: int = 0

    @property
    def leader(self) -> int:
        return self.members[0]

    @property
    def last(self) -> int:
        return self.members[-1]

    @property
    def size(self) -> int:
        return len(self.members)

    def role_of(self, vid: int) -> Role:
        if vid == self.members[0]:
            return Role.LEADER
        if vid == self.members[-1]:
            return Role.LAST
        return Role.MID


class PlatoonLayout(NamedTuple):
    rows: np.ndarray  # member rows, grouped by platoon, leader first
    starts: np.ndarray  # offset of each platoon's leader in ``rows``
    ends: np.ndarray  # one past each platoon's last member
    group: np.ndarray  # platoon number of each entry of ``rows``
    rank: np.ndarray  # position within the platoon, 0 for the leader


class CompletedTrip(NamedTuple):
    id: int
    time_cost: float
    fuel_price: float
    desired_speed: float
    origin: float
    destination: float
    depart_position: float
    depart_time: float
    arrival_time: float
    fuel: float
    platoon_time: float
    prefilled: bool


# --------------------------------------------------------------------------
# car-following laws


def braking_distance(speed, max_decel: float, dt: float):
    """Distance covered while braking at ``max_decel`` in discrete steps of ``dt``."""
    speed = np.asarray(speed, dtype=float)
    n = np.floor(speed / (max_decel * dt))
    return dt * (n * speed - max_decel * dt * n * (n + 1) / 2.0)


def safe_speed(gap, pred_speed, params: VehicleParams = VehicleParams(), dt: float = 1.0):
    """
    Largest speed for the next step that still allows stopping behind the predecessor.

    This is the Krauss safe-speed relation with a reaction time equal to the
    step length, written in its exact discrete form: after moving one step at
    the returned speed and then braking at ``max_decel``, the follower stops no
    closer than ``min_gap`` behind a predecessor braking equally hard.
    """
    b = params.max_decel
    budget = np.asarray(gap, dtype=float) - params.min_gap + braking_distance(pred_speed, b, dt)
    budget = np.maximum(budget, 0.0)
    n = np.floor((-1.0 + np.sqrt(1.0 + 8.0 * budget / (b * dt * dt))) / 2.0)
    v = (budget + b * dt * dt * n * (n + 1) / 2.0) / (dt * (n + 1))
    return v if np.ndim(v) else float(v)


def safe_speed_scalar(gap: float, pred_speed: float, params: VehicleParams, dt: float) -> float:
    """:func:`safe_speed` for plain floats, without the array overhead."""
    b = params.max_decel
    k = math.floor(pred_speed / (b * dt))
    budget = gap - params.min_gap + dt * (k * pred_speed - b * dt * k * (k + 1) / 2.0)
    budget = max(budget, 0.0)
    n = math.floor((-1.0 + math.sqrt(1.0 + 8.0 * budget / (b * dt * dt))) / 2.0)
    return (budget + b * dt * dt * n * (n + 1) / 2.0) / (dt * (n + 1))


def _bounded(new_speed, speed, params: VehicleParams, dt: float):
    lower = np.maximum(speed - params.max_decel * dt, 0.0)
    upper = np.minimum(speed + params.max_accel * dt, params.max_speed)
    return np.clip(new_speed, lower, upper)


def krauss_speed(speed, desired_speed, gap, pred_speed, params: VehicleParams = VehicleParams(), dt: float = 1.0):
    """
    Next speed of a human driver following the (deterministic) Krauss model.

    ``gap`` is ``inf`` for vehicles without a predecessor.
    """
    speed = np.asarray(speed, dtype=float)
    gap = np.asarray(gap, dtype=float)
    has_pred = np.isfinite(gap)
    vsafe = np.where(has_pred, safe_speed(np.where(has_pred, gap, 0.0), pred_speed, params, dt), np.inf)
    v = np.minimum(np.minimum(speed + params.max_accel * dt, desired_speed), vsafe)
    v = _bounded(v, speed, params, dt)
    return v if np.ndim(v) else float(v)


def acc_accel(speed, desired_speed, gap, pred_speed, params: VehicleParams = VehicleParams(), gains: AccGains = AccGains()):
    """
    Acceleration of a constant time-headway ACC.

    Targets a gap of ``min_gap + headway * speed``; the speed-tracking term
    takes over whenever it asks for less acceleration, in particular without
    a predecessor (``gap == inf``).
    """
    speed = np.asarray(speed, dtype=float)
    gap = np.asarray(gap, dtype=float)
    cruise = gains.cruise * (np.asarray(desired_speed, dtype=float) - speed)
    has_pred = np.isfinite(gap)
    spacing_error = np.where(has_pred, gap, 0.0) - params.min_gap - params.headway * speed
    follow = gains.spacing * spacing_error + gains.speed * (np.asarray(pred_speed, dtype=float) - speed)
    a = np.where(has_pred, np.minimum(cruise, follow), cruise)
    a = np.clip(a, -params.max_decel, params.max_accel)
    return a if np.ndim(a) else float(a)


def acc_speed(speed, desired_speed, gap, pred_speed, params: VehicleParams = VehicleParams(), gains: AccGains = AccGains(), dt: float = 1.0):
    """Next ACC speed, bounded by the safe speed."""
    speed = np.asarray(speed, dtype=float)
    gap = np.asarray(gap, dtype=float)
    has_pred = np.isfinite(gap)
    a = acc_accel(speed, desired_speed, gap, pred_speed, params, gains)
    vsafe = np.where(has_pred, safe_speed(np.where(has_pred, gap, 0.0), pred_speed, params, dt), np.inf)
    v = _bounded(np.minimum(speed + a * dt, vsafe), speed, params, dt)
    return v if np.ndim(v) else float(v)


def cacc_accel(
    speed, gap, pred_speed, pred_accel, leader_speed, leader_accel,
    params: VehicleParams = VehicleParams(), gains: CaccGains = CaccGains(),
):
    """
    Acceleration of a platoon follower.

    Feed-forward of the predecessor's and the leader's acceleration plus
    proportional corrections of the gap error (target ``gains.gap``,
    saturated at ``gains.max_gap_error``) and of the speed differences to the
    predecessor and to the leader. The leader terms keep errors from growing
    down the string.
    """
    speed = np.asarray(speed, dtype=float)
    error = np.minimum(np.asarray(gap, dtype=float) - gains.gap, gains.max_gap_error)
    w = gains.predecessor_weight
    a = (
        w * np.asarray(pred_accel, dtype=float)
        + (1.0 - w) * np.asarray(leader_accel, dtype=float)
        + gains.spacing * error
        + gains.speed * (np.asarray(pred_speed, dtype=float) - speed)
        + gains.leader_speed * (np.asarray(leader_speed, dtype=float) - speed)
    )
    a = np.clip(a, -params.max_decel, params.max_accel)
    return a if np.ndim(a) else float(a)


# --------------------------------------------------------------------------
# world


_FLOAT_COLUMNS = (
    "pos", "speed", "accel", "desired", "cruise", "time_cost", "fuel_price", "origin", "dest",
    "depart_pos", "depart_time", "fuel", "platoon_time", "next_formation", "last_lane_change",
)
_INT_COLUMNS = ("ids", "lane", "mode", "platoon", "target_lane", "join_target")
_BOOL_COLUMNS = ("prefilled",)


@dataclass
class World:
    """
    All vehicles on a freeway.

    Per-vehicle data is stored column-wise; ``index_of`` maps vehicle ids to
    rows. Rows are compacted whenever vehicles leave.
    """

    road_length: float
    lanes: int = 3
    dt: float = 1.0
    params: VehicleParams = field(default_factory=VehicleParams)
    acc_gains: AccGains = field(default_factory=AccGains)
    cacc_gains: CaccGains = field(default_factory=CaccGains)
    lane_change: LaneChangeParams = field(default_factory=LaneChangeParams)
    coefficients: FuelModelCoefficients = DEFAULT_COEFFICIENTS
    slipstream: SlipstreamModel = DEFAULT_SLIPSTREAM
    t: float = 0.0

    def __post_init__(self) -> None:
        for name in _FLOAT_COLUMNS:
            setattr(self, name, np.zeros(0, dtype=float))
        for name in _INT_COLUMNS:
            setattr(self, name, np.zeros(0, dtype=np.int64))
        for name in _BOOL_COLUMNS:
            setattr(self, name, np.zeros(0, dtype=bool))
        self.platoons: dict[int, Platoon] = {}
        self.completed: list[CompletedTrip] = []
        self.inserted = 0
        self.removed = 0
        self._next_id = 0
        self._next_platoon_id = 0
        self._index: dict[int, int] | None = None

    # -- bookkeeping -------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def index_of(self) -> dict[int, int]:
        if self._index is None:
            self._index = {int(v): i for i, v in enumerate(self.ids)}
        return self._index

    def add_vehicle(
        self,
        *,
        position: float,
        lane: int,
        speed: float,
        desired_speed: float,
        time_cost: float,
        fuel_price: float,
        origin: float,
        destination: float,
        mode: int = ACC,
        prefilled: bool = False,
        next_formation: float | None = None,
    ) -> int:
        vid = self._next_id
        self._next_id += 1
        row = dict(
            ids=vid, pos=position, lane=lane, speed=speed, accel=0.0, desired=desired_speed,
            cruise=desired_speed, time_cost=time_cost, fuel_price=fuel_price, origin=origin,
            dest=destination, depart_pos=position, depart_time=self.t, fuel=0.0, platoon_time=0.0,
            next_formation=self.t if next_formation is None else next_formation,
            last_lane_change=-np.inf, mode=mode, platoon=-1, target_lane=-1, join_target=-1, prefilled=prefilled,
        )
        for name, value in row.items():
            col = getattr(self, name)
            setattr(self, name, np.append(col, np.asarray(value, dtype=col.dtype)))
        if self._index is not None:
            self._index[vid] = self.n - 1
        self.inserted += 1
        return vid

    def remove_vehicles(self, vids) -> list[CompletedTrip]:
        """Remove vehicles and record their trips. Platoon bookkeeping is up to the caller."""
        if not len(vids):
            return []
        index = self.index_of
        rows = np.array([index[int(v)] for v in vids], dtype=np.int64)
        trips = []
        for i in rows:
            arrival = self.t
            if self.speed[i] > 0 and self.pos[i] > self.dest[i]:
                arrival = self.t - (self.pos[i] - self.dest[i]) / self.speed[i]
            trips.append(CompletedTrip(
                int(self.ids[i]), float(self.time_cost[i]), float(self.fuel_price[i]),
                float(self.desired[i]), float(self.origin[i]), float(self.dest[i]),
                float(self.depart_pos[i]), float(self.depart_time[i]), float(arrival),
                float(self.fuel[i]), float(self.platoon_time[i]), bool(self.prefilled[i]),
            ))
        keep = np.ones(self.n, dtype=bool)
        keep[rows] = False
        for name in _FLOAT_COLUMNS + _INT_COLUMNS + _BOOL_COLUMNS:
            setattr(self, name, getattr(self, name)[keep])
        self._index = None
        self.removed += len(rows)
        self.completed.extend(trips)
        return trips

    def new_platoon(self, members: list[int], desired_speed: float) -> Platoon:
        platoon = Platoon(self._next_platoon_id, list(members), desired_speed)
        self._next_platoon_id += 1
        self.platoons[platoon.id] = platoon
        self.sync_platoon(platoon)
        return platoon

    def sync_platoon(self, platoon: Platoon) -> None:
        """Write membership, modes and cruise speed of ``platoon`` into the columns."""
        index = self.index_of
        rows = [index[v] for v in platoon.members]
        self.platoon[rows] = platoon.id
        self.mode[rows] = CACC
        self.mode[rows[0]] = ACC
        self.cruise[rows] = platoon.desired_speed
        self.target_lane[rows] = -1
        self.join_target[rows] = -1
        platoon.lane = int(self.lane[rows[0]])

    def release(self, vid: int) -> None:
        """Make ``vid`` drive individually again at its own desired speed."""
        i = self.index_of[vid]
        self.platoon[i] = -1
        self.mode[i] = ACC
        self.cruise[i] = self.desired[i]
        self.target_lane[i] = -1
        self.join_target[i] = -1

    def state(self, vid: int) -> VehicleState:
        i = self.index_of[vid]
        profile = DriverProfile(
            float(self.time_cost[i]), float(self.fuel_price[i]), float(self.desired[i]),
            float(self.origin[i]), float(self.dest[i]),
        )
        pid = int(self.platoon[i])
        return VehicleState(
            vid, float(self.pos[i]), int(self.lane[i]), float(self.speed[i]), float(self.accel[i]),
            MODE_NAMES[int(self.mode[i])], profile, float(self.fuel[i]), float(self.depart_time[i]),
            None if pid < 0 else pid,
        )

    # -- geometry ----------------------------------------------------------

    def predecessors(self) -> tuple[np.ndarray, np.ndarray]:
        """Row of the predecessor in the same lane (-1 if none) and the bumper gap (inf if none)."""
        n = self.n
        pred = np.full(n, -1, dtype=np.int64)
        gap = np.full(n, np.inf)
        if n < 2:
            return pred, gap
        order = np.lexsort((self.pos, self.lane))
        same = self.lane[order[1:]] == self.lane[order[:-1]]
        back = order[:-1][same]
        front = order[1:][same]
        pred[back] = front
        gap[back] = self.pos[front] - self.params.length - self.pos[back]
        return pred, gap

    def min_gap(self) -> float:
        """Smallest bumper gap between two vehicles in the same lane (inf if none)."""
        _, gap = self.predecessors()
        return float(gap.min()) if len(gap) else np.inf

    def lane_index(self) -> LaneIndex:
        return LaneIndex(self.lanes, self.pos, self.lane)

    def platoon_layout(self) -> "PlatoonLayout":
        """Platoon member rows grouped by platoon, front to back within each group."""
        rows = np.flatnonzero(self.platoon >= 0)
        rows = rows[np.lexsort((-self.pos[rows], self.platoon[rows]))]
        pids = self.platoon[rows]
        first = np.ones(len(rows), dtype=bool)
        first[1:] = pids[1:] != pids[:-1]
        starts = np.flatnonzero(first)
        group = np.cumsum(first) - 1
        rank = np.arange(len(rows)) - starts[group]
        ends = np.append(starts[1:], len(rows))
        return PlatoonLayout(rows, starts, ends, group, rank)

    def roles(self) -> np.ndarray:
        """Slipstream fuel factor of every row."""
        factor = np.ones(self.n)
        if not self.platoons:
            return factor
        layout = self.platoon_layout()
        factor[layout.rows] = slipstream_factor(Role.MID, self.slipstream)
        factor[layout.rows[layout.starts]] = slipstream_factor(Role.LEADER, self.slipstream)
        factor[layout.rows[layout.ends - 1]] = slipstream_factor(Role.LAST, self.slipstream)
        return factor


class LaneIndex:
    """Per-lane sorted positions supporting incremental updates."""

    def __init__(self, lanes: int, pos: np.ndarray, lane: np.ndarray):
        self.pos: list[list[float]] = []
        self.rows: list[list[int]] = []
        for ln in range(lanes):
            rows = np.flatnonzero(lane == ln)
            rows = rows[np.argsort(pos[rows], kind="stable")]
            self.rows.append(rows.tolist())
            self.pos.append(pos[rows].tolist())

    def leader(self, lane: int, x: float) -> int:
        """Row of the first vehicle strictly ahead of ``x`` (-1 if none)."""
        k = bisect_right(self.pos[lane], x)
        return self.rows[lane][k] if k < len(self.rows[lane]) else -1

    def follower(self, lane: int, x: float, exclude: int = -1) -> int:
        """Row of the last vehicle at or behind ``x`` (-1 if none)."""
        k = bisect_right(self.pos[lane], x) - 1
        while k >= 0 and self.rows[lane][k] == exclude:
            k -= 1
        return self.rows[lane][k] if k >= 0 else -1

    def between(self, lane: int, lo: float, hi: float) -> list[int]:
        """Rows with ``lo <= pos <= hi``."""
        from bisect import bisect_left

        a = bisect_left(self.pos[lane], lo)
        b = bisect_right(self.pos[lane], hi)
        return self.rows[lane][a:b]

    def insert(self, lane: int, row: int, x: float) -> None:
        k = bisect_right(self.pos[lane], x)
        self.pos[lane].insert(k, x)
        self.rows[lane].insert(k, row)

    def remove(self, lane: int, row: int) -> None:
        k = self.rows[lane].index(row)
        del self.rows[lane][k]
        del self.pos[lane][k]


# --------------------------------------------------------------------------
# lane changes


def _neighbors_in(world: World, rows: np.ndarray, lanes: np.ndarray):
    """Leader row, gap and speed in ``lanes`` for each of ``rows`` (vectorized)."""
    L = world.params.length
    leader = np.full(len(rows), -1, dtype=np.int64)
    follower = np.full(len(rows), -1, dtype=np.int64)
    for ln in range(world.lanes):
        sel = lanes == ln
        if not sel.any():
            continue
        in_lane = np.flatnonzero(world.lane == ln)
        in_lane = in_lane[np.argsort(world.pos[in_lane], kind="stable")]
        p = world.pos[in_lane]
        k = np.searchsorted(p, world.pos[rows[sel]], side="right")
        lead = np.where(k < len(p), in_lane[np.minimum(k, len(p) - 1)] if len(p) else -1, -1)
        fol = np.where(k > 0, in_lane[np.maximum(k - 1, 0)] if len(p) else -1, -1)
        leader[sel] = lead
        follower[sel] = fol
    gap = np.where(leader >= 0, world.pos[leader] - L - world.pos[rows], np.inf)
    speed = np.where(leader >= 0, world.speed[leader], np.inf)
    return leader, gap, speed, follower


def _anticipated_speed(gap: np.ndarray, lead_speed: np.ndarray, lookahead: np.ndarray) -> np.ndarray:
    return np.where(gap < lookahead, lead_speed, np.inf)


def lane_change_candidates(world: World) -> list[tuple[int, int]]:
    """
    Vehicles that would like to change lanes, as ``(row, direction)`` pairs.

    Keep-right: a vehicle moves right when the right lane is not slower than
    what it wants to drive, and moves left when it is held up by a slower
    predecessor and the left lane is faster. Vehicles on a join maneuver move
    toward their target lane; once there, they only overtake vehicles other
    than the one they want to close up to (``join_target``). Platoon
    followers never decide.
    """
    n = world.n
    if n == 0 or world.lanes < 2:
        return []
    lc = world.lane_change
    rows = np.arange(n)
    eligible = (world.mode != CACC) & (world.t - world.last_lane_change >= lc.cooldown)
    joining = world.target_lane >= 0
    desired = world.cruise
    lookahead = np.maximum(lc.lookahead_min, lc.lookahead_time * np.maximum(desired, world.speed))

    own_leader, own_gap, own_speed, _ = _neighbors_in(world, rows, world.lane)
    own = _anticipated_speed(own_gap, own_speed, lookahead)

    left_lane = np.minimum(world.lane + 1, world.lanes - 1)
    right_lane = np.maximum(world.lane - 1, 0)
    _, lgap, lspeed, _ = _neighbors_in(world, rows, left_lane)
    _, rgap, rspeed, _ = _neighbors_in(world, rows, right_lane)
    left = _anticipated_speed(lgap, lspeed, lookahead)
    right = _anticipated_speed(rgap, rspeed, lookahead)

    blocked = own < desired - lc.speed_gain
    want_left = blocked & (world.lane < world.lanes - 1) & (left > own + lc.speed_gain)
    want_right = (world.lane > 0) & (right >= np.minimum(desired - lc.speed_gain, own)) & ~want_left

    direction = np.where(want_left, 1, np.where(want_right, -1, 0))
    in_target = joining & (world.lane == world.target_lane)
    blocker = np.where(own_leader >= 0, world.ids[np.maximum(own_leader, 0)], -1)
    may_overtake = in_target & want_left & (world.join_target >= 0) & (blocker != world.join_target)
    direction = np.where(joining, np.where(may_overtake, 1, np.sign(world.target_lane - world.lane)), direction)
    direction = np.where(eligible, direction, 0)
    picked = np.flatnonzero(direction != 0)
    picked = picked[np.argsort(-world.pos[picked], kind="stable")]
    return [(int(i), int(direction[i])) for i in picked]


def _gap_is_safe(world: World, back: int, front_pos: float, front_speed: float, back_pos: float, back_speed: float) -> bool:
    gap = front_pos - world.params.length - back_pos
    if gap < 0:
        return False
    return back_speed <= safe_speed_scalar(float(gap), float(front_speed), world.params, world.dt) + 1e-9


def apply_lane_policy(world: World) -> list[tuple[int, int, int]]:
    """
    Execute safe lane changes; returns ``(vehicle id, old lane, new lane)``.

    Candidates are processed front to rear against an incrementally updated
    lane index, so two vehicles never move into the same gap. A change is
    accepted only if neither the vehicle nor its new follower would exceed
    its safe speed. Platoons change lanes as a unit.
    """
    changes: list[tuple[int, int, int]] = []
    candidates = lane_change_candidates(world)
    if not candidates:
        return changes
    index = world.lane_index()
    rows_of = world.index_of
    for row, direction in candidates:
        old = int(world.lane[row])
        new = old + direction
        if not 0 <= new < world.lanes:
            continue
        pid = int(world.platoon[row])
        if pid >= 0:
            members = [rows_of[v] for v in world.platoons[pid].members]
        else:
            members = [row]
        head, tail = members[0], members[-1]
        x_head, x_tail = float(world.pos[head]), float(world.pos[tail])
        lead = index.leader(new, x_head)
        fol = index.follower(new, x_head)
        if fol >= 0 and world.pos[fol] > x_tail - world.params.length:
            continue  # something alongside
        if lead >= 0 and fol >= 0 and world.platoon[lead] >= 0 and world.platoon[lead] == world.platoon[fol]:
            continue  # never cut into a platoon
        if lead >= 0 and not _gap_is_safe(world, head, world.pos[lead], world.speed[lead], x_head, world.speed[head]):
            continue
        if fol >= 0 and not _gap_is_safe(world, fol, x_tail, world.speed[tail], world.pos[fol], world.speed[fol]):
            continue
        for m in members:
            index.remove(old, m)
            index.insert(new, m, float(world.pos[m]))
            world.lane[m] = new
            world.last_lane_change[m] = world.t
        if pid >= 0:
            world.platoons[pid].lane = new
        changes.append((int(world.ids[row]), old, new))
    return changes


# --------------------------------------------------------------------------
# longitudinal update


def _follower_passes(world: World):
    """Follower rows grouped by rank within their platoon, with predecessor and leader rows."""
    layout = world.platoon_layout()
    rows, rank = layout.rows, layout.rank
    passes = []
    for r in range(1, int(rank.max()) + 1 if len(rank) else 1):
        k = np.flatnonzero(rank == r)
        passes.append((rows[k], rows[k - 1], rows[layout.starts[layout.group[k]]]))
    return passes


def move_vehicles(world: World) -> None:
    """
    Advance all vehicles by one step (semi-implicit Euler).

    Updates speed, acceleration, position, cumulative fuel and time spent in a
    platoon. Fuel for a vehicle that passes its destination during the step
    is only counted up to the destination.
    """
    n = world.n
    if n == 0:
        world.t += world.dt
        return
    p, dt = world.params, world.dt
    speed = world.speed
    pred, gap = world.predecessors()
    vpred = np.where(pred >= 0, speed[np.maximum(pred, 0)], 0.0)

    new = speed.copy()
    human = world.mode == HUMAN
    acc = world.mode == ACC
    if human.any():
        new[human] = krauss_speed(speed[human], world.cruise[human], gap[human], vpred[human], p, dt)
    if acc.any():
        new[acc] = acc_speed(speed[acc], world.cruise[acc], gap[acc], vpred[acc], p, world.acc_gains, dt)

    if world.platoons:
        L = p.length
        g = world.cacc_gains
        for fol, prd, lead in _follower_passes(world):
            lead_accel = (new[lead] - speed[lead]) / dt
            pred_accel = (new[prd] - speed[prd]) / dt
            fgap = world.pos[prd] - L - world.pos[fol]
            a = cacc_accel(speed[fol], fgap, speed[prd], pred_accel, speed[lead], lead_accel, p, g)
            v = np.clip(speed[fol] + a * dt, 0.0, p.max_speed)
            v = np.minimum(v, new[prd] + (fgap - g.min_gap) / dt)
            new[fol] = _bounded(v, speed[fol], p, dt)

    accel = (new - speed) / dt
    old_pos = world.pos
    world.pos = old_pos + new * dt
    world.speed = new
    world.accel = accel

    share = np.ones(n)
    crossing = (world.pos >= world.dest) & (old_pos < world.dest) & (new > 0)
    share[crossing] = (world.dest[crossing] - old_pos[crossing]) / (new[crossing] * dt)
    rate = fuel_rate(new, accel, world.coefficients)
    world.fuel = world.fuel + rate * world.roles() * dt * share
    world.platoon_time = world.platoon_time + np.where(world.platoon >= 0, dt * share, 0.0)
    world.t += dt
