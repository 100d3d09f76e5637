"""Join estimates, assignment decisions and join execution."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import add, small_scenario
from oracles import oracle_join
from tripcost.costs import CostParams
from tripcost.fuel import fuel_rate
from tripcost.formation import (
    STAY_ALONE,
    FormationConfig,
    FormationEngine,
    JoinPosition,
    ManeuverConfig,
    PlatooningOpportunity,
    approach_speeds,
    estimate_individual_cost,
    estimate_join_maneuver,
    estimate_platoon_option,
    join_arrays,
    select_assignment_similarity,
    select_assignment_trip_cost,
    shared_distance,
)
from tripcost.mobility import ACC, CACC, apply_lane_policy, move_vehicles
from tripcost.simulation import Simulation

BACK, FRONT = JoinPosition.BACK, JoinPosition.FRONT
PARAMS = CostParams(25.0, 1.84)


def opportunity(target_id=1, position=BACK, speed=30.0, desired=30.0, displacement=200.0, furthest=50_000.0, **kw):
    return PlatooningOpportunity(target_id, position, speed, desired, displacement, furthest, **kw)


class TestJoinEstimate:
    def test_against_stepped_oracle(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(200):
            v0, vt = rng.uniform(20.0, 50.0, 2)
            d = rng.uniform(-800.0, 800.0)
            est = estimate_join_maneuver(v0, opportunity(speed=vt, displacement=d))
            ref = oracle_join(v0, vt, d)
            if ref is None:
                assert not est.feasible
                continue
            checked += 1
            for got, want in zip((est.time, est.distance, est.fuel), ref):
                assert got == pytest.approx(want, rel=0.01, abs=1e-6)
        assert checked >= 190

    def test_phases_nonnegative_and_vectorized(self):
        rng = np.random.default_rng(3)
        v0, vt, d = rng.uniform(20, 50, 50), rng.uniform(20, 50, 50), rng.uniform(-500, 500, 50)
        arrays = join_arrays(v0, vt, d)
        for field in arrays[:9]:
            assert np.all(field >= 0)
        for k in range(50):
            est = estimate_join_maneuver(v0[k], opportunity(speed=vt[k], displacement=d[k]))
            assert est.time == pytest.approx(arrays.time[k], rel=1e-12)
            assert est.fuel == pytest.approx(arrays.fuel[k], rel=1e-12)

    def test_approach_speed_direction(self):
        vc, ok = approach_speeds([30.0, 30.0], [30.0, 30.0], [100.0, -100.0])
        np.testing.assert_allclose(vc, [34.5, 25.5])
        assert ok.all()

    def test_speed_cap_makes_catching_up_infeasible(self):
        assert not estimate_join_maneuver(55.0, opportunity(speed=55.0, displacement=300.0)).feasible

    def test_nonfinite_displacement(self):
        assert not estimate_join_maneuver(30.0, opportunity(displacement=math.inf)).feasible

    def test_already_in_place(self):
        est = estimate_join_maneuver(30.0, opportunity(displacement=0.0))
        assert est.feasible and est.time == est.distance == est.fuel == 0.0

    def test_slower_approach_configuration(self):
        cfg = ManeuverConfig(approach_coefficient=0.05)
        fast = estimate_join_maneuver(30.0, opportunity(displacement=300.0))
        slow = estimate_join_maneuver(30.0, opportunity(displacement=300.0), cfg)
        assert slow.time > fast.time


class TestSharedDistance:
    @pytest.mark.parametrize(
        "own, furthest, join, expected",
        [
            (40_000.0, 50_000.0, 2_000.0, 38_000.0),
            (50_000.0, 30_000.0, 2_000.0, 28_000.0),
            (1_000.0, 50_000.0, 2_000.0, 0.0),
            (40_000.0, 40_000.0, 0.0, 40_000.0),
        ],
    )
    def test_examples(self, own, furthest, join, expected):
        assert shared_distance(own, furthest, join) == expected

    @given(st.floats(0, 1e5), st.floats(0, 1e5), st.floats(0, 1e5))
    def test_bounds(self, own, furthest, join):
        s = shared_distance(own, furthest, join)
        assert 0.0 <= s <= min(own, furthest)


class TestPlatoonOption:
    def test_falling_back_without_sharing_costs_more(self):
        own = 20_000.0
        alone = estimate_individual_cost(own, 30.0, PARAMS)
        opp = opportunity(furthest=0.0, displacement=-300.0)
        cost = estimate_platoon_option(own, 30.0, PARAMS, opp, estimate_join_maneuver(30.0, opp))
        assert cost > alone

    def test_long_shared_stretch_pays_off(self):
        own = 40_000.0
        alone = estimate_individual_cost(own, 30.0, PARAMS)
        opp = opportunity(displacement=100.0)
        cost = estimate_platoon_option(own, 30.0, PARAMS, opp, estimate_join_maneuver(30.0, opp))
        assert cost < alone

    def test_manual_composition(self):
        own, vp = 40_000.0, 28.0
        opp = opportunity(desired=vp, speed=vp, displacement=0.0, furthest=30_000.0)
        join = estimate_join_maneuver(vp, opp)
        cost = estimate_platoon_option(own, 32.0, PARAMS, opp, join)
        fuel = 0.89 * fuel_rate(vp, 0.0) * 30_000.0 / vp + fuel_rate(32.0, 0.0) * 10_000.0 / 32.0
        hours = (30_000.0 / vp + 10_000.0 / 32.0) / 3600.0
        assert cost == pytest.approx(fuel * 1.84 + hours * 25.0, rel=1e-12)

    def test_front_join_uses_leader_factor(self):
        opp_back = opportunity(displacement=0.0, speed=30.0)
        opp_front = replace(opp_back, join_position=FRONT)
        join = estimate_join_maneuver(30.0, opp_back)
        back = estimate_platoon_option(20_000.0, 30.0, PARAMS, opp_back, join)
        front = estimate_platoon_option(20_000.0, 30.0, PARAMS, opp_front, join)
        assert back < front

    def test_maneuver_beyond_destination(self):
        opp = opportunity(displacement=5_000.0)
        join = estimate_join_maneuver(30.0, opp)
        assert estimate_platoon_option(join.distance * 0.5, 30.0, PARAMS, opp, join) == math.inf


class TestSelection:
    def test_strictly_cheaper_required(self):
        opp = opportunity()
        assert select_assignment_trip_cost(10.0, [(opp, 10.0, 100.0)]) is STAY_ALONE
        assert select_assignment_trip_cost(10.0, [(opp, 9.99, 100.0)]).opportunity is opp

    def test_cheapest_wins(self):
        a, b = opportunity(1), opportunity(2)
        assert select_assignment_trip_cost(10.0, [(a, 9.0, 10.0), (b, 8.0, 500.0)]).opportunity is b

    def test_ties_shorter_join_then_lower_id(self):
        a, b, c = opportunity(5), opportunity(3), opportunity(4)
        assert select_assignment_trip_cost(10.0, [(a, 8.0, 100.0), (b, 8.0, 200.0)]).opportunity is a
        assert select_assignment_trip_cost(10.0, [(a, 8.0, 100.0), (c, 8.0, 100.0)]).opportunity is c

    def test_no_options(self):
        assert not select_assignment_trip_cost(10.0, []).join


class TestSimilarity:
    def test_outside_speed_window(self):
        assert select_assignment_similarity(30.0, [opportunity(desired=37.5)]) is STAY_ALONE

    def test_outside_search_range(self):
        assert select_assignment_similarity(30.0, [opportunity(displacement=1500.0)]) is STAY_ALONE

    def test_nearer_candidate_wins(self):
        near, far = opportunity(1, displacement=100.0), opportunity(2, displacement=-600.0)
        assert select_assignment_similarity(30.0, [far, near]).opportunity is near

    def test_closer_speed_wins_at_equal_distance(self):
        a, b = opportunity(1, desired=34.0), opportunity(2, desired=31.0)
        assert select_assignment_similarity(30.0, [a, b]).opportunity is b

    def test_none(self):
        assert select_assignment_similarity(30.0, []) is STAY_ALONE


# --------------------------------------------------------------------------
# execution


def drive(world, engine, steps, until=None):
    for _ in range(steps):
        engine.update_maneuvers(world)
        apply_lane_policy(world)
        move_vehicles(world)
        assert world.min_gap() >= 0.0
        if until is not None and until():
            return True
    return False


def gap_behind(world, front, back):
    p = world.params
    return world.pos[world.index_of[front]] - p.length - world.pos[world.index_of[back]]


class TestExecution:
    def test_back_join(self, world):
        target = add(world, 2000.0, speed=30.0)
        joiner = add(world, 2000.0 - 4.0 - 5.0 - 100.0, speed=30.0)
        engine = FormationEngine()
        engine.execute_join(world, joiner, target, BACK)
        assert drive(world, engine, 200, lambda: world.platoon[world.index_of[joiner]] >= 0)
        (platoon,) = world.platoons.values()
        assert platoon.members == [target, joiner]
        assert engine.stats.completed == 1 and not engine.maneuvers
        assert gap_behind(world, target, joiner) == pytest.approx(5.0, abs=0.5)
        drive(world, engine, 60)
        assert gap_behind(world, target, joiner) == pytest.approx(5.0, abs=0.5)
        assert world.mode[world.index_of[joiner]] == CACC

    def test_back_join_onto_platoon(self, world):
        ids = [add(world, 3000.0 - 9.0 * k, speed=30.0) for k in range(3)]
        platoon = world.new_platoon(ids, 30.0)
        joiner = add(world, 2700.0, lane=1, speed=30.0)
        engine = FormationEngine()
        engine.execute_join(world, joiner, ids[0], BACK)
        assert drive(world, engine, 200, lambda: not engine.maneuvers)
        assert platoon.members == ids + [joiner]
        assert gap_behind(world, ids[-1], joiner) == pytest.approx(5.0, abs=0.5)

    def test_front_join_makes_joiner_leader(self, world):
        target = add(world, 2000.0, speed=28.0)
        joiner = add(world, 1950.0, lane=1, speed=28.0)
        engine = FormationEngine()
        engine.execute_join(world, joiner, target, FRONT)
        assert drive(world, engine, 300, lambda: not engine.maneuvers)
        assert engine.stats.completed == 1
        (platoon,) = world.platoons.values()
        assert platoon.members == [joiner, target]
        assert world.mode[world.index_of[joiner]] == ACC
        assert world.mode[world.index_of[target]] == CACC
        drive(world, engine, 60)
        assert gap_behind(world, joiner, target) == pytest.approx(5.0, abs=0.5)

    def test_target_leaves_mid_maneuver(self, world):
        target = add(world, 2000.0, speed=30.0)
        joiner = add(world, 1500.0, speed=30.0, desired=31.0)
        engine = FormationEngine()
        engine.execute_join(world, joiner, target, BACK)
        drive(world, engine, 5)
        assert engine.locked_vehicles == {target: joiner}
        engine.handle_departures(world, [target])
        world.remove_vehicles([target])
        assert not engine.maneuvers and not engine.locked_vehicles
        j = world.index_of[joiner]
        assert world.mode[j] == ACC and world.cruise[j] == 31.0
        assert engine.stats.aborted == 1
        drive(world, engine, 30)

    def test_deadline_abort(self, world):
        target = add(world, 2000.0, speed=30.0)
        joiner = add(world, 1000.0, speed=30.0)
        engine = FormationEngine()
        m = engine.execute_join(world, joiner, target, BACK)
        assert m.deadline > world.t
        m.deadline = world.t - 1.0
        drive(world, engine, 1)
        assert engine.stats.aborted == 1 and not engine.locked_vehicles
        assert world.mode[world.index_of[joiner]] == ACC

    def test_target_is_locked(self, world):
        target = add(world, 2000.0)
        joiner = add(world, 1000.0)
        engine = FormationEngine()
        engine.execute_join(world, joiner, target, BACK)
        with pytest.raises(ValueError):
            engine.execute_join(world, joiner, target, BACK)

    def test_only_leaders_are_targets(self, world):
        ids = [add(world, 3000.0 - 9.0 * k) for k in range(2)]
        world.new_platoon(ids, 30.0)
        joiner = add(world, 2000.0)
        with pytest.raises(ValueError):
            FormationEngine().execute_join(world, joiner, ids[1], BACK)


class TestDepartures:
    def platoon(self, world, n):
        ids = [add(world, 3000.0 - 9.0 * k, speed=29.0, desired=25.0 + k) for k in range(n)]
        return ids, world.new_platoon(ids, 29.0)

    def test_leader_leaves(self, world):
        ids, platoon = self.platoon(world, 3)
        FormationEngine().handle_departures(world, [ids[0]])
        world.remove_vehicles([ids[0]])
        assert platoon.members == ids[1:] and platoon.desired_speed == 29.0
        rows = [world.index_of[v] for v in ids[1:]]
        assert world.mode[rows].tolist() == [ACC, CACC]
        assert np.all(world.cruise[rows] == 29.0)

    def test_pair_dissolves(self, world):
        ids, platoon = self.platoon(world, 2)
        world.t = 100.0
        FormationEngine().handle_departures(world, [ids[1]])
        world.remove_vehicles([ids[1]])
        assert not world.platoons
        i = world.index_of[ids[0]]
        assert world.mode[i] == ACC and world.platoon[i] == -1
        assert world.cruise[i] == 25.0 and world.next_formation[i] == 100.0

    def test_non_member_leaves(self, world):
        ids, platoon = self.platoon(world, 3)
        other = add(world, 500.0)
        FormationEngine().handle_departures(world, [other])
        world.remove_vehicles([other])
        assert platoon.members == ids and len(world.platoons) == 1


# --------------------------------------------------------------------------
# decisions inside the simulation


def run_decisions(approach, steps=400, **formation):
    sim = Simulation(small_scenario(density=10.0, duration=steps), approach, seed=3, formation=FormationConfig(approach=approach, **formation))
    for _ in range(steps):
        sim.step()
    return sim


@pytest.fixture(scope="module")
def trip_cost_sim():
    return run_decisions("trip-cost")


def test_trip_cost_decisions_are_strict_improvements(trip_cost_sim):
    decisions = trip_cost_sim.decisions
    joins = [d for d in decisions if d.target is not None]
    assert joins and len(joins) < len(decisions)
    for d in joins:
        assert d.chosen_cost < d.individual_cost
        assert d.chosen_cost == d.best_platoon_cost
    for d in decisions:
        if d.target is None:
            assert not d.best_platoon_cost < d.individual_cost


def test_similarity_decisions_respect_window():
    sim = run_decisions("similarity", steps=300)
    joins = [d for d in sim.decisions if d.target is not None]
    assert joins
    for d in joins:
        assert d.speed_deviation <= 0.2 + 1e-9 and d.distance <= 1000.0


def test_decisions_do_not_depend_on_cost_scale(trip_cost_sim):
    scaled = run_decisions("trip-cost", cost_scale=3.0)

    def key(sim):
        return [(d.t, d.vehicle, d.target, d.join_position) for d in sim.decisions]

    assert key(scaled) == key(trip_cost_sim)
    for a, b in zip(scaled.decisions, trip_cost_sim.decisions):
        assert a.individual_cost == pytest.approx(3.0 * b.individual_cost, rel=1e-9)


def test_search_agrees_with_scalar_estimators(world):
    target = add(world, 2000.0, speed=29.0, desired=29.0, dest=60_000.0)
    searcher = add(world, 1700.0, lane=1, speed=31.0, desired=31.0, dest=45_000.0, time_cost=18.0, fuel_price=1.5)
    world.next_formation[world.index_of[target]] = 1e9
    engine = FormationEngine()
    (record,) = engine.search(world)
    assert record.vehicle == searcher and record.target == target

    params = CostParams(18.0, 1.5)
    remaining = 45_000.0 - 1700.0
    assert record.individual_cost == pytest.approx(estimate_individual_cost(remaining, 31.0, params), rel=1e-12)
    opp = opportunity(target, BACK, 29.0, 29.0, 2000.0 - 4.0 - 5.0 - 1700.0, 60_000.0)
    join = estimate_join_maneuver(31.0, opp)
    scalar = estimate_platoon_option(remaining, 31.0, params, opp, join, own_position=1700.0)
    assert record.chosen_cost == pytest.approx(scalar, rel=1e-12)
    assert select_assignment_trip_cost(record.individual_cost, [(opp, scalar, join.distance)]).opportunity is opp


def test_similarity_search_agrees_with_scalar_selection(world):
    near = add(world, 2100.0, speed=30.0, desired=33.0)
    close_speed = add(world, 2400.0, lane=1, speed=30.0, desired=30.5)
    searcher = add(world, 1900.0, lane=2, speed=30.0, desired=30.0)
    for v in (near, close_speed):
        world.next_formation[world.index_of[v]] = 1e9
    engine = FormationEngine(FormationConfig(approach="similarity"))
    (record,) = engine.search(world)
    opps = [
        opportunity(near, BACK, 30.0, 33.0, 2100.0 - 9.0 - 1900.0),
        opportunity(close_speed, BACK, 30.0, 30.5, 2400.0 - 9.0 - 1900.0),
    ]
    expected = select_assignment_similarity(30.0, opps)
    assert record.vehicle == searcher and record.target == expected.opportunity.target_id
