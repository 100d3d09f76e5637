import pytest

from tripcost.mobility import ACC, World
from tripcost.scenario import DemandConfig, Freeway
from tripcost.simulation import ScenarioConfig


def add(world: World, x: float, lane: int = 0, speed: float = 30.0, desired: float | None = None, dest: float | None = None, **kw) -> int:
    """Add a vehicle with sensible defaults for hand-built scenes."""
    desired = speed if desired is None else desired
    return world.add_vehicle(
        position=x, lane=lane, speed=speed, desired_speed=desired, time_cost=kw.pop("time_cost", 20.0),
        fuel_price=kw.pop("fuel_price", 1.84), origin=kw.pop("origin", 0.0),
        destination=world.road_length if dest is None else dest, mode=kw.pop("mode", ACC), **kw,
    )


def small_scenario(density: float = 5.0, duration: float = 600.0, warmup: float = 0.0, **kw) -> ScenarioConfig:
    return ScenarioConfig(
        Freeway(kw.pop("length", 30_000.0), 3, 10_000.0),
        DemandConfig(density=density, trip_length=kw.pop("trip_length", 20_000.0), **kw),
        duration_s=duration,
        warmup_s=warmup,
    )


@pytest.fixture
def world():
    return World(road_length=100_000.0, lanes=3)


ACCEPTANCE_LINES: list[str] = []


def verdict(name: str, ok: bool, detail: str) -> bool:
    """Record one acceptance line for the terminal summary and return ``ok``."""
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
