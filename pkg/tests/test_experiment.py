"""Records, binning, gains and experiment files."""

import json

import pandas as pd
import pytest

from conftest import small_scenario
from tripcost.errors import ConfigurationError
from tripcost.experiment import (
    ExperimentMatrix,
    bin_and_aggregate,
    gain_vs_baseline,
    read_records,
    realized_trip_cost,
    records_frame,
    records_from_trips,
    run_cell,
    run_experiment,
    write_manifest,
    write_records,
)
from tripcost.mobility import CompletedTrip


def trip(vid=1, c_time=20.0, depart=1000.0, arrive=1700.0, fuel=1.2, prefilled=False, price=1.84):
    return CompletedTrip(vid, c_time, price, 30.0, 0.0, 20_000.0, 0.0, depart, arrive, fuel, 0.0, prefilled)


def frame(rows):
    cols = ["approach", "density", "c_time", "speed", "travel_time", "fuel", "trip_cost"]
    return pd.DataFrame(rows, columns=cols)


class TestRecords:
    def test_realized_cost(self):
        (r,) = records_from_trips([trip()], "acc", 5.0, 0, 900.0)
        assert r.travel_time == 700.0 and r.distance == 20_000.0
        assert r.trip_cost == pytest.approx(1.2 * 1.84 + 700.0 / 3600.0 * 20.0, rel=1e-12)
        assert r.trip_cost == realized_trip_cost(1.2, 700.0, 20.0, 1.84)

    def test_warmup_and_prefill_excluded(self):
        trips = [trip(1, depart=899.0), trip(2, depart=900.0), trip(3, prefilled=True)]
        assert [r.vehicle for r in records_from_trips(trips, "acc", 5.0, 0, 900.0)] == [2]


class TestBinning:
    def test_left_closed_bins(self):
        df = frame([("acc", 5.0, 23.4, 30, 600, 1, 10), ("acc", 5.0, 25.0, 30, 600, 1, 12), ("acc", 5.0, 19.99, 30, 600, 1, 8)])
        stats = bin_and_aggregate(df, 5.0)
        assert stats["bin_lo"].tolist() == [15.0, 20.0, 25.0]
        assert stats["bin_hi"].tolist() == [20.0, 25.0, 30.0]

    def test_single_record_has_zero_std(self):
        stats = bin_and_aggregate(frame([("acc", 5.0, 23.4, 30, 600, 1, 10)]))
        assert stats["trip_cost_std"].iloc[0] == 0.0 and stats["n"].iloc[0] == 1

    def test_population_std(self):
        stats = bin_and_aggregate(frame([("acc", 5.0, 21.0, 30, 600, 1, 8), ("acc", 5.0, 22.0, 30, 600, 1, 12)]))
        assert stats["trip_cost_mean"].iloc[0] == 10.0 and stats["trip_cost_std"].iloc[0] == 2.0

    def test_empty(self):
        assert bin_and_aggregate(records_frame([])).empty
        assert gain_vs_baseline(bin_and_aggregate(records_frame([]))).empty

    def test_bad_width(self):
        with pytest.raises(ValueError):
            bin_and_aggregate(frame([]), 0.0)


class TestGain:
    def test_arithmetic(self):
        stats = bin_and_aggregate(frame([("acc", 5.0, 21.0, 30, 600, 1, 10.0), ("trip-cost", 5.0, 22.0, 30, 600, 1, 9.0)]))
        gains = gain_vs_baseline(stats)
        row = gains[gains["approach"] == "trip-cost"].iloc[0]
        assert row["gain"] == pytest.approx(0.10)
        assert gains[gains["approach"] == "acc"]["gain"].iloc[0] == 0.0

    def test_missing_baseline(self):
        with pytest.raises(ConfigurationError):
            gain_vs_baseline(bin_and_aggregate(frame([("human", 5.0, 21.0, 30, 600, 1, 10.0)])))

    def test_missing_baseline_bin_warns(self):
        stats = bin_and_aggregate(frame([("acc", 5.0, 21.0, 30, 600, 1, 10.0), ("human", 5.0, 31.0, 30, 600, 1, 9.0)]))
        with pytest.warns(UserWarning):
            gains = gain_vs_baseline(stats)
        assert gains["approach"].tolist() == ["acc"]


class TestFiles:
    def test_records_roundtrip(self, tmp_path):
        records = records_from_trips([trip(1), trip(2, c_time=40.0)], "acc", 5.0, 0, 0.0)
        write_records(records, tmp_path / "r.csv")
        df = read_records(tmp_path / "r.csv")
        pd.testing.assert_frame_equal(df, records_frame(records), check_dtype=False)

    def test_read_rejects_foreign_csv(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ConfigurationError):
            read_records(tmp_path / "x.csv")


def test_empty_matrix():
    assert run_experiment(ExperimentMatrix(approaches=(), densities=(5.0,), seeds=(0,)), small_scenario()) == []


def test_unknown_approach():
    with pytest.raises(ConfigurationError):
        ExperimentMatrix(approaches=("platooning",))


@pytest.fixture(scope="module")
def short_runs():
    matrix = ExperimentMatrix(approaches=("acc", "trip-cost"), densities=(5.0,), seeds=(1,))
    return matrix, run_experiment(matrix, small_scenario(duration=900.0, warmup=300.0))


def test_run_cell_outputs(short_runs):
    _, runs = short_runs
    for run in runs:
        assert not run.failed and run.records
        assert all(r.depart_time >= 300.0 for r in run.records)
        assert run.inserted - run.removed >= 0
    assert runs[1].joins_started >= runs[1].joins_completed > 0


def test_seed_determinism(short_runs, tmp_path):
    matrix, runs = short_runs
    again = run_experiment(matrix, small_scenario(duration=900.0, warmup=300.0))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_records([r for run in runs for r in run.records], a)
    write_records([r for run in again for r in run.records], b)
    assert a.read_bytes() == b.read_bytes()


def test_manifest(short_runs, tmp_path):
    matrix, runs = short_runs
    write_manifest(tmp_path / "m.json", small_scenario(), matrix, runs, {"bin_width_eur_per_h": 5.0})
    data = json.loads((tmp_path / "m.json").read_text())
    assert [r["approach"] for r in data["runs"]] == ["acc", "trip-cost"]
    assert data["bin_width_eur_per_h"] == 5.0 and data["scenario"]["freeway"]["length"] == 30_000.0


def test_parallel_matches_serial():
    matrix = ExperimentMatrix(approaches=("acc", "human"), densities=(5.0,), seeds=(0,))
    scenario = small_scenario(duration=300.0)
    serial = run_experiment(matrix, scenario, workers=1)
    parallel = run_experiment(matrix, scenario, workers=2)
    assert [r.records for r in serial] == [r.records for r in parallel]


def test_failed_run_is_reported(monkeypatch):
    from tripcost import experiment
    from tripcost.errors import SimulationError

    def boom(self, duration_s=None):
        raise SimulationError("collision")

    monkeypatch.setattr(experiment.Simulation, "run", boom)
    result = run_cell(small_scenario(), "acc", 5.0, 0)
    assert result.failed and result.error == "collision" and not result.records
