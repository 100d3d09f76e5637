import json
import subprocess
import sys

import pandas as pd
import pytest

from tripcost.cli import main

TINY = """
[scenario]
road_length_m = 10000
ramp_interval_m = 2500
trip_length_m = 5000
density_veh_per_km_lane = 5
duration_s = 300
warmup_s = 0

[sweep]
bin_width_eur_per_h = 5
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def test_analyze(tmp_path):
    assert main(["analyze", "--out", str(tmp_path)]) == 0
    human = pd.read_csv(tmp_path / "analysis_human.csv")
    assert len(human) == 1056 and (tmp_path / "analysis_platoon.csv").exists()


def test_simulate_with_audit(tmp_path, cfg):
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--approach", "trip-cost", "--audit", "--seed", "3"]) == 0
    records = pd.read_csv(tmp_path / "records.csv")
    audit = pd.read_csv(tmp_path / "audit.csv")
    assert set(records["approach"]) <= {"trip-cost"}
    assert list(audit.columns) == ["t", "vehicle", "individual_cost", "best_platoon_cost", "target", "decision"]
    assert len(audit) > 0


def test_simulate_trace(tmp_path, cfg):
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--trace"]) == 0
    assert len((tmp_path / "trace.csv").read_text().splitlines()) > 1


def test_rerun_is_byte_identical(tmp_path, cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--config", str(cfg), "--out", str(out), "--approach", "similarity"]) == 0
    assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()


def test_sweep_and_report(tmp_path, cfg):
    out = tmp_path / "sweep"
    args = ["sweep", "--config", str(cfg), "--out", str(out), "--approach", "acc,trip-cost", "--density", "5", "--seed", "0,1"]
    assert main(args) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["runs"]) == 4
    for name in ("records.csv", "stats.csv", "gains.csv"):
        assert (out / name).exists()

    acc_only = tmp_path / "acc.csv"
    records = pd.read_csv(out / "records.csv")
    records[records["approach"] == "acc"].to_csv(acc_only, index=False)
    rep = tmp_path / "report"
    assert main(["report", str(acc_only), "--out", str(rep)]) == 0
    gains = pd.read_csv(rep / "gains.csv")
    assert len(gains) > 0 and (gains["gain"] == 0.0).all()


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["simulate", "--approach", "platooning"],
        ["sweep", "--density", "five"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_unknown_config_key(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nroad_lenght_m = 1000\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_missing_config_file(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_report_without_baseline(tmp_path, cfg):
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--approach", "human"]) == 0
    assert main(["report", str(tmp_path / "records.csv"), "--out", str(tmp_path / "r")]) == 2


def test_console_script_module():
    proc = subprocess.run([sys.executable, "-m", "tripcost.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sweep" in proc.stdout
