from __future__ import annotations

import json
import subprocess
import sys

import pytest

from sarpsim.broadcast import read_error_file
from sarpsim.cli import main
from sarpsim.engine import error_file_for_seed


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text("[presentation]\nduration_s = 20\n[sweep]\nbandwidths = 2000000, 3000000\nseeds = 1..2\n")
    return path


def test_gen_errors(tmp_path, capsys):
    assert main(["gen-errors", "--segments", "1200", "--fraction", "0.10", "--seeds", "1..10",
                 "--out", str(tmp_path)]) == 0
    files = sorted(tmp_path.glob("errors_seed_*.txt"))
    assert len(files) == 10
    for f in files:
        assert len(read_error_file(f)) == 120
    assert read_error_file(tmp_path / "errors_seed_3.txt") == error_file_for_seed(1200, 0.10, 3)


def test_run_no_loss(tmp_path, capsys):
    cfg = tmp_path / "noloss.ini"
    cfg.write_text("[presentation]\nduration_s = 30\n[broadcast]\nloss_fraction = 0\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r"), "--bw", "3000000"]) == 0
    summary = json.loads((tmp_path / "r/summary.json").read_text())
    assert summary["stall_total_s"] == 0
    assert summary["recovery_count"] == 0
    assert (tmp_path / "r/timeseries.csv").read_text().startswith("wall_s,playback_s,live_latency_s")


def test_run_flags_override_config(tmp_path, small_cfg):
    trace = tmp_path / "bw.csv"
    trace.write_text("time_s,bandwidth_bps\n0,2e6\n10,8e6\n")
    assert main(["run", "--config", str(small_cfg), "--seed", "5", "--mode", "sarp-on",
                 "--bw-trace", str(trace), "--out", str(tmp_path / "r")]) == 0
    summary = json.loads((tmp_path / "r/summary.json").read_text())
    assert (summary["seed"], summary["mode"], summary["bandwidth"]) == (5, "sarp-on", "trace:2pts")


def test_run_is_byte_identical(tmp_path, small_cfg):
    for d in ("a", "b"):
        main(["run", "--config", str(small_cfg), "--seed", "3", "--out", str(tmp_path / d)])
    for name in ("summary.json", "timeseries.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_and_report(tmp_path, small_cfg, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(small_cfg), "--out", str(out), "--jobs", "2"]) == 0
    assert len(list(out.glob("*/*/seed_*"))) == 2 * 2 * 2
    assert main(["report", str(out)]) == 0
    report = json.loads((out / "report/report.json").read_text())
    assert report["ci_method"] == "student-t"
    assert (out / "report/latency_sarp-on.svg").exists()
    assert (out / "report/latency_sarp-on.csv").exists()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[player]\ncatch_up_rate = quick\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "player.catch_up_rate" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "o")]) == 2


def test_module_rejection_exit_code(tmp_path, capsys):
    cfg = tmp_path / "fault.ini"
    cfg.write_text("[presentation]\nduration_s = 10\n[session]\nenabled = yes\nfaults = 8.b:reject\n")
    assert main(["run", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "sarp-off/seed_4" in err and "session-control" in err


def test_bad_bandwidth_flag(tmp_path, capsys):
    assert main(["run", "--bw", "fast", "--out", str(tmp_path / "o")]) == 2
    assert "--bw" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sarpsim", "gen-errors", "--segments", "20", "--fraction", "0.5",
                           "--seeds", "1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(read_error_file(tmp_path / "errors_seed_1.txt")) == 10


@pytest.mark.parametrize("name", ["reference.ini", "profiles.ini"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    from sarpsim.config import load_config

    cfg = load_config(Path(__file__).parent.parent / "configs" / name)
    assert cfg.get("sweep", "seeds") == tuple(range(1, 11))
