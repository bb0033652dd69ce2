from __future__ import annotations

import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import T_095_DF4
from sarpsim.config import load_config, parse_config, parse_seeds
from sarpsim.errors import ConfigError
from sarpsim.harness import (
    AggregateSeries,
    ExperimentMatrix,
    aggregate_ci,
    aggregate_sweep,
    bandwidth_label,
    load_sweep,
    run_sweep,
)
from sarpsim.plots import emit_plots, read_sidecar
from sarpsim.sarp import RecoveryMode
from sarpsim.unicast import Constant, Synthetic, Trace

SMALL = """
[presentation]
duration_s = 30
[sweep]
bandwidths = 2000000, 4000000
seeds = 1..3
"""


def series(values, t=None):
    t = np.arange(len(values)) * 0.1 if t is None else np.asarray(t)
    return np.column_stack([t, np.asarray(values, dtype=float)])


# -- config ------------------------------------------------------------------

def test_defaults_reproduce_reference_parameters():
    cfg = load_config(None)
    pres = cfg.presentation()
    assert (pres.total_duration_s, pres.segment_duration_s) == (600.0, 0.5)
    assert [r.bitrate_bps for r in pres.representations] == [3e6, 6e6]
    assert cfg.get("broadcast", "loss_fraction") == 0.10
    assert cfg.get("player", "initial_buffer_segments") == 1.5
    assert cfg.get("sweep", "seeds") == tuple(range(1, 11))
    assert cfg.get("sweep", "bandwidths") == ("2000000", "2500000", "3000000", "3500000", "4000000")


@pytest.mark.parametrize(
    "text,key",
    [
        ("[bogus]\nx=1\n", "[bogus]"),
        ("[player]\nspeed=2\n", "player.speed"),
        ("[player]\ncatch_up_rate=fast\n", "player.catch_up_rate"),
        ("[unicast]\nbandwidth=profile:C\n", "unicast.bandwidth"),
        ("[sweep]\nseeds=1,1\n", "sweep.seeds"),
        ("[presentation]\nduration_s=10.3\n", "presentation"),
        ("[recovery]\nmode=maybe\n", "recovery.mode"),
    ],
)
def test_config_errors_name_key(text, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.key == key


def test_parse_seeds():
    assert parse_seeds("1..3,9") == (1, 2, 3, 9)
    with pytest.raises(ValueError):
        parse_seeds("")


def test_bandwidth_tokens(tmp_path):
    cfg = load_config(None)
    assert cfg.bandwidth("2500000") == Constant(2.5e6)
    assert isinstance(cfg.bandwidth("profile:A"), Synthetic)
    (tmp_path / "bw.csv").write_text("time_s,bandwidth_bps\n0,2e6\n5,4e6\n")
    assert cfg.bandwidth(f"trace:{tmp_path / 'bw.csv'}") == Trace(((0, 2e6), (5, 4e6)))
    assert bandwidth_label("2500000") == "bw_2500000"
    assert bandwidth_label("profile:A") == "profile_A"


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "errs.txt").write_text("4\n9\n")
    (tmp_path / "c.ini").write_text("[presentation]\nduration_s=10\n[broadcast]\nerror_file = errs.txt\n")
    scen = load_config(tmp_path / "c.ini").scenario()
    assert scen.loss.error_file.lost_indices == (4, 9)


# -- aggregation ---------------------------------------------------------------

def test_identical_series_zero_width():
    agg = aggregate_ci([series([1.0, 2.0, 3.0])] * 10)
    assert np.all(agg.half_width == 0) and np.allclose(agg.mean, [1, 2, 3])


def test_hand_computed_t_interval():
    runs = [series([v]) for v in (1, 2, 3, 4, 5)]
    agg = aggregate_ci(runs, 0.90)
    assert agg.mean[0] == 3.0
    expected = T_095_DF4 * math.sqrt(2.5) / math.sqrt(5)
    assert agg.half_width[0] == pytest.approx(expected, rel=1e-9)


def test_level_zero_and_single_run():
    runs = [series([v]) for v in (1, 2, 3)]
    assert aggregate_ci(runs, 0.0).half_width[0] == 0.0
    single = aggregate_ci(runs[:1])
    assert not single.ci_defined and np.isnan(single.half_width).all()
    assert single.mean[0] == 1.0


def test_lvcf_resampling():
    a = series([1.0, 5.0], t=[0.0, 0.25])
    b = series([3.0], t=[0.0])
    agg = aggregate_ci([a, b], t_end=0.3)
    assert np.allclose(agg.t, [0.0, 0.1, 0.2, 0.3])
    assert np.allclose(agg.mean, [2.0, 2.0, 2.0, 4.0])


@given(st.lists(st.lists(st.floats(-50, 50), min_size=4, max_size=4), min_size=2, max_size=12),
       st.floats(0.5, 0.99))
def test_aggregate_matches_direct_computation(rows, level):
    runs = [series(r) for r in rows]
    agg = aggregate_ci(runs, level)
    mat = np.array(rows)
    assert np.allclose(agg.mean, mat.mean(axis=0), rtol=1e-12, atol=1e-12)
    direct = stats.t.ppf((1 + level) / 2, len(rows) - 1) * mat.std(axis=0, ddof=1) / math.sqrt(len(rows))
    assert np.allclose(agg.half_width, direct, rtol=1e-9, atol=1e-12)
    assert np.all(agg.half_width >= 0)


def test_matrix_validation():
    cfg = load_config(None)
    with pytest.raises(ValueError):
        ExperimentMatrix(cfg, (), (1,), (RecoveryMode.SARP_ON,), "x")
    with pytest.raises(ValueError):
        ExperimentMatrix(cfg, ("1e6",), (1, 1), (RecoveryMode.SARP_ON,), "x")


# -- sweeps and plots ------------------------------------------------------------

def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_sweep_is_independent_of_parallelism(tmp_path):
    cfg = parse_config(SMALL)
    serial = run_sweep(ExperimentMatrix.from_config(cfg, tmp_path / "a"), jobs=1)
    run_sweep(ExperimentMatrix.from_config(cfg, tmp_path / "b"), jobs=3)
    assert len(serial) == 2 * 2 * 3
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    summary = json.loads((tmp_path / "a/sarp-on/bw_2000000/seed_2/summary.json").read_text())
    for key in ("final_latency_s", "stall_total_s", "stall_count", "recovery_count", "recovery_bytes",
                "served_reps", "seed", "mode", "bandwidth"):
        assert key in summary


def test_report_and_plots(tmp_path, caplog):
    cfg = parse_config(SMALL)
    run_sweep(ExperimentMatrix.from_config(cfg, tmp_path / "sw"))
    assert len(load_sweep(tmp_path / "sw")) == 4
    aggregates, report = aggregate_sweep(tmp_path / "sw")
    assert report["ci_method"] == "student-t" and report["confidence"] == 0.9
    cell = report["cells"]["sarp-off/bw_2000000"]
    assert cell["final_latency_s"]["n"] == 3

    empty = AggregateSeries(np.array([]), np.array([]), np.array([]), 0, 0.9, False)
    with caplog.at_level(logging.WARNING):
        paths = emit_plots({**aggregates, ("sarp-on", "bw_9"): empty}, tmp_path / "plots")
    assert "skipping empty cell sarp-on/bw_9" in caplog.text
    assert sorted(p.name for p in paths) == ["latency_sarp-off.svg", "latency_sarp-on.svg"]
    svg = (tmp_path / "plots/latency_sarp-on.svg").read_text()
    assert svg.count("<path") > 0

    side = read_sidecar(tmp_path / "plots/latency_sarp-on.csv")
    assert set(side) == {"bw_2000000", "bw_4000000"}
    for bw, d in side.items():
        agg = aggregates[("sarp-on", bw)]
        assert np.array_equal(d["t"], agg.t)
        assert np.array_equal(d["mean"], agg.mean)
        assert np.array_equal(d["half_width"], agg.half_width)

    # a second emission is byte-identical
    emit_plots(aggregates, tmp_path / "plots2")
    assert (tmp_path / "plots2/latency_sarp-on.svg").read_bytes() == (tmp_path / "plots/latency_sarp-on.svg").read_bytes()


def test_profile_plots_pair_modes(tmp_path):
    cfg = parse_config(SMALL.replace("bandwidths = 2000000, 4000000", "bandwidths = profile:A").replace("1..3", "1..2"))
    run_sweep(ExperimentMatrix.from_config(cfg, tmp_path / "sw"))
    aggregates, _ = aggregate_sweep(tmp_path / "sw")
    paths = emit_plots(aggregates, tmp_path / "plots")
    assert [p.name for p in paths] == ["latency_profile_A.svg"]
    assert set(read_sidecar(tmp_path / "plots/latency_profile_A.csv")) == {"sarp-on", "sarp-off"}


def test_emit_plots_requires_input(tmp_path):
    with pytest.raises(ValueError):
        emit_plots({}, tmp_path)
