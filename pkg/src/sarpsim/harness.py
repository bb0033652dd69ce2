"""Experiment runner: per-run outputs, sweeps and confidence aggregation."""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .config import HarnessConfig
from .engine import ScenarioResult, run_scenario
from .errors import SarpSimError
from .player import TIMESERIES_HEADER, RunResult
from .sarp import RecoveryMode
from .session import write_trace_csv

__all__ = [
    "ExperimentMatrix",
    "AggregateSeries",
    "aggregate_ci",
    "write_run_outputs",
    "run_one",
    "run_sweep",
    "load_sweep",
    "aggregate_sweep",
    "bandwidth_label",
    "RunFailure",
]

log = logging.getLogger(__name__)

CI_METHOD = "student-t"


class RunFailure(RuntimeError):
    """A run inside a sweep was rejected by a module; ``run_id`` names it."""

    def __init__(self, run_id: str, cause: Exception):
        super().__init__(f"run {run_id}: {cause}")
        self.run_id = run_id


def bandwidth_label(token: str) -> str:
    """Directory-safe label for a bandwidth setting token."""
    token = token.strip()
    try:
        return f"bw_{int(float(token))}"
    except ValueError:
        return re.sub(r"[^A-Za-z0-9_.-]+", "_", token)


@dataclass(frozen=True)
class ExperimentMatrix:
    config: HarnessConfig
    bandwidths: tuple[str, ...]
    seeds: tuple[int, ...]
    modes: tuple[RecoveryMode, ...]
    out_dir: Path

    def __post_init__(self):
        if not self.bandwidths or not self.seeds or not self.modes:
            raise ValueError("experiment matrix axes must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be unique")

    @classmethod
    def from_config(cls, config: HarnessConfig, out_dir, bandwidths=None) -> ExperimentMatrix:
        return cls(
            config=config,
            bandwidths=tuple(bandwidths or config.get("sweep", "bandwidths")),
            seeds=tuple(config.get("sweep", "seeds")),
            modes=tuple(config.get("sweep", "modes")),
            out_dir=Path(out_dir),
        )

    def cells(self) -> list[tuple[RecoveryMode, str, int]]:
        return [(m, bw, s) for m in self.modes for bw in self.bandwidths for s in self.seeds]

    def run_dir(self, mode: RecoveryMode, bw: str, seed: int) -> Path:
        return self.out_dir / RecoveryMode(mode).value / bandwidth_label(bw) / f"seed_{seed}"


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_timeseries_csv(run: RunResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TIMESERIES_HEADER) + "\n")
        for wall, pos, lat, buf, stalled in run.timeseries:
            fh.write(f"{_fmt(wall)},{_fmt(pos)},{_fmt(lat)},{_fmt(buf)},{int(stalled)}\n")


def read_timeseries_csv(path: Path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data


def write_run_outputs(result: ScenarioResult, out_dir: Path, extra: dict | None = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_timeseries_csv(result.run, out_dir / "timeseries.csv")
    summary = result.summary()
    if extra:
        summary.update(extra)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if result.session is not None:
        write_trace_csv(result.session.trace, out_dir / "trace.csv")
    return summary


def run_one(config: HarnessConfig, out_dir, *, seed=None, mode=None, bandwidth_token=None) -> dict:
    bandwidth = config.bandwidth(bandwidth_token) if bandwidth_token is not None else None
    scenario = config.scenario(seed=seed, mode=mode, bandwidth=bandwidth)
    result = run_scenario(scenario)
    return write_run_outputs(result, Path(out_dir))


def _sweep_cell(args) -> tuple[str, dict]:
    config, mode, bw, seed, run_dir = args
    run_id = f"{RecoveryMode(mode).value}/{bandwidth_label(bw)}/seed_{seed}"
    try:
        summary = run_one(config, run_dir, seed=seed, mode=mode, bandwidth_token=bw)
    except SarpSimError as exc:
        raise RunFailure(run_id, exc) from exc
    return run_id, summary


def run_sweep(matrix: ExperimentMatrix, jobs: int = 1) -> dict[str, dict]:
    """Run every (mode, bandwidth, seed) cell; returns summaries keyed by run id.

    Each cell writes only its own directory, so results do not depend on
    ``jobs`` or completion order.
    """
    tasks = [(matrix.config, m, bw, s, matrix.run_dir(m, bw, s)) for m, bw, s in matrix.cells()]
    if jobs <= 1:
        results = [_sweep_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    index = {
        "bandwidths": list(matrix.bandwidths),
        "seeds": list(matrix.seeds),
        "modes": [RecoveryMode(m).value for m in matrix.modes],
        "confidence": matrix.config.get("sweep", "confidence"),
        "runs": sorted(run_id for run_id, _ in results),
    }
    matrix.out_dir.mkdir(parents=True, exist_ok=True)
    (matrix.out_dir / "sweep.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return dict(results)


def load_sweep(sweep_dir) -> dict[tuple[str, str], list[tuple[dict, np.ndarray]]]:
    """Group run outputs under ``sweep_dir`` by (mode, bandwidth label)."""
    sweep_dir = Path(sweep_dir)
    cells: dict[tuple[str, str], list[tuple[dict, np.ndarray]]] = {}
    for summary_path in sorted(sweep_dir.glob("*/*/seed_*/summary.json")):
        run_dir = summary_path.parent
        mode, bw = run_dir.parent.parent.name, run_dir.parent.name
        summary = json.loads(summary_path.read_text())
        series = read_timeseries_csv(run_dir / "timeseries.csv")
        cells.setdefault((mode, bw), []).append((summary, series))
    return cells


@dataclass(frozen=True)
class AggregateSeries:
    """Per-time-point mean and Student-t half-width across runs.

    ``ci_defined`` is False when fewer than two runs contribute; the
    half-width is then NaN rather than a fabricated interval.
    """

    t: np.ndarray
    mean: np.ndarray
    half_width: np.ndarray
    n_runs: int
    level: float
    ci_defined: bool
    method: str = CI_METHOD


def _series_of(run) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(run, RunResult):
        return run.timeseries[:, 0], run.timeseries[:, 2]
    arr = np.asarray(run, dtype=float)
    if arr.ndim == 2 and arr.shape[1] >= 3:
        return arr[:, 0], arr[:, 2]
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0], arr[:, 1]
    raise ValueError("run must be a RunResult or an array of (t, value) / timeseries rows")


def resample_lvcf(t: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Last value carried forward onto ``grid`` (first value before the series starts)."""
    idx = np.searchsorted(t, grid + 1e-9, side="right") - 1
    return values[np.clip(idx, 0, None)]


def t_half_width(values: np.ndarray, level: float) -> float:
    n = len(values)
    if n < 2:
        return math.nan
    if level <= 0:
        return 0.0
    s = float(np.std(values, ddof=1))
    return float(stats.t.ppf((1.0 + level) / 2.0, n - 1) * s / math.sqrt(n))


def aggregate_ci(runs, level: float = 0.90, grid_step: float = 0.1, t_end: float | None = None) -> AggregateSeries:
    """Mean latency and confidence half-width on a common time grid."""
    if not runs:
        raise ValueError("aggregate_ci needs at least one run")
    if not 0.0 <= level < 1.0:
        raise ValueError(f"confidence level must be in [0, 1), got {level}")
    series = [_series_of(r) for r in runs]
    if t_end is None:
        t_end = max(float(t[-1]) for t, _ in series)
    grid = np.round(np.arange(int(math.floor(t_end / grid_step + 1e-9)) + 1) * grid_step, 9)
    matrix = np.vstack([resample_lvcf(t, v, grid) for t, v in series])
    n = matrix.shape[0]
    mean = matrix.mean(axis=0)
    if n < 2:
        half = np.full_like(mean, math.nan)
    elif level == 0:
        half = np.zeros_like(mean)
    else:
        s = matrix.std(axis=0, ddof=1)
        half = stats.t.ppf((1.0 + level) / 2.0, n - 1) * s / math.sqrt(n)
    return AggregateSeries(grid, mean, half, n, level, n >= 2)


def _scalar_stats(values: list[float], level: float) -> dict:
    arr = np.asarray(values, dtype=float)
    half = t_half_width(arr, level)
    return {
        "mean": round(float(arr.mean()), 6),
        "ci_half_width": None if math.isnan(half) else round(half, 6),
        "n": len(arr),
    }


def aggregate_sweep(sweep_dir, level: float = 0.90) -> tuple[dict[tuple[str, str], AggregateSeries], dict]:
    """Aggregate every cell of a sweep directory.

    Returns the per-cell latency series and a JSON-ready report with the
    per-cell mean (and t-interval) of the scalar run metrics.
    """
    cells = load_sweep(sweep_dir)
    if not cells:
        raise ValueError(f"no run outputs found under {sweep_dir}")
    aggregates: dict[tuple[str, str], AggregateSeries] = {}
    report_cells = {}
    for (mode, bw), runs in sorted(cells.items()):
        aggregates[(mode, bw)] = aggregate_ci([series for _, series in runs], level)
        summaries = [s for s, _ in runs]
        report_cells[f"{mode}/{bw}"] = {
            "mode": mode,
            "bandwidth": summaries[0]["bandwidth"],
            "seeds": sorted(s["seed"] for s in summaries),
            **{key: _scalar_stats([s[key] for s in summaries], level)
               for key in ("final_latency_s", "stall_total_s", "stall_count", "recovery_bytes")},
        }
    report = {"ci_method": CI_METHOD, "confidence": level, "grid_step_s": 0.1, "cells": report_cells}
    return aggregates, report
