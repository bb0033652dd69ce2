"""Latency charts with confidence bands, each backed by a CSV sidecar."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import AggregateSeries  # noqa: E402

__all__ = ["PlotStyle", "emit_plots", "write_sidecar", "read_sidecar"]

log = logging.getLogger(__name__)

SIDECAR_HEADER = ("series", "t_s", "mean_latency_s", "ci_half_width_s", "n_runs")


@dataclass(frozen=True)
class PlotStyle:
    width_in: float = 7.0
    height_in: float = 4.5
    band_alpha: float = 0.2
    line_width: float = 1.2
    fmt: str = "svg"


def write_sidecar(series: dict[str, AggregateSeries], path: Path) -> None:
    # repr keeps full float precision so a re-read matches the plotted arrays
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIDECAR_HEADER)
        for name, agg in series.items():
            for t, m, h in zip(agg.t, agg.mean, agg.half_width):
                w.writerow([name, repr(float(t)), repr(float(m)), repr(float(h)), agg.n_runs])


def read_sidecar(path: Path) -> dict[str, dict[str, np.ndarray]]:
    out: dict[str, dict[str, list]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            d = out.setdefault(row["series"], {"t": [], "mean": [], "half_width": []})
            d["t"].append(float(row["t_s"]))
            d["mean"].append(float(row["mean_latency_s"]))
            d["half_width"].append(float(row["ci_half_width_s"]))
    return {k: {c: np.array(v) for c, v in d.items()} for k, d in out.items()}


def _chart(series: dict[str, AggregateSeries], title: str, path: Path, style: PlotStyle) -> None:
    fig, ax = plt.subplots(figsize=(style.width_in, style.height_in))
    for name, agg in series.items():
        (line,) = ax.plot(agg.t, agg.mean, lw=style.line_width, label=name)
        if agg.ci_defined:
            ax.fill_between(agg.t, agg.mean - agg.half_width, agg.mean + agg.half_width,
                            color=line.get_color(), alpha=style.band_alpha, lw=0)
    level = next(iter(series.values())).level
    ax.set_title(title)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("live latency (s)")
    ax.grid(True, linestyle="--", alpha=0.5)
    ax.legend(title=f"mean, {level:.0%} CI per time point", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format=style.fmt, metadata={"Date": None})
    plt.close(fig)


def _is_profile(bw_label: str) -> bool:
    return not bw_label.startswith("bw_")


def _bw_sort_key(label: str):
    try:
        return (0, float(label[3:]), label)
    except ValueError:
        return (1, 0.0, label)


def emit_plots(aggregates: dict[tuple[str, str], AggregateSeries | None], out_dir,
               style: PlotStyle | None = None) -> list[Path]:
    """Write one chart per mode (constant bandwidths) and one per profile (on vs off).

    ``aggregates`` maps (mode, bandwidth label) to a series; a None or empty
    series is skipped with a warning. Returns the chart paths written.
    """
    if not aggregates:
        raise ValueError("emit_plots needs at least one aggregate")
    style = style or PlotStyle()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "sarpsim"

    usable: dict[tuple[str, str], AggregateSeries] = {}
    for key in sorted(aggregates):
        agg = aggregates[key]
        if agg is None or len(agg.t) == 0:
            log.warning("skipping empty cell %s/%s", *key)
            continue
        usable[key] = agg

    written: list[Path] = []
    modes = sorted({m for m, _ in usable})
    for mode in modes:
        labels = sorted((bw for m, bw in usable if m == mode and not _is_profile(bw)), key=_bw_sort_key)
        if not labels:
            continue
        series = {bw: usable[(mode, bw)] for bw in labels}
        stem = out_dir / f"latency_{mode}"
        write_sidecar(series, stem.with_suffix(".csv"))
        _chart(series, f"Live latency ({mode})", stem.with_suffix(f".{style.fmt}"), style)
        written.append(stem.with_suffix(f".{style.fmt}"))

    profiles = sorted({bw for _, bw in usable if _is_profile(bw)})
    for bw in profiles:
        series = {m: usable[(m, bw)] for m in modes if (m, bw) in usable}
        stem = out_dir / f"latency_{bw}"
        write_sidecar(series, stem.with_suffix(".csv"))
        _chart(series, f"Live latency, bandwidth {bw}", stem.with_suffix(f".{style.fmt}"), style)
        written.append(stem.with_suffix(f".{style.fmt}"))
    return written
