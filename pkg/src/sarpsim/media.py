"""DASH content model and recovery representation selection."""

from __future__ import annotations

import csv
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MediaError

__all__ = [
    "RepresentationSpec",
    "PresentationConfig",
    "Representation",
    "MediaPresentation",
    "SegmentRef",
    "build_presentation",
    "select_representation",
    "segment_ref",
    "read_size_manifest",
    "write_size_manifest",
]

SIZE_MODELS = ("constant", "vbr", "manifest")


@dataclass(frozen=True)
class RepresentationSpec:
    id: str
    bitrate_bps: float
    resolution_label: str = "1080p"


@dataclass(frozen=True)
class PresentationConfig:
    """Inputs to :func:`build_presentation`.

    ``size_model`` is ``"constant"``, ``"vbr"`` (seeded lognormal with
    coefficient of variation ``vbr_cv``) or ``"manifest"`` (sizes taken from
    ``manifest``, e.g. loaded with :func:`read_size_manifest`).
    """

    total_duration_s: float = 600.0
    segment_duration_s: float = 0.5
    representations: tuple[RepresentationSpec, ...] = (
        RepresentationSpec("3Mbps", 3_000_000.0),
        RepresentationSpec("6Mbps", 6_000_000.0),
    )
    broadcast_rep_id: str = "6Mbps"
    size_model: str = "constant"
    vbr_cv: float = 0.3
    vbr_tolerance: float = 0.5
    min_buffer_segments: float = 1.5
    ingest_delay_s: float = 0.0
    manifest: Mapping[str, Sequence[int]] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Representation:
    id: str
    bitrate_bps: float
    resolution_label: str
    segment_sizes_bytes: tuple[int, ...]

    def mean_bitrate_bps(self, segment_duration_s: float) -> float:
        return float(np.mean(self.segment_sizes_bytes)) * 8.0 / segment_duration_s


@dataclass(frozen=True)
class SegmentRef:
    rep_id: str
    index: int
    size_bytes: int
    media_start_s: float
    availability_time_s: float


@dataclass(frozen=True)
class MediaPresentation:
    segment_duration_s: float
    total_duration_s: float
    representations: tuple[Representation, ...]
    min_buffer_segments: float
    broadcast_rep_id: str
    ingest_delay_s: float = 0.0

    @property
    def segment_count(self) -> int:
        return len(self.representations[0].segment_sizes_bytes)

    def representation(self, rep_id: str) -> Representation:
        for rep in self.representations:
            if rep.id == rep_id:
                return rep
        raise MediaError(f"unknown representation id {rep_id!r}")

    @property
    def broadcast_representation(self) -> Representation:
        return self.representation(self.broadcast_rep_id)

    def segment_size(self, rep_id: str, index: int) -> int:
        return self.segment_ref(rep_id, index).size_bytes

    def availability_time(self, index: int) -> float:
        return (index + 1) * self.segment_duration_s + self.ingest_delay_s

    def segment_ref(self, rep_id: str, index: int) -> SegmentRef:
        return segment_ref(self, rep_id, index)


def _segment_count(total: float, seg: float) -> int:
    if seg <= 0:
        raise MediaError(f"segment duration must be positive, got {seg}")
    if total <= 0:
        raise MediaError(f"total duration must be positive, got {total}")
    n = round(total / seg)
    remainder = total - n * seg
    if n < 1 or abs(remainder) > 1e-9 * max(1.0, total):
        raise MediaError(
            f"total duration {total} s is not a multiple of segment duration "
            f"{seg} s (remainder {math.fmod(total, seg):g} s)"
        )
    return int(n)


def _lognormal_sizes(mean_bytes: float, cv: float, count: int, rng: np.random.Generator) -> np.ndarray:
    sigma2 = math.log1p(cv * cv)
    mu = math.log(mean_bytes) - sigma2 / 2.0
    draws = rng.lognormal(mean=mu, sigma=math.sqrt(sigma2), size=count)
    return np.maximum(1, np.rint(draws)).astype(np.int64)


def build_presentation(config: PresentationConfig, seed: int | np.random.Generator = 0) -> MediaPresentation:
    """Build a validated presentation.

    ``seed`` only matters for the VBR model; representations draw their
    sizes in declaration order from one generator.
    """
    if not config.representations:
        raise MediaError("representation list is empty")
    count = _segment_count(config.total_duration_s, config.segment_duration_s)
    ids = [r.id for r in config.representations]
    if len(set(ids)) != len(ids):
        raise MediaError(f"duplicate representation ids in {ids}")
    if config.broadcast_rep_id not in ids:
        raise MediaError(f"broadcast_rep_id {config.broadcast_rep_id!r} not among {ids}")
    if config.size_model not in SIZE_MODELS:
        raise MediaError(f"unknown size model {config.size_model!r}")
    if config.min_buffer_segments <= 0:
        raise MediaError("min_buffer_segments must be positive")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    seg = config.segment_duration_s
    reps = []
    for spec in config.representations:
        if not spec.bitrate_bps > 0:
            raise MediaError(f"representation {spec.id!r} has non-positive bitrate {spec.bitrate_bps}")
        mean_bytes = spec.bitrate_bps * seg / 8.0
        if config.size_model == "constant":
            sizes = [int(round(mean_bytes))] * count
        elif config.size_model == "vbr":
            sizes = _lognormal_sizes(mean_bytes, config.vbr_cv, count, rng).tolist()
        else:
            if config.manifest is None or spec.id not in config.manifest:
                raise MediaError(f"manifest has no sizes for representation {spec.id!r}")
            sizes = [int(s) for s in config.manifest[spec.id]]
        reps.append(Representation(spec.id, float(spec.bitrate_bps), spec.resolution_label, tuple(sizes)))

    presentation = MediaPresentation(
        segment_duration_s=seg,
        total_duration_s=float(config.total_duration_s),
        representations=tuple(reps),
        min_buffer_segments=config.min_buffer_segments,
        broadcast_rep_id=config.broadcast_rep_id,
        ingest_delay_s=config.ingest_delay_s,
    )
    validate_presentation(presentation, vbr_tolerance=config.vbr_tolerance)
    return presentation


def validate_presentation(p: MediaPresentation, vbr_tolerance: float = 0.5) -> None:
    count = _segment_count(p.total_duration_s, p.segment_duration_s)
    for rep in p.representations:
        if len(rep.segment_sizes_bytes) != count:
            raise MediaError(
                f"representation {rep.id!r} has {len(rep.segment_sizes_bytes)} sizes, expected {count}"
            )
        if min(rep.segment_sizes_bytes) <= 0:
            raise MediaError(f"representation {rep.id!r} has a non-positive segment size")
        ratio = rep.mean_bitrate_bps(p.segment_duration_s) / rep.bitrate_bps
        if abs(ratio - 1.0) > vbr_tolerance:
            raise MediaError(
                f"representation {rep.id!r}: mean segment bitrate is {ratio:.3f}x the "
                f"declared bitrate (allowed +/-{vbr_tolerance:.0%})"
            )


def select_representation(reps: Sequence[Representation], bw_unicast_bps: float) -> Representation:
    """Highest bitrate strictly below ``bw_unicast_bps``.

    When nothing fits, the lowest-bitrate representation is returned.
    Equal bitrates resolve to the smallest id.
    """
    if not reps:
        raise MediaError("cannot select from an empty representation list")
    if bw_unicast_bps < 0:
        raise MediaError(f"bandwidth must be >= 0, got {bw_unicast_bps}")
    feasible = [r for r in reps if r.bitrate_bps < bw_unicast_bps]
    if feasible:
        return min(feasible, key=lambda r: (-r.bitrate_bps, r.id))
    return min(reps, key=lambda r: (r.bitrate_bps, r.id))


def segment_ref(presentation: MediaPresentation, rep_id: str, index: int) -> SegmentRef:
    rep = presentation.representation(rep_id)
    count = presentation.segment_count
    if not 0 <= index < count:
        raise MediaError(f"segment index {index} out of range [0, {count})")
    seg = presentation.segment_duration_s
    return SegmentRef(
        rep_id=rep_id,
        index=index,
        size_bytes=rep.segment_sizes_bytes[index],
        media_start_s=index * seg,
        availability_time_s=presentation.availability_time(index),
    )


def read_size_manifest(path: str | Path) -> dict[str, list[int]]:
    """Load a ``rep_id,index,size_bytes`` CSV into per-representation size lists."""
    rows: dict[str, dict[int, int]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["rep_id", "index", "size_bytes"]:
            raise MediaError(f"{path}: expected header rep_id,index,size_bytes, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                index, size = int(row["index"]), int(row["size_bytes"])
            except (TypeError, ValueError):
                raise MediaError(f"{path}:{lineno}: non-integer index or size") from None
            per_rep = rows.setdefault(row["rep_id"], {})
            if index in per_rep:
                raise MediaError(f"{path}:{lineno}: duplicate entry for {row['rep_id']!r} index {index}")
            per_rep[index] = size
    out = {}
    for rep_id, per_rep in rows.items():
        if sorted(per_rep) != list(range(len(per_rep))):
            raise MediaError(f"{path}: representation {rep_id!r} has gaps in its segment indices")
        out[rep_id] = [per_rep[i] for i in range(len(per_rep))]
    return out


def write_size_manifest(presentation: MediaPresentation, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rep_id", "index", "size_bytes"])
        for rep in presentation.representations:
            for i, size in enumerate(rep.segment_sizes_bytes):
                writer.writerow([rep.id, i, size])

