"""Broadcast channel model: packetization, ideal-erasure AL-FEC, segment loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import BroadcastError
from .media import SegmentRef

__all__ = [
    "FecParams",
    "ErrorFile",
    "ErrorFileLoss",
    "UniformLoss",
    "PacketBernoulli",
    "Status",
    "DeliveryOutcome",
    "generate_error_file",
    "broadcast_segment",
    "segment_loss_probability",
    "read_error_file",
    "write_error_file",
]


@dataclass(frozen=True)
class FecParams:
    packet_payload_bytes: int = 1024
    repair_overhead: float = 0.1

    def __post_init__(self):
        if self.packet_payload_bytes <= 0:
            raise BroadcastError(f"packet_payload_bytes must be > 0, got {self.packet_payload_bytes}")
        if self.repair_overhead < 0:
            raise BroadcastError(f"repair_overhead must be >= 0, got {self.repair_overhead}")

    def source_packets(self, size_bytes: int) -> int:
        return max(1, math.ceil(size_bytes / self.packet_payload_bytes))

    def repair_packets(self, source_packets: int) -> int:
        # round before ceil so 0.1 * 10 gives 1, not 2
        return math.ceil(round(self.repair_overhead * source_packets, 9))


@dataclass(frozen=True)
class ErrorFile:
    lost_indices: tuple[int, ...] = ()

    def __post_init__(self):
        prev = -1
        for i in self.lost_indices:
            if not isinstance(i, (int, np.integer)) or i < 0:
                raise BroadcastError(f"invalid segment index {i!r}")
            if i <= prev:
                raise BroadcastError(f"indices must be strictly ascending ({prev} then {i})")
            prev = i

    def __len__(self) -> int:
        return len(self.lost_indices)

    def __contains__(self, index: int) -> bool:
        return index in self.as_set()

    def as_set(self) -> frozenset[int]:
        return frozenset(self.lost_indices)

    def check_bound(self, segment_count: int) -> None:
        if self.lost_indices and self.lost_indices[-1] >= segment_count:
            raise BroadcastError(
                f"error file index {self.lost_indices[-1]} exceeds segment count {segment_count}"
            )


@dataclass(frozen=True)
class ErrorFileLoss:
    error_file: ErrorFile

    def lost_set(self, segment_count: int) -> frozenset[int]:
        self.error_file.check_bound(segment_count)
        return self.error_file.as_set()


@dataclass(frozen=True)
class UniformLoss:
    fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise BroadcastError(f"loss fraction must be in [0, 1], got {self.fraction}")

    def lost_set(self, segment_count: int) -> frozenset[int]:
        return generate_error_file(segment_count, self.fraction, self.seed).as_set()


@dataclass(frozen=True)
class PacketBernoulli:
    p: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise BroadcastError(f"packet loss probability must be in [0, 1], got {self.p}")


class Status(str, Enum):
    DECODED = "decoded"
    LOST = "lost"


@dataclass(frozen=True)
class DeliveryOutcome:
    index: int
    status: Status
    decode_time_s: float | None = None


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-12))


def generate_error_file(segment_count: int, loss_fraction: float, seed: int | np.random.Generator) -> ErrorFile:
    """Draw ``round(loss_fraction * segment_count)`` distinct indices uniformly."""
    if segment_count < 0:
        raise BroadcastError(f"segment_count must be >= 0, got {segment_count}")
    if not 0.0 <= loss_fraction <= 1.0:
        raise BroadcastError(f"loss fraction must be in [0, 1], got {loss_fraction}")
    k = _round_half_up(loss_fraction * segment_count)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    picked = rng.choice(segment_count, size=k, replace=False) if k else np.empty(0, dtype=np.int64)
    return ErrorFile(tuple(int(i) for i in np.sort(picked)))


def segment_loss_probability(n: int, k: int, p: float) -> float:
    """P[fewer than ``n`` of ``n + k`` packets arrive] with i.i.d. packet loss ``p``."""
    if n < 1 or k < 0:
        raise BroadcastError(f"need N >= 1 and K >= 0, got N={n}, K={k}")
    if not 0.0 <= p <= 1.0:
        raise BroadcastError(f"p must be in [0, 1], got {p}")
    return float(stats.binom.cdf(n - 1, n + k, 1.0 - p))


def broadcast_segment(
    seg: SegmentRef,
    fec: FecParams,
    loss,
    rng: np.random.Generator | None = None,
    *,
    lost: frozenset[int] | None = None,
    broadcast_delay_s: float = 0.0,
) -> DeliveryOutcome:
    """Deliver one segment over the broadcast channel.

    ``UniformLoss`` needs the resolved ``lost`` set because drawing it
    requires the segment count; the run driver resolves it once per run.
    """
    if isinstance(loss, PacketBernoulli):
        if rng is None:
            raise BroadcastError("PacketBernoulli loss needs a random stream")
        n = fec.source_packets(seg.size_bytes)
        k = fec.repair_packets(n)
        received = int(rng.binomial(n + k, 1.0 - loss.p))
        decoded = received >= n
    else:
        if lost is None:
            if not isinstance(loss, ErrorFileLoss):
                raise BroadcastError("uniform loss needs the resolved lost set")
            lost = loss.error_file.as_set()
        decoded = seg.index not in lost
    if decoded:
        return DeliveryOutcome(seg.index, Status.DECODED, seg.availability_time_s + broadcast_delay_s)
    return DeliveryOutcome(seg.index, Status.LOST)


def write_error_file(ef: ErrorFile, path: str | Path) -> None:
    with open(path, "w", newline="\n") as fh:
        for i in ef.lost_indices:
            fh.write(f"{i}\n")


def read_error_file(path: str | Path) -> ErrorFile:
    indices: list[int] = []
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.isdigit() or not line.isascii():
                raise BroadcastError(f"{path}:{lineno}: not a decimal segment index: {line!r}")
            value = int(line)
            if indices and value == indices[-1]:
                raise BroadcastError(f"{path}:{lineno}: duplicate index {value}")
            if indices and value < indices[-1]:
                raise BroadcastError(f"{path}:{lineno}: index {value} is not ascending")
            indices.append(value)
    return ErrorFile(tuple(indices))
