"""Adaptive recovery proxy hosted by the edge user-plane function.

Lost broadcast segments are requested here over unicast. With adaptation
on, the proxy asks the radio network information service how much
bandwidth the terminal currently has and serves the best representation
that fits below it; with adaptation off it always serves the broadcast
representation.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType

from .errors import ProxyError
from .media import MediaPresentation, select_representation
from .unicast import RnisOracle, UnicastChannel, rnis_query

__all__ = [
    "RecoveryMode",
    "RecoveryRequest",
    "RecoveryResult",
    "SegmentCache",
    "ProxyMetrics",
    "SarpProxy",
    "handle_recovery",
    "record_metrics",
]


class RecoveryMode(str, Enum):
    SARP_ON = "sarp-on"
    SARP_OFF = "sarp-off"


@dataclass(frozen=True)
class RecoveryRequest:
    terminal_id: str
    segment_index: int
    request_time_s: float
    default_rep_id: str


@dataclass(frozen=True)
class RecoveryResult:
    segment_index: int
    rep_id: str
    size_bytes: int
    request_time_s: float
    start_s: float
    end_s: float
    queried_bw_bps: float | None = None


class SegmentCache:
    """Read-only store of every (representation, segment) size."""

    def __init__(self, presentation: MediaPresentation):
        self._sizes = MappingProxyType({
            (rep.id, i): size
            for rep in presentation.representations
            for i, size in enumerate(rep.segment_sizes_bytes)
        })
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._sizes)

    def __contains__(self, key) -> bool:
        return key in self._sizes

    def snapshot(self) -> dict:
        return dict(self._sizes)

    def get(self, rep_id: str, index: int) -> int:
        try:
            size = self._sizes[(rep_id, index)]
        except KeyError:
            self.misses += 1
            raise ProxyError(f"cache miss for representation {rep_id!r} segment {index}") from None
        self.hits += 1
        return size


@dataclass
class ProxyMetrics:
    requests: int = 0
    recovery_bytes: int = 0
    served_reps: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        return {
            "recovery_count": self.requests,
            "recovery_bytes": self.recovery_bytes,
            "served_reps": dict(sorted(self.served_reps.items())),
        }


def handle_recovery(
    req: RecoveryRequest,
    mpd: MediaPresentation,
    rnis: RnisOracle,
    mode: RecoveryMode,
    channel: UnicastChannel,
    cache: SegmentCache | None = None,
) -> RecoveryResult:
    """Serve one recovery request and schedule its unicast transfer."""
    if not 0 <= req.segment_index < mpd.segment_count:
        raise ProxyError(f"unknown segment index {req.segment_index} (presentation has {mpd.segment_count})")
    mode = RecoveryMode(mode)
    bw = None
    if mode is RecoveryMode.SARP_OFF:
        rep_id = req.default_rep_id
    else:
        bw = rnis_query(rnis, req.terminal_id, req.request_time_s)
        rep_id = select_representation(mpd.representations, bw).id
    if cache is None:
        size = mpd.segment_size(rep_id, req.segment_index)
    else:
        size = cache.get(rep_id, req.segment_index)
    start, end = channel.schedule(size, req.request_time_s)
    return RecoveryResult(req.segment_index, rep_id, size, req.request_time_s, start, end, bw)


class SarpProxy:
    """Stateful proxy for one run: cache, unicast channel and counters."""

    def __init__(self, presentation: MediaPresentation, rnis: RnisOracle, mode: RecoveryMode,
                 channel: UnicastChannel):
        self.presentation = presentation
        self.rnis = rnis
        self.mode = RecoveryMode(mode)
        self.channel = channel
        self.cache = SegmentCache(presentation)
        self.metrics = ProxyMetrics()
        self.log: list[RecoveryResult] = []

    def handle(self, req: RecoveryRequest) -> RecoveryResult:
        result = handle_recovery(req, self.presentation, self.rnis, self.mode, self.channel, self.cache)
        self.metrics.requests += 1
        self.metrics.recovery_bytes += result.size_bytes
        self.metrics.served_reps[result.rep_id] += 1
        self.log.append(result)
        return result

    def record_metrics(self) -> ProxyMetrics:
        return self.metrics


def record_metrics(proxy: SarpProxy) -> ProxyMetrics:
    return proxy.record_metrics()
