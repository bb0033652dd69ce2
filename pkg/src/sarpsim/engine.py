"""Discrete-event core and the scenario driver that wires the modules together."""

from __future__ import annotations

import hashlib
import heapq
import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

from .broadcast import (
    DeliveryOutcome,
    ErrorFile,
    ErrorFileLoss,
    FecParams,
    PacketBernoulli,
    Status,
    UniformLoss,
    broadcast_segment,
    generate_error_file,
)
from .errors import EngineError, SarpSimError, SessionError
from .media import MediaPresentation, PresentationConfig, build_presentation
from .player import Player, PlayerConfig, RunResult
from .sarp import ProxyMetrics, RecoveryMode, RecoveryRequest, RecoveryResult, SarpProxy
from .session import Established, FaultPlan, ServiceParams, run_session_start
from .unicast import Constant, RnisOracle, TokenBucket, UnicastChannel

__all__ = [
    "Kind",
    "Event",
    "EventQueue",
    "RngStreams",
    "ScenarioConfig",
    "ScenarioResult",
    "schedule",
    "run_until",
    "run_scenario",
    "error_file_for_seed",
]


class Kind(str, Enum):
    SEGMENT_AVAILABLE = "segment-available"
    BROADCAST_OUTCOME = "broadcast-outcome"
    RECOVERY_REQUEST = "recovery-request"
    TRANSFER_COMPLETE = "transfer-complete"
    PLAYBACK_TICK = "playback-tick"
    TRACE_STEP = "trace-step"


@dataclass(frozen=True, order=True)
class Event:
    time_s: float
    sequence: int
    kind: Kind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class EventQueue:
    """Min-heap of events ordered by (time, sequence)."""

    def __init__(self, handlers: dict[Kind, Callable[[EventQueue, Event], None]] | None = None):
        self.now = 0.0
        self.handlers = dict(handlers or {})
        self._heap: list[Event] = []
        self._seq = itertools.count()
        self.processed: list[tuple[float, Kind]] = []

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, time_s: float, kind: Kind, payload: Any = None) -> Event:
        if time_s < self.now:
            raise EngineError(f"cannot schedule {kind.value} at {time_s} s; clock is at {self.now} s")
        ev = Event(float(time_s), next(self._seq), Kind(kind), payload)
        heapq.heappush(self._heap, ev)
        return ev

    def run_until(self, t_end: float = float("inf")) -> int:
        count = 0
        while self._heap and self._heap[0].time_s <= t_end:
            ev = heapq.heappop(self._heap)
            self.now = ev.time_s
            self.processed.append((ev.time_s, ev.kind))
            handler = self.handlers.get(ev.kind)
            if handler is not None:
                handler(self, ev)
            count += 1
        return count


def schedule(queue: EventQueue, event: Event | tuple) -> Event:
    """Schedule an ``Event`` (its sequence is reassigned) or ``(time, kind, payload)``."""
    if isinstance(event, Event):
        return queue.schedule(event.time_s, event.kind, event.payload)
    return queue.schedule(*event)


def run_until(queue: EventQueue, t_end: float) -> int:
    return queue.run_until(t_end)


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


class RngStreams:
    """Independent named generators derived from one master seed.

    A stream depends only on ``(master_seed, name)``, so adding a consumer
    never shifts the numbers another stream produces.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            seq = np.random.SeedSequence([self.master_seed, _name_key(name)])
            self._streams[name] = np.random.default_rng(seq)
        return self._streams[name]

    __getitem__ = get


def error_file_for_seed(segment_count: int, fraction: float, seed: int) -> ErrorFile:
    """The error file a run with master ``seed`` uses when none is supplied."""
    return generate_error_file(segment_count, fraction, RngStreams(seed).get("error-file"))


@dataclass(frozen=True)
class ScenarioConfig:
    presentation: PresentationConfig = field(default_factory=PresentationConfig)
    # None: uniform loss at ``loss_fraction`` drawn from the "error-file" stream
    loss: ErrorFileLoss | UniformLoss | PacketBernoulli | None = None
    loss_fraction: float = 0.10
    bandwidth: Any = field(default_factory=lambda: Constant(4_000_000.0))
    mode: RecoveryMode = RecoveryMode.SARP_OFF
    player: PlayerConfig = field(default_factory=PlayerConfig)
    fec: FecParams = field(default_factory=FecParams)
    seed: int = 1
    burst_s: float = 0.1
    burst_bytes: float | None = None
    rnis_staleness_s: float = 0.0
    broadcast_delay_s: float = 0.0
    detection_delay_s: float = 0.0
    terminal_id: str = "ue-1"
    session: ServiceParams | None = None
    session_topology: tuple | None = None
    session_faults: FaultPlan | None = None
    signaling_latency_s: float = 0.0


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    presentation: MediaPresentation
    run: RunResult
    metrics: ProxyMetrics
    outcomes: list[DeliveryOutcome]
    recoveries: list[RecoveryResult]
    lost: frozenset[int]
    session: Established | None
    media_epoch_s: float
    events_processed: int
    processed: list[tuple[float, Kind]]

    def summary(self) -> dict:
        cfg = self.config
        out = {
            "seed": cfg.seed,
            "mode": RecoveryMode(cfg.mode).value,
            "bandwidth": cfg.bandwidth.describe(),
            "startup_latency_s": round(self.run.startup_latency_s, 6),
            "final_latency_s": round(self.run.final_latency_s, 6),
            "stall_total_s": round(self.run.stall_total_s, 6),
            "stall_count": self.run.stall_count,
            "lost_segments": len(self.lost),
        }
        out.update(self.metrics.as_dict())
        return out


def _resolve_lost(loss, cfg: ScenarioConfig, count: int, streams: RngStreams) -> frozenset[int]:
    if loss is None:
        return generate_error_file(count, cfg.loss_fraction, streams.get("error-file")).as_set()
    if isinstance(loss, PacketBernoulli):
        return frozenset()
    return loss.lost_set(count)


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Execute one scenario.

    Module rejections propagate as the module's own ``SarpSimError``
    subclass, whose message names the module.
    """
    try:
        return _run(cfg)
    except SarpSimError:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        raise EngineError(f"run seed={cfg.seed} failed: {exc!r}") from exc


def _run(cfg: ScenarioConfig) -> ScenarioResult:
    streams = RngStreams(cfg.seed)
    presentation = build_presentation(cfg.presentation, streams.get("vbr-sizes"))
    count = presentation.segment_count
    mode = RecoveryMode(cfg.mode)
    loss = cfg.loss
    lost = _resolve_lost(loss, cfg, count, streams)

    queue = EventQueue()
    session = None
    epoch = 0.0
    if cfg.session is not None:
        result = run_session_start(cfg.session, cfg.session_topology, cfg.session_faults,
                                   step_latency_s=cfg.signaling_latency_s)
        if not result.ok:
            raise SessionError(f"session start failed at step {result.step}: {result.reason}")
        session = result
        epoch = max((ev.time_s for ev in result.trace), default=0.0)
        for ev in result.trace:
            queue.schedule(ev.time_s, Kind.TRACE_STEP, ev)

    bucket = TokenBucket(cfg.bandwidth, cfg.burst_bytes, burst_s=cfg.burst_s, start_s=0.0)
    proxy = SarpProxy(presentation, RnisOracle(cfg.bandwidth, cfg.rnis_staleness_s), mode, UnicastChannel(bucket))
    player = Player(presentation, cfg.player)
    packet_rng = streams.get("packet-loss")
    outcomes: list[DeliveryOutcome] = []
    broadcast_rep = presentation.broadcast_rep_id

    def on_available(q: EventQueue, ev: Event) -> None:
        seg = presentation.segment_ref(broadcast_rep, ev.payload)
        outcome = broadcast_segment(seg, cfg.fec, loss, packet_rng, lost=lost,
                                    broadcast_delay_s=cfg.broadcast_delay_s)
        outcomes.append(outcome)
        when = outcome.decode_time_s if outcome.status is Status.DECODED else seg.availability_time_s
        q.schedule(epoch + when, Kind.BROADCAST_OUTCOME, outcome)

    def on_outcome(q: EventQueue, ev: Event) -> None:
        outcome: DeliveryOutcome = ev.payload
        if outcome.status is Status.DECODED:
            player.on_arrival(outcome.index, q.now - epoch)
        else:
            req = RecoveryRequest(cfg.terminal_id, outcome.index, q.now - epoch + cfg.detection_delay_s,
                                  broadcast_rep)
            q.schedule(epoch + req.request_time_s, Kind.RECOVERY_REQUEST, req)

    def on_request(q: EventQueue, ev: Event) -> None:
        result = proxy.handle(ev.payload)
        q.schedule(epoch + result.end_s, Kind.TRANSFER_COMPLETE, result)

    def on_transfer(q: EventQueue, ev: Event) -> None:
        player.on_arrival(ev.payload.segment_index, q.now - epoch)

    queue.handlers.update({
        Kind.SEGMENT_AVAILABLE: on_available,
        Kind.BROADCAST_OUTCOME: on_outcome,
        Kind.RECOVERY_REQUEST: on_request,
        Kind.TRANSFER_COMPLETE: on_transfer,
    })
    for i in range(count):
        queue.schedule(epoch + presentation.availability_time(i), Kind.SEGMENT_AVAILABLE, i)
    processed = queue.run_until(float("inf"))
    run = player.finish()
    lost_actual = frozenset(o.index for o in outcomes if o.status is Status.LOST)
    return ScenarioResult(
        config=cfg,
        presentation=presentation,
        run=run,
        metrics=proxy.record_metrics(),
        outcomes=outcomes,
        recoveries=list(proxy.log),
        lost=lost_actual,
        session=session,
        media_epoch_s=epoch,
        events_processed=processed,
        processed=queue.processed,
    )
