"""Broadcast session start procedure as an ordered message exchange.

Entities: content provider (CP), VSCF (control-plane application
function), AMF, RAN, SMF, PCF, UPF and VSUF (user-plane application
function). Global steps run once per session; the rest run once per
broadcast area. The VSUF is only configured (12.a/12.b) after the network
side has confirmed resources in every area (step 11).
"""

from __future__ import annotations

import csv
import ipaddress
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import SessionError

__all__ = [
    "STEP_LABELS",
    "GLOBAL_STEPS",
    "CANONICAL_ORDER",
    "IngestMode",
    "ServiceParams",
    "AreaTopology",
    "default_topology",
    "PccRule",
    "PduSessionContext",
    "TraceEvent",
    "FaultMode",
    "FaultPlan",
    "SmfState",
    "Established",
    "Failed",
    "allocate_multicast_address",
    "create_pcc_rule",
    "run_session_start",
    "validate_trace",
    "write_trace_csv",
    "read_trace_csv",
]

STEP_LABELS = ("1", "2", "3", "4.a", "4.b", "5", "6", "7", "8.a", "8.b",
               "9.a", "9.b", "10", "11", "12.a", "12.b", "12")
GLOBAL_STEPS = frozenset({"1", "2", "11", "12"})
GLOBAL_AREA = "*"

# step -> (sender, receiver)
ACTORS = {
    "1": ("CP", "VSCF"),
    "2": ("VSCF", "AMF"),
    "3": ("AMF", "RAN"),
    "4.a": ("RAN", "RAN"),
    "4.b": ("AMF", "SMF"),
    "5": ("RAN", "AMF"),
    "6": ("SMF", "SMF"),
    "7": ("SMF", "PCF"),
    "8.a": ("VSCF", "PCF"),
    "8.b": ("SMF", "PCF"),
    "9.a": ("SMF", "UPF"),
    "9.b": ("SMF", "UPF"),
    "10": ("SMF", "AMF"),
    "11": ("AMF", "VSCF"),
    "12.a": ("VSCF", "VSUF"),
    "12.b": ("VSUF", "VSCF"),
    "12": ("VSCF", "CP"),
}

# step -> groups of predecessors; every group needs one member to precede the step
PREDECESSORS = {
    "2": (("1",),),
    "3": (("2",),),
    "4.a": (("3",),),
    "4.b": (("3",),),
    "5": (("4.a",),),
    "6": (("5",), ("4.b",)),
    "7": (("6",),),
    "8.a": (("7",),),
    "8.b": (("8.a",),),
    "9.a": (("8.b",),),
    "9.b": (("8.b",),),
    "10": (("9.a", "9.b"),),
    "11": (("10",),),
    "12.a": (("11",),),
    "12.b": (("11",),),
    "12": (("12.a",), ("12.b",)),
}

CANONICAL_ORDER = ("1", "2", "3", "4.a", "4.b", "5", "6", "7", "8.a", "8.b",
                   "9.b", "10", "11", "12.a", "12.b", "12")


class IngestMode(str, Enum):
    PUSH = "push"
    PULL = "pull"


@dataclass(frozen=True)
class ServiceParams:
    max_video_bitrate_bps: float = 6_000_000.0
    max_delay_s: float = 0.3
    broadcast_areas: tuple[str, ...] = ("area-1",)
    dnn: str = "mbs.video"
    ingest_mode: IngestMode = IngestMode.PUSH

    def __post_init__(self):
        if not self.broadcast_areas:
            raise SessionError("service needs at least one broadcast area")
        if len(set(self.broadcast_areas)) != len(self.broadcast_areas):
            raise SessionError(f"duplicate broadcast areas in {self.broadcast_areas}")
        if not self.max_video_bitrate_bps > 0 or not self.max_delay_s > 0:
            raise SessionError("max bitrate and max delay must be positive")


@dataclass(frozen=True)
class AreaTopology:
    area: str
    ran_id: str
    smf_id: str
    upf_id: str
    vsuf_id: str
    upf_locality: str = "mec"  # "mec" -> step 9.b, "core" -> step 9.a
    multicast_pool: str = "239.1.1.0/28"

    def __post_init__(self):
        if self.upf_locality not in ("mec", "core"):
            raise SessionError(f"upf_locality must be 'mec' or 'core', got {self.upf_locality!r}")

    @property
    def upf_step(self) -> str:
        return "9.b" if self.upf_locality == "mec" else "9.a"


def default_topology(areas, upf_locality: str = "mec") -> tuple[AreaTopology, ...]:
    return tuple(
        AreaTopology(
            area=a,
            ran_id=f"ran-{i}",
            smf_id=f"smf-{i}",
            upf_id=f"upf-{i}",
            vsuf_id=f"vsuf-{i}",
            upf_locality=upf_locality,
            multicast_pool=f"239.1.{i}.0/28",
        )
        for i, a in enumerate(areas, start=1)
    )


@dataclass(frozen=True)
class PccRule:
    rule_id: str
    max_bitrate_bps: float
    max_delay_s: float
    flow_description: str


@dataclass(frozen=True)
class PduSessionContext:
    pdu_session_id: str
    dnn: str
    area: str
    ip_multicast_address: str
    pcc_rule: PccRule | None = None


@dataclass(frozen=True)
class TraceEvent:
    step: str
    actor: str
    area: str
    time_s: float


class FaultMode(str, Enum):
    DROP = "drop"
    REJECT = "reject"


@dataclass(frozen=True)
class FaultPlan:
    faults: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for label, mode in self.faults.items():
            if label not in STEP_LABELS:
                raise SessionError(f"unknown step label {label!r} in fault plan")
            clean[label] = FaultMode(mode)
        object.__setattr__(self, "faults", clean)

    def mode(self, label: str) -> FaultMode | None:
        return self.faults.get(label)


class SmfState:
    """Per-SMF allocator for multicast addresses and PDU session ids."""

    def __init__(self, smf_id: str, pool: str):
        self.smf_id = smf_id
        self._pool = iter(ipaddress.ip_network(pool))
        self._sessions = 0

    def next_pdu_session_id(self) -> str:
        self._sessions += 1
        return f"{self.smf_id}/pdu-{self._sessions}"


def allocate_multicast_address(smf: SmfState) -> str:
    try:
        return str(next(smf._pool))
    except StopIteration:
        raise SessionError(f"multicast address pool of {smf.smf_id} is exhausted") from None


def create_pcc_rule(params: ServiceParams, ctx: PduSessionContext, port: int = 5000) -> PccRule:
    return PccRule(
        rule_id=f"pcc:{ctx.pdu_session_id}",
        max_bitrate_bps=params.max_video_bitrate_bps,
        max_delay_s=params.max_delay_s,
        flow_description=f"{ctx.ip_multicast_address}:{port}",
    )


@dataclass(frozen=True)
class Established:
    contexts: tuple[PduSessionContext, ...]
    trace: tuple[TraceEvent, ...]
    ok = True


@dataclass(frozen=True)
class Failed:
    step: str
    reason: str
    trace: tuple[TraceEvent, ...]
    ok = False


class _Abort(Exception):
    def __init__(self, step: str, reason: str):
        self.step = step
        self.reason = reason


class _Procedure:
    def __init__(self, params, topology, faults, start_s, step_latency_s):
        self.params = params
        self.topology = {t.area: t for t in topology}
        missing = [a for a in params.broadcast_areas if a not in self.topology]
        if missing:
            raise SessionError(f"topology has no RAN/SMF/UPF set for areas {missing}")
        self.faults = faults or FaultPlan()
        self.now = start_s
        self.step_latency_s = step_latency_s
        self.trace: list[TraceEvent] = []
        # ordered in-process queues keyed by (sender entity, receiver entity)
        self.queues: dict[tuple[str, str], deque] = defaultdict(deque)
        self.smfs: dict[str, SmfState] = {}
        self.contexts: dict[str, PduSessionContext] = {}
        self.rules: dict[str, PccRule] = {}

    def _entity(self, role: str, area: str) -> str:
        if area == GLOBAL_AREA or role in ("CP", "VSCF", "AMF", "PCF"):
            return role
        topo = self.topology[area]
        return {"RAN": topo.ran_id, "SMF": topo.smf_id, "UPF": topo.upf_id, "VSUF": topo.vsuf_id}[role]

    def send(self, step: str, area: str = GLOBAL_AREA) -> None:
        sender, receiver = ACTORS[step]
        src, dst = self._entity(sender, area), self._entity(receiver, area)
        fault = self.faults.mode(step)
        if fault is FaultMode.DROP:
            raise _Abort(step, f"message {src}->{dst} dropped")
        queue = self.queues[(src, dst)]
        queue.append((step, area))
        if fault is FaultMode.REJECT:
            raise _Abort(step, f"{dst} rejected the request from {src}")
        queue.popleft()
        self.now += self.step_latency_s
        self.trace.append(TraceEvent(step, sender, area, self.now))

    def run(self):
        p = self.params
        areas = p.broadcast_areas
        self.send("1")
        self.send("2")
        for a in areas:
            self.send("3", a)
        # radio allocation and SMF selection proceed independently per area
        for a in areas:
            self.send("4.a", a)
            self.send("4.b", a)
        for a in areas:
            self.send("5", a)
        for a in areas:
            topo = self.topology[a]
            smf = self.smfs.setdefault(topo.smf_id, SmfState(topo.smf_id, topo.multicast_pool))
            try:
                address = allocate_multicast_address(smf)
            except SessionError as exc:
                raise _Abort("6", str(exc)) from None
            if any(c.ip_multicast_address == address for c in self.contexts.values()):
                raise _Abort("6", f"multicast address {address} already in use")
            self.send("6", a)
            self.contexts[a] = PduSessionContext(smf.next_pdu_session_id(), p.dnn, a, address)
        for a in areas:
            self.send("7", a)
        for a in areas:
            self.send("8.a", a)
            self.rules[a] = create_pcc_rule(p, self.contexts[a])
        for a in areas:
            self.send("8.b", a)
            ctx = self.contexts[a]
            self.contexts[a] = PduSessionContext(ctx.pdu_session_id, ctx.dnn, ctx.area,
                                                 ctx.ip_multicast_address, self.rules[a])
        for a in areas:
            self.send(self.topology[a].upf_step, a)
        for a in areas:
            self.send("10", a)
        self.send("11")
        for a in areas:
            self.send("12.a", a)
        for a in areas:
            self.send("12.b", a)
        self.send("12")
        return tuple(self.contexts[a] for a in areas)


def run_session_start(
    params: ServiceParams,
    topology=None,
    faults: FaultPlan | None = None,
    *,
    start_s: float = 0.0,
    step_latency_s: float = 0.0,
):
    """Run the procedure; returns :class:`Established` or :class:`Failed`.

    Any dropped or rejected message aborts the whole procedure. A fault on
    a step the topology never executes (9.a in an all-MEC deployment, or
    9.b in an all-core one) has no effect.
    """
    if topology is None:
        topology = default_topology(params.broadcast_areas)
    proc = _Procedure(params, topology, faults, start_s, step_latency_s)
    try:
        contexts = proc.run()
    except _Abort as abort:
        return Failed(abort.step, abort.reason, tuple(proc.trace))
    return Established(contexts, tuple(proc.trace))


def validate_trace(trace) -> list[str]:
    """List ordering, multiplicity and actor violations in ``trace``."""
    violations = []
    first_pos: dict[tuple[str, str], int] = {}
    areas = sorted({ev.area for ev in trace if ev.area != GLOBAL_AREA})
    for i, ev in enumerate(trace):
        if ev.step not in ACTORS:
            violations.append(f"unknown step {ev.step!r} at position {i}")
            continue
        key = (ev.step, ev.area)
        if key in first_pos:
            violations.append(f"step {ev.step} repeated for area {ev.area} (positions {first_pos[key]} and {i})")
        else:
            first_pos[key] = i
        if ev.actor != ACTORS[ev.step][0]:
            violations.append(f"step {ev.step} sent by {ev.actor}, expected {ACTORS[ev.step][0]}")
        if (ev.step in GLOBAL_STEPS) != (ev.area == GLOBAL_AREA):
            violations.append(f"step {ev.step} recorded with area {ev.area!r}")
    for a in areas:
        if ("9.a", a) in first_pos and ("9.b", a) in first_pos:
            violations.append(f"area {a} programs UPFs both in the core (9.a) and at the edge (9.b)")

    def pred_positions(pred: str, area: str) -> list[int]:
        if pred in GLOBAL_STEPS:
            return [first_pos.get((pred, GLOBAL_AREA))]
        if area == GLOBAL_AREA:
            return [first_pos.get((pred, a)) for a in areas]
        return [first_pos.get((pred, area))]

    for i, ev in enumerate(trace):
        for group in PREDECESSORS.get(ev.step, ()):
            satisfied = False
            for pred in group:
                positions = pred_positions(pred, ev.area)
                if positions and all(pos is not None and pos < i for pos in positions):
                    satisfied = True
                    break
            if not satisfied:
                where = "" if ev.area == GLOBAL_AREA else f" (area {ev.area})"
                violations.append(f"step {ev.step}{where} occurs before {' or '.join(group)}")
    return violations


def write_trace_csv(trace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "actor", "area", "time_s"])
        for ev in trace:
            writer.writerow([ev.step, ev.actor, ev.area, f"{ev.time_s:.6f}"])


def read_trace_csv(path: str | Path) -> tuple[TraceEvent, ...]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["step", "actor", "area", "time_s"]:
            raise SessionError(f"{path}: expected header step,actor,area,time_s")
        return tuple(TraceEvent(r["step"], r["actor"], r["area"], float(r["time_s"])) for r in reader)
