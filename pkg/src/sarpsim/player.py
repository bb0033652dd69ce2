"""Live DASH player emulation: startup, stalls, live latency, rate adaptation.

The player is driven by segment arrival times and integrates its playback
position analytically between events, so a run costs O(events) rather than
O(duration / tick).

Latency control uses a single target ``target_latency_s`` (initially the
startup latency). After every stall the target rises by
``buffer_growth_per_stall_s``; a short stall is absorbed, so the target is
placed one growth step above the post-stall latency and playback slows to
``slow_down_rate`` until it gets there. A stall that leaves latency more than
``catch_up_trigger_s`` above the raised target counts as long: the target
only rises by one step, and playback speeds up to ``catch_up_rate`` (with at
least one segment buffered) until latency is back on target.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .errors import PlayerError
from .media import MediaPresentation

__all__ = [
    "PlayerConfig",
    "PlayerState",
    "LatencySample",
    "RunResult",
    "Player",
    "run_playback",
    "live_latency",
    "stall_total",
    "TIMESERIES_HEADER",
]

_EPS = 1e-9
TIMESERIES_HEADER = ("wall_s", "playback_s", "live_latency_s", "buffer_s", "stalled")


@dataclass(frozen=True)
class PlayerConfig:
    initial_buffer_segments: float = 1.5
    catch_up_rate: float = 1.043
    catch_up_trigger_s: float = 0.5
    buffer_growth_per_stall_s: float | None = None  # None: one segment duration
    latency_target_s: float | None = None  # None: measured startup latency
    slow_down_rate: float = 0.957
    sample_interval_s: float = 0.1

    def __post_init__(self):
        if not self.initial_buffer_segments > 0:
            raise PlayerError(f"initial_buffer_segments must be > 0, got {self.initial_buffer_segments}")
        if not self.catch_up_rate > 1:
            raise PlayerError(f"catch_up_rate must be > 1, got {self.catch_up_rate}")
        if not 0 < self.slow_down_rate <= 1:
            raise PlayerError(f"slow_down_rate must be in (0, 1], got {self.slow_down_rate}")
        if self.catch_up_trigger_s < 0:
            raise PlayerError("catch_up_trigger_s must be >= 0")
        if self.buffer_growth_per_stall_s is not None and self.buffer_growth_per_stall_s < 0:
            raise PlayerError("buffer_growth_per_stall_s must be >= 0")
        if not self.sample_interval_s > 0:
            raise PlayerError("sample_interval_s must be > 0")


@dataclass
class PlayerState:
    wall_s: float = 0.0
    playback_media_s: float = 0.0
    playing: bool = False
    started: bool = False
    ended: bool = False
    playback_rate: float = 0.0
    target_buffer_s: float = 0.0
    target_latency_s: float = 0.0
    buffered: list[tuple[int, float]] = field(default_factory=list)
    stall_log: list[tuple[float, float]] = field(default_factory=list)

    @property
    def stalled(self) -> bool:
        return self.started and not self.playing and not self.ended


@dataclass(frozen=True)
class LatencySample:
    wall_s: float
    playback_media_s: float
    live_latency_s: float


@dataclass(frozen=True)
class RunResult:
    """Outcome of one playback.

    ``breakpoints`` holds ``(wall_s, playback_s, rate, stalled)`` at every
    state change; between two breakpoints playback advances linearly at
    ``rate``. ``timeseries`` is the sampled view (columns as in
    ``TIMESERIES_HEADER``).
    """

    startup_time_s: float
    startup_latency_s: float
    end_time_s: float
    final_latency_s: float
    stall_log: tuple[tuple[float, float], ...]
    breakpoints: tuple[tuple[float, float, float, bool], ...]
    timeseries: np.ndarray
    final_state: PlayerState

    @property
    def stall_count(self) -> int:
        return len(self.stall_log)

    @property
    def stall_total_s(self) -> float:
        return sum(e - s for s, e in self.stall_log)

    def latency_at(self, wall_s: float) -> float:
        return wall_s - self.position_at(wall_s)

    def position_at(self, wall_s: float) -> float:
        bps = self.breakpoints
        if wall_s < bps[0][0]:
            return 0.0
        times = [b[0] for b in bps]
        i = int(np.searchsorted(times, wall_s, side="right")) - 1
        t, pos, rate, _ = bps[i]
        return pos + rate * (wall_s - t)


class Player:
    """Incremental player; feed arrivals in time order, then call :meth:`finish`."""

    def __init__(self, presentation: MediaPresentation, cfg: PlayerConfig | None = None):
        self.cfg = cfg or PlayerConfig()
        self.seg = presentation.segment_duration_s
        self.count = presentation.segment_count
        self.total_media = self.count * self.seg
        self.growth = self.seg if self.cfg.buffer_growth_per_stall_s is None else self.cfg.buffer_growth_per_stall_s
        ib = self.cfg.initial_buffer_segments
        self.initial_buffer_s = ib * self.seg
        self.startup_segments = min(self.count, max(1, math.ceil(ib - _EPS)))
        self.state = PlayerState(target_buffer_s=self.initial_buffer_s)
        self._arrived = np.zeros(self.count, dtype=bool)
        self._contig = 0
        self._mode = "normal"
        self._stall_start: float | None = None
        self._startup_time = math.nan
        self._startup_latency = math.nan
        self._end_time = math.nan
        self._breakpoints: list[tuple[float, float, float, bool]] = []
        self._contig_steps: list[tuple[float, float]] = [(0.0, 0.0)]

    # -- derived quantities -------------------------------------------------
    @property
    def contig_end(self) -> float:
        return self._contig * self.seg

    @property
    def latency(self) -> float:
        return live_latency(self.state)

    @property
    def buffer_s(self) -> float:
        return max(0.0, self.contig_end - self.state.playback_media_s)

    # -- event handling -----------------------------------------------------
    def on_arrival(self, index: int, t: float) -> None:
        if not 0 <= index < self.count:
            raise PlayerError(f"arrival for unknown segment index {index}")
        if self._arrived[index]:
            raise PlayerError(f"segment {index} delivered twice")
        if t < self.state.wall_s - _EPS:
            raise PlayerError(f"arrival at {t} s precedes player clock {self.state.wall_s} s")
        self.advance_to(t)
        self._arrived[index] = True
        self.state.buffered.append((index, t))
        before = self._contig
        while self._contig < self.count and self._arrived[self._contig]:
            self._contig += 1
        if self._contig != before:
            self._contig_steps.append((t, self.contig_end))
        st = self.state
        if not st.started:
            if self._contig >= self.startup_segments:
                self._start(t)
        elif st.stalled and self.contig_end > st.playback_media_s + _EPS:
            self._resume(t)
        elif st.playing:
            self._decide_rate()

    def _record(self) -> None:
        st = self.state
        bp = (st.wall_s, st.playback_media_s, st.playback_rate, st.stalled)
        if self._breakpoints and self._breakpoints[-1][0] == st.wall_s:
            self._breakpoints[-1] = bp
        else:
            self._breakpoints.append(bp)

    def _start(self, t: float) -> None:
        st = self.state
        st.started = True
        st.playing = True
        st.playback_media_s = (self.startup_segments - self.cfg.initial_buffer_segments) * self.seg
        st.playback_media_s = max(0.0, st.playback_media_s)
        self._startup_time = t
        self._startup_latency = t - st.playback_media_s
        target = self.cfg.latency_target_s
        st.target_latency_s = self._startup_latency if target is None else target
        self._decide_rate()

    def _resume(self, t: float) -> None:
        st = self.state
        start = self._stall_start
        self._stall_start = None
        st.playing = True
        if t > start:
            st.stall_log.append((start, t))
            st.target_buffer_s += self.growth
            raised = st.target_latency_s + self.growth
            latency = t - st.playback_media_s
            if latency - raised > self.cfg.catch_up_trigger_s:
                st.target_latency_s = raised
            else:
                st.target_latency_s = max(raised, latency + self.growth)
        self._mode = "normal"
        self._decide_rate()

    def _decide_rate(self) -> None:
        st = self.state
        lat = st.wall_s - st.playback_media_s
        if self._mode == "catchup" and lat > st.target_latency_s + _EPS:
            rate = self.cfg.catch_up_rate
        elif lat - st.target_latency_s > self.cfg.catch_up_trigger_s and self.buffer_s >= self.seg - _EPS:
            self._mode = "catchup"
            rate = self.cfg.catch_up_rate
        elif lat < st.target_latency_s - _EPS and self.cfg.slow_down_rate < 1.0:
            self._mode = "slow"
            rate = self.cfg.slow_down_rate
        else:
            self._mode = "normal"
            rate = 1.0
        st.playback_rate = rate
        self._record()

    def advance_to(self, t: float) -> None:
        st = self.state
        while st.playing:
            rate = st.playback_rate
            t_exhaust = st.wall_s + (self.contig_end - st.playback_media_s) / rate
            t_switch = math.inf
            lat = st.wall_s - st.playback_media_s
            if self._mode == "catchup":
                t_switch = st.wall_s + max(0.0, lat - st.target_latency_s) / (rate - 1.0)
            elif self._mode == "slow":
                t_switch = st.wall_s + max(0.0, st.target_latency_s - lat) / (1.0 - rate)
            t_next = min(t, t_exhaust, t_switch)
            st.playback_media_s += rate * (t_next - st.wall_s)
            st.wall_s = t_next
            if t_exhaust <= t_next:
                st.playback_media_s = self.contig_end
                st.playing = False
                st.playback_rate = 0.0
                self._mode = "normal"
                if self._contig >= self.count:
                    st.ended = True
                    self._end_time = t_next
                else:
                    self._stall_start = t_next
                self._record()
            elif t_switch <= t_next:
                st.playback_media_s = st.wall_s - st.target_latency_s
                self._mode = "normal"
                self._decide_rate()
            else:
                return
        if not st.ended:
            st.wall_s = max(st.wall_s, t)

    def finish(self) -> RunResult:
        if self._contig < self.count:
            missing = int(np.flatnonzero(~self._arrived)[0])
            raise PlayerError(f"segment {missing} never delivered")
        if not self.state.started:
            raise PlayerError("playback never started")
        self.advance_to(math.inf)
        return self._result()

    # -- output ------------------------------------------------------------
    def _result(self) -> RunResult:
        st = self.state
        breakpoints = tuple(self._breakpoints)
        series = self._sample(breakpoints)
        return RunResult(
            startup_time_s=self._startup_time,
            startup_latency_s=self._startup_latency,
            end_time_s=self._end_time,
            final_latency_s=self._end_time - self.total_media,
            stall_log=tuple(st.stall_log),
            breakpoints=breakpoints,
            timeseries=series,
            final_state=st,
        )

    def _sample(self, breakpoints) -> np.ndarray:
        dt = self.cfg.sample_interval_s
        n = int(math.floor(self._end_time / dt + _EPS))
        grid = np.round(np.arange(n + 1) * dt, 9)
        event_times = [b[0] for b in breakpoints] + [t for t, _ in self._contig_steps]
        times = np.unique(np.concatenate([grid, np.round(event_times, 9), [self._end_time]]))
        times = times[times <= self._end_time + _EPS]

        bp_t = np.array([b[0] for b in breakpoints])
        bp_pos = np.array([b[1] for b in breakpoints])
        bp_rate = np.array([b[2] for b in breakpoints])
        bp_stall = np.array([b[3] for b in breakpoints], dtype=bool)
        idx = np.searchsorted(bp_t, times, side="right") - 1
        before = idx < 0
        idx = np.clip(idx, 0, None)
        pos = np.where(before, 0.0, bp_pos[idx] + bp_rate[idx] * (times - bp_t[idx]))
        stalled = np.where(before, False, bp_stall[idx])

        c_t = np.array([c[0] for c in self._contig_steps])
        c_end = np.array([c[1] for c in self._contig_steps])
        cidx = np.searchsorted(c_t, times, side="right") - 1
        buffer = np.maximum(0.0, c_end[cidx] - pos)
        latency = times - pos
        return np.column_stack([times, pos, latency, buffer, stalled.astype(float)])


def run_playback(
    presentation: MediaPresentation,
    arrivals: Iterable[tuple[int, float]],
    cfg: PlayerConfig | None = None,
) -> RunResult:
    """Play a presentation given ``(segment_index, arrival_time_s)`` pairs.

    Every segment must appear exactly once; pairs are processed in
    ``(time, index)`` order.
    """
    events = sorted((float(t), int(i)) for i, t in arrivals)
    seen = [i for _, i in events]
    if len(set(seen)) != len(seen):
        dup = next(i for i in seen if seen.count(i) > 1)
        raise PlayerError(f"segment {dup} appears more than once in the event stream")
    count = presentation.segment_count
    if set(seen) != set(range(count)):
        missing = sorted(set(range(count)) - set(seen))
        extra = sorted(set(seen) - set(range(count)))
        raise PlayerError(f"event stream missing segments {missing[:5]} / unknown segments {extra[:5]}")
    player = Player(presentation, cfg)
    for t, i in events:
        player.on_arrival(i, t)
    return player.finish()


def live_latency(state: PlayerState, live_edge_s: float | None = None) -> float:
    """Wall-clock gap between the live edge and the playback position.

    The live source emits media in real time from wall 0, so the live edge
    defaults to ``state.wall_s``. Before startup nothing has been played.
    """
    edge = state.wall_s if live_edge_s is None else live_edge_s
    if not state.started:
        return edge
    return edge - state.playback_media_s


def stall_total(run_result, window: tuple[float, float]) -> float:
    """Seconds of stall inside ``window``; accepts a RunResult or a stall log."""
    t0, t1 = window
    if not t0 < t1:
        raise PlayerError(f"window must satisfy t0 < t1, got {window}")
    log = run_result.stall_log if hasattr(run_result, "stall_log") else run_result
    return float(sum(max(0.0, min(e, t1) - max(s, t0)) for s, e in log))
