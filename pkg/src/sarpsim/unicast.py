"""Unicast recovery channel: bandwidth profiles, token-bucket shaping, RNIS."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UnicastError

__all__ = [
    "Constant",
    "Trace",
    "Synthetic",
    "TokenBucket",
    "RnisOracle",
    "TICK_S",
    "profile_rate",
    "download_duration",
    "rnis_query",
    "read_bandwidth_trace",
    "write_bandwidth_trace",
    "PROFILE_A",
    "PROFILE_B",
    "UnicastChannel",
]

TICK_S = 1e-3


@dataclass(frozen=True)
class Constant:
    rate_bps: float

    def __post_init__(self):
        if not self.rate_bps > 0:
            raise UnicastError(f"rate must be > 0, got {self.rate_bps}")

    def rate(self, t: float) -> float:
        return self.rate_bps

    def next_change(self, t: float) -> float:
        return math.inf

    @property
    def nominal_rate_bps(self) -> float:
        return self.rate_bps

    def describe(self) -> str:
        return f"constant:{self.rate_bps:g}"


@dataclass(frozen=True)
class Trace:
    """Step-wise rate: each entry holds until the next entry's time."""

    points: tuple[tuple[float, float], ...]
    _times: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = tuple((float(t), float(r)) for t, r in self.points)
        if not pts:
            raise UnicastError("bandwidth trace is empty")
        if pts[0][0] != 0.0:
            raise UnicastError(f"trace must start at t=0, first entry is at {pts[0][0]}")
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if not t1 > t0:
                raise UnicastError(f"trace times must be strictly ascending ({t0} then {t1})")
        for t, r in pts:
            if not r > 0:
                raise UnicastError(f"trace rate at t={t} must be > 0, got {r}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_times", tuple(t for t, _ in pts))

    def rate(self, t: float) -> float:
        if t < 0:
            raise UnicastError(f"time {t} precedes the first trace entry")
        return self.points[bisect.bisect_right(self._times, t) - 1][1]

    def next_change(self, t: float) -> float:
        i = bisect.bisect_right(self._times, t)
        return self._times[i] if i < len(self._times) else math.inf

    @property
    def nominal_rate_bps(self) -> float:
        return float(np.mean([r for _, r in self.points]))

    def describe(self) -> str:
        return f"trace:{len(self.points)}pts"


@dataclass(frozen=True)
class Synthetic:
    """Seeded AR(1) rate process with a target mean and variance.

    The log-rate follows a Gaussian AR(1) with coefficient ``phi``; the
    Gaussian path is standardized over the horizon before exponentiation so
    the realized mean and variance land close to the targets. Rates hold for
    ``step_s`` seconds; beyond ``horizon_s`` the last value holds. ``variance``
    is in bps^2.
    """

    mean_bps: float
    variance: float
    seed: int = 0
    step_s: float = 1.0
    horizon_s: float = 1200.0
    phi: float = 0.9
    tolerance: float = 0.10
    _rates: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.mean_bps > 0 or not self.variance >= 0:
            raise UnicastError("synthetic profile needs mean > 0 and variance >= 0")
        if not self.step_s > 0 or not self.horizon_s >= self.step_s:
            raise UnicastError("synthetic profile needs step_s > 0 and horizon_s >= step_s")
        if not -1.0 < self.phi < 1.0:
            raise UnicastError(f"phi must be in (-1, 1), got {self.phi}")
        object.__setattr__(self, "_rates", tuple(self._generate()))

    def _generate(self) -> np.ndarray:
        n = int(math.ceil(self.horizon_s / self.step_s))
        sigma2 = math.log1p(self.variance / self.mean_bps**2)
        mu = math.log(self.mean_bps) - sigma2 / 2.0
        rng = np.random.default_rng(self.seed)
        innovation_sd = math.sqrt(1.0 - self.phi**2)
        for _ in range(1000):
            z = np.empty(n)
            z[0] = rng.standard_normal()
            eps = rng.standard_normal(n) * innovation_sd
            for i in range(1, n):
                z[i] = self.phi * z[i - 1] + eps[i]
            if n > 1 and z.std() > 0:
                z = (z - z.mean()) / z.std()
            rates = np.exp(mu + math.sqrt(sigma2) * z)
            if self._within_tolerance(rates):
                return rates
        raise UnicastError(
            f"could not realize mean={self.mean_bps:g} var={self.variance:g} within "
            f"{self.tolerance:.0%} over {n} steps"
        )

    def _within_tolerance(self, rates: np.ndarray) -> bool:
        mean_ok = abs(rates.mean() - self.mean_bps) <= self.tolerance * self.mean_bps
        if self.variance == 0:
            return mean_ok
        return mean_ok and abs(rates.var() - self.variance) <= self.tolerance * self.variance

    @property
    def rates(self) -> tuple[float, ...]:
        return self._rates

    def rate(self, t: float) -> float:
        if t < 0:
            raise UnicastError(f"negative time {t}")
        i = min(int(t // self.step_s), len(self._rates) - 1)
        return self._rates[i]

    def next_change(self, t: float) -> float:
        i = int(t // self.step_s) + 1
        if i >= len(self._rates):
            return math.inf
        return i * self.step_s

    @property
    def nominal_rate_bps(self) -> float:
        return self.mean_bps

    def describe(self) -> str:
        return f"synthetic:mean={self.mean_bps:g},var={self.variance:g},seed={self.seed}"


# Mean/variance pairs of the two measured LTE profiles (variance given in Mbps^2).
PROFILE_A = dict(mean_bps=3.6e6, variance=0.82e12)
PROFILE_B = dict(mean_bps=2.6e6, variance=2.49e12)


def profile_rate(profile, t_s: float) -> float:
    if t_s < 0:
        raise UnicastError(f"time {t_s} precedes the profile start")
    return profile.rate(t_s)


def _bits_between(profile, t0: float, t1: float) -> float:
    bits = 0.0
    t = t0
    while t < t1:
        nxt = min(profile.next_change(t), t1)
        bits += profile.rate(t) * (nxt - t)
        t = nxt
    return bits


def _time_to_send(profile, start: float, bits: float) -> float:
    """Absolute time at which ``bits`` have flowed at the profile rate from ``start``."""
    t = start
    remaining = bits
    while remaining > 0:
        rate = profile.rate(t)
        nxt = profile.next_change(t)
        span_bits = rate * (nxt - t)
        if span_bits >= remaining:
            return t + remaining / rate
        remaining -= span_bits
        t = nxt
    return t


class TokenBucket:
    """Single-class token bucket driven by a bandwidth profile.

    Tokens (bytes) accrue at the profile rate up to ``burst_bytes``. A
    transfer takes whatever tokens are present at its start and then drains
    at the profile rate, so the bucket is empty when it completes.
    """

    def __init__(self, profile, burst_bytes: float | None = None, *, burst_s: float = 0.1,
                 tokens_bytes: float | None = None, start_s: float = 0.0):
        if burst_bytes is None:
            burst_bytes = burst_s * profile.nominal_rate_bps / 8.0
        if burst_bytes < 0:
            raise UnicastError(f"burst must be >= 0, got {burst_bytes}")
        self.profile = profile
        self.burst_bytes = float(burst_bytes)
        self.tokens_bytes = self.burst_bytes if tokens_bytes is None else float(tokens_bytes)
        if not 0 <= self.tokens_bytes <= self.burst_bytes:
            raise UnicastError("initial tokens must lie in [0, burst]")
        self.last_update_s = float(start_s)

    @property
    def rate_bps(self) -> float:
        return self.profile.rate(self.last_update_s)

    def refill(self, t_s: float) -> None:
        if t_s < self.last_update_s:
            raise UnicastError(f"bucket observed at {t_s} s, before its last update {self.last_update_s} s")
        if self.tokens_bytes < self.burst_bytes:
            gained = _bits_between(self.profile, self.last_update_s, t_s) / 8.0
            self.tokens_bytes = min(self.burst_bytes, self.tokens_bytes + gained)
        self.last_update_s = t_s

    def transfer(self, size_bytes: float, start_s: float) -> float:
        """Send ``size_bytes`` starting at ``start_s``; return the completion time."""
        if not size_bytes > 0:
            raise UnicastError(f"transfer size must be > 0, got {size_bytes}")
        self.refill(start_s)
        if size_bytes <= self.tokens_bytes:
            self.tokens_bytes -= size_bytes
            return start_s
        remaining_bits = (size_bytes - self.tokens_bytes) * 8.0
        self.tokens_bytes = 0.0
        end = _time_to_send(self.profile, start_s, remaining_bits)
        self.last_update_s = end
        return end


def download_duration(size_bytes: float, bucket: TokenBucket, profile=None, start_s: float = 0.0) -> float:
    """Seconds to move ``size_bytes`` through ``bucket`` starting at ``start_s``.

    ``profile`` defaults to the bucket's own; passing another one rebinds
    the bucket.
    """
    if profile is not None:
        bucket.profile = profile
    return bucket.transfer(size_bytes, start_s) - start_s


@dataclass(frozen=True)
class RnisOracle:
    profile: object
    staleness_s: float = 0.0

    def __post_init__(self):
        if self.staleness_s < 0:
            raise UnicastError(f"staleness must be >= 0, got {self.staleness_s}")


def rnis_query(oracle: RnisOracle, terminal_id: str, t_s: float) -> float:
    """Bandwidth the radio scheduler reports for ``terminal_id`` at ``t_s``.

    A single terminal is modeled, so ``terminal_id`` does not select a
    profile; reads before ``staleness_s`` floor at t=0.
    """
    return profile_rate(oracle.profile, max(0.0, t_s - oracle.staleness_s))


def read_bandwidth_trace(path: str | Path) -> Trace:
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["time_s", "bandwidth_bps"]:
            raise UnicastError(f"{path}: expected header time_s,bandwidth_bps, got {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                t, r = float(row[0]), float(row[1])
            except (IndexError, ValueError):
                raise UnicastError(f"{path}:{lineno}: malformed row {row}") from None
            points.append((t, r))
    try:
        return Trace(tuple(points))
    except UnicastError as exc:
        raise UnicastError(f"{path}: {exc.args[0]}") from None


def write_bandwidth_trace(profile: Trace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_s", "bandwidth_bps"])
        for t, r in profile.points:
            writer.writerow([repr(t), repr(r)])


class UnicastChannel:
    """FIFO unicast link for one terminal: one transfer in flight at a time."""

    def __init__(self, bucket: TokenBucket):
        self.bucket = bucket
        self.free_at_s = bucket.last_update_s

    def schedule(self, size_bytes: float, request_time_s: float) -> tuple[float, float]:
        start = max(request_time_s, self.free_at_s)
        end = self.bucket.transfer(size_bytes, start)
        self.free_at_s = end
        return start, end
