"""INI-style experiment configuration.

Every section/key is declared in ``SCHEMA`` with its parser and default;
defaults reproduce the reference experiment (600 s video, 0.5 s segments,
3/6 Mbps, 10 % of segments recovered over unicast, 2-4 Mbps unicast,
1.5-segment initial buffer, ten error-file seeds).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

from .broadcast import ErrorFileLoss, FecParams, PacketBernoulli, read_error_file
from .engine import ScenarioConfig
from .errors import ConfigError, SarpSimError
from .media import PresentationConfig, RepresentationSpec, build_presentation, read_size_manifest
from .player import PlayerConfig
from .sarp import RecoveryMode
from .session import FaultPlan, ServiceParams, default_topology
from .unicast import PROFILE_A, PROFILE_B, Constant, Synthetic, read_bandwidth_trace

__all__ = ["SCHEMA", "load_config", "parse_config", "HarnessConfig", "parse_seeds", "parse_bandwidth"]


def _float(s: str) -> float:
    return float(s)


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s: str) -> str:
    return s.strip()


def _list(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _reps(s: str) -> tuple[RepresentationSpec, ...]:
    out = []
    for item in _list(s):
        rep_id, _, bps = item.partition(":")
        if not bps:
            raise ValueError(f"expected id:bitrate, got {item!r}")
        out.append(RepresentationSpec(rep_id.strip(), float(bps)))
    return tuple(out)


def _mode(s: str) -> RecoveryMode:
    return RecoveryMode(s.strip())


def _modes(s: str) -> tuple[RecoveryMode, ...]:
    return tuple(RecoveryMode(x) for x in _list(s))


def parse_seeds(s: str) -> tuple[int, ...]:
    """``"1..10"``, ``"1,4,7"`` or a mix such as ``"1..3,9"``."""
    seeds: list[int] = []
    for part in _list(s):
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("empty seed list")
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"duplicate seeds in {s!r}")
    return tuple(seeds)


def _faults(s: str) -> FaultPlan:
    plan = {}
    for item in _list(s):
        label, _, mode = item.partition(":")
        plan[label.strip()] = (mode.strip() or "reject")
    return FaultPlan(plan)


SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "presentation": {
        "duration_s": (_float, 600.0),
        "segment_duration_s": (_float, 0.5),
        "representations": (_reps, _reps("3Mbps:3000000, 6Mbps:6000000")),
        "broadcast_rep": (_str, "6Mbps"),
        "size_model": (_str, "constant"),
        "vbr_cv": (_float, 0.3),
        "size_manifest": (_str, ""),
        "ingest_delay_s": (_float, 0.0),
    },
    "broadcast": {
        "loss_fraction": (_float, 0.10),
        "error_file": (_str, ""),
        "packet_loss": (_opt_float, None),
        "payload_bytes": (_int, 1024),
        "repair_overhead": (_float, 0.1),
        "broadcast_delay_s": (_float, 0.0),
    },
    "unicast": {
        "bandwidth": (_str, "4000000"),
        "burst_s": (_float, 0.1),
        "burst_bytes": (_opt_float, None),
        "rnis_staleness_s": (_float, 0.0),
        "profile_seed": (_int, 2024),
    },
    "recovery": {
        "mode": (_mode, RecoveryMode.SARP_OFF),
        "detection_delay_s": (_float, 0.0),
        "terminal_id": (_str, "ue-1"),
    },
    "player": {
        "initial_buffer_segments": (_float, 1.5),
        "catch_up_rate": (_float, 1.043),
        "catch_up_trigger_s": (_float, 0.5),
        "buffer_growth_per_stall_s": (_opt_float, None),
        "latency_target_s": (_opt_float, None),
        "slow_down_rate": (_float, 0.957),
        "sample_interval_s": (_float, 0.1),
    },
    "session": {
        "enabled": (_bool, False),
        "areas": (_list, ("area-1",)),
        "max_video_bitrate_bps": (_float, 6_000_000.0),
        "max_delay_s": (_float, 0.3),
        "dnn": (_str, "mbs.video"),
        "upf_locality": (_str, "mec"),
        "faults": (_faults, FaultPlan()),
        "signaling_latency_s": (_float, 0.0),
    },
    "sweep": {
        "bandwidths": (_list, ("2000000", "2500000", "3000000", "3500000", "4000000")),
        "seeds": (parse_seeds, tuple(range(1, 11))),
        "modes": (_modes, (RecoveryMode.SARP_ON, RecoveryMode.SARP_OFF)),
        "confidence": (_float, 0.90),
    },
    "run": {
        "seed": (_int, 1),
        "jobs": (_int, 1),
    },
}


@dataclass(frozen=True)
class HarnessConfig:
    values: dict
    base_dir: Path = Path(".")

    def get(self, section: str, key: str):
        return self.values[section][key]

    def with_override(self, section: str, key: str, value) -> HarnessConfig:
        values = {s: dict(v) for s, v in self.values.items()}
        values[section][key] = value
        return replace(self, values=values)

    def _path(self, raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def presentation(self) -> PresentationConfig:
        sec = self.values["presentation"]
        manifest = None
        if sec["size_manifest"]:
            manifest = read_size_manifest(self._path(sec["size_manifest"]))
        model = sec["size_model"] if manifest is None else "manifest"
        return PresentationConfig(
            total_duration_s=sec["duration_s"],
            segment_duration_s=sec["segment_duration_s"],
            representations=sec["representations"],
            broadcast_rep_id=sec["broadcast_rep"],
            size_model=model,
            vbr_cv=sec["vbr_cv"],
            ingest_delay_s=sec["ingest_delay_s"],
            manifest=manifest,
        )

    def bandwidth(self, token: str | None = None):
        token = self.values["unicast"]["bandwidth"] if token is None else token
        return parse_bandwidth(token, self.values["unicast"]["profile_seed"], self.base_dir)

    def scenario(self, *, seed: int | None = None, mode=None, bandwidth=None) -> ScenarioConfig:
        b = self.values["broadcast"]
        u = self.values["unicast"]
        r = self.values["recovery"]
        pl = self.values["player"]
        s = self.values["session"]
        loss = None
        if b["error_file"]:
            loss = ErrorFileLoss(read_error_file(self._path(b["error_file"])))
        elif b["packet_loss"] is not None:
            loss = PacketBernoulli(b["packet_loss"])
        session = topology = None
        if s["enabled"]:
            session = ServiceParams(s["max_video_bitrate_bps"], s["max_delay_s"], s["areas"], s["dnn"])
            topology = default_topology(s["areas"], s["upf_locality"])
        return ScenarioConfig(
            presentation=self.presentation(),
            loss=loss,
            loss_fraction=b["loss_fraction"],
            bandwidth=self.bandwidth() if bandwidth is None else bandwidth,
            mode=r["mode"] if mode is None else RecoveryMode(mode),
            player=PlayerConfig(**pl),
            fec=FecParams(b["payload_bytes"], b["repair_overhead"]),
            seed=self.values["run"]["seed"] if seed is None else seed,
            burst_s=u["burst_s"],
            burst_bytes=u["burst_bytes"],
            rnis_staleness_s=u["rnis_staleness_s"],
            broadcast_delay_s=b["broadcast_delay_s"],
            detection_delay_s=r["detection_delay_s"],
            terminal_id=r["terminal_id"],
            session=session,
            session_topology=topology,
            session_faults=s["faults"] if s["enabled"] else None,
            signaling_latency_s=s["signaling_latency_s"],
        )


def parse_bandwidth(token: str, profile_seed: int = 2024, base_dir: Path = Path(".")):
    """``"4000000"`` -> Constant, ``"profile:A"``/``"profile:B"`` -> Synthetic,
    ``"trace:PATH"`` -> Trace loaded from CSV."""
    token = token.strip()
    kind, sep, arg = token.partition(":")
    if not sep:
        return Constant(float(token))
    if kind == "profile":
        presets = {"A": PROFILE_A, "B": PROFILE_B}
        if arg not in presets:
            raise ValueError(f"unknown bandwidth profile {arg!r} (expected A or B)")
        return Synthetic(seed=profile_seed, **presets[arg])
    if kind == "trace":
        path = Path(arg)
        return read_bandwidth_trace(path if path.is_absolute() else base_dir / path)
    raise ValueError(f"unrecognized bandwidth setting {token!r}")


def parse_config(text: str, base_dir: Path = Path(".")) -> HarnessConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    values = {sec: {k: default for k, (_, default) in keys.items()} for sec, keys in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"[{section}]", "unknown section")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            fn = SCHEMA[section][key][0]
            try:
                values[section][key] = fn(raw)
            except (ValueError, SarpSimError) as exc:
                raise ConfigError(f"{section}.{key}", str(exc)) from None
    cfg = HarnessConfig(values, base_dir)
    _check(cfg)
    return cfg


def _check(cfg: HarnessConfig) -> None:
    """Validate cross-key constraints early so errors name a key."""
    checks = [
        ("presentation", lambda: build_presentation(cfg.presentation())),
        ("unicast.bandwidth", cfg.bandwidth),
    ]
    for key, fn in checks:
        try:
            fn()
        except (ValueError, OSError, SarpSimError) as exc:
            raise ConfigError(key, str(exc)) from None
    for token in cfg.get("sweep", "bandwidths"):
        try:
            cfg.bandwidth(token)
        except (ValueError, OSError, SarpSimError) as exc:
            raise ConfigError("sweep.bandwidths", str(exc)) from None
    try:
        PlayerConfig(**cfg.values["player"])
    except SarpSimError as exc:
        raise ConfigError("player", str(exc)) from None
    if cfg.get("session", "upf_locality") not in ("mec", "core"):
        raise ConfigError("session.upf_locality", "must be 'mec' or 'core'")
    if not cfg.get("run", "jobs") >= 1:
        raise ConfigError("run.jobs", "must be >= 1")


def load_config(path: str | Path | None) -> HarnessConfig:
    if path is None:
        return parse_config("")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_config(text, path.parent)

