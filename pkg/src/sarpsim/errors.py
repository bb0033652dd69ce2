"""Exception hierarchy.

Every module raises its own subclass so the run driver can report which
part of the pipeline rejected a scenario.
"""

from __future__ import annotations


class SarpSimError(ValueError):
    module = "sarpsim"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class MediaError(SarpSimError):
    module = "media-model"


class BroadcastError(SarpSimError):
    module = "broadcast-path"


class UnicastError(SarpSimError):
    module = "unicast-path"


class SessionError(SarpSimError):
    module = "session-control"


class ProxyError(SarpSimError):
    module = "sarp-proxy"


class PlayerError(SarpSimError):
    module = "player-model"


class EngineError(SarpSimError):
    module = "sim-engine"


class ConfigError(SarpSimError):
    """Malformed harness configuration; ``key`` names the offending entry."""

    module = "harness-cli"

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
