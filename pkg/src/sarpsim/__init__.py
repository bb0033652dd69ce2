"""Simulator for live DASH over broadcast with unicast segment recovery.

Segments are broadcast to a terminal; lost ones are fetched over a shaped
unicast link through an edge proxy that can pick a lower representation
when bandwidth is scarce. The player model reports live latency and stalls.
"""

from __future__ import annotations

from .broadcast import ErrorFile, FecParams, generate_error_file, segment_loss_probability
from .engine import RngStreams, ScenarioConfig, ScenarioResult, run_scenario
from .errors import ConfigError, SarpSimError
from .harness import AggregateSeries, ExperimentMatrix, aggregate_ci
from .media import PresentationConfig, build_presentation, select_representation
from .player import PlayerConfig, run_playback
from .sarp import RecoveryMode
from .session import run_session_start, validate_trace
from .unicast import Constant, Synthetic, TokenBucket, Trace

__version__ = "0.1.0"

__all__ = [
    "AggregateSeries",
    "ConfigError",
    "Constant",
    "ErrorFile",
    "ExperimentMatrix",
    "FecParams",
    "PlayerConfig",
    "PresentationConfig",
    "RecoveryMode",
    "RngStreams",
    "SarpSimError",
    "ScenarioConfig",
    "ScenarioResult",
    "Synthetic",
    "TokenBucket",
    "Trace",
    "aggregate_ci",
    "build_presentation",
    "generate_error_file",
    "run_playback",
    "run_scenario",
    "run_session_start",
    "segment_loss_probability",
    "select_representation",
    "validate_trace",
]
