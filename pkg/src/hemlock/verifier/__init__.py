"""Deterministic exhaustive interleaving verifier for the lock algorithms."""

from .explore import ExplorationReport, ReplayResult, Violation, explore, parse_trace, replay
from .machines import build_machine
from .model import ModelConfig, make_config, nested_leader_scripts, uniform_scripts

__all__ = [
    "ModelConfig",
    "make_config",
    "uniform_scripts",
    "nested_leader_scripts",
    "build_machine",
    "explore",
    "replay",
    "parse_trace",
    "ExplorationReport",
    "ReplayResult",
    "Violation",
]
