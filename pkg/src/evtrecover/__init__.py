"""Embodied visual tracking testbed with failure recovery and case memory."""

from __future__ import annotations

from .episode import MAX_STEPS, VARIANTS, EpisodeResult, Phase, read_log, run_episode, write_log
from .harness import EvaluationReport, aggregate, evaluate
from .library import get_scenario, scenario_names
from .memory import CaseMemory, MemoryEntry
from .reasoning import FailureContext, MovementPlan, OracleReasoner, RecoverySequence, ReflectionInsight
from .scenario import Scenario, ScenarioError
from .world import DEFAULT_CONFIG, Observation, Pose, WorldConfig, WorldState, reward

__version__ = "0.1.0"

__all__ = [
    "CaseMemory", "DEFAULT_CONFIG", "EpisodeResult", "EvaluationReport", "FailureContext", "MAX_STEPS",
    "MemoryEntry", "MovementPlan", "Observation", "OracleReasoner", "Phase", "Pose", "RecoverySequence",
    "ReflectionInsight", "Scenario", "ScenarioError", "VARIANTS", "WorldConfig", "WorldState",
    "aggregate", "evaluate", "get_scenario", "read_log", "reward", "run_episode", "scenario_names",
    "write_log",
]
