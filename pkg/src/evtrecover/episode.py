"""Two-phase episode loop: PID tracking with reasoned recovery after target loss."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional

from .memory import CaseMemory, MemoryEntry, MemoryMeta
from .policy import DetectorState, ObservationBuffer, PidState, detect, lost_too_long, pid_track
from .reasoning import ExecutionTrace, OracleReasoner
from .scenario import Scenario
from .world import (DEFAULT_CONFIG, ContinuousAction, DiscreteAction, WorldConfig, WorldState,
                    execute_discrete, observe, relative_polar, step)

MAX_STEPS = 500
LOG_SCHEMA_VERSION = 1

FLAGS = frozenset({"no_reflection", "no_retrieval", "no_recovery"})
VARIANTS = {
    "full": frozenset(),
    "no_reflection": frozenset({"no_reflection"}),
    "no_retrieval": frozenset({"no_retrieval"}),
    "no_recovery": frozenset({"no_recovery"}),
}


class Phase(str, enum.Enum):
    TRACKING = "tracking"
    RECOVERY = "recovery"


@dataclass(frozen=True)
class EpisodeResult:
    episodic_reward: float
    episode_length: int
    success: bool
    recovery_attempts: int = 0
    recovery_successes: int = 0
    fallback_events: int = 0
    seed: Optional[int] = None
    scenario: str = ""
    max_steps: int = MAX_STEPS

    def __post_init__(self) -> None:
        if self.success != (self.episode_length == self.max_steps):
            raise ValueError("success must coincide with reaching the step limit")
        if self.recovery_successes > self.recovery_attempts:
            raise ValueError("more recovery successes than attempts")

    def to_dict(self) -> dict:
        return asdict(self)


def _pose(p) -> dict:
    return {"x": p.x, "y": p.y, "heading": p.heading}


def _step_record(state: WorldState, phase: Phase, action: dict, visible: bool, r: float,
                 lost: int) -> dict:
    return {"type": "step", "tick": state.tick, "phase": phase.value, "action": action,
            "tracker": _pose(state.tracker), "target": _pose(state.target),
            "visible": visible, "reward": r, "lost": lost}


def _continuous(a: ContinuousAction) -> dict:
    return {"kind": "continuous", "angular": a.angular_velocity, "linear": a.linear_velocity}


def _discrete(a: DiscreteAction) -> dict:
    return {"kind": "discrete", "name": a.value}


def run_episode(scenario: Scenario, reasoner=None, memory: Optional[CaseMemory] = None,
                flags: Iterable[str] = (), *, seed: Optional[int] = None, episode_id: int = 0,
                log: Optional[List[dict]] = None, pid: Optional[PidState] = None,
                cfg: WorldConfig = DEFAULT_CONFIG, max_steps: int = MAX_STEPS) -> EpisodeResult:
    """Run one episode and return its summary.

    ``log``, when given, receives the JSON-ready trajectory records (header,
    one record per step, one per recovery attempt, final result).
    """
    flags: FrozenSet[str] = frozenset(flags)
    unknown = flags - FLAGS
    if unknown:
        raise ValueError(f"unknown flags: {sorted(unknown)}")
    reasoner = reasoner if reasoner is not None else OracleReasoner()
    if memory is None and not flags >= {"no_recovery"}:
        memory = CaseMemory()
    recovery_on = "no_recovery" not in flags
    retrieval_on = "no_retrieval" not in flags
    reflection_on = "no_reflection" not in flags
    seed = scenario.seed if seed is None else seed

    state, target_policy = scenario.instantiate(seed)
    pid = pid if pid is not None else PidState()
    det = DetectorState()
    buf = ObservationBuffer()
    obs = observe(state, cfg)
    buf.append(obs, state)
    phase = Phase.TRACKING
    total = 0.0
    attempts = successes = 0
    fallback0 = getattr(reasoner, "fallback_events", 0)

    def emit(rec: dict) -> None:
        if log is not None:
            log.append(rec)

    emit({"type": "header", "schema_version": LOG_SCHEMA_VERSION, "scenario": scenario.to_dict(),
          "seed": seed, "episode": episode_id, "flags": sorted(flags),
          "initial": {"tracker": _pose(state.tracker), "target": _pose(state.target),
                      "visible": obs.target_visible}})

    terminated = False
    while state.tick < max_steps and not terminated:
        if phase is Phase.TRACKING:
            action, pid = pid_track(obs, pid, cfg)
            state, obs, r = step(state, action, target_policy, cfg)
            total += r
            buf.append(obs, state)
            det, trigger = detect(det, obs)
            if trigger and recovery_on:
                phase = Phase.RECOVERY
            emit(_step_record(state, phase, _continuous(action), obs.target_visible, r,
                              det.consecutive_lost_total))
            terminated = lost_too_long(det)
            continue

        # -- one recovery attempt ------------------------------------------
        attempts += 1
        start_tick = state.tick
        frames = buf.history()
        snaps = buf.history_payloads()
        psi = reasoner.analyze_failure(frames, snapshots=snaps)
        gamma = reasoner.suggest_movement(psi, frames)
        planned = reasoner.plan_recovery(psi, gamma, frames)
        seq = planned
        retrieved_ids: List[int] = []
        if retrieval_on and memory is not None:
            retrieved = memory.retrieve_top3(psi, gamma)
            retrieved_ids = [c.entry.id for c in retrieved]
            seq = reasoner.refine(psi, gamma, planned, retrieved)

        trace_obs, trace_poses, done = [obs], [state.tracker], []
        recovered = False
        for a in seq.actions:
            if state.tick >= max_steps:
                break
            state, obs, r = execute_discrete(state, a, target_policy, cfg)
            total += r
            buf.append(obs, state)
            det, _ = detect(det, obs)
            done.append(a)
            trace_obs.append(obs)
            trace_poses.append(state.tracker)
            if obs.target_visible:
                recovered = True
                phase = Phase.TRACKING
            emit(_step_record(state, phase, _discrete(a), obs.target_visible, r,
                              det.consecutive_lost_total))
            if recovered:
                break
            if lost_too_long(det):
                terminated = True
                break

        insight = None
        outcome = "interrupted"
        if recovered:
            successes += 1
            outcome = "recovered"
        elif len(done) == len(seq.actions):
            outcome = "failed"
            if reflection_on:
                trace = ExecutionTrace(tuple(trace_obs), tuple(done), tuple(trace_poses))
                _, gt_bearing = relative_polar(state.tracker, state.target.xy)
                insight = reasoner.reflect(psi, gamma, seq, trace, gt_bearing)
        stored_id = None
        if memory is not None and outcome != "interrupted":
            stored = memory.append(MemoryEntry(
                psi, gamma, seq, insight,
                MemoryMeta(episode=episode_id, attempt=attempts, scenario=scenario.name, outcome=outcome)))
            stored_id = stored.id
        emit({"type": "recovery", "attempt": attempts, "tick": start_tick, "psi": psi.to_dict(),
              "gamma": gamma.to_list(), "r_planned": planned.to_list(), "r": seq.to_list(),
              "retrieved": retrieved_ids, "e": None if insight is None else insight.to_dict(),
              "outcome": outcome, "memory_id": stored_id, "executed": len(done)})

    result = EpisodeResult(
        episodic_reward=total,
        episode_length=state.tick,
        success=state.tick == max_steps,
        recovery_attempts=attempts,
        recovery_successes=successes,
        fallback_events=getattr(reasoner, "fallback_events", 0) - fallback0,
        seed=seed,
        scenario=scenario.name,
        max_steps=max_steps,
    )
    emit({"type": "result", **result.to_dict()})
    return result


def write_log(records: Iterable[dict], path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


class LogError(ValueError):
    def __init__(self, line: int, msg: str) -> None:
        super().__init__(f"line {line}: {msg}")
        self.line = line


def read_log(path) -> List[dict]:
    """Load a trajectory log, failing with the offending line number."""
    out = []
    with open(Path(path), encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogError(n, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or rec.get("type") not in ("header", "step", "recovery", "result"):
                raise LogError(n, "unknown record type")
            if rec["type"] == "step":
                missing = {"tick", "phase", "action", "tracker", "target", "visible", "reward"} - rec.keys()
                if missing:
                    raise LogError(n, f"step record missing {sorted(missing)}")
            out.append(rec)
    if not out or out[0]["type"] != "header":
        raise LogError(1, "log must start with a header record")
    return out
