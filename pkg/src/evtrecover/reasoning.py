"""Recovery reasoning pipeline: types, canonical text and the rule-based oracle.

The pipeline has five stages: failure analysis, movement suggestion, plan
compilation, memory-informed refinement and post-mortem reflection.  Any
object exposing these five methods can drive recovery; :class:`OracleReasoner`
is the deterministic reference implementation used in tests and as the
fallback for the external model client.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence, Tuple

from .geometry import normalize_angle
from .world import BUCKETS, DiscreteAction, Observation, Pose, bearing_bucket, round_half

if TYPE_CHECKING:  # pragma: no cover
    from .memory import ScoredEntry

SEQUENCE_LENGTH = 5
MAX_PLAN_LENGTH = 5
REFINE_THRESHOLD = 0.6
MOTION_EPS = 0.02          # rad of ego-compensated bearing change treated as "no lateral motion"
TURN_STEP_DEG = 30.0


class ReasoningError(ValueError):
    """A pipeline object violates its invariants."""


@dataclass(frozen=True)
class FailureContext:
    beta_occ: int
    e_obj: Optional[str] = None
    l_tgt: Optional[str] = None

    def __post_init__(self) -> None:
        if self.beta_occ not in (0, 1):
            raise ReasoningError("beta_occ must be 0 or 1")
        if self.beta_occ == 1 and (not self.e_obj or self.l_tgt is not None):
            raise ReasoningError("occluded context needs E_obj and no L_tgt")
        if self.beta_occ == 0 and (not self.l_tgt or self.e_obj is not None):
            raise ReasoningError("non-occluded context needs L_tgt and no E_obj")

    @property
    def occluded(self) -> bool:
        return self.beta_occ == 1

    def to_text(self) -> str:
        return _canon(f"occ={self.beta_occ}; obj={self.e_obj or '-'}; last={self.l_tgt or '-'}")

    def to_dict(self) -> dict:
        return {"beta_occ": self.beta_occ, "e_obj": self.e_obj, "l_tgt": self.l_tgt}

    @classmethod
    def from_dict(cls, d: dict) -> "FailureContext":
        return cls(int(d["beta_occ"]), d.get("e_obj"), d.get("l_tgt"))


class Direction(str, enum.Enum):
    MOVE_FORWARD = "move_forward"
    MOVE_BACKWARD = "move_backward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    JUMP_OVER = "jump_over"


class Trigger(str, enum.Enum):
    UNTIL_REACHING = "until_reaching"
    UNTIL_PASSING = "until_passing"
    AFTER_PASSING = "after_passing"
    NONE = "none"


@dataclass(frozen=True)
class MovementInstruction:
    direction: Direction
    trigger: Trigger = Trigger.NONE
    landmark: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "trigger", Trigger(self.trigger))
        if self.trigger is not Trigger.NONE and not self.landmark:
            raise ReasoningError("a conditional trigger needs a landmark")

    def to_text(self) -> str:
        trig = "-" if self.trigger is Trigger.NONE else self.trigger.value
        return _canon(f"{self.direction.value} {trig} {self.landmark or '-'}")

    def to_list(self) -> list:
        return [self.direction.value, self.trigger.value, self.landmark]


@dataclass(frozen=True)
class MovementPlan:
    instructions: Tuple[MovementInstruction, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if not 1 <= len(self.instructions) <= MAX_PLAN_LENGTH:
            raise ReasoningError(f"movement plan needs 1-{MAX_PLAN_LENGTH} instructions")

    def to_text(self) -> str:
        return "; ".join(i.to_text() for i in self.instructions)

    def to_list(self) -> list:
        return [i.to_list() for i in self.instructions]

    @classmethod
    def from_list(cls, rows) -> "MovementPlan":
        return cls(tuple(MovementInstruction(Direction(d), Trigger(c or "none"), z) for d, c, z in rows))


@dataclass(frozen=True)
class RecoverySequence:
    actions: Tuple[DiscreteAction, ...]

    def __post_init__(self) -> None:
        acts = tuple(DiscreteAction(a) for a in self.actions)
        if len(acts) != SEQUENCE_LENGTH:
            raise ReasoningError(f"recovery sequence needs exactly {SEQUENCE_LENGTH} actions")
        object.__setattr__(self, "actions", acts)

    def to_list(self) -> list:
        return [a.value for a in self.actions]

    @property
    def net_turn(self) -> int:
        return (sum(a is DiscreteAction.TURN_LEFT for a in self.actions)
                - sum(a is DiscreteAction.TURN_RIGHT for a in self.actions))


@dataclass(frozen=True)
class ExecutionTrace:
    """Observations interleaved with the executed actions, plus tracker odometry."""

    observations: Tuple[Observation, ...]
    actions: Tuple[DiscreteAction, ...]
    tracker_poses: Tuple[Pose, ...] = ()

    def __post_init__(self) -> None:
        if len(self.actions) != SEQUENCE_LENGTH or len(self.observations) != SEQUENCE_LENGTH + 1:
            raise ReasoningError("trace needs 5 actions and 6 observations")
        ticks = [o.tick for o in self.observations]
        if ticks != sorted(ticks):
            raise ReasoningError("trace observations out of tick order")


class InsightTag(str, enum.Enum):
    WRONG_SIDE = "wrong_side"
    OVERSHOOT = "overshoot"
    UNDERSHOOT = "undershoot"
    BLOCKED_PATH = "blocked_path"
    NONE = "none"


_TAG_KEYWORDS = (
    ("wrong side", InsightTag.WRONG_SIDE),
    ("overshoot", InsightTag.OVERSHOOT),
    ("undershoot", InsightTag.UNDERSHOOT),
    ("blocked", InsightTag.BLOCKED_PATH),
)

INSIGHT_TEMPLATES = {
    InsightTag.WRONG_SIDE: "Turned to the wrong side: the target ended up on the opposite side of the turns.",
    InsightTag.OVERSHOOT: "Moved too far past the landmark (overshoot): stop earlier next time.",
    InsightTag.UNDERSHOOT: "Stopped before clearing the landmark (undershoot): keep moving forward.",
    InsightTag.BLOCKED_PATH: "Forward motion was blocked by an obstacle: jump over it or go around.",
    InsightTag.NONE: "No single cause explains the failed recovery.",
}


def tag_from_text(text: str) -> InsightTag:
    low = text.lower()
    for kw, tag in _TAG_KEYWORDS:
        if kw in low:
            return tag
    return InsightTag.NONE


@dataclass(frozen=True)
class ReflectionInsight:
    text: str
    canonical_tag: Optional[InsightTag] = None

    def __post_init__(self) -> None:
        derived = tag_from_text(self.text)
        if self.canonical_tag is not None and InsightTag(self.canonical_tag) is not derived:
            raise ReasoningError(f"insight tag {self.canonical_tag!r} does not match its text")
        object.__setattr__(self, "canonical_tag", derived)

    @classmethod
    def for_tag(cls, tag: InsightTag) -> "ReflectionInsight":
        return cls(INSIGHT_TEMPLATES[tag], tag)

    def to_dict(self) -> dict:
        return {"tag": self.canonical_tag.value, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> "ReflectionInsight":
        return cls(str(d["text"]), InsightTag(d.get("tag", tag_from_text(str(d["text"])))))


def _canon(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower())


# ---------------------------------------------------------------------------
# Frame helpers
# ---------------------------------------------------------------------------

def _visible(frames: Sequence[Observation]):
    return [f for f in frames if f.target_visible]


def _world_bearing(f: Observation) -> float:
    return normalize_angle(f.heading + f.rel_angle)


def lateral_motion(frames: Sequence[Observation]) -> str:
    """'left', 'right' or 'away', from the ego-compensated bearing drift."""
    vis = _visible(frames)
    if len(vis) >= 2:
        delta = normalize_angle(_world_bearing(vis[-1]) - _world_bearing(vis[-2]))
        if delta > MOTION_EPS:
            return "left"
        if delta < -MOTION_EPS:
            return "right"
        return "away"
    if len(vis) == 1:
        bucket = bearing_bucket(vis[0].rel_angle)
        if bucket in ("left", "far-left"):
            return "left"
        if bucket in ("right", "far-right"):
            return "right"
    return "away"


def _side(motion: str) -> str:
    return "right" if motion == "right" else "left"


_OBJ_RE = re.compile(r"^(?P<label>.+?) at (?P<bucket>[a-z-]+), (?P<dist>[0-9.]+) m$")
_LAST_RE = re.compile(r"^(?P<bucket>[a-z-]+), (?P<dist>[0-9.]+) m, moving (?P<motion>[a-z]+)$")


def parse_occluder(e_obj: str):
    m = _OBJ_RE.match(e_obj.strip().lower())
    if not m:
        return e_obj.strip().lower(), None, None
    return m["label"], m["bucket"], float(m["dist"])


def parse_last_position(l_tgt: str):
    m = _LAST_RE.match(l_tgt.strip().lower())
    if not m:
        return None, None, None
    return m["bucket"], float(m["dist"]), m["motion"]


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

_MIRROR = {DiscreteAction.TURN_LEFT: DiscreteAction.TURN_RIGHT,
           DiscreteAction.TURN_RIGHT: DiscreteAction.TURN_LEFT}


class OracleReasoner:
    """Deterministic rule set standing in for the vision-language model."""

    fallback_events = 0

    def analyze_failure(self, frames: Sequence[Observation], snapshots=None) -> FailureContext:
        vis = _visible(frames)
        if not vis:
            return FailureContext(0, None, "unknown")
        last = vis[-1]
        bucket = bearing_bucket(last.rel_angle)
        k = BUCKETS.index(bucket)
        # nearer landmarks within one bucket of the target; exact bucket first
        near = [lm for lm in last.landmarks
                if abs(BUCKETS.index(lm.bucket) - k) <= 1 and lm.distance < last.rel_distance]
        if near:
            lm = min(near, key=lambda m: abs(BUCKETS.index(m.bucket) - k))
            return FailureContext(1, f"{lm.label} at {lm.bucket}, {lm.distance:.1f} m", None)
        motion = lateral_motion(frames)
        return FailureContext(0, None, f"{bucket}, {round_half(last.rel_distance):.1f} m, moving {motion}")

    def suggest_movement(self, psi: FailureContext, frames: Sequence[Observation] = ()) -> MovementPlan:
        if psi.occluded:
            label, _, _ = parse_occluder(psi.e_obj)
            side = _side(lateral_motion(frames))
            return MovementPlan((
                MovementInstruction(Direction.MOVE_FORWARD, Trigger.UNTIL_PASSING, label),
                MovementInstruction(Direction(f"turn_{side}")),
            ))
        bucket, _, motion = parse_last_position(psi.l_tgt)
        if bucket is None:
            return MovementPlan((MovementInstruction(Direction.TURN_LEFT),))
        if bucket in ("left", "far-left"):
            side = "left"
        elif bucket in ("right", "far-right"):
            side = "right"
        else:
            side = _side(motion)
        return MovementPlan((MovementInstruction(Direction(f"turn_{side}")),
                             MovementInstruction(Direction.MOVE_FORWARD)))

    def plan_recovery(self, psi: FailureContext, gamma: MovementPlan,
                      frames: Sequence[Observation] = ()) -> RecoverySequence:
        actions = []
        instrs = gamma.instructions
        for i, ins in enumerate(instrs):
            room = SEQUENCE_LENGTH - len(actions) - (len(instrs) - i - 1)
            if room <= 0:
                break
            d = ins.direction
            if d in (Direction.TURN_LEFT, Direction.TURN_RIGHT):
                act = DiscreteAction.TURN_LEFT if d is Direction.TURN_LEFT else DiscreteAction.TURN_RIGHT
                actions += [act] * min(room, _turn_count(frames))
            elif ins.trigger is not Trigger.NONE:
                dist = _landmark_distance(ins.landmark, psi, frames)
                step = {Direction.MOVE_BACKWARD: DiscreteAction.MOVE_BACKWARD,
                        Direction.JUMP_OVER: DiscreteAction.JUMP_OVER}.get(d, DiscreteAction.MOVE_FORWARD)
                actions += [step] * min(room, math.ceil(dist) + 1)
            elif d is Direction.MOVE_FORWARD:
                actions.append(DiscreteAction.MOVE_FORWARD)
            elif d is Direction.MOVE_BACKWARD:
                actions.append(DiscreteAction.MOVE_BACKWARD)
            else:
                actions.append(DiscreteAction.JUMP_OVER)
        actions = (actions + [DiscreteAction.STOP] * SEQUENCE_LENGTH)[:SEQUENCE_LENGTH]
        return RecoverySequence(tuple(actions))

    def refine(self, psi: FailureContext, gamma: MovementPlan, r: RecoverySequence,
               retrieved: Sequence["ScoredEntry"]) -> RecoverySequence:
        case = next((c for c in retrieved
                     if c.psi_similarity >= REFINE_THRESHOLD and c.entry.e is not None), None)
        if case is None:
            return r
        return apply_insight(r, case.entry.e.canonical_tag)

    def reflect(self, psi: FailureContext, gamma: MovementPlan, r: RecoverySequence,
                trace: ExecutionTrace, ground_truth_bearing: float) -> ReflectionInsight:
        return ReflectionInsight.for_tag(diagnose(psi, gamma, r, trace, ground_truth_bearing))


def apply_insight(r: RecoverySequence, tag: InsightTag) -> RecoverySequence:
    acts = list(r.actions)
    tag = InsightTag(tag)
    F, S = DiscreteAction.MOVE_FORWARD, DiscreteAction.STOP
    if tag is InsightTag.WRONG_SIDE:
        acts = [_MIRROR.get(a, a) for a in acts]
    elif tag is InsightTag.OVERSHOOT:
        if F in acts:
            acts[len(acts) - 1 - acts[::-1].index(F)] = S
    elif tag is InsightTag.UNDERSHOOT:
        if S in acts:
            acts[acts.index(S)] = F
        else:
            turns = [i for i, a in enumerate(acts) if a.is_turn]
            if turns and turns[-1] > 0:
                acts[turns[-1] - 1] = F
    elif tag is InsightTag.BLOCKED_PATH:
        if F in acts:
            acts[acts.index(F)] = DiscreteAction.JUMP_OVER
    return RecoverySequence(tuple(acts))


def diagnose(psi: FailureContext, gamma: MovementPlan, r: RecoverySequence,
             trace: ExecutionTrace, ground_truth_bearing: float) -> InsightTag:
    net = r.net_turn
    if net != 0 and ground_truth_bearing != 0 and (net > 0) != (ground_truth_bearing > 0):
        return InsightTag.WRONG_SIDE
    planned = next((i.landmark for i in gamma.instructions if i.trigger is not Trigger.NONE), None)
    if planned is not None:
        lm = _identify_landmark(planned, psi, trace.observations[0])
        if lm is not None:
            if any(x.obstacle_id == lm.obstacle_id for x in trace.observations[-1].landmarks):
                return InsightTag.UNDERSHOOT
            if _forward_travel(trace) >= lm.distance:
                return InsightTag.OVERSHOOT
    if _forward_truncated(trace):
        return InsightTag.BLOCKED_PATH
    return InsightTag.NONE


def _identify_landmark(label: str, psi: FailureContext, obs: Observation):
    cands = [lm for lm in obs.landmarks if lm.label.lower() == label.lower()]
    if not cands:
        return None
    if psi.occluded:
        _, bucket, dist = parse_occluder(psi.e_obj)
        for lm in cands:
            if lm.bucket == bucket and (dist is None or abs(lm.distance - dist) <= 0.5):
                return lm
    return cands[0]


def _step_lengths(trace: ExecutionTrace):
    poses = trace.tracker_poses
    for i, a in enumerate(trace.actions):
        if i + 1 < len(poses):
            yield a, math.hypot(poses[i + 1].x - poses[i].x, poses[i + 1].y - poses[i].y)


def _forward_travel(trace: ExecutionTrace) -> float:
    return sum(d for a, d in _step_lengths(trace)
               if a in (DiscreteAction.MOVE_FORWARD, DiscreteAction.JUMP_OVER))


def _forward_truncated(trace: ExecutionTrace) -> bool:
    return any(a is DiscreteAction.MOVE_FORWARD and d < 1.0 - 1e-6 for a, d in _step_lengths(trace))


def _turn_count(frames: Sequence[Observation]) -> int:
    vis = _visible(frames)
    if not vis or not frames:
        return 1
    rel = normalize_angle(_world_bearing(vis[-1]) - frames[-1].heading)
    return max(1, int(math.floor(abs(math.degrees(rel)) / TURN_STEP_DEG + 0.5)))


def _landmark_distance(label: Optional[str], psi: FailureContext, frames: Sequence[Observation]) -> float:
    if psi.occluded:
        lab, _, dist = parse_occluder(psi.e_obj)
        if dist is not None and (label is None or lab == label.lower()):
            return dist
    for f in reversed(frames):
        for lm in f.landmarks:
            if label and lm.label.lower() == label.lower():
                return lm.distance
    return 2.0

