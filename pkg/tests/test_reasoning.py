from __future__ import annotations

import math

import pytest

from evtrecover.memory import MemoryEntry, MemoryMeta, ScoredEntry
from evtrecover.reasoning import (INSIGHT_TEMPLATES, Direction, ExecutionTrace, FailureContext, InsightTag,
                                  MovementInstruction, MovementPlan, OracleReasoner, ReasoningError,
                                  RecoverySequence, ReflectionInsight, Trigger, apply_insight, diagnose,
                                  lateral_motion, tag_from_text)
from evtrecover.world import DiscreteAction, Observation, Pose

from scripted import frame, lm

F, B, L, R, J, S = (DiscreteAction.MOVE_FORWARD, DiscreteAction.MOVE_BACKWARD, DiscreteAction.TURN_LEFT,
                    DiscreteAction.TURN_RIGHT, DiscreteAction.JUMP_OVER, DiscreteAction.STOP)
oracle = OracleReasoner()


def seq(*acts):
    return RecoverySequence(tuple(acts))


def plan(*rows):
    return MovementPlan.from_list(rows)


def scored(e_tag, psi_sim, psi=None):
    psi = psi or FailureContext(1, "column at center, 3.0 m")
    e = None if e_tag is None else ReflectionInsight.for_tag(e_tag)
    entry = MemoryEntry(psi, plan(["turn_left", "none", None]), seq(L, S, S, S, S), e,
                        MemoryMeta(outcome="recovered" if e is None else "failed"), id=1)
    return ScoredEntry(entry, psi_sim + 1.0, psi_sim, 1.0)


def trace(actions, last_landmarks=(), first_landmarks=(), poses=None):
    obs = [Observation(i, False, landmarks=tuple(first_landmarks if i == 0 else last_landmarks if i == 5 else ()))
           for i in range(6)]
    poses = poses or [Pose(0, 0, 0)] * 6
    return ExecutionTrace(tuple(obs), tuple(actions), tuple(poses))


class TestTypes:
    def test_context_exclusivity(self):
        with pytest.raises(ReasoningError):
            FailureContext(1, None, None)
        with pytest.raises(ReasoningError):
            FailureContext(1, "column", "left, 2.0 m, moving left")
        with pytest.raises(ReasoningError):
            FailureContext(0, "column", None)
        with pytest.raises(ReasoningError):
            FailureContext(2, "column", None)

    def test_context_text(self):
        assert FailureContext(1, "Column at  center, 3.0 m").to_text() == "occ=1; obj=column at center, 3.0 m; last=-"
        assert FailureContext(0, None, "unknown").to_text() == "occ=0; obj=-; last=unknown"

    def test_plan_text(self):
        g = plan(["move_forward", "until_passing", "Column"], ["turn_right", "none", None])
        assert g.to_text() == "move_forward until_passing column; turn_right - -"

    def test_trigger_needs_landmark(self):
        with pytest.raises(ReasoningError):
            MovementInstruction(Direction.MOVE_FORWARD, Trigger.UNTIL_REACHING, None)

    def test_plan_length_bounds(self):
        with pytest.raises(ReasoningError):
            MovementPlan(())
        with pytest.raises(ReasoningError):
            MovementPlan(tuple(MovementInstruction(Direction.TURN_LEFT) for _ in range(6)))

    def test_sequence_needs_five(self):
        with pytest.raises(ReasoningError):
            RecoverySequence((F, F, F, F))
        with pytest.raises(ValueError):
            RecoverySequence((F, F, F, F, "Fly"))

    def test_trace_shape(self):
        with pytest.raises(ReasoningError):
            ExecutionTrace(tuple(Observation(i, False) for i in range(5)), (S,) * 5)

    def test_insight_tag_from_text(self):
        for tag, text in INSIGHT_TEMPLATES.items():
            assert tag_from_text(text) is tag
            assert ReflectionInsight(text).canonical_tag is tag

    def test_insight_tag_must_match_text(self):
        with pytest.raises(ReasoningError):
            ReflectionInsight("went the wrong side", InsightTag.OVERSHOOT)

    def test_insight_round_trip(self):
        e = ReflectionInsight.for_tag(InsightTag.BLOCKED_PATH)
        assert ReflectionInsight.from_dict(e.to_dict()) == e


class TestAnalyze:
    def test_occluder_in_target_bucket(self):
        frames = [frame(0, True, 4.0, 0.0), frame(5, True, 4.0, 0.0, [lm("column", "center", 3.0)]),
                  frame(10, False)]
        assert oracle.analyze_failure(frames) == FailureContext(1, "column at center, 3.0 m", None)

    def test_drifting_left(self):
        frames = [frame(0, True, 5.0, 0.0), frame(5, True, 5.0, 12.0), frame(10, False)]
        assert oracle.analyze_failure(frames) == FailureContext(0, None, "left, 5.0 m, moving left")

    def test_all_invisible(self):
        frames = [frame(t, False) for t in (0, 5, 10)]
        assert oracle.analyze_failure(frames) == FailureContext(0, None, "unknown")

    def test_adjacent_bucket_counts(self):
        frames = [frame(0, True, 4.0, 0.0), frame(5, True, 4.0, 0.0, [lm("column", "right", 2.0)]),
                  frame(10, False)]
        assert oracle.analyze_failure(frames).e_obj == "column at right, 2.0 m"

    def test_exact_bucket_preferred_over_nearer_neighbour(self):
        lms = [lm("kiosk", "left", 1.5, "k1"), lm("column", "center", 3.0, "c1")]
        frames = [frame(0, True, 4.0, 0.0), frame(5, True, 4.0, 0.0, lms), frame(10, False)]
        assert oracle.analyze_failure(frames).e_obj == "column at center, 3.0 m"

    def test_two_buckets_away_ignored(self):
        frames = [frame(0, True, 4.0, 0.0), frame(5, True, 4.0, 0.0, [lm("column", "far-right", 2.0)]),
                  frame(10, False)]
        assert not oracle.analyze_failure(frames).occluded

    def test_landmark_behind_target_ignored(self):
        frames = [frame(0, True, 4.0, 0.0), frame(5, True, 4.0, 0.0, [lm("column", "center", 5.0)]),
                  frame(10, False)]
        assert not oracle.analyze_failure(frames).occluded

    def test_ego_rotation_compensated(self):
        # the tracker turned left by 10 deg while the target stayed put in the world
        f0 = frame(0, True, 3.0, 0.0, heading=0.0)
        f1 = frame(5, True, 3.0, -10.0, heading=math.radians(10))
        assert lateral_motion([f0, f1, frame(10, False)]) == "away"


class TestSuggest:
    def test_occluded_moving_right(self):
        psi = FailureContext(1, "column at center, 3.0 m")
        frames = [frame(0, True, 4.0, 0.0), frame(5, True, 4.0, -8.0), frame(10, False)]
        assert oracle.suggest_movement(psi, frames) == plan(["move_forward", "until_passing", "column"],
                                                            ["turn_right", "none", None])

    def test_occluded_defaults_left(self):
        psi = FailureContext(1, "column at center, 3.0 m")
        g = oracle.suggest_movement(psi, [frame(0, True, 4.0, 0.0), frame(5, True, 4.0, 0.0), frame(10, False)])
        assert g.instructions[1].direction is Direction.TURN_LEFT

    def test_far_left(self):
        g = oracle.suggest_movement(FailureContext(0, None, "far-left, 5.0 m, moving left"))
        assert g == plan(["turn_left", "none", None], ["move_forward", "none", None])

    def test_center_uses_motion(self):
        g = oracle.suggest_movement(FailureContext(0, None, "center, 5.0 m, moving right"))
        assert g.instructions[0].direction is Direction.TURN_RIGHT

    def test_unknown_scans_left(self):
        assert oracle.suggest_movement(FailureContext(0, None, "unknown")) == plan(["turn_left", "none", None])


class TestPlan:
    def test_forward_until_passing_then_turn(self):
        psi = FailureContext(1, "column at center, 3.0 m")
        g = plan(["move_forward", "until_passing", "column"], ["turn_right", "none", None])
        assert oracle.plan_recovery(psi, g) == seq(F, F, F, F, R)

    def test_padding(self):
        assert oracle.plan_recovery(FailureContext(0, None, "unknown"), plan(["turn_left", "none", None])) \
            == seq(L, S, S, S, S)

    def test_cap_keeps_last_turn(self):
        psi = FailureContext(1, "wall at center, 10.0 m")
        g = plan(["move_forward", "until_passing", "wall"], ["turn_left", "none", None])
        assert oracle.plan_recovery(psi, g) == seq(F, F, F, F, L)

    def test_turn_count_from_bearing(self):
        psi = FailureContext(0, None, "far-left, 4.0 m, moving left")
        frames = [frame(0, True, 4.0, 20.0), frame(5, True, 4.0, 40.0), frame(10, False)]
        g = oracle.suggest_movement(psi, frames)
        assert oracle.plan_recovery(psi, g, frames) == seq(L, F, S, S, S)
        # tracker has since turned right by 60 deg (world bearing now 100 deg off)
        frames[-1] = frame(10, False, heading=math.radians(-60))
        assert oracle.plan_recovery(psi, g, frames) == seq(L, L, L, F, S)

    def test_always_five(self):
        g = plan(*[["turn_right", "none", None]] * 5)
        frames = [frame(0, True, 4.0, -40.0), frame(5, True, 4.0, -40.0, heading=3.0), frame(10, False, heading=3.0)]
        assert len(oracle.plan_recovery(FailureContext(0, None, "far-right, 4.0 m, moving right"), g, frames).actions) == 5


class TestRefine:
    psi = FailureContext(1, "column at center, 3.0 m")
    g = plan(["move_forward", "until_passing", "column"], ["turn_right", "none", None])

    def test_wrong_side_mirrors(self):
        out = oracle.refine(self.psi, self.g, seq(F, F, F, F, R), [scored(InsightTag.WRONG_SIDE, 1.0)])
        assert out == seq(F, F, F, F, L)

    def test_empty_retrieval(self):
        assert oracle.refine(self.psi, self.g, seq(F, F, F, F, R), []) == seq(F, F, F, F, R)

    def test_below_threshold(self):
        out = oracle.refine(self.psi, self.g, seq(F, F, F, F, R), [scored(InsightTag.WRONG_SIDE, 0.4)])
        assert out == seq(F, F, F, F, R)

    def test_skips_cases_without_insight(self):
        cases = [scored(None, 1.0), scored(InsightTag.BLOCKED_PATH, 0.7)]
        assert oracle.refine(self.psi, self.g, seq(F, F, F, F, R), cases) == seq(J, F, F, F, R)

    @pytest.mark.parametrize("tag,before,after", [
        (InsightTag.OVERSHOOT, (F, F, F, F, R), (F, F, F, S, R)),
        (InsightTag.UNDERSHOOT, (L, F, S, S, S), (L, F, F, S, S)),
        (InsightTag.UNDERSHOOT, (F, F, F, F, R), (F, F, F, F, R)),
        (InsightTag.UNDERSHOOT, (F, L, F, R, F), (F, L, F, R, F)),
        (InsightTag.UNDERSHOOT, (L, L, F, R, F), (L, L, F, R, F)),
        (InsightTag.UNDERSHOOT, (R, S, S, S, S), (R, F, S, S, S)),
        (InsightTag.BLOCKED_PATH, (F, F, F, F, R), (J, F, F, F, R)),
        (InsightTag.NONE, (F, F, F, F, R), (F, F, F, F, R)),
    ])
    def test_tag_rules(self, tag, before, after):
        assert apply_insight(seq(*before), tag) == seq(*after)

    def test_undershoot_without_stop_replaces_action_before_last_turn(self):
        assert apply_insight(seq(F, L, B, R, F), InsightTag.UNDERSHOOT) == seq(F, L, F, R, F)

    def test_mirror_is_involution(self):
        r = seq(L, F, R, J, S)
        assert apply_insight(apply_insight(r, InsightTag.WRONG_SIDE), InsightTag.WRONG_SIDE) == r


class TestReflect:
    psi = FailureContext(1, "column at center, 3.0 m")
    g = plan(["move_forward", "until_passing", "column"], ["turn_right", "none", None])

    def test_wrong_side(self):
        r = seq(F, F, F, F, R)
        assert diagnose(self.psi, self.g, r, trace(r.actions), 0.8) is InsightTag.WRONG_SIDE
        e = oracle.reflect(self.psi, self.g, r, trace(r.actions), 0.8)
        assert e.canonical_tag is InsightTag.WRONG_SIDE

    def test_undershoot(self):
        col = lm("column", "center", 2.5, "c1")
        first = lm("column", "center", 3.0, "c1")
        r = seq(F, S, S, S, S)
        t = trace(r.actions, last_landmarks=[col], first_landmarks=[first])
        assert diagnose(self.psi, plan(["move_forward", "until_passing", "column"]), r, t, 0.0) is InsightTag.UNDERSHOOT

    def test_overshoot(self):
        first = lm("column", "center", 3.0, "c1")
        poses = [Pose(i, 0, 0) for i in range(5)] + [Pose(4, 0, 0)]
        r = seq(F, F, F, F, S)
        t = trace(r.actions, first_landmarks=[first], poses=poses)
        assert diagnose(self.psi, plan(["move_forward", "until_passing", "column"]), r, t, 0.0) is InsightTag.OVERSHOOT

    def test_blocked(self):
        psi = FailureContext(0, None, "center, 4.0 m, moving away")
        g = plan(["turn_left", "none", None], ["move_forward", "none", None])
        r = seq(L, F, S, S, S)
        poses = [Pose(0, 0, 0), Pose(0, 0, 0.5), Pose(0.3, 0, 0.5)] + [Pose(0.3, 0, 0.5)] * 3
        assert diagnose(psi, g, r, trace(r.actions, poses=poses), 0.4) is InsightTag.BLOCKED_PATH

    def test_none(self):
        psi = FailureContext(0, None, "unknown")
        r = seq(L, S, S, S, S)
        assert diagnose(psi, plan(["turn_left", "none", None]), r, trace(r.actions), 0.3) is InsightTag.NONE


class TestPurity:
    def test_same_inputs_same_outputs(self):
        frames = [frame(0, True, 4.0, 5.0), frame(5, True, 4.0, 0.0, [lm("column", "center", 3.0)]),
                  frame(10, False)]
        a = [OracleReasoner().analyze_failure(frames) for _ in range(2)]
        assert a[0] == a[1]
        g = [oracle.suggest_movement(a[0], frames) for _ in range(2)]
        assert g[0] == g[1]
        assert oracle.plan_recovery(a[0], g[0], frames) == oracle.plan_recovery(a[1], g[1], frames)
