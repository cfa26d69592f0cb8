"""Discrete-time 2D tracking world.

One step is one simulated second, so the continuous action limits (30 deg/s,
1 m/s) are per-step displacements and every discrete action is one step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

from .geometry import Circle, Point, Polygon, Shape, normalize_angle, ray_exit_rect

BUCKETS = ("far-left", "left", "center", "right", "far-right")


@dataclass(frozen=True)
class WorldConfig:
    """Tunable world constants; defaults follow the evaluation protocol."""

    view_radius: float = 7.5
    half_fov: float = math.pi / 4
    rho_star: float = 2.5
    theta_star: float = 0.0
    collision_margin: float = 0.05
    jump_distance: float = 1.5
    max_angular_deg: float = 30.0
    max_linear: float = 1.0
    max_target_speed: float = 1.0
    reward_floor: float = -1.0


DEFAULT_CONFIG = WorldConfig()


class HeightClass(str, enum.Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def xy(self) -> Point:
        return (self.x, self.y)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(float(d["x"]), float(d["y"]), float(d.get("heading", 0.0)))


@dataclass(frozen=True)
class Obstacle:
    id: str
    shape: Shape
    height_class: HeightClass = HeightClass.HIGH
    label: str = "obstacle"

    def __post_init__(self) -> None:
        if not self.label or not self.label.strip():
            raise ValueError(f"obstacle {self.id!r} needs a non-empty label")
        object.__setattr__(self, "height_class", HeightClass(self.height_class))


@dataclass(frozen=True)
class WorldState:
    tick: int
    tracker: Pose
    target: Pose
    obstacles: Tuple[Obstacle, ...]
    bounds: Tuple[float, float, float, float]

    def validate(self) -> None:
        """Raise ``ValueError`` if an agent sits inside an obstacle or outside bounds."""
        x0, y0, x1, y1 = self.bounds
        ids = [o.id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise ValueError("obstacle ids must be unique")
        for name, pose in (("tracker", self.tracker), ("target", self.target)):
            if not (x0 <= pose.x <= x1 and y0 <= pose.y <= y1):
                raise ValueError(f"{name} at ({pose.x:.3f}, {pose.y:.3f}) is outside bounds")
            for ob in self.obstacles:
                if ob.shape.contains(pose.xy):
                    raise ValueError(f"{name} is inside obstacle {ob.id!r}")


@dataclass(frozen=True)
class ContinuousAction:
    """Angular velocity in degrees/step, linear velocity in metres/step.

    Values are clamped to the actuator limits on construction.
    """

    angular_velocity: float = 0.0
    linear_velocity: float = 0.0

    def __post_init__(self) -> None:
        lim_a, lim_l = DEFAULT_CONFIG.max_angular_deg, DEFAULT_CONFIG.max_linear
        object.__setattr__(self, "angular_velocity", min(lim_a, max(-lim_a, float(self.angular_velocity))))
        object.__setattr__(self, "linear_velocity", min(lim_l, max(-lim_l, float(self.linear_velocity))))


class DiscreteAction(str, enum.Enum):
    MOVE_FORWARD = "MoveForward"
    MOVE_BACKWARD = "MoveBackward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"
    JUMP_OVER = "JumpOver"
    STOP = "Stop"

    @property
    def is_turn(self) -> bool:
        return self in (DiscreteAction.TURN_LEFT, DiscreteAction.TURN_RIGHT)


@dataclass(frozen=True)
class Landmark:
    obstacle_id: str
    label: str
    bucket: str
    distance: float


@dataclass(frozen=True)
class Observation:
    """What the tracker perceives after a step.

    ``heading`` is the tracker's own odometric heading (ego state, not target
    information); the reasoner uses it to compensate bearings for ego-rotation.
    """

    tick: int
    target_visible: bool
    rel_distance: Optional[float] = None
    rel_angle: Optional[float] = None
    landmarks: Tuple[Landmark, ...] = ()
    heading: float = 0.0

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "target_visible": self.target_visible,
            "rel_distance": self.rel_distance,
            "rel_angle": self.rel_angle,
            "heading": self.heading,
            "landmarks": [[lm.obstacle_id, lm.label, lm.bucket, lm.distance] for lm in self.landmarks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        return cls(
            tick=int(d["tick"]),
            target_visible=bool(d["target_visible"]),
            rel_distance=d.get("rel_distance"),
            rel_angle=d.get("rel_angle"),
            heading=float(d.get("heading", 0.0)),
            landmarks=tuple(Landmark(str(a), str(b), str(c), float(e)) for a, b, c, e in d.get("landmarks", [])),
        )


TargetPolicy = Callable[[int, Pose], Point]
"""Maps (tick, target pose) to the position the target wants to reach this step."""


# ---------------------------------------------------------------------------
# Perception
# ---------------------------------------------------------------------------

def relative_polar(tracker: Pose, point: Point) -> Tuple[float, float]:
    """Distance and tracker-frame bearing (positive = left) to ``point``."""
    dx, dy = point[0] - tracker.x, point[1] - tracker.y
    return math.hypot(dx, dy), normalize_angle(math.atan2(dy, dx) - tracker.heading)


def line_of_sight(a: Point, b: Point, obstacles: Sequence[Obstacle]) -> bool:
    """True when the open segment a-b crosses no obstacle interior."""
    for ob in obstacles:
        if ob.shape.segment_interval(a, b) is not None:
            return False
    return True


def visibility(tracker: Pose, target: Pose, obstacles: Sequence[Obstacle],
               cfg: WorldConfig = DEFAULT_CONFIG) -> bool:
    rho, theta = relative_polar(tracker, target.xy)
    if rho > cfg.view_radius or abs(theta) > cfg.half_fov:
        return False
    return line_of_sight(tracker.xy, target.xy, obstacles)


def bearing_bucket(angle: float, cfg: WorldConfig = DEFAULT_CONFIG) -> str:
    """Five equal bins across the fan; bearings outside it clamp to the edge bins."""
    deg = math.degrees(angle)
    width = 2 * math.degrees(cfg.half_fov) / 5
    if deg > 1.5 * width:
        return "far-left"
    if deg > 0.5 * width:
        return "left"
    if deg >= -0.5 * width:
        return "center"
    if deg >= -1.5 * width:
        return "right"
    return "far-right"


def round_half(value: float) -> float:
    """Round to the nearest 0.5, halves rounding up."""
    return math.floor(value * 2.0 + 0.5) / 2.0


def visible_landmarks(tracker: Pose, obstacles: Sequence[Obstacle],
                      cfg: WorldConfig = DEFAULT_CONFIG) -> Tuple[Landmark, ...]:
    found = []
    for ob in obstacles:
        if not ob.shape.intersects_sector(tracker.xy, tracker.heading, cfg.view_radius, cfg.half_fov):
            continue
        raw = ob.shape.distance(tracker.xy)
        _, bearing = relative_polar(tracker, ob.shape.reference_point)
        found.append((raw, ob.id, Landmark(ob.id, ob.label, bearing_bucket(bearing, cfg), round_half(raw))))
    found.sort(key=lambda item: (item[0], item[1]))
    return tuple(lm for _, _, lm in found)


def observe(state: WorldState, cfg: WorldConfig = DEFAULT_CONFIG) -> Observation:
    landmarks = visible_landmarks(state.tracker, state.obstacles, cfg)
    if visibility(state.tracker, state.target, state.obstacles, cfg):
        rho, theta = relative_polar(state.tracker, state.target.xy)
        return Observation(state.tick, True, rho, theta, landmarks, state.tracker.heading)
    return Observation(state.tick, False, None, None, landmarks, state.tracker.heading)


# ---------------------------------------------------------------------------
# Reward
# ---------------------------------------------------------------------------

def reward(rho: float, theta: float, cfg: WorldConfig = DEFAULT_CONFIG) -> float:
    """Step reward from the true target distance and bearing."""
    theta = normalize_angle(theta)
    r = (1.0 - abs(rho - cfg.rho_star) / cfg.view_radius
         - abs(theta - cfg.theta_star) / cfg.half_fov)
    return max(cfg.reward_floor, r)


def state_reward(state: WorldState, cfg: WorldConfig = DEFAULT_CONFIG) -> float:
    rho, theta = relative_polar(state.tracker, state.target.xy)
    return reward(rho, theta, cfg)


# ---------------------------------------------------------------------------
# Motion
# ---------------------------------------------------------------------------

def _first_contact(p: Point, u: Point, length: float, obstacles: Sequence[Obstacle]) -> float:
    """Distance along ``u`` at which the path first enters an obstacle (inf if never)."""
    end = (p[0] + u[0] * length, p[1] + u[1] * length)
    best = math.inf
    for ob in obstacles:
        span = ob.shape.segment_interval(p, end)
        if span is not None:
            best = min(best, span[0] * length)
    return best


def move_point(p: Point, direction: float, distance: float, obstacles: Sequence[Obstacle],
               bounds: Sequence[float], cfg: WorldConfig = DEFAULT_CONFIG) -> Tuple[Point, bool]:
    """Straight-line move with truncation at the first contact.

    A negative ``distance`` moves backwards.  Returns the new point and whether
    the move was truncated.  No sliding is applied.
    """
    if distance == 0:
        return p, False
    if distance < 0:
        direction += math.pi
        distance = -distance
    u = (math.cos(direction), math.sin(direction))
    limit = min(_first_contact(p, u, distance, obstacles), ray_exit_rect(p, u, bounds))
    travel = distance
    truncated = False
    if limit - cfg.collision_margin < distance:
        travel = max(0.0, limit - cfg.collision_margin)
        truncated = True
    return (p[0] + u[0] * travel, p[1] + u[1] * travel), truncated


def _advance_target(state: WorldState, policy: TargetPolicy, cfg: WorldConfig) -> Pose:
    goal = policy(state.tick, state.target)
    dx, dy = goal[0] - state.target.x, goal[1] - state.target.y
    dist = math.hypot(dx, dy)
    if dist < 1e-12:
        return state.target
    dist = min(dist, cfg.max_target_speed)
    heading = math.atan2(dy, dx)
    (x, y), _ = move_point(state.target.xy, heading, dist, state.obstacles, state.bounds, cfg)
    return Pose(x, y, heading)


@dataclass(frozen=True)
class StepInfo:
    """Side information about the tracker's move in one step."""

    truncated: bool = False
    travelled: float = 0.0


def _tracker_move(state: WorldState, turn_deg: float, distance: float, cfg: WorldConfig,
                  ignore_low: bool = False) -> Tuple[Pose, StepInfo]:
    heading = normalize_angle(state.tracker.heading + math.radians(turn_deg))
    if not ignore_low:
        (x, y), trunc = move_point(state.tracker.xy, heading, distance, state.obstacles, state.bounds, cfg)
    else:
        high = [o for o in state.obstacles if o.height_class is HeightClass.HIGH]
        low = [o for o in state.obstacles if o.height_class is HeightClass.LOW]
        (x, y), trunc = move_point(state.tracker.xy, heading, distance, high, state.bounds, cfg)
        # cannot land on (or within the margin of) a low obstacle: stop short of it
        for ob in low:
            if ob.shape.distance((x, y)) <= cfg.collision_margin:
                travelled = math.hypot(x - state.tracker.x, y - state.tracker.y)
                (x, y), _ = move_point(state.tracker.xy, heading, travelled, [ob], state.bounds, cfg)
                trunc = True
    travelled = math.hypot(x - state.tracker.x, y - state.tracker.y)
    return Pose(x, y, heading), StepInfo(trunc, travelled)


def step_with_info(state: WorldState, action: ContinuousAction, target_policy: TargetPolicy,
                   cfg: WorldConfig = DEFAULT_CONFIG, *, ignore_low: bool = False,
                   distance: Optional[float] = None):
    dist = action.linear_velocity if distance is None else distance
    tracker, info = _tracker_move(state, action.angular_velocity, dist, cfg, ignore_low)
    target = _advance_target(state, target_policy, cfg)
    new_state = replace(state, tick=state.tick + 1, tracker=tracker, target=target)
    return new_state, observe(new_state, cfg), state_reward(new_state, cfg), info


def step(state: WorldState, tracker_action: ContinuousAction, target_policy: TargetPolicy,
         cfg: WorldConfig = DEFAULT_CONFIG) -> Tuple[WorldState, Observation, float]:
    """Advance the world one tick.

    The tracker turns first, then moves along its new heading; the target
    moves towards the point its policy requests.  Returns the new state, the
    tracker's observation of it and the step reward.
    """
    new_state, obs, r, _ = step_with_info(state, tracker_action, target_policy, cfg)
    return new_state, obs, r


_DISCRETE = {
    DiscreteAction.MOVE_FORWARD: (0.0, 1.0),
    DiscreteAction.MOVE_BACKWARD: (0.0, -1.0),
    DiscreteAction.TURN_LEFT: (30.0, 0.0),
    DiscreteAction.TURN_RIGHT: (-30.0, 0.0),
    DiscreteAction.STOP: (0.0, 0.0),
}


def execute_discrete_with_info(state: WorldState, a: DiscreteAction, target_policy: TargetPolicy,
                               cfg: WorldConfig = DEFAULT_CONFIG):
    a = DiscreteAction(a)
    if a is DiscreteAction.JUMP_OVER:
        return step_with_info(state, ContinuousAction(), target_policy, cfg,
                              ignore_low=True, distance=cfg.jump_distance)
    ang, lin = _DISCRETE[a]
    return step_with_info(state, ContinuousAction(ang, lin), target_policy, cfg)


def execute_discrete(state: WorldState, a: DiscreteAction, target_policy: TargetPolicy,
                     cfg: WorldConfig = DEFAULT_CONFIG) -> Tuple[WorldState, Observation, float]:
    """Run one discrete recovery action as a single world step."""
    new_state, obs, r, _ = execute_discrete_with_info(state, a, target_policy, cfg)
    return new_state, obs, r


def static_policy(tick: int, pose: Pose) -> Point:
    return pose.xy


def obstacle_to_dict(ob: Obstacle) -> dict:
    d = {"id": ob.id, "label": ob.label, "height_class": ob.height_class.value}
    if isinstance(ob.shape, Circle):
        d.update(type="circle", center=list(ob.shape.center), radius=ob.shape.radius)
    else:
        d.update(type="polygon", vertices=[list(v) for v in ob.shape.vertices])
    return d


def obstacle_from_dict(d: dict) -> Obstacle:
    kind = d.get("type")
    if kind == "circle":
        shape: Shape = Circle(tuple(map(float, d["center"])), float(d["radius"]))
    elif kind == "polygon":
        shape = Polygon(tuple(tuple(map(float, v)) for v in d["vertices"]))
    else:
        raise ValueError(f"unknown obstacle type {kind!r}")
    return Obstacle(str(d["id"]), shape, HeightClass(d.get("height_class", "high")), str(d.get("label", "")))
