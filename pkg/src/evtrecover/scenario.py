"""Scenario files and the scripted target.

A scenario fixes the arena, obstacles, spawn poses and a waypoint route for
the target.  Per-episode seeds perturb the route within the jitter limits so
that evaluation episodes differ while staying reproducible.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .geometry import Point
from .world import Obstacle, Pose, WorldState, obstacle_from_dict, obstacle_to_dict

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Raised for malformed or physically invalid scenario definitions."""


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    dwell: int = 0           # steps to wait after arriving
    speed: Optional[float] = None  # overrides the route speed on the leg towards this point


@dataclass(frozen=True)
class Jitter:
    waypoint: float = 0.0  # metres, uniform per axis
    speed: float = 0.0     # fraction of nominal speed
    dwell: int = 0         # steps, uniform +/-
    heading_deg: float = 0.0  # tracker spawn heading


@dataclass(frozen=True)
class Scenario:
    name: str
    bounds: Tuple[float, float, float, float]
    obstacles: Tuple[Obstacle, ...]
    tracker_spawn: Pose
    target_spawn: Pose
    waypoints: Tuple[Waypoint, ...]
    speed: float = 0.5
    loop: bool = False
    seed: int = 0
    jitter: Jitter = field(default_factory=Jitter)

    # -- construction ------------------------------------------------------

    def validate(self) -> None:
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ScenarioError(f"{self.name}: degenerate bounds {self.bounds}")
        if not 0 < self.speed <= 1.0:
            raise ScenarioError(f"{self.name}: target speed must be in (0, 1] m/step")
        try:
            self.initial_state().validate()
        except ValueError as exc:
            raise ScenarioError(f"{self.name}: {exc}") from exc
        for i, wp in enumerate(self.waypoints):
            if not (x0 <= wp.x <= x1 and y0 <= wp.y <= y1):
                raise ScenarioError(f"{self.name}: waypoint {i} outside bounds")
            if any(ob.shape.contains((wp.x, wp.y)) for ob in self.obstacles):
                raise ScenarioError(f"{self.name}: waypoint {i} inside an obstacle")
            if wp.speed is not None and not 0 < wp.speed <= 1.0:
                raise ScenarioError(f"{self.name}: waypoint {i} speed must be in (0, 1]")

    def initial_state(self, tracker: Optional[Pose] = None) -> WorldState:
        return WorldState(0, tracker or self.tracker_spawn, self.target_spawn, self.obstacles, self.bounds)

    def instantiate(self, seed: Optional[int] = None) -> Tuple[WorldState, "WaypointPolicy"]:
        """Build the initial world and target policy for one episode seed."""
        seed = self.seed if seed is None else seed
        rng = random.Random(seed)
        j = self.jitter
        waypoints = []
        for wp in self.waypoints:
            x, y = wp.x, wp.y
            if j.waypoint > 0:
                cand = (x + rng.uniform(-j.waypoint, j.waypoint), y + rng.uniform(-j.waypoint, j.waypoint))
                if self._clear(cand, 0.3):
                    x, y = cand
            dwell = wp.dwell
            if j.dwell and wp.dwell:
                dwell = max(0, wp.dwell + rng.randint(-j.dwell, j.dwell))
            waypoints.append(replace(wp, x=x, y=y, dwell=dwell))
        speed = self.speed
        if j.speed > 0:
            speed = min(1.0, speed * (1.0 + rng.uniform(-j.speed, j.speed)))
        tracker = self.tracker_spawn
        if j.heading_deg > 0:
            tracker = replace(tracker, heading=tracker.heading + math.radians(rng.uniform(-j.heading_deg, j.heading_deg)))
        policy = WaypointPolicy(tuple(waypoints), speed, self.loop)
        return self.initial_state(tracker), policy

    def _clear(self, p: Point, clearance: float) -> bool:
        x0, y0, x1, y1 = self.bounds
        if not (x0 + clearance <= p[0] <= x1 - clearance and y0 + clearance <= p[1] <= y1 - clearance):
            return False
        return all(ob.shape.distance(p) > clearance for ob in self.obstacles)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "bounds": list(self.bounds),
            "obstacles": [obstacle_to_dict(o) for o in self.obstacles],
            "tracker_spawn": self.tracker_spawn.to_dict(),
            "target_spawn": self.target_spawn.to_dict(),
            "target": {
                "waypoints": [_waypoint_to_dict(w) for w in self.waypoints],
                "speed": self.speed,
                "loop": self.loop,
            },
            "seed": self.seed,
            "jitter": {"waypoint": self.jitter.waypoint, "speed": self.jitter.speed,
                       "dwell": self.jitter.dwell, "heading_deg": self.jitter.heading_deg},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario schema_version {version!r}")
        try:
            target = d["target"]
            sc = cls(
                name=str(d.get("name", "unnamed")),
                bounds=tuple(float(v) for v in d["bounds"]),
                obstacles=tuple(obstacle_from_dict(o) for o in d.get("obstacles", [])),
                tracker_spawn=Pose.from_dict(d["tracker_spawn"]),
                target_spawn=Pose.from_dict(d["target_spawn"]),
                waypoints=tuple(_waypoint_from_dict(w) for w in target.get("waypoints", [])),
                speed=float(target.get("speed", 0.5)),
                loop=bool(target.get("loop", False)),
                seed=int(d.get("seed", 0)),
                jitter=Jitter(**d.get("jitter", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        if len(sc.bounds) != 4:
            raise ScenarioError("bounds must be [xmin, ymin, xmax, ymax]")
        sc.validate()
        return sc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)


def _waypoint_to_dict(w: Waypoint) -> dict:
    d = {"x": w.x, "y": w.y}
    if w.dwell:
        d["dwell"] = w.dwell
    if w.speed is not None:
        d["speed"] = w.speed
    return d


def _waypoint_from_dict(d) -> Waypoint:
    if isinstance(d, (list, tuple)):
        return Waypoint(float(d[0]), float(d[1]), int(d[2]) if len(d) > 2 else 0)
    sp = d.get("speed")
    return Waypoint(float(d["x"]), float(d["y"]), int(d.get("dwell", 0)), None if sp is None else float(sp))


class WaypointPolicy:
    """Scripted target route.

    The target walks towards each waypoint at the leg speed, waits ``dwell``
    steps on arrival and then heads for the next one (wrapping when ``loop``).
    Because the route ignores the tracker, the requested position is a pure
    function of the tick; the schedule is computed lazily and memoised.
    """

    def __init__(self, waypoints: Sequence[Waypoint], speed: float, loop: bool = False) -> None:
        self.waypoints = tuple(waypoints)
        self.speed = speed
        self.loop = loop
        self._schedule: List[Point] = []
        self._cursor = (0, 0)  # waypoint index, remaining dwell
        self._pos: Optional[Point] = None

    def _extend(self, start: Point, upto: int) -> None:
        if self._pos is None:
            self._pos = start
        idx, dwell = self._cursor
        pos = self._pos
        while len(self._schedule) <= upto:
            if idx >= len(self.waypoints):
                self._schedule.append(pos)
                continue
            if dwell > 0:
                dwell -= 1
                self._schedule.append(pos)
                if dwell == 0:
                    idx = self._advance(idx)
                continue
            wp = self.waypoints[idx]
            v = wp.speed if wp.speed is not None else self.speed
            dx, dy = wp.x - pos[0], wp.y - pos[1]
            d = math.hypot(dx, dy)
            if d <= v + 1e-9:
                pos = (wp.x, wp.y)
                if wp.dwell > 0:
                    dwell = wp.dwell
                else:
                    idx = self._advance(idx)
            else:
                pos = (pos[0] + dx / d * v, pos[1] + dy / d * v)
            self._schedule.append(pos)
        self._cursor = (idx, dwell)
        self._pos = pos

    def _advance(self, idx: int) -> int:
        idx += 1
        if idx >= len(self.waypoints) and self.loop and self.waypoints:
            idx = 0
        return idx

    def __call__(self, tick: int, pose: Pose) -> Point:
        if tick >= len(self._schedule):
            self._extend(pose.xy, tick)
        return self._schedule[tick]

    def positions(self, start: Point, n: int) -> List[Point]:
        if n > len(self._schedule):
            self._extend(start, n - 1)
        return list(self._schedule[:n])
