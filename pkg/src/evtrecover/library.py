"""Built-in scenario library.

Four arenas, each with three target routes:

* ``loop``: a closed lap that stays inside open lanes;
* ``zigzag``: a weaving route with frequent heading changes;
* ``dash``: the target pauses in plain view, then sprints behind the nearest
  occluder and waits there before moving on.

Names take the form ``"<arena>:<pattern>"``; a bare arena name selects its
dash pattern.
"""

from __future__ import annotations

import math
from typing import Callable, Dict, List, Sequence, Tuple

from .geometry import Circle, Point, rectangle
from .scenario import Jitter, Scenario, ScenarioError, Waypoint
from .world import HeightClass, Obstacle, Pose

ARENAS = ("pillars", "aisles", "garage", "sprawl")
PATTERNS = ("dash", "loop", "zigzag")
DEFAULT_PATTERN = "dash"

_JITTER = Jitter(waypoint=0.2, speed=0.1, dwell=5, heading_deg=5.0)


def _column(oid: str, x: float, y: float, r: float) -> Obstacle:
    return Obstacle(oid, Circle((x, y), r), HeightClass.HIGH, "column")


def _box(oid: str, x0: float, y0: float, x1: float, y1: float, label: str,
         height: HeightClass = HeightClass.HIGH) -> Obstacle:
    return Obstacle(oid, rectangle(x0, y0, x1, y1), height, label)


def _heading(a: Point, b: Point) -> float:
    return math.atan2(b[1] - a[1], b[0] - a[0])


def _dash_route(occluder: Point, u: Point, tail: Sequence[Waypoint], offset: float = 0.8,
                pause_ahead: float = 0.5, hide: Point = (0.87, 2.18)) -> Tuple[Pose, Pose, List[Waypoint]]:
    """Spawn poses and route for a dash behind an occluder centred at ``occluder``.

    The tracker follows the target along a lane ``offset`` metres to the left
    of the occluder (relative to the walking direction ``u``).  The target
    pauses ``pause_ahead`` metres past the occluder so the tracker settles to
    a standstill with the occluder just off its axis, then sprints into the
    occluder's shadow (``hide`` is given in occluder-relative right/forward
    metres) and waits there out of sight.
    """
    ux, uy = u
    nx, ny = uy, -ux          # right-hand normal
    cx, cy = occluder
    lane = (cx - offset * nx, cy - offset * ny)
    pause = (lane[0] + pause_ahead * ux, lane[1] + pause_ahead * uy)
    spot = (cx + hide[0] * nx + hide[1] * ux, cy + hide[0] * ny + hide[1] * uy)
    target0 = (lane[0] - 5.5 * ux, lane[1] - 5.5 * uy)
    tracker0 = (target0[0] - 2.5 * ux, target0[1] - 2.5 * uy)
    h = math.atan2(uy, ux)
    route = [Waypoint(*pause, dwell=25), Waypoint(*spot, dwell=60, speed=1.0), *tail]
    return Pose(*tracker0, h), Pose(*target0, h), route


def _scenario(arena: str, pattern: str, bounds, obstacles, tracker: Pose, target: Pose,
              route: Sequence[Waypoint], loop: bool, speed: float = 0.5) -> Scenario:
    return Scenario(f"{arena}:{pattern}", tuple(bounds), tuple(obstacles), tracker, target,
                    tuple(route), speed=speed, loop=loop, seed=0, jitter=_JITTER)


# -- pillars: a 4x4 grid of thin columns in an open hall ---------------------

def _pillars(pattern: str) -> Scenario:
    bounds = (0.0, 0.0, 23.0, 23.0)
    obstacles = []
    k = 0
    for gx in (4.0, 9.0, 14.0, 19.0):
        for gy in (4.0, 9.0, 14.0, 19.0):
            k += 1
            obstacles.append(_column(f"col{k}", gx, gy, 0.5))
    if pattern == "dash":
        tracker, target, route = _dash_route((9.0, 9.0), (0.0, 1.0),
                                             [Waypoint(11.5, 12.5), Waypoint(11.5, 21.0)])
        return _scenario("pillars", pattern, bounds, obstacles, tracker, target, route, loop=False)
    if pattern == "loop":
        route = [Waypoint(6.5, 16.5), Waypoint(16.5, 16.5), Waypoint(16.5, 6.5), Waypoint(6.5, 6.5)]
        return _scenario("pillars", pattern, bounds, obstacles, Pose(6.5, 1.0, math.pi / 2),
                         Pose(6.5, 3.5, math.pi / 2), route, loop=True)
    # weave up one lane and down another, never crossing a column
    route = [Waypoint(7.5, 6.5), Waypoint(5.5, 9.0), Waypoint(7.5, 11.5), Waypoint(5.5, 14.0),
             Waypoint(7.5, 16.5), Waypoint(6.5, 21.0), Waypoint(11.5, 21.5), Waypoint(16.5, 21.0),
             Waypoint(15.5, 16.5), Waypoint(17.5, 14.0), Waypoint(15.5, 11.5), Waypoint(17.5, 9.0),
             Waypoint(15.5, 6.5), Waypoint(11.5, 1.5), Waypoint(6.5, 1.5)]
    return _scenario("pillars", pattern, bounds, obstacles, Pose(6.5, 1.0, math.pi / 2),
                     Pose(6.5, 3.5, math.pi / 2), route, loop=True)


# -- aisles: long parallel shelves -------------------------------------------

def _aisles(pattern: str) -> Scenario:
    bounds = (0.0, 0.0, 25.0, 20.0)
    obstacles = [_box(f"shelf{i + 1}", x - 0.3, 3.0, x + 0.3, 17.0, "shelf")
                 for i, x in enumerate((5.0, 10.0, 15.0, 20.0))]
    obstacles += [_box("pallet1", 7.85, 9.65, 8.55, 10.35, "pallet"),
                  _box("pallet2", 16.45, 12.65, 17.15, 13.35, "pallet")]
    up = math.pi / 2
    if pattern == "dash":
        tracker, target, route = _dash_route((8.2, 10.0), (0.0, 1.0),
                                             [Waypoint(8.5, 18.5), Waypoint(12.5, 18.5),
                                              Waypoint(12.5, 4.0)])
        return _scenario("aisles", pattern, bounds, obstacles, tracker, target, route, loop=False)
    if pattern == "loop":
        route = [Waypoint(7.5, 18.5), Waypoint(12.5, 18.5), Waypoint(12.5, 1.5), Waypoint(7.5, 1.5)]
        return _scenario("aisles", pattern, bounds, obstacles, Pose(7.5, 1.0, up),
                         Pose(7.5, 3.5, up), route, loop=True)
    route = [Waypoint(7.5, 18.5), Waypoint(12.5, 18.5), Waypoint(12.5, 1.5), Waypoint(17.5, 1.5),
             Waypoint(17.5, 18.5), Waypoint(12.5, 18.5), Waypoint(12.5, 1.5), Waypoint(7.5, 1.5)]
    return _scenario("aisles", pattern, bounds, obstacles, Pose(7.5, 1.0, up),
                     Pose(7.5, 3.5, up), route, loop=True)


# -- garage: perimeter walls, two column rows and low kerbs -------------------

def _garage(pattern: str) -> Scenario:
    bounds = (0.0, 0.0, 30.0, 20.0)
    obstacles = [
        _box("wall_s", 0.0, 0.0, 30.0, 0.4, "wall"),
        _box("wall_n", 0.0, 19.6, 30.0, 20.0, "wall"),
        _box("wall_w", 0.0, 0.4, 0.4, 19.6, "wall"),
        _box("wall_e", 29.6, 0.4, 30.0, 19.6, "wall"),
    ]
    k = 0
    for gy in (6.0, 14.0):
        for gx in (6.0, 12.0, 18.0, 24.0):
            k += 1
            obstacles.append(_column(f"col{k}", gx, gy, 0.4))
    obstacles += [_box("kerb1", 8.0, 2.4, 10.0, 2.8, "kerb", HeightClass.LOW),
                  _box("kerb2", 20.0, 17.2, 22.0, 17.6, "kerb", HeightClass.LOW)]
    east = 0.0
    if pattern == "dash":
        tracker, target, route = _dash_route((18.0, 14.0), (1.0, 0.0),
                                             [Waypoint(21.0, 10.0), Waypoint(27.0, 10.0)])
        return _scenario("garage", pattern, bounds, obstacles, tracker, target, route, loop=False)
    if pattern == "loop":
        route = [Waypoint(27.0, 10.0), Waypoint(27.0, 17.0), Waypoint(3.0, 17.0), Waypoint(3.0, 10.0)]
        return _scenario("garage", pattern, bounds, obstacles, Pose(2.0, 10.0, east),
                         Pose(4.5, 10.0, east), route, loop=True)
    route = [Waypoint(9.0, 3.0), Waypoint(15.0, 10.0), Waypoint(21.0, 3.0), Waypoint(27.0, 10.0),
             Waypoint(21.0, 17.0), Waypoint(15.0, 10.0), Waypoint(9.0, 17.0), Waypoint(4.5, 10.0)]
    return _scenario("garage", pattern, bounds, obstacles, Pose(2.0, 10.0, east),
                     Pose(4.5, 10.0, east), route, loop=True)


# -- sprawl: a large yard with sparse walls, doorways and kiosks -------------

def _sprawl(pattern: str) -> Scenario:
    bounds = (0.0, 0.0, 40.0, 40.0)
    obstacles = [
        # east-west wall with two doorways
        _box("wall1", 2.0, 19.7, 14.0, 20.3, "wall"),
        _box("wall2", 16.5, 19.7, 26.0, 20.3, "wall"),
        _box("wall3", 28.5, 19.7, 38.0, 20.3, "wall"),
        # north-south wall with one doorway
        _box("wall4", 19.7, 24.0, 20.3, 31.0, "wall"),
        _box("wall5", 19.7, 33.5, 20.3, 38.0, "wall"),
        _box("kiosk1", 9.6, 9.6, 10.4, 10.4, "kiosk"),
        _box("kiosk2", 29.6, 9.6, 30.4, 10.4, "kiosk"),
        _box("kiosk3", 9.6, 29.6, 10.4, 30.4, "kiosk"),
        _box("kiosk4", 29.6, 29.6, 30.4, 30.4, "kiosk"),
        _box("bench1", 16.0, 5.0, 18.0, 5.6, "bench", HeightClass.LOW),
    ]
    if pattern == "dash":
        tracker, target, route = _dash_route((10.0, 10.0), (0.0, 1.0),
                                             [Waypoint(12.5, 16.0), Waypoint(15.25, 24.0),
                                              Waypoint(15.25, 34.0)])
        return _scenario("sprawl", pattern, bounds, obstacles, tracker, target, route, loop=False)
    if pattern == "loop":
        route = [Waypoint(15.25, 22.0), Waypoint(15.25, 32.25), Waypoint(20.0, 32.25),
                 Waypoint(25.0, 32.25), Waypoint(25.0, 22.0), Waypoint(27.25, 20.0),
                 Waypoint(27.25, 5.0), Waypoint(15.25, 5.0)]
        return _scenario("sprawl", pattern, bounds, obstacles, Pose(15.25, 1.5, math.pi / 2),
                         Pose(15.25, 4.0, math.pi / 2), route, loop=True)
    route = [Waypoint(20.0, 8.0), Waypoint(12.0, 13.0), Waypoint(15.25, 18.0), Waypoint(15.25, 22.0),
             Waypoint(8.0, 26.0), Waypoint(15.0, 33.0), Waypoint(15.25, 22.0), Waypoint(15.25, 4.0)]
    return _scenario("sprawl", pattern, bounds, obstacles, Pose(15.25, 1.5, math.pi / 2),
                     Pose(15.25, 4.0, math.pi / 2), route, loop=True)


_BUILDERS: Dict[str, Callable[[str], Scenario]] = {
    "pillars": _pillars,
    "aisles": _aisles,
    "garage": _garage,
    "sprawl": _sprawl,
}


def scenario_names() -> List[str]:
    return [f"{a}:{p}" for a in ARENAS for p in PATTERNS]


def parse_name(name: str) -> Tuple[str, str]:
    arena, _, pattern = name.strip().lower().partition(":")
    pattern = pattern or DEFAULT_PATTERN
    if arena not in _BUILDERS:
        raise ScenarioError(f"unknown scenario {name!r}; arenas are {', '.join(ARENAS)}")
    if pattern not in PATTERNS:
        raise ScenarioError(f"unknown pattern {pattern!r}; patterns are {', '.join(PATTERNS)}")
    return arena, pattern


def get_scenario(name: str) -> Scenario:
    """Look up a built-in scenario such as ``"pillars:dash"`` (or just ``"pillars"``)."""
    arena, pattern = parse_name(name)
    sc = _BUILDERS[arena](pattern)
    sc.validate()
    return sc
