"""Deterministic top-down raster frames.

Each frame is a 512x512 north-up view centred on the tracker: obstacles in
gray, the visibility fan as a blue wedge, the target as a red dot only when
the observation says it is visible, and earlier tracker positions as fading
dots.  The same inputs always produce byte-identical PNG files.
"""

from __future__ import annotations

import io
import math
from typing import List, Sequence

from PIL import Image, ImageDraw

from .geometry import Circle, Point
from .world import DEFAULT_CONFIG, Observation, WorldConfig, WorldState

SIZE = 512
SPAN_M = 16.0                      # metres shown across the image
SCALE = SIZE / SPAN_M              # pixels per metre

BACKGROUND = (255, 255, 255)
OUTSIDE = (215, 215, 215)
OBSTACLE = (128, 128, 128)
FAN_FILL = (200, 220, 255)
FAN_EDGE = (40, 90, 220)
TRACKER = (20, 60, 200)
TARGET = (220, 30, 30)
TRAIL = (20, 60, 200)


class _View:
    def __init__(self, centre: Point) -> None:
        self.cx, self.cy = centre

    def px(self, p: Point):
        return (SIZE / 2 + (p[0] - self.cx) * SCALE, SIZE / 2 - (p[1] - self.cy) * SCALE)


def render_frame(state: WorldState, visible: bool = False, trail: Sequence[Point] = (),
                 cfg: WorldConfig = DEFAULT_CONFIG) -> Image.Image:
    """Rasterise one world snapshot as seen around the tracker.

    ``visible`` comes from the observation, never from geometry, so the
    picture matches what the tracker perceived.
    """
    view = _View(state.tracker.xy)
    img = Image.new("RGB", (SIZE, SIZE), OUTSIDE)
    draw = ImageDraw.Draw(img)
    x0, y0, x1, y1 = state.bounds
    a, b = view.px((x0, y1)), view.px((x1, y0))
    draw.rectangle([a, b], fill=BACKGROUND)

    # fan: PIL angles run clockwise from +x in image space
    r = cfg.view_radius * SCALE
    c = SIZE / 2
    h = -math.degrees(state.tracker.heading)
    half = math.degrees(cfg.half_fov)
    draw.pieslice([c - r, c - r, c + r, c + r], h - half, h + half, fill=FAN_FILL, outline=FAN_EDGE)

    for ob in state.obstacles:
        shape = ob.shape
        if isinstance(shape, Circle):
            (px, py), pr = view.px(shape.center), shape.radius * SCALE
            draw.ellipse([px - pr, py - pr, px + pr, py + pr], fill=OBSTACLE)
        else:
            draw.polygon([view.px(v) for v in shape.vertices], fill=OBSTACLE)

    n = len(trail)
    for i, p in enumerate(trail):
        fade = (i + 1) / (n + 1)   # older points are paler
        col = tuple(int(255 - (255 - ch) * fade) for ch in TRAIL)
        px, py = view.px(p)
        draw.ellipse([px - 3, py - 3, px + 3, py + 3], fill=col)

    draw.ellipse([c - 5, c - 5, c + 5, c + 5], fill=TRACKER)
    if visible:
        tx, ty = view.px(state.target.xy)
        draw.ellipse([tx - 6, ty - 6, tx + 6, ty + 6], fill=TARGET)
    return img


def to_png(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def render_frames(frames: Sequence[Observation], snapshots: Sequence[WorldState],
                  cfg: WorldConfig = DEFAULT_CONFIG) -> List[bytes]:
    """PNG bytes for each history frame; earlier snapshots form the trail."""
    if len(frames) != len(snapshots):
        raise ValueError("need one world snapshot per frame")
    out = []
    for i, (obs, snap) in enumerate(zip(frames, snapshots)):
        trail = [s.tracker.xy for s in snapshots[:i]]
        out.append(to_png(render_frame(snap, obs.target_visible, trail, cfg)))
    return out
