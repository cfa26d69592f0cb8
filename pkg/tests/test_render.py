from __future__ import annotations

import io

import pytest
from PIL import Image

from evtrecover.geometry import Circle
from evtrecover.render import FAN_FILL, OBSTACLE, SIZE, TARGET, render_frame, render_frames, to_png
from evtrecover.world import Observation, Obstacle, Pose, WorldState, observe


def snapshot(obstacles=(), target=Pose(2.5, 0)):
    return WorldState(0, Pose(0, 0, 0), target, tuple(obstacles), (-50, -50, 50, 50))


def colours(img):
    return {c for _, c in img.getcolors(maxcolors=SIZE * SIZE)}


class TestRenderFrame:
    def test_empty_world(self):
        img = render_frame(snapshot())
        assert img.size == (SIZE, SIZE)
        assert FAN_FILL in colours(img)
        assert TARGET not in colours(img) and OBSTACLE not in colours(img)
        # the wedge opens to the right (east) of the centre for heading 0
        assert img.getpixel((SIZE // 2 + 100, SIZE // 2)) == FAN_FILL
        assert img.getpixel((SIZE // 2 - 100, SIZE // 2)) != FAN_FILL

    def test_visible_target_is_red(self):
        img = render_frame(snapshot(), visible=True)
        assert img.getpixel((SIZE // 2 + 80, SIZE // 2)) == TARGET

    def test_hidden_target_not_drawn(self):
        img = render_frame(snapshot([Obstacle("c", Circle((1.2, 0), 0.4))]), visible=False)
        assert TARGET not in colours(img)
        assert OBSTACLE in colours(img)

    def test_deterministic_bytes(self):
        s = snapshot([Obstacle("c", Circle((3, 1), 0.5))])
        assert to_png(render_frame(s, True, [(-1, 0)])) == to_png(render_frame(s, True, [(-1, 0)]))

    def test_png_decodes(self):
        png = to_png(render_frame(snapshot()))
        assert Image.open(io.BytesIO(png)).format == "PNG"


class TestRenderFrames:
    def test_one_png_per_frame(self):
        snaps = [snapshot(), snapshot(target=Pose(2, 1)), snapshot(target=Pose(-3, 0))]
        frames = [observe(s) for s in snaps]
        pngs = render_frames(frames, snaps)
        assert len(pngs) == 3
        last = Image.open(io.BytesIO(pngs[2])).convert("RGB")
        assert not frames[2].target_visible
        assert TARGET not in colours(last)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            render_frames([Observation(0, False)], [])
