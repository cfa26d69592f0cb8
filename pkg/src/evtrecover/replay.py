"""Post-hoc inspection of trajectory logs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from .episode import LogError, read_log
from .render import render_frame, to_png
from .scenario import Scenario
from .world import Pose, WorldState

TRAIL_LENGTH = 10


@dataclass
class ReplaySummary:
    steps: int = 0
    transitions: int = 0
    attempts: int = 0
    reflections: int = 0
    frames: List[Path] = field(default_factory=list)
    lines: List[str] = field(default_factory=list)


def _pose(d: dict) -> Pose:
    return Pose(d["x"], d["y"], d["heading"])


def _fmt_recovery(rec: dict) -> List[str]:
    psi = rec["psi"]
    ctx = psi.get("e_obj") if psi.get("beta_occ") else psi.get("l_tgt")
    gamma = "; ".join(" ".join(str(x) if x is not None else "-" for x in ins) for ins in rec["gamma"])
    out = [f"  attempt {rec['attempt']} at tick {rec['tick']}: {rec['outcome']}",
           f"    psi:   occ={psi.get('beta_occ')} {ctx}",
           f"    gamma: {gamma}",
           f"    R:     {' '.join(rec['r'])}"]
    if rec["r"] != rec.get("r_planned", rec["r"]):
        out.append(f"    (planned {' '.join(rec['r_planned'])}, refined from cases {rec.get('retrieved')})")
    if rec.get("e") is not None:
        out.append(f"    E:     [{rec['e']['tag']}] {rec['e']['text']}")
    return out


def timeline(records: Sequence[dict]) -> ReplaySummary:
    """Phase transitions and recovery attempts, as text lines."""
    summary = ReplaySummary()
    header = records[0]
    summary.lines.append(f"scenario {header['scenario'].get('name')} seed {header.get('seed')} "
                         f"flags {','.join(header.get('flags', [])) or '-'}")
    phase = "tracking"
    for rec in records[1:]:
        kind = rec["type"]
        if kind == "step":
            summary.steps += 1
            if rec["phase"] != phase:
                summary.transitions += 1
                summary.lines.append(f"tick {rec['tick']}: {phase} -> {rec['phase']}")
                phase = rec["phase"]
        elif kind == "recovery":
            summary.attempts += 1
            if rec.get("e") is not None:
                summary.reflections += 1
            summary.lines.extend(_fmt_recovery(rec))
        elif kind == "result":
            summary.lines.append(
                f"result: length {rec['episode_length']}, reward {rec['episodic_reward']:.3f}, "
                f"success {rec['success']}, recoveries {rec['recovery_successes']}/{rec['recovery_attempts']}")
    return summary


def replay(log_path, render_dir: Optional[Path] = None) -> ReplaySummary:
    """Summarise a log and optionally re-render one PNG per step into ``render_dir``."""
    records = read_log(log_path)
    summary = timeline(records)
    if render_dir is None:
        return summary
    try:
        sc = Scenario.from_dict(records[0]["scenario"])
    except (KeyError, ValueError) as exc:
        raise LogError(1, f"header scenario is unusable ({exc})") from exc
    render_dir = Path(render_dir)
    render_dir.mkdir(parents=True, exist_ok=True)
    trail: List = []
    for rec in records:
        if rec["type"] != "step":
            continue
        state = WorldState(rec["tick"], _pose(rec["tracker"]), _pose(rec["target"]), sc.obstacles, sc.bounds)
        png = to_png(render_frame(state, bool(rec["visible"]), trail[-TRAIL_LENGTH:]))
        path = render_dir / f"frame_{rec['tick']:04d}.png"
        path.write_bytes(png)
        summary.frames.append(path)
        trail.append(state.tracker.xy)
    return summary
