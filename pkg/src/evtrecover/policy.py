"""Base tracking policy and target-loss detection."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Deque, List, Optional, Tuple

from .world import DEFAULT_CONFIG, ContinuousAction, Observation, WorldConfig

INTEGRAL_LIMIT = 10.0
DETECT_THRESHOLD = 3      # target must be missing for more than this many steps
LOST_LIMIT = 50           # episode ends once lost for more than this many steps
HISTORY_SPACING = 5
HISTORY_FRAMES = 3


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float


ANGULAR_GAINS = PidGains(1.2, 0.0, 0.3)
LINEAR_GAINS = PidGains(0.8, 0.05, 0.1)


@dataclass(frozen=True)
class PidState:
    """Controller memory for the angular (degrees) and linear (metres) channels."""

    angular: PidGains = ANGULAR_GAINS
    linear: PidGains = LINEAR_GAINS
    integral_ang: float = 0.0
    integral_lin: float = 0.0
    prev_err_ang: Optional[float] = None
    prev_err_lin: Optional[float] = None
    last_command: ContinuousAction = ContinuousAction()


def _clamp(v: float, lim: float) -> float:
    return min(lim, max(-lim, v))


def _pid(g: PidGains, err: float, integral: float, prev: Optional[float]) -> Tuple[float, float]:
    integral = _clamp(integral + err, INTEGRAL_LIMIT)
    deriv = 0.0 if prev is None else err - prev
    return g.kp * err + g.ki * integral + g.kd * deriv, integral


def pid_track(obs: Observation, state: PidState,
              cfg: WorldConfig = DEFAULT_CONFIG) -> Tuple[ContinuousAction, PidState]:
    """One PID tracking step.

    While the target is visible the bearing error (in degrees) drives the
    turn rate and the distance error drives the forward speed.  When it is
    not visible the previous command is repeated so the tracker coasts along
    its last direction of motion.
    """
    if not obs.target_visible:
        return state.last_command, state
    err_a = math.degrees(obs.rel_angle - cfg.theta_star)
    err_l = obs.rel_distance - cfg.rho_star
    u_a, i_a = _pid(state.angular, err_a, state.integral_ang, state.prev_err_ang)
    u_l, i_l = _pid(state.linear, err_l, state.integral_lin, state.prev_err_lin)
    cmd = ContinuousAction(u_a, u_l)
    return cmd, replace(state, integral_ang=i_a, integral_lin=i_l, prev_err_ang=err_a,
                        prev_err_lin=err_l, last_command=cmd)


@dataclass(frozen=True)
class DetectorState:
    consecutive_invisible: int = 0
    consecutive_lost_total: int = 0


def detect(detector: DetectorState, obs: Observation) -> Tuple[DetectorState, bool]:
    """Update loss counters; the trigger fires on the 4th consecutive miss."""
    if obs.target_visible:
        return DetectorState(), False
    n = detector.consecutive_invisible + 1
    new = DetectorState(n, detector.consecutive_lost_total + 1)
    return new, n == DETECT_THRESHOLD + 1


def lost_too_long(detector: DetectorState) -> bool:
    return detector.consecutive_lost_total > LOST_LIMIT


class ObservationBuffer:
    """Ring buffer of the 11 most recent observations (plus optional payloads).

    Eleven slots are enough to sample the current frame and the frames five
    and ten steps earlier.
    """

    capacity = (HISTORY_FRAMES - 1) * HISTORY_SPACING + 1

    def __init__(self) -> None:
        self._items: Deque[Tuple[Observation, object]] = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._items)

    def append(self, obs: Observation, payload: object = None) -> None:
        self._items.append((obs, payload))

    def _sample_idx(self) -> List[int]:
        n = len(self._items)
        # newest at n-1; clamp to the oldest slot while the buffer is filling
        return [max(0, n - 1 - k * HISTORY_SPACING) for k in reversed(range(HISTORY_FRAMES))]

    def history(self) -> List[Observation]:
        """Frames (t-10, t-5, t), oldest first."""
        if not self._items:
            return []
        return [self._items[i][0] for i in self._sample_idx()]

    def history_payloads(self) -> List[object]:
        if not self._items:
            return []
        return [self._items[i][1] for i in self._sample_idx()]

    def latest(self) -> Optional[Observation]:
        return self._items[-1][0] if self._items else None
