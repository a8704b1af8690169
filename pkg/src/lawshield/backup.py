"""Sample-based backup planner: sample targets, drop unsafe or illegal
candidates, keep the cheapest one."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .trajectory import (A_MAX, HORIZON, LongTermAction, generate, lateral_acceleration,
                         target_to_world)
from .world import DT, RoadMap, Trace, VehicleState, WorldState, planning_lane

N_CANDIDATES = 8
LON_LEVELS = (0.2, -0.4, -1.0)
# in-lane levels used to refill the set when side lanes are missing
EXTRA_LON_LEVELS = (-0.7, -0.2, 0.5, 1.0, 0.0)
SAFETY_MARGIN = 2.0
W_SPEED = 1.0
W_SMOOTH = 0.5


@dataclass
class Candidate:
    index: int
    target: tuple[int, float]
    trace: Trace
    lat_acc: np.ndarray
    safe: bool | None = None
    legal: bool | None = None
    cost: float | None = None

    @property
    def admissible(self) -> bool:
        return bool(self.safe and self.legal)


def sample_targets(s0: WorldState, road: RoadMap, n: int = N_CANDIDATES) -> list[tuple[int, float]]:
    lane = planning_lane(s0.ego, road)
    targets = []
    for p_lat in (0, -1, 1):
        if road.has_lane(lane + p_lat):
            targets += [(p_lat, lon) for lon in LON_LEVELS]
    for lon in EXTRA_LON_LEVELS:
        if len(targets) >= n:
            break
        targets.append((0, lon))
    return targets[:n]


def generate_candidates(s0: WorldState, targets: Sequence[tuple[int, float]], road: RoadMap,
                        prediction: Sequence[VehicleState], horizon: float = HORIZON,
                        dt: float = DT, a_max: float = A_MAX,
                        v_max: float = math.inf) -> list[Candidate]:
    out = []
    for i, target in enumerate(targets):
        spec = target_to_world(s0, target, road, horizon, a_max, v_max)
        trace = generate(s0, target, road, prediction, horizon, dt, a_max, v_max, tag="backup")
        out.append(Candidate(i, tuple(target), trace, lateral_acceleration(spec, horizon, dt)))
    return out


def first_unsafe_step(trace: Trace, margin: float = SAFETY_MARGIN,
                      lane_fraction: float = 0.8) -> int | None:
    """Circle-style proximity test against the predicted other vehicle,
    skipping the shared initial state. Returns the first offending index."""
    for k in range(1, len(trace)):
        e, o = trace[k].ego, trace[k].other
        dy = abs(e.y - o.y)
        r_safe = 0.5 * (e.length + o.length) + margin
        if dy < lane_fraction * trace[k].road.lane_width and math.hypot(e.x - o.x, dy) < r_safe:
            return k
    return None


def is_unsafe(trace: Trace, margin: float = SAFETY_MARGIN, lane_fraction: float = 0.8) -> bool:
    return first_unsafe_step(trace, margin, lane_fraction) is not None


def filter_safety(candidates: list[Candidate], margin: float = SAFETY_MARGIN) -> list[Candidate]:
    for c in candidates:
        c.safe = not is_unsafe(c.trace, margin)
    return candidates


def trajectory_cost(trace: Trace, lat_acc: np.ndarray, v_ref: float,
                    w_speed: float = W_SPEED, w_smooth: float = W_SMOOTH) -> float:
    vx = np.array([s.ego.vx for s in trace.states])
    return float(w_speed * np.mean(np.abs(vx - v_ref)) + w_smooth * np.mean(np.abs(lat_acc)))


def select(candidates: list[Candidate], history: Trace, check: Callable[[Trace, Trace], bool],
           v_ref: float, w_speed: float = W_SPEED, w_smooth: float = W_SMOOTH) -> Candidate | None:
    """Cheapest safe and legal candidate; ties go to the earlier sample."""
    best = None
    for c in candidates:
        c.legal = check(c.trace, history)
        c.cost = trajectory_cost(c.trace, c.lat_acc, v_ref, w_speed, w_smooth)
        if c.admissible and (best is None or c.cost < best.cost):
            best = c
    return best


class BackupPolicy:
    def __init__(self, road: RoadMap, v_ref: float, v_max: float = math.inf,
                 horizon: float = HORIZON, dt: float = DT, a_max: float = A_MAX,
                 n: int = N_CANDIDATES, margin: float = SAFETY_MARGIN,
                 w_speed: float = W_SPEED, w_smooth: float = W_SMOOTH):
        self.road = road
        self.v_ref = v_ref
        self.v_max = v_max
        self.horizon = horizon
        self.dt = dt
        self.a_max = a_max
        self.n = n
        self.margin = margin
        self.w_speed = w_speed
        self.w_smooth = w_smooth

    def plan(self, history: Trace, prediction: Sequence[VehicleState],
             check: Callable[[Trace, Trace], bool]):
        """Returns ``(action, trace or None, candidates)``."""
        s0 = history.last
        targets = sample_targets(s0, self.road, self.n)
        cands = generate_candidates(s0, targets, self.road, prediction, self.horizon, self.dt,
                                    self.a_max, self.v_max)
        filter_safety(cands, self.margin)
        best = select(cands, history, check, self.v_ref, self.w_speed, self.w_smooth)
        if best is None:
            return None, None, cands
        action = LongTermAction(best.target[0], best.target[1], self.horizon)
        return action, best.trace, cands
