"""Cubic Hermite trajectories for long-term (lane, acceleration) targets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .world import (DT, Indicator, OffRoadError, RoadMap, Trace, VehicleState,
                    WorldState, planning_lane)

HORIZON = 3.0
A_MAX = 3.0


@dataclass(frozen=True)
class HermiteSpec:
    p0: tuple[float, float]
    p1: tuple[float, float]
    m0: tuple[float, float]
    m1: tuple[float, float]

    def __post_init__(self):
        vals = (*self.p0, *self.p1, *self.m0, *self.m1)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("Hermite spec has non-finite components")


@dataclass(frozen=True)
class LongTermAction:
    p_lat: int
    p_lon: float
    horizon: float = HORIZON
    path: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.p_lat not in (-1, 0, 1):
            raise ValueError(f"p_lat must be -1, 0 or 1, got {self.p_lat}")
        if not -1.0 <= self.p_lon <= 1.0:
            raise ValueError(f"p_lon must lie in [-1, 1], got {self.p_lon}")

    @property
    def target(self) -> tuple[int, float]:
        return (self.p_lat, self.p_lon)


def _basis(t):
    t = np.asarray(t, dtype=float)
    t2, t3 = t * t, t * t * t
    return np.stack([2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2], axis=-1)


def _dbasis(t):
    t = np.asarray(t, dtype=float)
    t2 = t * t
    return np.stack([6 * t2 - 6 * t, 3 * t2 - 4 * t + 1, -6 * t2 + 6 * t, 3 * t2 - 2 * t], axis=-1)


def _ddbasis(t):
    t = np.asarray(t, dtype=float)
    return np.stack([12 * t - 6, 6 * t - 4, -12 * t + 6, 6 * t - 2], axis=-1)


def _check_param(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("Hermite parameter must lie in [0, 1]")
    return t


def _combine(basis: np.ndarray, spec: HermiteSpec, offset: bool) -> np.ndarray:
    # h00 + h01 = 1, so the curve is p0 + h01 (p1 - p0) + h10 m0 + h11 m1;
    # this form keeps straight paths exactly straight in floating point
    p0, p1 = np.asarray(spec.p0, float), np.asarray(spec.p1, float)
    out = (basis[..., 2:3] * (p1 - p0) + basis[..., 1:2] * np.asarray(spec.m0, float)
           + basis[..., 3:4] * np.asarray(spec.m1, float))
    return out + p0 if offset else out


def hermite_eval(spec: HermiteSpec, t) -> np.ndarray:
    """Point(s) on the curve; ``t`` may be a scalar or an array."""
    return _combine(_basis(_check_param(t)), spec, True)


def hermite_derivative(spec: HermiteSpec, t) -> np.ndarray:
    """d/dt of the curve (per unit parameter)."""
    return _combine(_dbasis(_check_param(t)), spec, False)


def hermite_second_derivative(spec: HermiteSpec, t) -> np.ndarray:
    return _combine(_ddbasis(_check_param(t)), spec, False)


def target_to_world(s0: WorldState, action: tuple[int, float] | LongTermAction, road: RoadMap,
                    horizon: float = HORIZON, a_max: float = A_MAX,
                    v_max: float = math.inf) -> HermiteSpec:
    p_lat, p_lon = action.target if isinstance(action, LongTermAction) else action
    ego = s0.ego
    if ego.vx < 0:
        raise ValueError("ego must not be reversing")
    lane = planning_lane(ego, road)
    target_lane = lane + int(p_lat)
    if not road.has_lane(target_lane):
        raise OffRoadError(f"target lane {target_lane} does not exist")
    v0 = ego.vx
    v1 = min(max(v0 + p_lon * a_max * horizon, 0.0), v_max)
    x1 = ego.x + 0.5 * (v0 + v1) * horizon
    y1 = road.lane_center(target_lane)
    return HermiteSpec((ego.x, ego.y), (x1, y1),
                       (v0 * horizon, ego.vy * horizon), (v1 * horizon, 0.0))


def step_count(horizon: float, dt: float = DT) -> int:
    return int(math.ceil(horizon / dt - 1e-9))


def sample(spec: HermiteSpec, horizon: float = HORIZON, dt: float = DT):
    """Positions, velocities and accelerations at ``k * dt`` for k = 0..N."""
    n = step_count(horizon, dt)
    ts = np.minimum(np.arange(n + 1) * dt / horizon, 1.0)
    pos = hermite_eval(spec, ts)
    vel = hermite_derivative(spec, ts) / horizon
    acc = hermite_second_derivative(spec, ts) / horizon ** 2
    return pos, vel, acc


def generate(s0: WorldState, action: tuple[int, float] | LongTermAction, road: RoadMap,
             prediction: Sequence[VehicleState], horizon: float = HORIZON, dt: float = DT,
             a_max: float = A_MAX, v_max: float = math.inf, tag: str | None = None) -> Trace:
    """Candidate long-term trace starting at ``s0`` (its first step).

    The indicator points towards the target lane from the first planned step
    whenever that lane differs from the current one; the on-duration carries
    over if it was already on in that direction.
    """
    if not isinstance(action, LongTermAction):
        action = LongTermAction(int(action[0]), float(action[1]), horizon)
    spec = target_to_world(s0, action, road, horizon, a_max, v_max)
    pos, vel, _ = sample(spec, horizon, dt)
    n = len(pos) - 1
    if len(prediction) < n + 1:
        raise ValueError(f"prediction covers {len(prediction)} steps, need {n + 1}")

    ego0 = s0.ego
    shift = planning_lane(ego0, road) + action.p_lat - road.lane_at(ego0.y)
    signal = Indicator.RIGHT if shift > 0 else Indicator.LEFT if shift < 0 else Indicator.OFF
    carried = ego0.indicator_time if ego0.indicator is signal and signal is not Indicator.OFF else 0.0

    action = LongTermAction(action.p_lat, action.p_lon, horizon, pos)
    states = [s0]
    for k in range(1, n + 1):
        vy = float(vel[k, 1])
        if k == n:
            vy = 0.0
        on_time = round(carried + k * dt, 9) if signal is not Indicator.OFF else 0.0
        ego = VehicleState(float(pos[k, 0]), float(pos[k, 1]), max(float(vel[k, 0]), 0.0), vy,
                           signal, on_time, ego0.length, ego0.width)
        states.append(WorldState(ego, prediction[k], round(s0.t + k * dt, 9), road))
    return Trace(tuple(states), (None,) + (action,) * n, (None,) + (tag,) * n, dt)


def lateral_acceleration(spec: HermiteSpec, horizon: float = HORIZON, dt: float = DT) -> np.ndarray:
    _, _, acc = sample(spec, horizon, dt)
    return acc[:, 1]
