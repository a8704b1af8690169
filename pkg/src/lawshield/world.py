"""Kinematic records, road geometry, traces and the grounded atom registry.

Lanes are indexed from the left starting at 0. The lateral coordinate ``y``
grows to the right, so lane ``i`` occupies the half-open band
``[i * lane_width, (i + 1) * lane_width)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Sequence

DT = 0.1
TIME_TOL = 1e-6
INDICATOR_TOL = 1e-9


class OffRoadError(ValueError):
    pass


class PredicateError(RuntimeError):
    """An atom could not be grounded (missing map feature, bad context)."""


class TraceError(ValueError):
    pass


class Indicator(str, Enum):
    OFF = "off"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    vx: float
    vy: float = 0.0
    indicator: Indicator = Indicator.OFF
    indicator_time: float = 0.0
    length: float = 4.5
    width: float = 1.8

    def __post_init__(self):
        if self.indicator_time < 0:
            raise ValueError("indicator_time must be non-negative")

    @property
    def front(self) -> float:
        return self.x + 0.5 * self.length


@dataclass(frozen=True)
class Lane:
    special: bool = False
    # +1 travels with the ego's direction, -1 is an oncoming lane
    direction: int = 1


@dataclass(frozen=True)
class TrafficLight:
    position: float
    # (start time, colour) pairs sorted by start time
    schedule: tuple[tuple[float, str], ...] = ((0.0, "red"),)
    lanes: tuple[int, ...] | None = None

    def color_at(self, t: float) -> str:
        color = self.schedule[0][1]
        for start, c in self.schedule:
            if t + TIME_TOL >= start:
                color = c
            else:
                break
        return color

    def covers(self, lane: int) -> bool:
        return self.lanes is None or lane in self.lanes


@dataclass(frozen=True)
class RoadMap:
    lanes: tuple[Lane, ...]
    lane_width: float = 3.5
    stop_line: float | None = None
    light: TrafficLight | None = None

    @property
    def lane_count(self) -> int:
        return len(self.lanes)

    @property
    def width(self) -> float:
        return self.lane_count * self.lane_width

    def has_lane(self, index: int) -> bool:
        return 0 <= index < self.lane_count

    def lane_center(self, index: int) -> float:
        if not self.has_lane(index):
            raise OffRoadError(f"lane {index} does not exist")
        return (index + 0.5) * self.lane_width

    def lane_at(self, y: float) -> int:
        if not 0.0 <= y < self.width:
            raise OffRoadError(f"y={y:.3f} m is outside the road [0, {self.width})")
        return int(math.floor(y / self.lane_width))


@dataclass(frozen=True)
class WorldState:
    ego: VehicleState
    other: VehicleState
    t: float
    road: RoadMap


def lane_of(state: VehicleState, road: RoadMap) -> int:
    return road.lane_at(state.y)


def planning_lane(state: VehicleState, road: RoadMap, vy_tol: float = 1e-3) -> int:
    """Lane that relative (p_lat) targets are measured from.

    Outside a lane change this is :func:`lane_of`. While moving laterally it
    is the first lane centre ahead in the direction of motion, i.e. the
    destination of the manoeuvre in progress, so that "keep lane" continues
    a started lane change instead of aborting it.
    """
    lane = road.lane_at(state.y)
    if abs(state.vy) < vy_tol:
        return lane
    direction = 1 if state.vy > 0 else -1
    ahead = [i for i in (lane - 1, lane, lane + 1)
             if road.has_lane(i) and (road.lane_center(i) - state.y) * direction > 0]
    if not ahead:
        return lane
    return min(ahead, key=lambda i: abs(road.lane_center(i) - state.y))


def gap_to(ego: VehicleState, other: VehicleState) -> float:
    """Longitudinal bumper-to-bumper gap, floored at zero."""
    return max(0.0, abs(ego.x - other.x) - 0.5 * (ego.length + other.length))


def collides(a: VehicleState, b: VehicleState) -> bool:
    return (abs(a.x - b.x) < 0.5 * (a.length + b.length)
            and abs(a.y - b.y) < 0.5 * (a.width + b.width))


@dataclass(frozen=True)
class Trace:
    """States sampled every ``dt`` seconds with the action and policy tag
    that produced each step (``None`` for the initial state)."""

    states: tuple[WorldState, ...]
    actions: tuple[Any, ...] = ()
    tags: tuple[str | None, ...] = ()
    dt: float = DT

    def __post_init__(self):
        n = len(self.states)
        if n == 0:
            raise TraceError("a trace needs at least one state")
        if not self.actions:
            object.__setattr__(self, "actions", (None,) * n)
        if not self.tags:
            object.__setattr__(self, "tags", (None,) * n)
        if len(self.actions) != n or len(self.tags) != n:
            raise TraceError("actions/tags must align with states")

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def __iter__(self):
        return iter(self.states)

    @property
    def last(self) -> WorldState:
        return self.states[-1]

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.states]

    def prefix(self, k: int) -> "Trace":
        return Trace(self.states[:k], self.actions[:k], self.tags[:k], self.dt)

    def check_spacing(self, tol: float = TIME_TOL) -> None:
        for a, b in zip(self.states, self.states[1:]):
            if abs((b.t - a.t) - self.dt) > tol:
                raise TraceError(f"steps at t={a.t:.4f} and t={b.t:.4f} are not dt apart")

    def concat(self, future: "Trace", tol: float = TIME_TOL) -> "Trace":
        """Append ``future`` to this trace.

        ``future`` may either start at this trace's last state (the shared
        state is kept once) or one ``dt`` after it.
        """
        if abs(future.dt - self.dt) > 1e-12:
            raise TraceError("dt mismatch between traces")
        head, first = self.last, future[0]
        gap = first.t - head.t
        if abs(gap) <= tol:
            if not states_match(head, first, tol):
                raise TraceError(f"state discontinuity at t={head.t:.4f}")
            start = 1
        elif abs(gap - self.dt) <= tol:
            start = 0
        else:
            raise TraceError(f"time misalignment: history ends at {head.t:.4f}, "
                             f"future starts at {first.t:.4f}")
        return Trace(self.states + future.states[start:],
                     self.actions + future.actions[start:],
                     self.tags + future.tags[start:], self.dt)


def states_match(a: WorldState, b: WorldState, tol: float = TIME_TOL) -> bool:
    for va, vb in ((a.ego, b.ego), (a.other, b.other)):
        if max(abs(va.x - vb.x), abs(va.y - vb.y), abs(va.vx - vb.vx), abs(va.vy - vb.vy)) > tol:
            return False
    return abs(a.t - b.t) <= tol


# ---------------------------------------------------------------------------
# Atom grounding
# ---------------------------------------------------------------------------

AtomFn = Callable[..., bool]
ContextVarFn = Callable[[Sequence[Any], int, "GroundingContext"], float]


@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int
    fn: AtomFn
    # how many past steps the atom inspects
    lookback: int = 0
    doc: str = ""


class PredicateRegistry:
    """Named atoms and the context variables their arguments may use."""

    def __init__(self, predicates: Iterable[Predicate] = (),
                 context_vars: Mapping[str, ContextVarFn] | None = None):
        self._predicates: dict[str, Predicate] = {}
        self.context_vars: dict[str, ContextVarFn] = dict(context_vars or {})
        for p in predicates:
            self.add(p)

    def add(self, predicate: Predicate) -> None:
        self._predicates[predicate.name] = predicate

    def register(self, name: str, arity: int = 0, lookback: int = 0):
        def deco(fn):
            self.add(Predicate(name, arity, fn, lookback, (fn.__doc__ or "").strip()))
            return fn
        return deco

    def __contains__(self, name: str) -> bool:
        return name in self._predicates

    def __getitem__(self, name: str) -> Predicate:
        return self._predicates[name]

    def names(self) -> list[str]:
        return sorted(self._predicates)

    def copy(self) -> "PredicateRegistry":
        return PredicateRegistry(self._predicates.values(), self.context_vars)


@dataclass(frozen=True)
class GroundingContext:
    constants: Mapping[str, float] = field(default_factory=dict)
    prescribed: bool = False
    registry: PredicateRegistry | None = None

    def with_constants(self, constants: Mapping[str, float]) -> "GroundingContext":
        return replace(self, constants=dict(constants))


def _ego_lane(trace, i) -> int:
    s = trace[i]
    return s.road.lane_at(s.ego.y)


def _true(trace, i, ctx):
    return True


def _false(trace, i, ctx):
    return False


def on_special_lane(trace, i, ctx):
    """Ego centre lies in a lane flagged as special."""
    s = trace[i]
    return s.road.lanes[_ego_lane(trace, i)].special


def prescribed_vehicle(trace, i, ctx):
    return bool(ctx.prescribed)


def exceed_stop_line(trace, i, ctx):
    """Ego front bumper is beyond the stop line."""
    s = trace[i]
    if s.road.stop_line is None:
        raise PredicateError("exceed_stop_line: map has no stop line")
    return s.ego.front > s.road.stop_line


def light_red_on_ego_lane(trace, i, ctx):
    s = trace[i]
    light = s.road.light
    if light is None:
        return False
    return light.covers(_ego_lane(trace, i)) and light.color_at(s.t) == "red"


def cross_right_line(trace, i, ctx):
    """The ego centre crossed a lane line rightward between steps i-1 and i."""
    if i == 0:
        return False
    return _ego_lane(trace, i) > _ego_lane(trace, i - 1)


def indicator_right_ge(trace, i, ctx, seconds):
    ego = trace[i].ego
    return ego.indicator is Indicator.RIGHT and ego.indicator_time >= seconds - INDICATOR_TOL


def gap_gt(trace, i, ctx, distance):
    s = trace[i]
    return gap_to(s.ego, s.other) > distance


def in_lane(trace, i, ctx, index):
    return _ego_lane(trace, i) == int(round(index))


def default_registry() -> PredicateRegistry:
    reg = PredicateRegistry(context_vars={
        "dv": lambda tr, i, ctx: tr[i].ego.vx - tr[i].other.vx,
        "v_ego": lambda tr, i, ctx: tr[i].ego.vx,
        "v_other": lambda tr, i, ctx: tr[i].other.vx,
    })
    reg.add(Predicate("true", 0, _true))
    reg.add(Predicate("false", 0, _false))
    reg.add(Predicate("on_special_lane", 0, on_special_lane))
    reg.add(Predicate("prescribed_vehicle", 0, prescribed_vehicle))
    reg.add(Predicate("exceed_stop_line", 0, exceed_stop_line))
    reg.add(Predicate("light_red_on_ego_lane", 0, light_red_on_ego_lane))
    reg.add(Predicate("cross_right_line", 0, cross_right_line, lookback=1))
    reg.add(Predicate("indicator_right_ge", 1, indicator_right_ge))
    reg.add(Predicate("gap_gt", 1, gap_gt))
    reg.add(Predicate("in_lane", 1, in_lane))
    return reg


DEFAULT_REGISTRY = default_registry()
