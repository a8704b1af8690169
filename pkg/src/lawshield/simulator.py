"""Deterministic 2D episode engine: scenarios, the scripted other vehicle
(which doubles as the exact prediction oracle), exact trajectory tracking
and the decision loop."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from .audit import AuditReport, audit_trace
from .backup import BackupPolicy, first_unsafe_step
from .forecaster import (BACKUP, BUFFER, RL, LawForecaster, TrajectoryBuffer, decide)
from .law_dsl import LawFile, load_law
from .trajectory import A_MAX, HORIZON, generate
from .world import (DT, Lane, OffRoadError, RoadMap, TrafficLight, Trace, VehicleState,
                    WorldState, collides)

log = logging.getLogger(__name__)

DECISION_EVERY = 5
MODES = ("shielded", "rl-only", "backup-only")
DATA_DIR = Path(__file__).parent / "data"


class SimulationError(RuntimeError):
    pass


class ScriptExhaustedError(SimulationError):
    pass


@dataclass(frozen=True)
class OtherScript:
    """Lane-keeping vehicle with a piecewise-constant speed profile."""

    lane: int
    x0: float
    # (start time, speed) pairs; the first starts at 0
    speeds: tuple[tuple[float, float], ...]
    duration: float
    length: float = 4.5
    width: float = 1.8

    def _check(self, t: float) -> None:
        if t < -1e-9 or t > self.duration + 1e-6:
            raise ScriptExhaustedError(f"script covers [0, {self.duration}] s, asked for t={t:.3f}")

    def speed_at(self, t: float) -> float:
        self._check(t)
        v = self.speeds[0][1]
        for start, speed in self.speeds:
            if t + 1e-9 >= start:
                v = speed
        return v

    def x_at(self, t: float) -> float:
        self._check(t)
        x = self.x0
        bounds = [s for s, _ in self.speeds[1:]] + [math.inf]
        for (start, speed), end in zip(self.speeds, bounds):
            if t <= start:
                break
            x += speed * (min(t, end) - start)
        return x

    def state_at(self, t: float, road: RoadMap) -> VehicleState:
        return VehicleState(self.x_at(t), road.lane_center(self.lane), self.speed_at(t), 0.0,
                            length=self.length, width=self.width)

    def scaled(self, factor: float) -> "OtherScript":
        return replace(self, speeds=tuple((s, v * factor) for s, v in self.speeds))


def predict(script: OtherScript, t: float, horizon: float, road: RoadMap,
            dt: float = DT) -> list[VehicleState]:
    """Ground-truth future of the other vehicle at ``t + k * dt``, k = 0..N."""
    n = int(math.ceil(horizon / dt - 1e-9))
    if t + horizon > script.duration + 1e-6:
        raise ScriptExhaustedError(f"prediction to {t + horizon:.2f} s overruns the script")
    return [script.state_at(round(t + k * dt, 9), road) for k in range(n + 1)]


@dataclass(frozen=True)
class RewardWeights:
    speed: float = 1.0
    collision: float = 100.0
    red_light: float = 100.0
    # per second spent in an oncoming lane
    opposing_lane: float = 0.0
    # one-off penalty for overtaking on the right
    right_pass: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str
    road: RoadMap
    ego: VehicleState
    other: OtherScript
    v_ref: float
    speed_limit: float
    duration: float
    law: LawFile | None = None
    law_path: str | None = None
    prescribed: bool = False
    seed: int = 0
    horizon: float = HORIZON
    dt: float = DT
    a_max: float = A_MAX
    reward: RewardWeights = field(default_factory=RewardWeights)
    # training-time randomisation: relative spread of the other speed and
    # absolute spread (m) of its initial position
    speed_jitter: float = 0.2
    gap_jitter: float = 0.0
    # training-only spread of the ego's initial speed (m/s)
    ego_speed_jitter: float = 0.0

    def initial_world(self) -> WorldState:
        return WorldState(self.ego, self.other.state_at(0.0, self.road), 0.0, self.road)

    def with_law(self, law: LawFile) -> "Scenario":
        return replace(self, law=law)

    def with_other_speed_factor(self, factor: float) -> "Scenario":
        return replace(self, other=self.other.scaled(factor))


def perturb_scenario(scenario: Scenario, seed: int, spread: float = 0.2) -> Scenario:
    """Scale the other vehicle's speed profile by a seeded factor in
    ``[1 - spread, 1 + spread]``."""
    rng = np.random.default_rng(seed)
    return replace(scenario.with_other_speed_factor(float(rng.uniform(1 - spread, 1 + spread))),
                   seed=seed)


def _road_from_dict(d: dict) -> RoadMap:
    lanes = tuple(Lane(bool(l.get("special", False)), int(l.get("direction", 1)))
                  for l in d["lanes"])
    light = None
    if d.get("light"):
        ld = d["light"]
        light = TrafficLight(float(ld["position"]),
                             tuple((float(t), str(c)) for t, c in ld["schedule"]),
                             tuple(ld["lanes"]) if ld.get("lanes") is not None else None)
    stop = d.get("stop_line")
    return RoadMap(lanes, float(d.get("lane_width", 3.5)),
                   None if stop is None else float(stop), light)


def road_to_dict(road: RoadMap) -> dict:
    d: dict[str, Any] = {
        "lane_width": road.lane_width,
        "lanes": [{"special": l.special, "direction": l.direction} for l in road.lanes],
        "stop_line": road.stop_line,
        "light": None,
    }
    if road.light is not None:
        d["light"] = {"position": road.light.position,
                      "schedule": [list(p) for p in road.light.schedule],
                      "lanes": None if road.light.lanes is None else list(road.light.lanes)}
    return d


def road_from_dict(d: dict) -> RoadMap:
    return _road_from_dict(d)


def scenario_from_dict(d: dict, base_dir: Path | None = None, law: LawFile | None = None) -> Scenario:
    road = _road_from_dict(d["road"])
    e = d["ego"]
    ego = VehicleState(float(e.get("x", 0.0)), road.lane_center(int(e["lane"])), float(e["vx"]),
                       0.0, length=float(e.get("length", 4.5)), width=float(e.get("width", 1.8)))
    o = d["other"]
    horizon = float(d.get("horizon", HORIZON))
    duration = float(d["duration"])
    speeds = o["speeds"] if "speeds" in o else [[0.0, o["vx"]]]
    other = OtherScript(int(o["lane"]), float(o["x"]),
                        tuple((float(t), float(v)) for t, v in speeds),
                        duration + horizon, float(o.get("length", 4.5)), float(o.get("width", 1.8)))
    law_path = d.get("law")
    if law is None and law_path:
        p = Path(law_path)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        law = load_law(p)
        law_path = str(p)
    training = d.get("training", {})
    return Scenario(
        name=d.get("name", "scenario"), road=road, ego=ego, other=other,
        v_ref=float(d["v_ref"]), speed_limit=float(d["speed_limit"]), duration=duration,
        law=law, law_path=law_path, prescribed=bool(e.get("prescribed", False)),
        seed=int(d.get("seed", 0)), horizon=horizon, dt=float(d.get("dt", DT)),
        a_max=float(d.get("a_max", A_MAX)), reward=RewardWeights(**d.get("reward", {})),
        speed_jitter=float(training.get("speed_jitter", 0.2)),
        gap_jitter=float(training.get("gap_jitter", 0.0)),
        ego_speed_jitter=float(training.get("ego_speed_jitter", 0.0)),
    )


def load_scenario(path: str | Path, law: LawFile | None = None) -> Scenario:
    path = Path(path)
    return scenario_from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent, law)


def builtin_scenario(name: str, law: LawFile | None = None) -> Scenario:
    """``olympic`` or ``overtaking`` (or any JSON file shipped in data/scenarios)."""
    return load_scenario(DATA_DIR / "scenarios" / f"{name}.json", law)


def builtin_law(name: str) -> LawFile:
    return load_law(DATA_DIR / "laws" / f"{name}.law")


def step(world: WorldState, planned: WorldState, script: OtherScript, dt: float = DT,
         v_max: float = math.inf) -> WorldState:
    """Advance one tick: the ego takes the planned point exactly and the
    other vehicle follows its script."""
    t1 = round(world.t + dt, 9)
    if abs(planned.t - t1) > 1e-6:
        raise SimulationError(f"planned point at t={planned.t:.4f} does not match sim time {t1:.4f}")
    if planned.ego.vx > v_max + 1e-6:
        raise SimulationError(f"planned speed {planned.ego.vx:.3f} exceeds v_max {v_max}")
    return WorldState(planned.ego, script.state_at(t1, world.road), t1, world.road)


class Policy(Protocol):
    def act(self, world: WorldState) -> tuple[int, float]: ...


@dataclass
class DecisionRecord:
    step: int
    t: float
    tag: str
    rl_target: tuple | None
    target: tuple | None
    veto_step: int | None = None
    veto_subformula: str | None = None
    candidates: list | None = None


@dataclass
class EpisodeResult:
    scenario: str
    mode: str
    trace: Trace
    audit: AuditReport | None
    collision: bool
    completed: bool
    decisions: list[DecisionRecord]

    @property
    def tags(self) -> tuple:
        return self.trace.tags

    @property
    def violations(self) -> int:
        return 0 if self.audit is None else self.audit.violations

    @property
    def first_violation(self) -> int | None:
        return None if self.audit is None else self.audit.first_violation

    @property
    def mean_speed(self) -> float:
        return float(np.mean([s.ego.vx for s in self.trace.states]))

    def tag_counts(self) -> dict[str, int]:
        out = {RL: 0, BACKUP: 0, BUFFER: 0}
        for t in self.trace.tags[1:]:
            out[t] = out.get(t, 0) + 1
        return out


def _target(action) -> tuple | None:
    return None if action is None else tuple(action.target) if hasattr(action, "target") else tuple(action)


def run_episode(scenario: Scenario, rl: Policy | None = None, mode: str = "shielded",
                law: LawFile | None = None, dump_candidates: bool = False,
                decision_every: int = DECISION_EVERY) -> EpisodeResult:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if rl is None and mode != "backup-only":
        raise ValueError(f"mode {mode!r} needs an RL policy")
    law = law or scenario.law
    if law is None and mode != "rl-only":
        raise ValueError("shielded and backup-only modes need a law")
    road, dt, script = scenario.road, scenario.dt, scenario.other
    v_max = scenario.speed_limit
    forecaster = LawForecaster(law, scenario.prescribed) if law is not None else None
    backup = BackupPolicy(road, scenario.v_ref, v_max, scenario.horizon, dt, scenario.a_max)
    buffer = TrajectoryBuffer()

    world = scenario.initial_world()
    states, actions, tags = [world], [None], [None]
    decisions: list[DecisionRecord] = []
    plan: Trace | None = None
    plan_idx = 0
    tag = None
    collision = False
    n_steps = int(round(scenario.duration / dt))

    for k in range(n_steps):
        if k % decision_every == 0 or plan is None or plan_idx >= len(plan) - 1:
            history = Trace(tuple(states), tuple(actions), tuple(tags), dt)
            prediction = predict(script, world.t, scenario.horizon, road, dt)
            rl_target, rl_trace = None, None
            if mode != "backup-only":
                rl_target = tuple(rl.act(world))
                try:
                    rl_trace = generate(world, rl_target, road, prediction, scenario.horizon, dt,
                                        scenario.a_max, v_max, tag=RL)
                except OffRoadError:
                    rl_trace = None
            if mode == "rl-only":
                if rl_trace is None:
                    raise SimulationError(f"RL target {rl_target} leaves the road")
                plan, tag = rl_trace, RL
                decisions.append(DecisionRecord(k, world.t, RL, rl_target, rl_target))
            else:
                def run_backup(hist):
                    return backup.plan(hist, prediction, forecaster.check)
                d = decide(rl_target, rl_trace, run_backup, history, forecaster, buffer, v_max,
                           lambda tr: first_unsafe_step(tr, backup.margin))
                plan, tag = d.plan, d.tag
                decisions.append(DecisionRecord(
                    k, world.t, d.tag, rl_target, _target(d.action),
                    None if d.veto is None else d.veto.step,
                    None if d.veto is None else d.veto.subformula,
                    d.candidates if dump_candidates else None))
                if d.veto is not None:
                    log.debug("t=%.1f rl %s vetoed at step %d by %s -> %s %s", world.t, rl_target,
                              d.veto.step, d.veto.subformula, d.tag, _target(d.action))
            plan_idx = 0

        nxt = plan[plan_idx + 1]
        world = step(world, nxt, script, dt, v_max)
        plan_idx += 1
        if mode != "rl-only":
            buffer.advance()
        states.append(world)
        actions.append(plan.actions[plan_idx])
        tags.append(tag)
        if collides(world.ego, world.other):
            collision = True
            break

    trace = Trace(tuple(states), tuple(actions), tuple(tags), dt)
    report = audit_trace(law, trace, scenario.prescribed) if law is not None else None
    return EpisodeResult(scenario.name, mode, trace, report, collision,
                         not collision, decisions)
