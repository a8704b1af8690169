"""Discretised Q-learning over long-term (lane, acceleration) actions.

The agent is trained on the scenario reward only (speed tracking,
collisions and the traffic-light rule); it never sees a law file.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .simulator import Scenario
from .trajectory import sample, target_to_world
from .world import RoadMap, VehicleState, WorldState, lane_of, planning_lane

LAT_LEVELS = (-1, 0, 1)
LON_LEVELS = (-1.0, -0.5, 0.0, 0.5, 1.0)
ACTIONS: tuple[tuple[int, float], ...] = tuple((a, b) for a in LAT_LEVELS for b in LON_LEVELS)
DEFAULT_ACTION = (0, 0.0)
DEFAULT_INDEX = ACTIONS.index(DEFAULT_ACTION)

BINS = {
    "ego_vx": 2.0,
    "rel_x": 5.0, "rel_x_clip": 50.0,
    "rel_vx": 2.0, "rel_vx_clip": 10.0,
    "stop_line": 10.0, "stop_line_clip": 100.0,
}
LIGHT_PHASES = {"green": 0, "yellow": 1, "red": 2}
HEADER = "# lawshield q-table v1"

StateKey = tuple


def action_index(action: tuple[int, float]) -> int:
    return ACTIONS.index((int(action[0]), float(action[1])))


def _bin(value: float, width: float, clip: float | None = None) -> int:
    if clip is not None:
        value = min(max(value, -clip), clip)
    return int(math.floor(value / width))


def encode_key(ego_lane: int, ego_vx: float, rel_x: float, rel_vx: float, other_lane: int,
               light: tuple[int, int] | None = None) -> StateKey:
    key = (int(ego_lane), _bin(ego_vx, BINS["ego_vx"]),
           _bin(rel_x, BINS["rel_x"], BINS["rel_x_clip"]),
           _bin(rel_vx, BINS["rel_vx"], BINS["rel_vx_clip"]), int(other_lane))
    return key + (light if light is not None else ())


def _light_part(road: RoadMap, t: float, ego: VehicleState) -> tuple[int, int] | None:
    if road.light is None:
        return None
    phase = LIGHT_PHASES.get(road.light.color_at(t), 0)
    to_line = (road.stop_line if road.stop_line is not None else road.light.position) - ego.front
    dist = min(max(to_line, -BINS["stop_line"]), BINS["stop_line_clip"])
    return phase, int(math.floor(dist / BINS["stop_line"]))


def encode_state(world: WorldState, road: RoadMap | None = None) -> StateKey:
    road = road or world.road
    e, o = world.ego, world.other
    return encode_key(planning_lane(e, road), e.vx, o.x - e.x, o.vx - e.vx, lane_of(o, road),
                      _light_part(road, world.t, e))


def valid_actions(ego_lane: int, road: RoadMap) -> np.ndarray:
    return np.array([road.has_lane(ego_lane + a[0]) for a in ACTIONS])


@dataclass
class QTable:
    values: dict[StateKey, np.ndarray] = field(default_factory=dict)
    visits: dict[StateKey, np.ndarray] = field(default_factory=dict)
    seed: int | None = None
    episodes: int = 0
    hyperparams: dict = field(default_factory=dict)
    actions: tuple = ACTIONS

    def row(self, key: StateKey) -> np.ndarray:
        r = self.values.get(key)
        if r is None:
            r = self.values[key] = np.zeros(len(self.actions))
            self.visits[key] = np.zeros(len(self.actions), dtype=np.int64)
        return r

    def __len__(self) -> int:
        return len(self.values)

    def best_index(self, key: StateKey, allowed: np.ndarray | None = None) -> int:
        """Greedy action over tried (and allowed) actions; lowest index wins
        ties, unseen states fall back to the neutral action."""
        if key not in self.values:
            return DEFAULT_INDEX
        mask = self.visits[key] > 0
        if allowed is not None:
            mask &= allowed
        if not mask.any():
            return DEFAULT_INDEX
        vals = np.where(mask, self.values[key], -np.inf)
        return int(np.argmax(vals))

    def act(self, world: WorldState) -> tuple[int, float]:
        road = world.road
        allowed = valid_actions(planning_lane(world.ego, road), road)
        return self.actions[self.best_index(encode_state(world, road), allowed)]

    # -- persistence -------------------------------------------------------
    def dumps(self) -> str:
        meta = {"actions": [list(a) for a in self.actions], "bins": BINS, "seed": self.seed,
                "episodes": self.episodes, "hyperparams": self.hyperparams}
        lines = [HEADER, json.dumps(meta, sort_keys=True)]
        for key in sorted(self.values):
            vals = " ".join(float(v).hex() for v in self.values[key])
            vis = " ".join(str(int(v)) for v in self.visits[key])
            lines.append(f"{','.join(map(str, key))}\t{vis}\t{vals}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "QTable":
        lines = text.splitlines()
        if not lines or lines[0] != HEADER:
            raise ValueError("not a lawshield q-table file")
        meta = json.loads(lines[1])
        actions = tuple((int(a), float(b)) for a, b in meta["actions"])
        if actions != ACTIONS:
            raise ValueError("q-table action grid does not match this version")
        table = cls(seed=meta["seed"], episodes=meta["episodes"],
                    hyperparams=meta.get("hyperparams", {}))
        for line in lines[2:]:
            if not line.strip():
                continue
            k, vis, vals = line.split("\t")
            key = tuple(int(x) for x in k.split(",")) if k else ()
            table.values[key] = np.array([float.fromhex(v) for v in vals.split()])
            table.visits[key] = np.array([int(v) for v in vis.split()], dtype=np.int64)
            if not np.all(np.isfinite(table.values[key])):
                raise ValueError(f"non-finite q-value for state {key}")
        return table

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "QTable":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def act(table: QTable, world: WorldState) -> tuple[int, float]:
    return table.act(world)


# ---------------------------------------------------------------------------
# Learning
# ---------------------------------------------------------------------------

def check_hyperparams(alpha: float, gamma: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"learning rate must lie in (0, 1], got {alpha}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {gamma}")


def q_update(q_row: np.ndarray, a: int, reward: float, next_best: float | None,
             alpha: float, gamma: float) -> None:
    """One Q-learning step; ``next_best`` is ``None`` at terminal states."""
    target = reward if next_best is None else reward + gamma * next_best
    q_row[a] += alpha * (target - q_row[a])


def epsilon_at(episode: int, episodes: int, start: float = 1.0, end: float = 0.05,
               fraction: float = 0.6) -> float:
    span = max(1.0, fraction * episodes)
    return max(end, start + (end - start) * episode / span)


def learn_finite_mdp(step_fn: Callable[[int, int], tuple[int, float, bool]], n_states: int,
                     n_actions: int, updates: int, alpha: float = 0.1, gamma: float = 0.9,
                     epsilon: float = 1.0, seed: int = 0, start: int = 0) -> np.ndarray:
    """Q-learning on a small discrete MDP given as ``step_fn(s, a) ->
    (s', r, done)``; restarts from ``start`` after terminal transitions."""
    check_hyperparams(alpha, gamma)
    rng = np.random.default_rng(seed)
    q = np.zeros((n_states, n_actions))
    s = start
    for _ in range(updates):
        a = int(rng.integers(n_actions)) if rng.random() < epsilon else int(np.argmax(q[s]))
        s2, r, done = step_fn(s, a)
        q_update(q[s], a, r, None if done else float(np.max(q[s2])), alpha, gamma)
        s = start if done else s2
    return q


class TrainingEnv:
    """Semi-Markov driving environment: one decision per completed
    long-term action, reward accumulated over the tracked points."""

    def __init__(self, scenario: Scenario, rng: np.random.Generator | None = None):
        self.sc = scenario
        script = scenario.other
        if rng is not None:
            factor = rng.uniform(1 - scenario.speed_jitter, 1 + scenario.speed_jitter)
            shift = rng.uniform(-scenario.gap_jitter, scenario.gap_jitter) if scenario.gap_jitter else 0.0
            script = replace(script.scaled(float(factor)), x0=script.x0 + float(shift))
        ego = scenario.ego
        if rng is not None and scenario.ego_speed_jitter:
            vx = ego.vx + rng.uniform(-scenario.ego_speed_jitter, scenario.ego_speed_jitter)
            ego = replace(ego, vx=float(min(max(vx, 0.0), scenario.speed_limit)))
        self.script = script
        self.road = scenario.road
        self.world = WorldState(ego, script.state_at(0.0, self.road), 0.0, self.road)
        self.steps_left = int(round(scenario.duration / scenario.dt))
        self.other_y = self.road.lane_center(script.lane)

    def key(self) -> StateKey:
        return encode_state(self.world, self.road)

    def allowed(self) -> np.ndarray:
        return valid_actions(planning_lane(self.world.ego, self.road), self.road)

    @property
    def done(self) -> bool:
        return self.steps_left <= 0

    def step(self, index: int) -> tuple[float, bool]:
        """Apply action ``index``; returns ``(reward, terminal)``."""
        sc, road, w = self.sc, self.road, self.world
        spec = target_to_world(w, ACTIONS[index], road, sc.horizon, sc.a_max, sc.speed_limit)
        pos, vel, _ = sample(spec, sc.horizon, sc.dt)
        n = min(len(pos) - 1, self.steps_left)
        ks = np.arange(1, n + 1)
        ts = np.round(w.t + ks * sc.dt, 9)
        ox = np.array([self.script.x_at(t) for t in ts])
        ovx = np.array([self.script.speed_at(t) for t in ts])
        ex, ey, evx = pos[ks, 0], pos[ks, 1], vel[ks, 0]
        lanes = np.floor(ey / road.lane_width).astype(int)
        wt = sc.reward
        ego, other = w.ego, self.script

        rewards = -wt.speed * np.abs(evx - sc.v_ref) * sc.dt
        if wt.opposing_lane:
            opposing = np.array([road.lanes[l].direction < 0 for l in lanes])
            rewards = rewards - wt.opposing_lane * sc.dt * opposing
        terminal_at = None
        crash = ((np.abs(ex - ox) < 0.5 * (ego.length + other.length))
                 & (np.abs(ey - self.other_y) < 0.5 * (ego.width + other.width)))
        if crash.any():
            terminal_at = int(np.argmax(crash))
            rewards[terminal_at] -= wt.collision
        if road.light is not None and road.stop_line is not None:
            front = ex + 0.5 * ego.length
            prev_front = np.concatenate([[w.ego.front], front[:-1]])
            red = np.array([road.light.color_at(t) == "red" and road.light.covers(l)
                            for t, l in zip(ts, lanes)])
            ran = red & (front > road.stop_line) & (prev_front <= road.stop_line)
            if ran.any():
                j = int(np.argmax(ran))
                if terminal_at is None or j < terminal_at:
                    terminal_at = j
                rewards[j] -= wt.red_light
        if wt.right_pass:
            rel = ex - ox
            prev_rel = np.concatenate([[w.ego.x - w.other.x], rel[:-1]])
            passed = (prev_rel < 0) & (rel >= 0) & (lanes > other.lane)
            rewards = rewards - wt.right_pass * passed
        if terminal_at is not None:
            rewards = rewards[:terminal_at + 1]
            n = terminal_at + 1
        end = n
        vy = float(vel[end, 1]) if end < len(pos) - 1 else 0.0
        new_ego = replace(ego, x=float(pos[end, 0]), y=float(pos[end, 1]), vx=float(vel[end, 0]),
                          vy=vy)
        t1 = float(ts[end - 1])
        self.world = WorldState(new_ego, other.state_at(t1, road), t1, road)
        self.steps_left -= n
        if terminal_at is not None:
            self.steps_left = 0
        return float(rewards.sum()), terminal_at is not None


def train(scenario: Scenario, episodes: int, seed: int = 0, alpha: float = 0.1,
          gamma: float = 0.95, eps_start: float = 1.0, eps_end: float = 0.05,
          anneal_fraction: float = 0.6, curve: list | None = None) -> QTable:
    """Tabular Q-learning with linearly annealed epsilon-greedy exploration.

    A fixed ``seed`` gives a bit-identical table. ``curve``, when given,
    receives ``(episode, epsilon, return)`` rows.
    """
    check_hyperparams(alpha, gamma)
    if episodes < 0:
        raise ValueError("episodes must be non-negative")
    rng = np.random.default_rng(seed)
    table = QTable(seed=seed, episodes=episodes, hyperparams={
        "alpha": alpha, "gamma": gamma, "eps_start": eps_start, "eps_end": eps_end,
        "anneal_fraction": anneal_fraction})
    for ep in range(episodes):
        eps = epsilon_at(ep, episodes, eps_start, eps_end, anneal_fraction)
        env = TrainingEnv(scenario, rng)
        key = env.key()
        total = 0.0
        while not env.done:
            allowed = env.allowed()
            row = table.row(key)
            if rng.random() < eps:
                a = int(rng.choice(np.flatnonzero(allowed)))
            else:
                a = int(np.argmax(np.where(allowed, row, -np.inf)))
            reward, terminal = env.step(a)
            total += reward
            table.visits[key][a] += 1
            if terminal:
                q_update(row, a, reward, None, alpha, gamma)
                break
            key2 = env.key()
            row2 = table.row(key2)
            best = float(np.max(np.where(env.allowed(), row2, -np.inf)))
            q_update(row, a, reward, best, alpha, gamma)
            key = key2
        if curve is not None:
            curve.append((ep, eps, total))
    return table
