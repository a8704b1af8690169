"""Law-violation forecasting and the RL / backup / buffer switch."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .law_dsl import Failure, LawFile, evaluate, explain, max_lookback
from .world import DEFAULT_REGISTRY, PredicateRegistry, Trace, lane_of

RL, BACKUP, BUFFER = "rl", "backup", "buffer"


class BufferExhaustedError(RuntimeError):
    """Both live policies were vetoed and nothing is left in the buffer."""


def recoverability_check(candidate: Trace, v_max: float = math.inf, tol: float = 1e-6) -> bool:
    """End state sits on a lane centre, with no lateral speed and a legal
    longitudinal speed."""
    end = candidate.last
    ego = end.ego
    road = end.road
    try:
        lane = lane_of(ego, road)
    except ValueError:
        return False
    return (abs(ego.y - road.lane_center(lane)) < tol and abs(ego.vy) < tol
            and -tol <= ego.vx <= v_max + tol)


class LawForecaster:
    """Checks candidate futures against one digitised law."""

    def __init__(self, law: LawFile, prescribed: bool = False,
                 registry: PredicateRegistry = DEFAULT_REGISTRY):
        self.law = law
        self.ctx = law.context(prescribed, registry)
        self.lookback = max_lookback(law.formula, registry)

    def _joined(self, candidate: Trace, history: Trace) -> Trace:
        return history.concat(candidate)

    def check(self, candidate: Trace, history: Trace) -> bool:
        joined = self._joined(candidate, history)
        return bool(evaluate(self.law.formula, joined, self.ctx, {})[0])

    def diagnose(self, candidate: Trace, history: Trace) -> Failure | None:
        """``None`` when legal, otherwise the first failing step (indexed in
        the joined history + candidate trace) and sub-formula."""
        return explain(self.law.formula, self._joined(candidate, history), self.ctx)


@dataclass
class TrajectoryBuffer:
    """Last approved plan and the index of the point the ego is currently at."""

    trace: Trace | None = None
    action: object = None
    index: int = 0

    def store(self, trace: Trace, action) -> None:
        self.trace = trace
        self.action = action
        self.index = 0

    @property
    def empty(self) -> bool:
        return self.trace is None

    def exhausted(self) -> bool:
        return self.trace is None or self.index >= len(self.trace) - 1

    def remaining(self) -> Trace:
        """The plan from the current point (inclusive) to its end."""
        if self.trace is None:
            raise BufferExhaustedError("buffer is empty")
        tr = self.trace
        return Trace(tr.states[self.index:], tr.actions[self.index:], tr.tags[self.index:], tr.dt)

    def advance(self) -> None:
        self.index += 1


@dataclass
class Decision:
    tag: str
    action: object
    plan: Trace
    rl_action: object = None
    veto: Failure | None = None
    candidates: list = field(default_factory=list)


BackupFn = Callable[[Trace], tuple[object, Trace | None, list]]


def decide(rl_action, rl_candidate: Trace | None, backup: BackupFn, history: Trace,
           forecaster: LawForecaster, buffer: TrajectoryBuffer,
           v_max: float = math.inf,
           unsafe_step: Callable[[Trace], int | None] | None = None) -> Decision:
    """Pick the plan to track from the current state (``history.last``).

    ``backup(history)`` returns ``(action, trace or None, candidate dump)``;
    a ``None`` trace means no legal and safe candidate exists. The buffer is
    updated whenever a live policy is approved and left untouched otherwise.

    ``unsafe_step``, when given, also vetoes RL candidates that come too
    close to the predicted other vehicle (the same filter the backup uses).
    """
    veto = None
    if rl_candidate is not None:
        offset = len(history) - 1
        bad = None if unsafe_step is None else unsafe_step(rl_candidate)
        if not recoverability_check(rl_candidate, v_max):
            end = offset + len(rl_candidate) - 1
            veto = Failure(end, "recoverable end state", ("recoverability",), end)
        elif bad is not None:
            veto = Failure(offset + bad, "safety distance", ("safety",), offset + bad)
        else:
            veto = forecaster.diagnose(rl_candidate, history)
        if veto is None:
            buffer.store(rl_candidate, rl_action)
            return Decision(RL, rl_action, rl_candidate, rl_action)

    b_action, b_trace, dump = backup(history)
    if b_trace is not None:
        if not recoverability_check(b_trace, v_max):
            raise AssertionError("backup produced a non-recoverable plan")
        buffer.store(b_trace, b_action)
        return Decision(BACKUP, b_action, b_trace, rl_action, veto, dump)

    if buffer.exhausted():
        raise BufferExhaustedError(
            f"no legal plan at t={history.last.t:.2f} s and the buffer is exhausted")
    return Decision(BUFFER, buffer.action, buffer.remaining(), rl_action, veto, dump)
