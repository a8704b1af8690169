"""Post-hoc compliance audit of realised traces.

This module deliberately re-implements the finite-trace semantics as a
direct recursive definition instead of reusing the backward pass in
:mod:`lawshield.law_dsl`, so online vetoes and the audit do not share code.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .law_dsl import (Always, And, Atom, Eventually, Formula, Implies, LawFile, Next, Not, Or,
                      Until, eval_atom, to_text)
from .world import DEFAULT_REGISTRY, GroundingContext, PredicateRegistry


def holds(f: Formula, trace: Sequence, i: int, ctx: GroundingContext) -> bool:
    n = len(trace)
    if isinstance(f, Atom):
        return eval_atom(f, trace, i, ctx)
    if isinstance(f, Not):
        return not holds(f.operand, trace, i, ctx)
    if isinstance(f, And):
        return holds(f.left, trace, i, ctx) and holds(f.right, trace, i, ctx)
    if isinstance(f, Or):
        return holds(f.left, trace, i, ctx) or holds(f.right, trace, i, ctx)
    if isinstance(f, Implies):
        return (not holds(f.left, trace, i, ctx)) or holds(f.right, trace, i, ctx)
    if isinstance(f, Next):
        return i + 1 < n and holds(f.operand, trace, i + 1, ctx)
    if isinstance(f, Always):
        return all(holds(f.operand, trace, k, ctx) for k in range(i, n))
    if isinstance(f, Eventually):
        return any(holds(f.operand, trace, k, ctx) for k in range(i, n))
    if isinstance(f, Until):
        for j in range(i, n):
            if holds(f.right, trace, j, ctx):
                return all(holds(f.left, trace, k, ctx) for k in range(i, j))
        return False
    raise TypeError(f"not a formula: {f!r}")


@dataclass(frozen=True)
class AuditReport:
    law: str
    satisfied: bool
    violations: int
    first_violation: int | None
    step_ok: tuple[bool, ...]
    failing_subformula: str | None = None

    def summary(self) -> str:
        if self.satisfied:
            return f"{self.law}: satisfied ({len(self.step_ok)} steps)"
        return (f"{self.law}: VIOLATED at step {self.first_violation} "
                f"({self.violations} violating step(s)); failing: {self.failing_subformula}")


def _failing_part(f: Formula, trace, i, ctx) -> str:
    while True:
        if isinstance(f, Implies) and holds(f.left, trace, i, ctx):
            f = f.right
        elif isinstance(f, And):
            f = f.left if not holds(f.left, trace, i, ctx) else f.right
        else:
            return to_text(f)


def audit_trace(law: LawFile, trace: Sequence, prescribed: bool = False,
                registry: PredicateRegistry = DEFAULT_REGISTRY) -> AuditReport:
    """Per-step verdicts for ``law`` on ``trace``.

    For an ``G body`` law, step ``i`` is compliant iff ``body`` holds at
    ``i``. Other shapes are judged on prefixes: step ``i`` is compliant iff
    the formula holds on ``trace[:i + 1]``.
    """
    ctx = law.context(prescribed, registry)
    f = law.formula
    n = len(trace)
    if isinstance(f, Always):
        ok = tuple(holds(f.operand, trace, i, ctx) for i in range(n))
        body = f.operand
    else:
        ok = tuple(holds(f, trace[:i + 1], 0, ctx) for i in range(n))
        body = f
    bad = [i for i, v in enumerate(ok) if not v]
    first = bad[0] if bad else None
    failing = _failing_part(body, trace, first, ctx) if first is not None and body is not f else (
        to_text(f) if first is not None else None)
    return AuditReport(law.name, not bad, len(bad), first, ok, failing)
