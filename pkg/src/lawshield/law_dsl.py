"""Temporal-logic law formulas: parsing, printing and finite-trace evaluation.

Formulas are evaluated with LTLf semantics. ``X`` is a strong next (false at
the final step), ``U`` is a strong until and ``G``/``F`` range over the
remaining suffix of the trace.

Grammar (lowest to highest precedence)::

    formula := or ("->" formula)?
    or      := and ("|" and)*
    and     := until ("&" until)*
    until   := unary ("U" until)?
    unary   := ("!" | "G" | "F" | "X") unary | primary
    primary := "(" formula ")" | IDENT ["(" expr ("," expr)* ")"]
    expr    := term (("+" | "-") term)*
    term    := factor ("*" factor)*
    factor  := NUMBER | IDENT | "max" "(" expr ("," expr)+ ")" | "(" expr ")" | "-" factor
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .world import DEFAULT_REGISTRY, GroundingContext, PredicateError, PredicateRegistry


class LawError(ValueError):
    pass


class LawSyntaxError(LawError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class UnknownAtomError(LawError):
    pass


class ArityError(LawError):
    pass


class UnboundConstantError(LawError):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Expr:
    pass


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Name(Expr):
    name: str


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class Max(Expr):
    args: tuple[Expr, ...]


class Formula:
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str
    args: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula


@dataclass(frozen=True)
class Always(Formula):
    operand: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


UNARY = {"!": Not, "G": Always, "F": Eventually, "X": Next}
BINARY_SYMBOL = {And: "&", Or: "|", Implies: "->", Until: "U"}


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, Atom):
        return ()
    if isinstance(f, (Not, Next, Always, Eventually)):
        return (f.operand,)
    return (f.left, f.right)


def expr_names(e: Expr) -> set[str]:
    if isinstance(e, Name):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return expr_names(e.operand)
    if isinstance(e, BinOp):
        return expr_names(e.left) | expr_names(e.right)
    return set().union(*(expr_names(a) for a in e.args))


def formula_names(f: Formula) -> set[str]:
    if isinstance(f, Atom):
        return set().union(set(), *(expr_names(a) for a in f.args))
    return set().union(*(formula_names(c) for c in children(f)))


def max_lookback(f: Formula, registry: PredicateRegistry = DEFAULT_REGISTRY) -> int:
    """Largest number of past steps any atom in ``f`` inspects."""
    if isinstance(f, Atom):
        return registry[f.name].lookback if f.name in registry else 0
    return max((max_lookback(c, registry) for c in children(f)), default=0)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

def _num_text(v: float) -> str:
    return repr(float(v))


def expr_to_text(e: Expr) -> str:
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Neg):
        return f"-({expr_to_text(e.operand)})"
    if isinstance(e, BinOp):
        return f"({expr_to_text(e.left)} {e.op} {expr_to_text(e.right)})"
    return "max(" + ", ".join(expr_to_text(a) for a in e.args) + ")"


def to_text(f: Formula) -> str:
    """Fully parenthesised text that parses back to ``f``."""
    if isinstance(f, Atom):
        if not f.args:
            return f.name
        return f"{f.name}(" + ", ".join(expr_to_text(a) for a in f.args) + ")"
    for sym, cls in UNARY.items():
        if type(f) is cls:
            return f"{sym}({to_text(f.operand)})"
    return f"({to_text(f.left)} {BINARY_SYMBOL[type(f)]} {to_text(f.right)})"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|[!&|()*,+\-])
""", re.VERBOSE)

_KEYWORDS = {"G", "F", "X", "U"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, line0: int = 1, col0: int = 1) -> list[_Tok]:
    toks = []
    pos, line, col = 0, line0, col0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LawSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "ident" and s in _KEYWORDS:
            kind = "op"
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks, registry, constants, strict):
        self.toks = toks
        self.i = 0
        self.registry = registry
        self.constants = constants
        self.strict = strict

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return LawSyntaxError(msg, tok.line, tok.col)

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")

    def parse(self) -> Formula:
        f = self.formula()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return f

    def formula(self):
        left = self.disj()
        if self.accept("->"):
            return Implies(left, self.formula())
        return left

    def disj(self):
        f = self.conj()
        while self.accept("|"):
            f = Or(f, self.conj())
        return f

    def conj(self):
        f = self.until()
        while self.accept("&"):
            f = And(f, self.until())
        return f

    def until(self):
        left = self.unary()
        if self.accept("U"):
            return Until(left, self.until())
        return left

    def unary(self):
        for sym, cls in UNARY.items():
            if self.accept(sym):
                return cls(self.unary())
        return self.primary()

    def primary(self):
        if self.accept("("):
            f = self.formula()
            self.expect(")")
            return f
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected a formula, found {tok.text or 'end of input'!r}")
        self.i += 1
        args = []
        if self.accept("("):
            args.append(self.expr())
            while self.accept(","):
                args.append(self.expr())
            self.expect(")")
        return self.atom(tok, tuple(args))

    def atom(self, tok, args):
        reg = self.registry
        if tok.text not in reg:
            raise UnknownAtomError(f"unknown atom {tok.text!r} (line {tok.line}, column {tok.col})")
        arity = reg[tok.text].arity
        if arity != len(args):
            raise ArityError(f"atom {tok.text!r} takes {arity} argument(s), got {len(args)} "
                             f"(line {tok.line}, column {tok.col})")
        if self.strict:
            for a in args:
                for name in expr_names(a):
                    if name not in self.constants and name not in reg.context_vars:
                        raise UnboundConstantError(
                            f"unbound constant {name!r} in {tok.text} "
                            f"(line {tok.line}, column {tok.col})")
        return Atom(tok.text, args)

    def expr(self):
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.factor()
        while self.accept("*"):
            e = BinOp("*", e, self.factor())
        return e

    def factor(self):
        tok = self.tok
        if self.accept("-"):
            return Neg(self.factor())
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "number":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            if tok.text == "max":
                self.expect("(")
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                if len(args) < 2:
                    raise self.error("max() needs at least two arguments", tok)
                return Max(tuple(args))
            return Name(tok.text)
        raise self.error(f"expected an expression, found {tok.text or 'end of input'!r}")


def parse_formula(text: str, registry: PredicateRegistry = DEFAULT_REGISTRY,
                  constants: Mapping[str, float] | None = None, *,
                  strict: bool = True, line: int = 1, col: int = 1) -> Formula:
    """Parse DSL text into a formula.

    With ``strict`` every identifier used inside an atom argument must be a
    key of ``constants`` or a context variable of ``registry``.
    """
    toks = _tokenize(text, line, col)
    return _Parser(toks, registry, dict(constants or {}), strict).parse()


@dataclass(frozen=True)
class LawFile:
    name: str
    formula: Formula
    constants: Mapping[str, float] = field(default_factory=dict)
    source: str = ""

    @property
    def text(self) -> str:
        return to_text(self.formula)

    def context(self, prescribed: bool = False,
                registry: PredicateRegistry = DEFAULT_REGISTRY) -> GroundingContext:
        return GroundingContext(dict(self.constants), prescribed, registry)

    def dumps(self) -> str:
        lines = [f"name: {self.name}"]
        lines += [f"const {k} = {v!r}" for k, v in self.constants.items()]
        lines.append(f"formula: {self.text}")
        return "\n".join(lines) + "\n"


_CONST_RE = re.compile(r"^const\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)\s*$")


def parse_law(text: str, registry: PredicateRegistry = DEFAULT_REGISTRY,
              name: str = "law") -> LawFile:
    """Parse a law file: optional ``name:`` line, ``const`` headers, then
    ``formula:`` followed by the DSL expression (may span lines)."""
    constants: dict[str, float] = {}
    lines = text.splitlines(keepends=True)
    for lineno, raw in enumerate(lines, 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("name:"):
            name = stripped[5:].strip() or name
            continue
        m = _CONST_RE.match(stripped)
        if m:
            try:
                constants[m.group(1)] = float(m.group(2))
            except ValueError:
                raise LawSyntaxError(f"bad number {m.group(2)!r}", lineno,
                                     raw.find(m.group(2)) + 1) from None
            continue
        if stripped.startswith("formula:"):
            col = raw.find("formula:") + len("formula:") + 1
            body = raw[col - 1:] + "".join(lines[lineno:])
            formula = parse_formula(body, registry, constants, line=lineno, col=col)
            return LawFile(name, formula, constants, text)
        raise LawSyntaxError(f"unrecognised header line {stripped!r}", lineno, 1)
    raise LawSyntaxError("missing 'formula:' line", len(lines) + 1, 1)


def load_law(path: str | Path, registry: PredicateRegistry = DEFAULT_REGISTRY) -> LawFile:
    path = Path(path)
    return parse_law(path.read_text(encoding="utf-8"), registry, name=path.stem)


def rebind_constant(law: LawFile, name: str, value: float) -> LawFile:
    if name not in law.constants:
        raise UnboundConstantError(f"law {law.name!r} declares no constant {name!r}")
    constants = dict(law.constants)
    constants[name] = float(value)
    return replace(law, constants=constants)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_expr(e: Expr, trace, i: int, ctx: GroundingContext) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Name):
        if e.name in ctx.constants:
            return float(ctx.constants[e.name])
        reg = ctx.registry or DEFAULT_REGISTRY
        if e.name in reg.context_vars:
            try:
                return float(reg.context_vars[e.name](trace, i, ctx))
            except (AttributeError, KeyError, TypeError) as exc:
                raise PredicateError(f"context variable {e.name!r} unavailable: {exc}") from exc
        raise UnboundConstantError(f"unbound constant {e.name!r}")
    if isinstance(e, Neg):
        return -eval_expr(e.operand, trace, i, ctx)
    if isinstance(e, BinOp):
        a = eval_expr(e.left, trace, i, ctx)
        b = eval_expr(e.right, trace, i, ctx)
        return a + b if e.op == "+" else a - b if e.op == "-" else a * b
    return max(eval_expr(a, trace, i, ctx) for a in e.args)


def eval_atom(atom: Atom, trace, i: int, ctx: GroundingContext) -> bool:
    reg = ctx.registry or DEFAULT_REGISTRY
    if atom.name not in reg:
        raise UnknownAtomError(f"unknown atom {atom.name!r}")
    pred = reg[atom.name]
    args = [eval_expr(a, trace, i, ctx) for a in atom.args]
    try:
        return bool(pred.fn(trace, i, ctx, *args))
    except PredicateError:
        raise
    except (AttributeError, KeyError, TypeError, IndexError) as exc:
        raise PredicateError(f"atom {atom.name!r} failed at step {i}: {exc}") from exc


def evaluate(f: Formula, trace: Sequence, ctx: GroundingContext,
             memo: dict | None = None) -> np.ndarray:
    """Truth value of ``f`` at every step of ``trace`` (backward pass)."""
    if memo is not None and f in memo:
        return memo[f]
    n = len(trace)
    if isinstance(f, Atom):
        out = np.fromiter((eval_atom(f, trace, i, ctx) for i in range(n)), bool, n)
    elif isinstance(f, Not):
        out = ~evaluate(f.operand, trace, ctx, memo)
    elif isinstance(f, And):
        out = evaluate(f.left, trace, ctx, memo) & evaluate(f.right, trace, ctx, memo)
    elif isinstance(f, Or):
        out = evaluate(f.left, trace, ctx, memo) | evaluate(f.right, trace, ctx, memo)
    elif isinstance(f, Implies):
        out = ~evaluate(f.left, trace, ctx, memo) | evaluate(f.right, trace, ctx, memo)
    elif isinstance(f, Next):
        a = evaluate(f.operand, trace, ctx, memo)
        out = np.zeros(n, bool)
        out[:-1] = a[1:]
    elif isinstance(f, Always):
        a = evaluate(f.operand, trace, ctx, memo)
        out = np.logical_and.accumulate(a[::-1])[::-1]
    elif isinstance(f, Eventually):
        a = evaluate(f.operand, trace, ctx, memo)
        out = np.logical_or.accumulate(a[::-1])[::-1]
    elif isinstance(f, Until):
        a = evaluate(f.left, trace, ctx, memo)
        b = evaluate(f.right, trace, ctx, memo)
        out = np.zeros(n, bool)
        holds = False
        for i in range(n - 1, -1, -1):
            holds = bool(b[i]) or (bool(a[i]) and holds)
            out[i] = holds
    else:
        raise TypeError(f"not a formula: {f!r}")
    if memo is not None:
        memo[f] = out
    return out


def eval_at(f: Formula, trace: Sequence, i: int, ctx: GroundingContext) -> bool:
    if not 0 <= i < len(trace):
        raise IndexError(f"step {i} outside trace of length {len(trace)}")
    return bool(evaluate(f, trace, ctx, {})[i])


def eval_trace(f: Formula, trace: Sequence, ctx: GroundingContext) -> int:
    if len(trace) == 0:
        raise ValueError("cannot evaluate a formula on an empty trace")
    return int(eval_at(f, trace, 0, ctx))


@dataclass(frozen=True)
class Failure:
    """Where a formula failed: the step of the outermost failing position
    and the innermost sub-formula identified as responsible."""

    step: int
    subformula: str
    path: tuple[str, ...]
    subformula_step: int


def explain(f: Formula, trace: Sequence, ctx: GroundingContext) -> Failure | None:
    """``None`` if ``f`` holds on ``trace``; otherwise a :class:`Failure`."""
    memo: dict = {}
    if evaluate(f, trace, ctx, memo)[0]:
        return None
    path: list[str] = []
    outer_step = None
    node, i = f, 0
    while True:
        path.append(type(node).__name__)
        if isinstance(node, Always):
            a = memo[node.operand]
            k = i + int(np.argmin(a[i:]))
            if outer_step is None:
                outer_step = k
            node, i = node.operand, k
        elif isinstance(node, Implies):
            node = node.right
        elif isinstance(node, And):
            node = node.left if not memo[node.left][i] else node.right
        elif isinstance(node, Next) and i + 1 < len(trace):
            node, i = node.operand, i + 1
        else:
            break
    return Failure(i if outer_step is None else outer_step, to_text(node), tuple(path), i)
