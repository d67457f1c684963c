"""Labeled AST for the small concurrent language.

Programs are a fixed set of integer-priority threads over shared rational
variables and mutexes.  Every unary/binary operator carries a unique
location label; alarms are reported as sets of those labels.  Guards
(`e cmp 0 ?`) never appear in source text: they are synthesized when
conditionals and loops are desugared and when control paths are extracted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Optional, Union

# Interval endpoints: exact rationals, or +/-inf floats.
Ext = Union[Fraction, float]

INF = math.inf
NEG_INF = -math.inf

CMP_OPS = ("=", "!=", "<", ">", "<=", ">=")
BIN_OPS = ("+", "-", "*", "/")

# negation table: =, !=, <, >, <=, >= negate to !=, =, >=, <=, >, <
_NEGATE = {"=": "!=", "!=": "=", "<": ">=", ">": "<=", "<=": ">", ">=": "<"}


def negate_cmp(cmp: str) -> str:
    return _NEGATE[cmp]


def is_finite(x: Ext) -> bool:
    return isinstance(x, Fraction)


@dataclass(frozen=True)
class Location:
    """Unique syntactic label of an operator, plus source position.

    Identity is the label alone; the position is reporting metadata and
    does not participate in equality (so reformatting a program does not
    change its AST)."""

    label: int
    line: int = field(compare=False)
    col: int = field(compare=False)
    op: str = field(compare=False)

    def sort_key(self) -> tuple:
        return (self.line, self.col, self.label)

    def __str__(self) -> str:
        return f"L{self.label}@{self.line}:{self.col}({self.op})"


# ---------------------------------------------------------------------------
# Expressions


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Const(Expr):
    """Constant interval [lo, hi]; evaluates to a fresh value each time."""

    lo: Ext
    hi: Ext

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"constant interval with lo > hi: [{self.lo},{self.hi}]")

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class Neg(Expr):
    loc: Location
    sub: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    loc: Location
    left: Expr
    right: Expr


# ---------------------------------------------------------------------------
# Statements

Sid = Union[int, str]


class Stmt:
    __slots__ = ()


@dataclass(frozen=True)
class Assign(Stmt):
    sid: Sid
    var: str
    expr: Expr


@dataclass(frozen=True)
class Guard(Stmt):
    """Internal filter statement `e cmp 0 ?`; never parsed from source."""

    sid: Sid
    expr: Expr
    cmp: str


@dataclass(frozen=True)
class If(Stmt):
    sid: Sid
    expr: Expr
    cmp: str
    body: Stmt


@dataclass(frozen=True)
class While(Stmt):
    sid: Sid
    expr: Expr
    cmp: str
    body: Stmt


@dataclass(frozen=True)
class Seq(Stmt):
    sid: Sid
    first: Stmt
    second: Stmt


@dataclass(frozen=True)
class Lock(Stmt):
    sid: Sid
    mutex: str


@dataclass(frozen=True)
class Unlock(Stmt):
    sid: Sid
    mutex: str


@dataclass(frozen=True)
class Yield(Stmt):
    sid: Sid


@dataclass(frozen=True)
class IsLocked(Stmt):
    """X <- islocked(m): stores 1 if some thread holds m, else 0."""

    sid: Sid
    var: str
    mutex: str


PRIMITIVE_TYPES = (Assign, Guard, Lock, Unlock, Yield, IsLocked)
SYNC_TYPES = (Lock, Unlock, Yield, IsLocked)

# A control path is a finite sequence of primitive statements.
ControlPath = tuple[Stmt, ...]


# ---------------------------------------------------------------------------
# Programs


@dataclass(frozen=True)
class Thread:
    tid: int  # doubles as the priority: higher tid = higher priority
    body: Stmt


@dataclass(frozen=True, eq=True)
class Program:
    threads: tuple[Thread, ...]
    mutexes: tuple[str, ...]
    variables: tuple[str, ...]  # sorted lexicographically
    initial: tuple[tuple[str, tuple[Ext, Ext]], ...]  # var -> initial interval

    def thread(self, tid: int) -> Thread:
        for t in self.threads:
            if t.tid == tid:
                return t
        raise KeyError(tid)

    @property
    def tids(self) -> tuple[int, ...]:
        return tuple(t.tid for t in self.threads)

    def initial_map(self) -> dict[str, tuple[Ext, Ext]]:
        init = {v: (Fraction(0), Fraction(0)) for v in self.variables}
        init.update(dict(self.initial))
        return init


# ---------------------------------------------------------------------------
# Traversals


def sub_exprs(e: Expr) -> Iterator[Expr]:
    """All sub-expressions of e, including e itself, depth-first."""
    yield e
    if isinstance(e, Neg):
        yield from sub_exprs(e.sub)
    elif isinstance(e, BinOp):
        yield from sub_exprs(e.left)
        yield from sub_exprs(e.right)


def sub_stmts(s: Stmt) -> Iterator[Stmt]:
    yield s
    if isinstance(s, (If, While)):
        yield from sub_stmts(s.body)
    elif isinstance(s, Seq):
        yield from sub_stmts(s.first)
        yield from sub_stmts(s.second)


def stmt_exprs(s: Stmt) -> Iterator[Expr]:
    for sub in sub_stmts(s):
        if isinstance(sub, (Assign, Guard, If, While)):
            yield sub.expr


def vars_of_expr(e: Expr) -> frozenset[str]:
    return frozenset(x.name for x in sub_exprs(e) if isinstance(x, Var))


def lvals_of_stmt(s: Stmt) -> frozenset[str]:
    """Variables a primitive statement may modify."""
    if isinstance(s, (Assign, IsLocked)):
        return frozenset((s.var,))
    return frozenset()


def vars_of_stmt(s: Stmt) -> frozenset[str]:
    """All variables occurring in s (read or written)."""
    out: set[str] = set()
    for sub in sub_stmts(s):
        if isinstance(sub, (Assign, IsLocked)):
            out.add(sub.var)
        if isinstance(sub, (Assign, Guard, If, While)):
            out |= vars_of_expr(sub.expr)
    return frozenset(out)


def expr_locations(e: Expr) -> frozenset[Location]:
    return frozenset(x.loc for x in sub_exprs(e) if isinstance(x, (Neg, BinOp)))


def program_locations(p: Program) -> frozenset[Location]:
    out: set[Location] = set()
    for t in p.threads:
        for e in stmt_exprs(t.body):
            out |= expr_locations(e)
    return frozenset(out)


def location_thread(p: Program, loc: Location) -> Optional[int]:
    for t in p.threads:
        for e in stmt_exprs(t.body):
            if loc in expr_locations(e):
                return t.tid
    return None


# ---------------------------------------------------------------------------
# Canonical labeling

# Labels are assigned 1,2,3,... walking threads in id order, statements in
# program order, expressions depth-first left-to-right.  Reparsing pretty
# printed output therefore reproduces the labels exactly.


class _Labeler:
    def __init__(self):
        self.next_label = 1
        self.next_sid = 1

    def expr(self, e: Expr) -> Expr:
        if isinstance(e, (Var, Const)):
            return e
        if isinstance(e, Neg):
            loc = replace(e.loc, label=self.next_label)
            self.next_label += 1
            return Neg(loc, self.expr(e.sub))
        if isinstance(e, BinOp):
            loc = replace(e.loc, label=self.next_label)
            self.next_label += 1
            return BinOp(e.op, loc, self.expr(e.left), self.expr(e.right))
        raise TypeError(e)

    def stmt(self, s: Stmt) -> Stmt:
        sid = self.next_sid
        self.next_sid += 1
        if isinstance(s, Assign):
            return Assign(sid, s.var, self.expr(s.expr))
        if isinstance(s, Guard):
            return Guard(sid, self.expr(s.expr), s.cmp)
        if isinstance(s, If):
            return If(sid, self.expr(s.expr), s.cmp, self.stmt(s.body))
        if isinstance(s, While):
            return While(sid, self.expr(s.expr), s.cmp, self.stmt(s.body))
        if isinstance(s, Seq):
            return Seq(sid, self.stmt(s.first), self.stmt(s.second))
        if isinstance(s, Lock):
            return Lock(sid, s.mutex)
        if isinstance(s, Unlock):
            return Unlock(sid, s.mutex)
        if isinstance(s, Yield):
            return Yield(sid)
        if isinstance(s, IsLocked):
            return IsLocked(sid, s.var, s.mutex)
        raise TypeError(s)


def relabel_program(p: Program) -> Program:
    lab = _Labeler()
    threads = tuple(Thread(t.tid, lab.stmt(t.body)) for t in p.threads)
    return replace(p, threads=threads)


def check_unique_labels(p: Program) -> None:
    locs = [x.loc for t in p.threads for e in stmt_exprs(t.body)
            for x in sub_exprs(e) if isinstance(x, (Neg, BinOp))]
    labels = [l.label for l in locs]
    if len(labels) != len(set(labels)):
        raise ValueError("duplicate operator labels in program")


# ---------------------------------------------------------------------------
# Pretty printing (round-trips through the parser)


def fmt_ext(x: Ext) -> str:
    if x == INF:
        return "inf"
    if x == NEG_INF:
        return "-inf"
    return str(x)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def pretty_expr(e: Expr, parent_prec: int = 0, right_side: bool = False) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        if e.is_singleton and is_finite(e.lo) and e.lo.denominator == 1 and e.lo >= 0:
            return str(e.lo)
        return f"[{fmt_ext(e.lo)},{fmt_ext(e.hi)}]"
    if isinstance(e, Neg):
        s = "-" + pretty_expr(e.sub, 3)
        return f"({s})" if parent_prec > 0 else s
    if isinstance(e, BinOp):
        prec = _PREC[e.op]
        s = (pretty_expr(e.left, prec) + f" {e.op} "
             + pretty_expr(e.right, prec, right_side=True))
        # left associativity: a right operand at equal precedence needs parens
        if prec < parent_prec or (prec == parent_prec and right_side):
            return f"({s})"
        return s
    raise TypeError(e)


def pretty_stmt(s: Stmt, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(s, Assign):
        return f"{pad}{s.var} <- {pretty_expr(s.expr)};"
    if isinstance(s, Guard):
        # internal form; printed only in traces and synthesized empty blocks
        return f"{pad}{pretty_expr(s.expr)} {s.cmp} 0 ?"
    if isinstance(s, If):
        body = pretty_stmt(s.body, indent + 1)
        return f"{pad}if {pretty_expr(s.expr)} {s.cmp} 0 then {{\n{body}\n{pad}}}"
    if isinstance(s, While):
        body = pretty_stmt(s.body, indent + 1)
        return f"{pad}while {pretty_expr(s.expr)} {s.cmp} 0 do {{\n{body}\n{pad}}}"
    if isinstance(s, Seq):
        return pretty_stmt(s.first, indent) + "\n" + pretty_stmt(s.second, indent)
    if isinstance(s, Lock):
        return f"{pad}lock({s.mutex});"
    if isinstance(s, Unlock):
        return f"{pad}unlock({s.mutex});"
    if isinstance(s, Yield):
        return f"{pad}yield;"
    if isinstance(s, IsLocked):
        return f"{pad}{s.var} <- islocked({s.mutex});"
    raise TypeError(s)


def pretty_program(p: Program) -> str:
    lines: list[str] = []
    init = dict(p.initial)
    for v in p.variables:
        if v in init:
            lo, hi = init[v]
            lines.append(f"var {v} = [{fmt_ext(lo)},{fmt_ext(hi)}];")
        else:
            lines.append(f"var {v};")
    for m in p.mutexes:
        lines.append(f"mutex {m};")
    for t in p.threads:
        lines.append(f"thread {t.tid} {{")
        lines.append(pretty_stmt(t.body, 1))
        lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Syntactic metadata


def collect_lock_sets(p: Program) -> dict[int, frozenset[str]]:
    """Per thread, the set of mutexes m with a lock(m) anywhere in its body.

    Syntactic over-approximation of the mutexes the thread may ever hold;
    used to decide when islocked() can be modeled precisely.
    """
    out: dict[int, frozenset[str]] = {}
    for t in p.threads:
        out[t.tid] = frozenset(
            s.mutex for s in sub_stmts(t.body) if isinstance(s, Lock))
    return out


def classify_vars(
    p: Program,
    extra_paths: Optional[dict[int, list[ControlPath]]] = None,
) -> tuple[frozenset[str], dict[int, frozenset[str]]]:
    """Split declared variables into fresh and thread-local sets.

    A variable is fresh if it occurs in no thread, and local to t if it
    occurs only in thread t.  `extra_paths` adds occurrences from already
    transformed control paths (keyed by thread id), so freshness stays
    correct while chaining path transformations.
    """
    occ: dict[str, set[int]] = {v: set() for v in p.variables}
    for t in p.threads:
        for v in vars_of_stmt(t.body):
            occ[v].add(t.tid)
    if extra_paths:
        for tid, paths in extra_paths.items():
            for path in paths:
                for s in path:
                    for v in vars_of_stmt(s):
                        occ.setdefault(v, set()).add(tid)
    fresh = frozenset(v for v, ts in occ.items() if not ts)
    local = {
        t.tid: frozenset(v for v, ts in occ.items() if ts == {t.tid})
        for t in p.threads
    }
    return fresh, local
