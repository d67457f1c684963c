"""Executable concrete semantics of the sequential fragment.

States are finite sets of exact rational environments plus an error set.
To keep the state sets finite, constant intervals enumerate only their
integer points (ValueMode.INTEGER_POINTS) and must have finite endpoints;
division results stay exact rationals.  This restricted semantics
under-approximates the real-valued one, which is the right direction for
an oracle whose errors are compared against analyzer alarms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

from .syntax import (
    Assign,
    BinOp,
    Const,
    ControlPath,
    Expr,
    Guard,
    If,
    Location,
    Neg,
    Program,
    Seq,
    Stmt,
    Var,
    While,
    is_finite,
    negate_cmp,
)


class ValueMode(enum.Enum):
    INTEGER_POINTS = "integer-points"


class UnsupportedMode(Exception):
    pass


class FixpointBudgetExceeded(Exception):
    """Loop iteration exceeded the state budget; .partial holds the
    accumulated (non-converged) state."""

    def __init__(self, partial: "ConcreteState"):
        super().__init__("concrete loop fixpoint exceeded its state budget")
        self.partial = partial


# Concrete values are exact rationals, kept as plain ints whenever they
# are integral (ints and equal Fractions hash identically, and int
# arithmetic keeps the state sets cheap to deduplicate).
Rat = Fraction | int
Env = tuple[Rat, ...]  # values in the order of ConcreteState.vars
VarIndex = dict[str, int]


def _ratdiv(a: Rat, b: Rat) -> Rat:
    q = Fraction(a, b) if (isinstance(a, int) and isinstance(b, int)) \
        else Fraction(a) / Fraction(b)
    return q.numerator if q.denominator == 1 else q


@dataclass(frozen=True)
class ConcreteState:
    vars: tuple[str, ...]
    envs: frozenset[Env]
    errors: frozenset[Location]

    def index(self) -> VarIndex:
        return {v: i for i, v in enumerate(self.vars)}

    def join(self, other: "ConcreteState") -> "ConcreteState":
        assert self.vars == other.vars
        return ConcreteState(self.vars, self.envs | other.envs,
                             self.errors | other.errors)

    def env_dicts(self) -> list[dict[str, Rat]]:
        return [dict(zip(self.vars, env)) for env in sorted(self.envs)]

    def to_json(self) -> dict:
        """Sorted, lexicographic-variable-order state dump."""
        return {
            "vars": list(self.vars),
            "envs": [[str(v) for v in env] for env in sorted(self.envs)],
            "errors": sorted(l.label for l in self.errors),
        }


def cmp_holds(v: Rat, cmp: str) -> bool:
    if cmp == "=":
        return v == 0
    if cmp == "!=":
        return v != 0
    if cmp == "<":
        return v < 0
    if cmp == ">":
        return v > 0
    if cmp == "<=":
        return v <= 0
    return v >= 0


def const_points(lo, hi, mode: ValueMode) -> list[int]:
    """Integer points of a constant interval."""
    if mode is not ValueMode.INTEGER_POINTS:  # pragma: no cover
        raise UnsupportedMode(str(mode))
    if not (is_finite(lo) and is_finite(hi)):
        raise UnsupportedMode(
            f"unbounded constant [{lo},{hi}] in integer-points mode")
    return list(range(math.ceil(lo), math.floor(hi) + 1))


def eval_env(e: Expr, env: Env, idx: VarIndex,
             mode: ValueMode = ValueMode.INTEGER_POINTS,
             interf=None, tid: int | None = None,
             ) -> tuple[frozenset[Rat], frozenset[Location]]:
    """Evaluate e in a single environment: a set of values and error labels.

    `interf`, when given, is a mapping var -> set of values written by
    other threads; reads non-deterministically pick the environment value
    or any interference value (used by the concrete interference oracle).
    """
    if isinstance(e, Var):
        vals = {env[idx[e.name]]}
        if interf is not None:
            vals |= interf.get(e.name, frozenset())
        return frozenset(vals), frozenset()
    if isinstance(e, Const):
        return frozenset(const_points(e.lo, e.hi, mode)), frozenset()
    if isinstance(e, Neg):
        vals, errs = eval_env(e.sub, env, idx, mode, interf, tid)
        return frozenset(-v for v in vals), errs
    if isinstance(e, BinOp):
        v1, o1 = eval_env(e.left, env, idx, mode, interf, tid)
        v2, o2 = eval_env(e.right, env, idx, mode, interf, tid)
        errs = o1 | o2
        out: set[Rat] = set()
        if e.op == "+":
            out = {a + b for a in v1 for b in v2}
        elif e.op == "-":
            out = {a - b for a in v1 for b in v2}
        elif e.op == "*":
            out = {a * b for a in v1 for b in v2}
        else:
            if 0 in v2:
                errs = errs | {e.loc}
            out = {_ratdiv(a, b) for a in v1 for b in v2 if b != 0}
        return frozenset(out), frozenset(errs)
    raise TypeError(e)


def eval_concrete(e: Expr, rho: dict[str, Rat],
                  mode: ValueMode = ValueMode.INTEGER_POINTS,
                  ) -> tuple[frozenset[Rat], frozenset[Location]]:
    """Public, dict-based wrapper around eval_env."""
    names = tuple(sorted(rho))
    idx = {v: i for i, v in enumerate(names)}
    env = tuple(rho[v] for v in names)
    return eval_env(e, env, idx, mode)


def prim_step_env(s: Stmt, env: Env, idx: VarIndex, mode: ValueMode,
                  interf=None, tid: int | None = None,
                  ) -> tuple[list[Env], frozenset[Location]]:
    """Successor environments of one Assign/Guard on one environment."""
    if isinstance(s, Assign):
        vals, errs = eval_env(s.expr, env, idx, mode, interf, tid)
        i = idx[s.var]
        return [env[:i] + (v,) + env[i + 1:] for v in sorted(vals)], errs
    if isinstance(s, Guard):
        vals, errs = eval_env(s.expr, env, idx, mode, interf, tid)
        keep = any(cmp_holds(v, s.cmp) for v in vals)
        return ([env] if keep else []), errs
    raise TypeError(f"not an assign/guard: {s}")


def _prim(s: Stmt, st: ConcreteState, mode: ValueMode) -> ConcreteState:
    idx = st.index()
    envs: set[Env] = set()
    errors = set(st.errors)
    for env in st.envs:
        succ, errs = prim_step_env(s, env, idx, mode)
        envs.update(succ)
        errors |= errs
    return ConcreteState(st.vars, frozenset(envs), frozenset(errors))


def then_guard(s) -> Guard:
    return Guard(f"{s.sid}:then", s.expr, s.cmp)


def else_guard(s) -> Guard:
    return Guard(f"{s.sid}:else", s.expr, negate_cmp(s.cmp))


def body_guard(s) -> Guard:
    return Guard(f"{s.sid}:body", s.expr, s.cmp)


def exit_guard(s) -> Guard:
    return Guard(f"{s.sid}:exit", s.expr, negate_cmp(s.cmp))


def exec_stmt(s: Stmt, st: ConcreteState,
              mode: ValueMode = ValueMode.INTEGER_POINTS,
              budget: int = 10_000) -> ConcreteState:
    """Structured concrete semantics of the sequential fragment.

    Loops are computed as Kleene iterations of their least fixpoint; if the
    accumulated state grows past `budget` environments the iteration aborts
    with FixpointBudgetExceeded carrying the partial state.
    """
    if isinstance(s, (Assign, Guard)):
        return _prim(s, st, mode)
    if isinstance(s, Seq):
        return exec_stmt(s.second, exec_stmt(s.first, st, mode, budget),
                         mode, budget)
    if isinstance(s, If):
        taken = exec_stmt(s.body, _prim(then_guard(s), st, mode), mode, budget)
        skipped = _prim(else_guard(s), st, mode)
        return taken.join(skipped)
    if isinstance(s, While):
        acc = ConcreteState(st.vars, frozenset(), frozenset())
        while True:
            step = exec_stmt(s.body, _prim(body_guard(s), acc, mode),
                             mode, budget)
            new = st.join(step)
            if new.envs == acc.envs and new.errors == acc.errors:
                break
            acc = new
            if len(acc.envs) > budget:
                raise FixpointBudgetExceeded(acc)
        return _prim(exit_guard(s), acc, mode)
    raise ValueError(f"synchronization primitive in sequential fragment: {s}")


def initial_state(p: Program,
                  mode: ValueMode = ValueMode.INTEGER_POINTS) -> ConcreteState:
    """All combinations of integer points of the declared initial intervals."""
    init = p.initial_map()
    envs: list[Env] = [()]
    for v in p.variables:
        lo, hi = init[v]
        pts = const_points(lo, hi, mode)
        envs = [e + (pt,) for e in envs for pt in pts]
    return ConcreteState(p.variables, frozenset(envs), frozenset())


# ---------------------------------------------------------------------------
# Control paths


@dataclass(frozen=True)
class PathSet:
    paths: frozenset[ControlPath]
    truncated: bool


def paths(s: Stmt, unroll: int) -> PathSet:
    """Control paths spawned by s, with loops unrolled at most `unroll`
    times.  truncated is set when some longer unrolling exists."""
    assert unroll >= 0
    if isinstance(s, Seq):
        a = paths(s.first, unroll)
        b = paths(s.second, unroll)
        return PathSet(frozenset(p + q for p in a.paths for q in b.paths),
                       a.truncated or b.truncated)
    if isinstance(s, If):
        body = paths(s.body, unroll)
        taken = frozenset(((then_guard(s),) + p) for p in body.paths)
        return PathSet(taken | {(else_guard(s),)}, body.truncated)
    if isinstance(s, While):
        body = paths(s.body, unroll)
        g, x = body_guard(s), exit_guard(s)
        loops: frozenset[ControlPath] = frozenset({()})
        out: set[ControlPath] = {(x,)}
        for _ in range(unroll):
            loops = frozenset(p + (g,) + q for p in loops for q in body.paths)
            out.update(p + (x,) for p in loops)
        # some (unroll+1)-iteration path always exists syntactically
        return PathSet(frozenset(out), True)
    # primitive statements, including synchronization
    return PathSet(frozenset({(s,)}), False)


def run_paths(path_set, st: ConcreteState,
              mode: ValueMode = ValueMode.INTEGER_POINTS) -> ConcreteState:
    """Join of the primitive transfer compositions over a set of paths."""
    ps = path_set.paths if isinstance(path_set, PathSet) else frozenset(path_set)
    out = ConcreteState(st.vars, frozenset(), st.errors)
    for path in sorted(ps, key=lambda p: tuple(str(x.sid) for x in p)):
        cur = st
        for prim in path:
            if not isinstance(prim, (Assign, Guard)):
                raise ValueError(f"run_paths only handles assign/guard: {prim}")
            cur = _prim(prim, cur, mode)
        out = out.join(cur)
    return out
