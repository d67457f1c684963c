"""Abstract domains: exact-rational intervals and interval boxes.

Intervals abstract sets of reals (bottom, or closed bounds that may be
infinite); boxes map every program variable to a non-bottom interval, with
an explicit bottom element.  Bounds are exact rationals so soundness tests
never hinge on rounding.  Guard transfer refines variable bounds with a
single HC4-style backward sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .syntax import (
    INF,
    NEG_INF,
    BinOp,
    Const,
    Expr,
    Ext,
    Location,
    Neg,
    Program,
    Var,
    is_finite,
)


class BotNotRepresentable(Exception):
    pass


DEFAULT_THRESHOLDS: tuple[Fraction, ...] = (
    Fraction(-10_000), Fraction(-1), Fraction(0), Fraction(1), Fraction(10_000),
)


# ---------------------------------------------------------------------------
# Extended-rational helpers (Fraction plus +/-inf floats)


def _add(a: Ext, b: Ext) -> Ext:
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    if a == INF or b == INF:
        return INF
    return a + b


def _mul(a: Ext, b: Ext) -> Ext:
    if a == 0 or b == 0:
        return Fraction(0)
    if is_finite(a) and is_finite(b):
        return a * b
    neg = (a < 0) != (b < 0)
    return NEG_INF if neg else INF


# ---------------------------------------------------------------------------
# Intervals


@dataclass(frozen=True)
class Interval:
    """Either bottom (lo is None) or [lo, hi] with lo <= hi."""

    lo: Optional[Ext]
    hi: Optional[Ext]

    @staticmethod
    def of(lo: Ext, hi: Ext) -> "Interval":
        if lo > hi or lo == INF or hi == NEG_INF:
            return BOT
        return Interval(lo, hi)

    @staticmethod
    def const(v) -> "Interval":
        v = Fraction(v)
        return Interval(v, v)

    @staticmethod
    def top() -> "Interval":
        return Interval(NEG_INF, INF)

    @property
    def is_bot(self) -> bool:
        return self.lo is None

    def contains(self, v) -> bool:
        return not self.is_bot and self.lo <= v <= self.hi

    def join(self, other: "Interval") -> "Interval":
        if self.is_bot:
            return other
        if other.is_bot:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def meet(self, other: "Interval") -> "Interval":
        if self.is_bot or other.is_bot:
            return BOT
        return Interval.of(max(self.lo, other.lo), min(self.hi, other.hi))

    def leq(self, other: "Interval") -> bool:
        if self.is_bot:
            return True
        if other.is_bot:
            return False
        return other.lo <= self.lo and self.hi <= other.hi

    def widen(self, other: "Interval",
              thresholds: tuple[Fraction, ...] = ()) -> "Interval":
        """Unstable bounds jump to the nearest covering threshold, then to
        infinity; guarantees stabilization in #thresholds + 2 steps per
        bound."""
        if self.is_bot:
            return other
        if other.is_bot:
            return self
        lo = self.lo
        if other.lo < self.lo:
            below = [t for t in thresholds if t <= other.lo]
            lo = max(below) if below else NEG_INF
        hi = self.hi
        if other.hi > self.hi:
            above = [t for t in thresholds if t >= other.hi]
            hi = min(above) if above else INF
        return Interval(lo, hi)

    # arithmetic

    def __neg__(self) -> "Interval":
        if self.is_bot:
            return BOT
        return Interval(-self.hi if self.hi != INF else NEG_INF,
                        -self.lo if self.lo != NEG_INF else INF)

    def add(self, other: "Interval") -> "Interval":
        if self.is_bot or other.is_bot:
            return BOT
        return Interval(_add(self.lo, other.lo), _add(self.hi, other.hi))

    def sub(self, other: "Interval") -> "Interval":
        return self.add(-other)

    def mul(self, other: "Interval") -> "Interval":
        if self.is_bot or other.is_bot:
            return BOT
        corners = [_mul(a, b) for a in (self.lo, self.hi)
                   for b in (other.lo, other.hi)]
        return Interval(min(corners), max(corners))

    def div(self, other: "Interval") -> tuple["Interval", bool]:
        """Quotient and whether the divisor may be zero.  The quotient is
        computed against the divisor with 0 excluded (split at zero)."""
        if self.is_bot or other.is_bot:
            return BOT, False
        had_zero = other.contains(0)
        parts: list[Interval] = []
        if other.hi > 0:  # positive part (max(lo,0), hi], open at zero
            parts.append(self._div_pos(max(other.lo, Fraction(0)), other.hi))
        if other.lo < 0:  # negative part [lo, min(hi,0)), mirrored
            parts.append(-(self._div_pos(max(-other.hi, Fraction(0)),
                                         -other.lo)))
        out = BOT
        for q in parts:
            out = out.join(q)
        return out, had_zero

    def _div_pos(self, dlo: Ext, dhi: Ext) -> "Interval":
        """self / (dlo, dhi] where 0 <= dlo < dhi; dlo acts as 0+."""

        def f(x: Ext, d: Ext) -> Ext:
            if x == 0:
                return Fraction(0)
            if d == 0:  # limit towards the open zero endpoint
                return INF if x > 0 else NEG_INF
            if d == INF:
                return Fraction(0)
            if not is_finite(x):
                return x  # sign of x / positive d
            return x / d

        corners = [f(x, d) for x in (self.lo, self.hi) for d in (dlo, dhi)]
        return Interval(min(corners), max(corners))

    # guard support

    def sat(self, cmp: str) -> bool:
        """Does some value in the interval compare cmp against 0?"""
        if self.is_bot:
            return False
        if cmp == "=":
            return self.lo <= 0 <= self.hi
        if cmp == "!=":
            return not (self.lo == 0 == self.hi)
        if cmp == "<":
            return self.lo < 0
        if cmp == ">":
            return self.hi > 0
        if cmp == "<=":
            return self.lo <= 0
        return self.hi >= 0

    def refine_cmp(self, cmp: str) -> "Interval":
        """Hull of the subset satisfying `cmp 0` (assumes sat(cmp))."""
        if cmp == "=":
            return self.meet(Interval(Fraction(0), Fraction(0)))
        if cmp in ("<", "<="):
            return self.meet(Interval(NEG_INF, Fraction(0)))
        if cmp in (">", ">="):
            return self.meet(Interval(Fraction(0), INF))
        return self  # != : holes are not representable

    def __str__(self) -> str:
        if self.is_bot:
            return "⊥"
        lo = "-inf" if self.lo == NEG_INF else str(self.lo)
        hi = "inf" if self.hi == INF else str(self.hi)
        return f"[{lo},{hi}]"


BOT = Interval(None, None)


def ival_join(a: Interval, b: Interval) -> Interval:
    return a.join(b)


def ival_widen(a: Interval, b: Interval,
               thresholds: tuple[Fraction, ...] = ()) -> Interval:
    return a.widen(b, thresholds)


def ival_leq(a: Interval, b: Interval) -> bool:
    return a.leq(b)


def as_expr(v: Interval) -> Expr:
    """Constant expression whose evaluation covers the interval exactly."""
    if v.is_bot:
        raise BotNotRepresentable("bottom has no constant expression")
    return Const(v.lo, v.hi)


# ---------------------------------------------------------------------------
# Box environments


class BoxEnv:
    """Total map var -> non-bottom Interval, or the bottom environment."""

    __slots__ = ("_m",)

    def __init__(self, m: Optional[dict[str, Interval]]):
        self._m = m

    @staticmethod
    def bot() -> "BoxEnv":
        return _BOT_ENV

    @staticmethod
    def top(variables: Iterable[str]) -> "BoxEnv":
        return BoxEnv({v: Interval.top() for v in variables})

    @staticmethod
    def initial(p: Program) -> "BoxEnv":
        init = p.initial_map()
        return BoxEnv({v: Interval.of(*init[v]) for v in p.variables})

    @property
    def is_bot(self) -> bool:
        return self._m is None

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self._m) if self._m is not None else ()

    def get(self, var: str) -> Interval:
        if self._m is None:
            return BOT
        return self._m[var]

    def set(self, var: str, v: Interval) -> "BoxEnv":
        if self._m is None or v.is_bot:
            return _BOT_ENV
        m = dict(self._m)
        m[var] = v
        return BoxEnv(m)

    def join(self, other: "BoxEnv") -> "BoxEnv":
        if self.is_bot:
            return other
        if other.is_bot:
            return self
        return BoxEnv({v: self._m[v].join(other._m[v]) for v in self._m})

    def widen(self, other: "BoxEnv",
              thresholds: tuple[Fraction, ...] = ()) -> "BoxEnv":
        if self.is_bot:
            return other
        if other.is_bot:
            return self
        return BoxEnv({v: self._m[v].widen(other._m[v], thresholds)
                       for v in self._m})

    def leq(self, other: "BoxEnv") -> bool:
        if self.is_bot:
            return True
        if other.is_bot:
            return False
        return all(self._m[v].leq(other._m[v]) for v in self._m)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoxEnv):
            return NotImplemented
        return self._m == other._m

    def __hash__(self):
        if self._m is None:
            return hash(None)
        return hash(tuple(sorted((k, v.lo, v.hi) for k, v in self._m.items())))

    def __str__(self) -> str:
        if self.is_bot:
            return "⊥"
        return "{" + ", ".join(f"{v}: {self._m[v]}"
                               for v in sorted(self._m)) + "}"


_BOT_ENV = BoxEnv(None)


def get(var: str, env: BoxEnv) -> Interval:
    return env.get(var)


# ---------------------------------------------------------------------------
# Transfer functions


def eval_abs(e: Expr, env: BoxEnv,
             memo: Optional[dict[int, Interval]] = None,
             ) -> tuple[Interval, frozenset[Location]]:
    """Bottom-up interval evaluation; `memo` (id -> interval) feeds the
    backward guard sweep."""
    errs: set[Location] = set()

    def go(e: Expr) -> Interval:
        if isinstance(e, Var):
            v = env.get(e.name)
        elif isinstance(e, Const):
            v = Interval.of(e.lo, e.hi)
        elif isinstance(e, Neg):
            v = -go(e.sub)
        elif isinstance(e, BinOp):
            l = go(e.left)
            r = go(e.right)
            if e.op == "+":
                v = l.add(r)
            elif e.op == "-":
                v = l.sub(r)
            elif e.op == "*":
                v = l.mul(r)
            else:
                v, had_zero = l.div(r)
                if had_zero and not l.is_bot:
                    errs.add(e.loc)
        else:
            raise TypeError(e)
        if memo is not None:
            memo[id(e)] = v
        return v

    out = go(e)
    return out, frozenset(errs)


def _refine(e: Expr, target: Interval, memo: dict[int, Interval],
            bounds: dict[str, Interval]) -> bool:
    """One backward HC4 pass; narrows `bounds` in place.  Returns False on
    contradiction (the guard is unsatisfiable through this node)."""
    target = target.meet(memo[id(e)])
    if target.is_bot:
        return False
    if isinstance(e, Var):
        newv = bounds[e.name].meet(target)
        if newv.is_bot:
            return False
        bounds[e.name] = newv
        return True
    if isinstance(e, Const):
        return True  # non-empty intersection already checked above
    if isinstance(e, Neg):
        return _refine(e.sub, -target, memo, bounds)
    if isinstance(e, BinOp):
        l, r = memo[id(e.left)], memo[id(e.right)]
        if e.op == "+":
            return (_refine(e.left, target.sub(r), memo, bounds)
                    and _refine(e.right, target.sub(l), memo, bounds))
        if e.op == "-":
            return (_refine(e.left, target.add(r), memo, bounds)
                    and _refine(e.right, l.sub(target), memo, bounds))
        if e.op == "*":
            ok = True
            if not r.contains(0):
                q, _ = target.div(r)
                ok = _refine(e.left, q, memo, bounds)
            if ok and not l.contains(0):
                q, _ = target.div(l)
                ok = _refine(e.right, q, memo, bounds)
            return ok
        # division: left = target * right is exact for the contributing pairs
        ok = _refine(e.left, target.mul(r), memo, bounds)
        if ok and not target.contains(0):
            q, _ = l.div(target)
            ok = _refine(e.right, q, memo, bounds)
        return ok
    raise TypeError(e)


def transfer_assign(var: str, e: Expr, env: BoxEnv,
                    errors: frozenset[Location],
                    ) -> tuple[BoxEnv, frozenset[Location]]:
    if env.is_bot:
        return env, errors
    val, errs = eval_abs(e, env)
    return env.set(var, val), errors | errs


def transfer_guard(e: Expr, cmp: str, env: BoxEnv,
                   errors: frozenset[Location],
                   ) -> tuple[BoxEnv, frozenset[Location]]:
    if env.is_bot:
        return env, errors
    memo: dict[int, Interval] = {}
    val, errs = eval_abs(e, env, memo)
    errors = errors | errs
    if val.is_bot or not val.sat(cmp):
        return BoxEnv.bot(), errors
    bounds = {v: env.get(v) for v in env.variables}
    if not _refine(e, val.refine_cmp(cmp), memo, bounds):
        return BoxEnv.bot(), errors
    return BoxEnv(bounds), errors
