"""Elementary control-path transformations and the weak-memory fuzzer.

Nine peephole-style rewrites over per-thread control paths model the
reorderings a compiler or memory system may perform.  Side conditions are
checked conservatively by abstract evaluation over the top environment:
a check may reject a transformation that is actually fine, but it never
accepts one that is not.  An interference-based analysis of the original
program stays sound for any program transformed under verified conditions;
the fuzzer exercises exactly that inclusion, and its negative controls
prove it can detect violations when conditions are knowingly broken.
"""

from __future__ import annotations

import enum
import itertools
import random
from dataclasses import dataclass
from fractions import Fraction

from .config import AnalysisSettings, OracleBudget
from .domains import BoxEnv, Interval, eval_abs
from .interference import analyze_program_I
from .oracle import run_interleavings, run_scheduled
from .sched import analyze_program_C
from .syntax import (
    Assign,
    BinOp,
    Const,
    ControlPath,
    Expr,
    Guard,
    Neg,
    Program,
    Stmt,
    Var,
    classify_vars,
    lvals_of_stmt,
    sub_exprs,
    vars_of_expr,
)


class SideConditionUnverifiable(Exception):
    pass


class RuleId(enum.Enum):
    RedundantStore = "redundant-store"
    IdentityStore = "identity-store"
    ReorderAssigns = "reorder-assigns"
    ReorderGuards = "reorder-guards"
    GuardBeforeAssign = "guard-before-assign"
    AssignBeforeGuard = "assign-before-guard"
    AssignPropagation = "assign-propagation"
    SubexprElim = "subexpr-elim"
    ExprSimplify = "expr-simplify"


@dataclass(frozen=True)
class TransformRule:
    id: RuleId
    window: int  # number of consecutive statements matched
    side_conditions: tuple[str, ...]


RULES: dict[RuleId, TransformRule] = {
    RuleId.RedundantStore: TransformRule(
        RuleId.RedundantStore, 2, ("X not in var(e2)", "nonblock(e1)")),
    RuleId.IdentityStore: TransformRule(RuleId.IdentityStore, 1, ()),
    RuleId.ReorderAssigns: TransformRule(
        RuleId.ReorderAssigns, 2,
        ("X1 not in var(e2)", "X2 not in var(e1)", "X1 != X2", "nonblock(e1)")),
    RuleId.ReorderGuards: TransformRule(
        RuleId.ReorderGuards, 2, ("noerror(e2)",)),
    RuleId.GuardBeforeAssign: TransformRule(
        RuleId.GuardBeforeAssign, 2,
        ("X1 not in var(e2)", "nonblock(e1) or noerror(e2)")),
    RuleId.AssignBeforeGuard: TransformRule(
        RuleId.AssignBeforeGuard, 2,
        ("X2 not in var(e1)", "X2 local", "noerror(e2)")),
    RuleId.AssignPropagation: TransformRule(
        RuleId.AssignPropagation, 2,
        ("X not in var(e)", "var(e) local", "deterministic(e)")),
    RuleId.SubexprElim: TransformRule(
        RuleId.SubexprElim, 3,
        ("X fresh", "var(e) disjoint from lvals", "noerror(e)")),
    RuleId.ExprSimplify: TransformRule(
        RuleId.ExprSimplify, 1, ("value containment", "variables local")),
}

_OCCURRENCE_CAP = 4  # occurrence-subset enumeration bound per statement


# ---------------------------------------------------------------------------
# Side-condition checks (conservative: false negatives allowed, false
# positives forbidden)


def _top_env(e: Expr) -> BoxEnv:
    return BoxEnv.top(sorted(vars_of_expr(e)) or ["_"])


def check_noerror(e: Expr) -> bool:
    """No evaluation of e, in any environment, can raise an error."""
    _, errs = eval_abs(e, _top_env(e))
    return not errs


def check_nonblock(e: Expr) -> bool:
    """No evaluation of e can block (produce an empty value set).  Every
    division must have a divisor that either excludes 0 over the top
    environment or is a literal constant interval other than [0,0] (a wide
    literal always offers a non-zero value)."""
    env = _top_env(e)
    for node in sub_exprs(e):
        if isinstance(node, BinOp) and node.op == "/":
            d = node.right
            if isinstance(d, Const) and not (d.lo == 0 and d.hi == 0):
                continue
            v, _ = eval_abs(d, env)
            if v.is_bot or v.contains(0):
                return False
    return True


def check_deterministic(e: Expr) -> bool:
    """Every evaluation of e yields exactly one value: no wide constant
    intervals, and no possibility of blocking."""
    if any(isinstance(x, Const) and not x.is_singleton for x in sub_exprs(e)):
        return False
    return check_nonblock(e)


# ---------------------------------------------------------------------------
# Occurrence matching and substitution (modulo operator labels)


def strip(e: Expr):
    if isinstance(e, Var):
        return ("var", e.name)
    if isinstance(e, Const):
        return ("const", e.lo, e.hi)
    if isinstance(e, Neg):
        return ("neg", strip(e.sub))
    return (e.op, strip(e.left), strip(e.right))


def _count(e: Expr, key) -> int:
    return sum(1 for x in sub_exprs(e) if strip(x) == key)


def _replace(e: Expr, key, chosen: frozenset[int], replacement: Expr,
             counter: list[int]) -> Expr:
    if strip(e) == key:
        i = counter[0]
        counter[0] += 1
        if i in chosen:
            return replacement
        # still recurse: an occurrence may contain nested matches only if
        # key matches a strict sub-expression of itself, which it cannot
        return e
    if isinstance(e, (Var, Const)):
        return e
    if isinstance(e, Neg):
        return Neg(e.loc, _replace(e.sub, key, chosen, replacement, counter))
    return BinOp(e.op, e.loc,
                 _replace(e.left, key, chosen, replacement, counter),
                 _replace(e.right, key, chosen, replacement, counter))


def _subst_stmt(s: Stmt, key, chosen: frozenset[int], replacement: Expr,
                counter: list[int]) -> Stmt:
    if isinstance(s, Assign):
        return Assign(s.sid, s.var,
                      _replace(s.expr, key, chosen, replacement, counter))
    if isinstance(s, Guard):
        return Guard(s.sid,
                     _replace(s.expr, key, chosen, replacement, counter),
                     s.cmp)
    return s


def _occurrence_subsets(n: int) -> list[frozenset[int]]:
    n = min(n, _OCCURRENCE_CAP)
    out: list[frozenset[int]] = []
    for r in range(1, n + 1):
        out += [frozenset(c) for c in itertools.combinations(range(n), r)]
    return out


# ---------------------------------------------------------------------------
# Rule application


@dataclass(frozen=True)
class TransformContext:
    tid: int
    fresh: frozenset[str]
    local: frozenset[str]


@dataclass(frozen=True)
class RuleApplication:
    rule: RuleId
    position: int
    verified: tuple[str, ...]
    result: ControlPath


def context_for(p: Program, tid: int,
                extra_paths: dict[int, list[ControlPath]] | None = None,
                ) -> TransformContext:
    fresh, local = classify_vars(p, extra_paths)
    return TransformContext(tid, fresh, local.get(tid, frozenset()))


def _is_assign(s: Stmt) -> bool:
    return isinstance(s, Assign)


def _is_guard(s: Stmt) -> bool:
    return isinstance(s, Guard)


def apply_rule(rule: RuleId, path: ControlPath,
               ctx: TransformContext) -> list[RuleApplication]:
    """All single applications of `rule` anywhere in `path` whose side
    conditions verify.  Windows never contain synchronization primitives
    (the statement shapes only match assignments and guards)."""
    out: list[RuleApplication] = []

    def emit(pos: int, verified: tuple[str, ...],
             replaced: list[Stmt], span: int) -> None:
        result = path[:pos] + tuple(replaced) + path[pos + span:]
        out.append(RuleApplication(rule, pos, verified, result))

    n = len(path)
    for i in range(n):
        a = path[i]
        b = path[i + 1] if i + 1 < n else None

        if rule is RuleId.RedundantStore and b is not None:
            if (_is_assign(a) and _is_assign(b) and a.var == b.var
                    and a.var not in vars_of_expr(b.expr)
                    and check_nonblock(a.expr)):
                emit(i, ("X not in var(e2)", "nonblock(e1)"), [b], 2)

        elif rule is RuleId.IdentityStore:
            if (_is_assign(a) and isinstance(a.expr, Var)
                    and a.expr.name == a.var):
                emit(i, (), [], 1)

        elif rule is RuleId.ReorderAssigns and b is not None:
            if (_is_assign(a) and _is_assign(b) and a.var != b.var
                    and a.var not in vars_of_expr(b.expr)
                    and b.var not in vars_of_expr(a.expr)
                    and check_nonblock(a.expr)):
                emit(i, ("X1 not in var(e2)", "X2 not in var(e1)",
                         "X1 != X2", "nonblock(e1)"), [b, a], 2)

        elif rule is RuleId.ReorderGuards and b is not None:
            if _is_guard(a) and _is_guard(b) and check_noerror(b.expr):
                emit(i, ("noerror(e2)",), [b, a], 2)

        elif rule is RuleId.GuardBeforeAssign and b is not None:
            if (_is_assign(a) and _is_guard(b)
                    and a.var not in vars_of_expr(b.expr)):
                if check_nonblock(a.expr):
                    emit(i, ("X1 not in var(e2)", "nonblock(e1)"), [b, a], 2)
                elif check_noerror(b.expr):
                    emit(i, ("X1 not in var(e2)", "noerror(e2)"), [b, a], 2)

        elif rule is RuleId.AssignBeforeGuard and b is not None:
            if (_is_guard(a) and _is_assign(b)
                    and b.var not in vars_of_expr(a.expr)
                    and b.var in ctx.local
                    and check_noerror(b.expr)):
                emit(i, ("X2 not in var(e1)", "X2 local", "noerror(e2)"),
                     [b, a], 2)

        elif rule is RuleId.AssignPropagation and b is not None:
            if (_is_assign(a) and isinstance(b, (Assign, Guard))
                    and a.var not in vars_of_expr(a.expr)
                    and vars_of_expr(a.expr) <= ctx.local
                    and check_deterministic(a.expr)):
                key = ("var", a.var)
                target = b.expr
                cnt = _count(target, key)
                for chosen in _occurrence_subsets(cnt):
                    s2 = _subst_stmt(b, key, chosen, a.expr, [0])
                    emit(i, ("X not in var(e)", "var(e) local",
                             "deterministic(e)"), [a, s2], 2)

        elif rule is RuleId.SubexprElim:
            for span in (1, 2, 3):
                if i + span > n:
                    break
                window = path[i:i + span]
                if not all(isinstance(s, (Assign, Guard)) for s in window):
                    break  # a sync primitive would enter the window
                lvals = frozenset().union(
                    *(lvals_of_stmt(s) for s in window))
                cands = []
                seen_keys = set()
                for s in window:
                    for x in sub_exprs(s.expr):
                        if isinstance(x, (Neg, BinOp)):
                            k = strip(x)
                            if k not in seen_keys:
                                seen_keys.add(k)
                                cands.append(x)
                for epat in cands:
                    if vars_of_expr(epat) & lvals:
                        continue
                    if not check_noerror(epat):
                        continue
                    for x in sorted(ctx.fresh):
                        key = strip(epat)
                        repl = Var(x)
                        new_window: list[Stmt] = [
                            Assign(f"cse:{x}:{i}", x, epat)]
                        counters = [0]
                        for s in window:
                            new_window.append(
                                _subst_stmt(s, key, frozenset(
                                    range(_OCCURRENCE_CAP)), repl, counters))
                        emit(i, ("X fresh", "var(e) disjoint from lvals",
                                 "noerror(e)"), new_window, span)
                        break  # one fresh variable is as good as another

        elif rule is RuleId.ExprSimplify:
            if isinstance(a, (Assign, Guard)):
                for e_old, e_new, why in _simplify_candidates(a.expr, ctx):
                    key = strip(e_old)
                    cnt = _count(a.expr, key)
                    for chosen in _occurrence_subsets(cnt):
                        s2 = _subst_stmt(a, key, chosen, e_new, [0])
                        if s2 != a:
                            emit(i, why, [s2], 1)

    return out


def _simplify_candidates(e: Expr, ctx: TransformContext,
                         ) -> list[tuple[Expr, Expr, tuple[str, ...]]]:
    """Catalog of value-containment-safe rewrites found inside e."""
    out = []
    seen = set()
    for x in sub_exprs(e):
        k = strip(x)
        if k in seen:
            continue
        seen.add(k)
        cand: tuple[Expr, tuple[str, ...]] | None = None
        if isinstance(x, BinOp):
            l, r = x.left, x.right
            zero = lambda c: isinstance(c, Const) and c.lo == 0 and c.hi == 0
            one = lambda c: isinstance(c, Const) and c.lo == 1 and c.hi == 1
            if x.op == "+" and zero(r):
                cand = (l, ("identity: e+0 -> e",))
            elif x.op == "+" and zero(l):
                cand = (r, ("identity: 0+e -> e",))
            elif x.op == "-" and zero(r):
                cand = (l, ("identity: e-0 -> e",))
            elif x.op == "*" and one(r):
                cand = (l, ("identity: e*1 -> e",))
            elif x.op == "*" and one(l):
                cand = (r, ("identity: 1*e -> e",))
            elif (x.op == "*" and zero(r) and check_nonblock(l)):
                cand = (Const(Fraction(0), Fraction(0)),
                        ("annihilation: e*0 -> 0", "nonblock(e)"))
            elif (x.op in ("+", "-", "*") and isinstance(l, Const)
                  and isinstance(r, Const)):
                li = Interval.of(l.lo, l.hi)
                ri = Interval.of(r.lo, r.hi)
                v = (li.add(ri) if x.op == "+"
                     else li.sub(ri) if x.op == "-" else li.mul(ri))
                if not v.is_bot:
                    cand = (Const(v.lo, v.hi), ("constant folding",))
        elif isinstance(x, Neg):
            if isinstance(x.sub, Const):
                v = -Interval.of(x.sub.lo, x.sub.hi)
                if not v.is_bot:
                    cand = (Const(v.lo, v.hi), ("constant folding",))
            elif isinstance(x.sub, Neg):
                cand = (x.sub.sub, ("involution: --e -> e",))
        if cand is None:
            continue
        e_new, why = cand
        if not (vars_of_expr(x) | vars_of_expr(e_new)) <= ctx.local:
            continue
        out.append((x, e_new, why + ("variables local",)))
    return out


def apply_rule_at(rule: RuleId, path: ControlPath, pos: int,
                  ctx: TransformContext) -> list[RuleApplication]:
    """Applications of `rule` at one position; raises when the window
    matches no verified instance."""
    apps = [a for a in apply_rule(rule, path, ctx) if a.position == pos]
    if not apps:
        raise SideConditionUnverifiable(
            f"{rule.value} at position {pos} has no verified application")
    return apps


# ---------------------------------------------------------------------------
# The differential fuzzer


@dataclass
class FuzzViolation:
    thread: int
    rules: list[str]
    missing: list[int]  # labels the analyzer failed to cover
    path_before: list[str]
    path_after: list[str]


@dataclass
class FuzzReport:
    trials: int
    effective: int  # trials where at least one rule application ran
    seed: int
    oracle: str
    per_rule: dict[str, dict[str, int]]
    violations: list[FuzzViolation]
    inconclusive: int

    @property
    def ok(self) -> bool:
        return not self.violations


def _pretty_path(path: ControlPath) -> list[str]:
    from .syntax import pretty_stmt

    return [pretty_stmt(s).strip() for s in path]


def fuzz_weakmem(p: Program, trials: int = 50, chain: int = 4, seed: int = 0,
                 oracle: str = "interleave", unroll: int = 3,
                 budget: OracleBudget = OracleBudget(),
                 settings: AnalysisSettings = AnalysisSettings(),
                 ) -> FuzzReport:
    """Transform per-thread paths under verified side conditions, run the
    concrete oracle on the transformed paths, and require its errors to be
    covered by the untransformed program's analysis."""
    from .concrete import paths as mk_paths

    rng = random.Random(seed)
    if oracle == "scheduled":
        alarms = analyze_program_C(p, settings, mono=True).omega
        runner = run_scheduled
    else:
        alarms = analyze_program_I(p, settings).omega
        runner = run_interleavings
    alarm_set = frozenset(alarms)

    base: dict[int, frozenset[ControlPath]] = {}
    for t in p.threads:
        base[t.tid] = mk_paths(t.body, unroll).paths

    per_rule = {r.value: {"applied": 0, "skipped": 0, "violations": 0}
                for r in RuleId}
    violations: list[FuzzViolation] = []
    inconclusive = 0
    effective = 0

    for _ in range(trials):
        tid = rng.choice(p.tids)
        pool = sorted(base[tid], key=lambda q: (len(q),
                                                [str(s.sid) for s in q]))
        if not pool:
            continue
        path0 = pool[rng.randrange(len(pool))]
        path = path0
        used: list[str] = []
        for _ in range(rng.randint(1, chain)):
            ctx = context_for(p, tid, {tid: [path]})
            order = list(RuleId)
            rng.shuffle(order)
            apps: list[RuleApplication] = []
            for rule in order:
                apps = apply_rule(rule, path, ctx)
                if apps:
                    break
                per_rule[rule.value]["skipped"] += 1
            if not apps:
                break  # nothing applies anywhere on this path
            app = apps[rng.randrange(len(apps))]
            per_rule[rule.value]["applied"] += 1
            used.append(rule.value)
            path = app.result
        if not used:
            continue
        effective += 1
        thread_paths = dict(base)
        thread_paths[tid] = (base[tid] - {path0}) | {path}
        res = runner(p, unroll=unroll, budget=budget,
                     thread_paths=thread_paths, collect_witnesses=False)
        if res.truncated:
            inconclusive += 1
            continue
        missing = res.errors - alarm_set
        if missing:
            for r in used:
                per_rule[r]["violations"] += 1
            violations.append(FuzzViolation(
                thread=tid,
                rules=used,
                missing=sorted(l.label for l in missing),
                path_before=_pretty_path(path0),
                path_after=_pretty_path(path),
            ))

    return FuzzReport(trials=trials, effective=effective, seed=seed,
                      oracle=oracle, per_rule=per_rule,
                      violations=violations, inconclusive=inconclusive)


# ---------------------------------------------------------------------------
# Negative controls: break a side condition on purpose, expect detection


@dataclass
class NegativeControl:
    name: str
    detected: bool
    missing: list[int]


def negative_controls(unroll: int = 2,
                      budget: OracleBudget = OracleBudget(),
                      ) -> list[NegativeControl]:
    """Hand-built violations of Def-style side conditions.  Each one must
    produce at least one oracle error not covered by the original
    program's interference analysis, proving the harness has teeth."""
    from .concrete import paths as mk_paths
    from .parser import parse_program

    out: list[NegativeControl] = []

    def check(name: str, src: str, rewrite) -> None:
        p = parse_program(src)
        alarms = analyze_program_I(p).omega
        base = {t.tid: mk_paths(t.body, unroll).paths for t in p.threads}
        tid, old, new = rewrite(p, base)
        thread_paths = dict(base)
        thread_paths[tid] = (base[tid] - {old}) | {new}
        res = run_interleavings(p, unroll=unroll, budget=budget,
                                thread_paths=thread_paths,
                                collect_witnesses=False)
        missing = res.errors - frozenset(alarms)
        out.append(NegativeControl(name, bool(missing),
                                   sorted(l.label for l in missing)))

    # (a) reorder assignments without nonblock(e1): the blocking 1/[0,0]
    # masked the second division's error in the original program
    def swap_first_two(p, base):
        tid = 1
        path = next(iter(base[tid]))
        return tid, path, (path[1], path[0]) + path[2:]

    check("reorder-assigns without nonblock(e1)",
          "var a; var b; var c;\n"
          "thread 1 { a <- 1 / [0,0]; b <- 1 / c; }\n",
          swap_first_two)

    # (b) redundant-store elimination without nonblock(e1): removing the
    # blocking store unmasks the later division by zero
    def drop_first(p, base):
        tid = 1
        path = next(iter(base[tid]))
        return tid, path, path[1:]

    check("redundant-store without nonblock(e1)",
          "var x; var z; var y;\n"
          "thread 1 { x <- 1 / [0,0]; x <- 1; z <- 1 / y; }\n",
          drop_first)

    # (c) assign-before-guard with a non-local variable: hoisting the
    # store above its guard publishes a value other threads must not see
    def hoist_store(p, base):
        tid = 1
        path = next(p for p in base[tid] if len(p) == 2)  # (guard, assign)
        return tid, path, (path[1], path[0])

    check("assign-before-guard with shared X2",
          "var flag = [1,1]; var x; var w;\n"
          "thread 1 { if flag = 0 then { x <- 1; } }\n"
          "thread 2 { w <- 1 / (1 - x); }\n",
          hoist_store)

    # (d) expression simplification without value containment: widening a
    # constant breaks the replaced-by-subset requirement
    def widen_const(p, base):
        tid = 1
        path = next(iter(base[tid]))
        stmt = path[0]
        wide = Assign(stmt.sid, stmt.var,
                      BinOp("/", stmt.expr.loc, Const(Fraction(1), Fraction(1)),
                            Const(Fraction(0), Fraction(1))))
        return tid, path, (wide,) + path[1:]

    check("expr-simplify without containment",
          "var b;\nthread 1 { b <- 1 / [1,1]; }\n",
          widen_const)

    return out
