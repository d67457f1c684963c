"""Seeded random program generator for the differential test harnesses.

Programs are kept oracle-friendly: constants are small integers, loops are
bounded counter loops that fully unroll within the default path budget,
and branching statements are rationed so interleaving state spaces stay
desk-sized.  Divisions are biased toward divisors that sometimes contain
zero, so alarm sets are routinely non-empty.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .syntax import (
    Assign,
    BinOp,
    Const,
    Expr,
    If,
    IsLocked,
    Location,
    Lock,
    Program,
    Seq,
    Stmt,
    Thread,
    Unlock,
    Var,
    While,
    Yield,
    relabel_program,
)


@dataclass(frozen=True)
class GeneratorConfig:
    max_threads: int = 3
    max_stmts: int = 12  # per thread
    const_lo: int = -3
    const_hi: int = 3
    wide_const_prob: float = 0.25
    div_prob: float = 0.3
    sync_prob: float = 0.25
    loop_prob: float = 0.15
    max_branching: int = 2  # if/while statements per thread
    n_vars: int = 4
    n_mutexes: int = 2
    spare_var: bool = True  # one declared-but-unused variable (fresh)


def _loc() -> Location:
    return Location(0, 0, 0, "?")


def random_const(rng: random.Random, cfg: GeneratorConfig) -> Const:
    a = rng.randint(cfg.const_lo, cfg.const_hi)
    if rng.random() < cfg.wide_const_prob:
        b = rng.randint(a, min(a + 2, cfg.const_hi))
        return Const(Fraction(a), Fraction(b))
    return Const(Fraction(a), Fraction(a))


def _divisor(rng: random.Random, names: list[str],
             cfg: GeneratorConfig) -> Expr:
    r = rng.random()
    if r < 0.5:
        return Var(rng.choice(names))
    if r < 0.8:
        return Const(*(Fraction(rng.choice((-2, -1, 1, 2))),) * 2)
    if r < 0.95:
        lo = rng.choice((-1, 0))
        return Const(Fraction(lo), Fraction(lo + 1))
    return Const(Fraction(0), Fraction(0))


def random_expr(rng: random.Random, names: list[str], cfg: GeneratorConfig,
                depth: int = 2) -> Expr:
    if depth <= 0 or rng.random() < 0.4:
        if rng.random() < 0.5:
            return Var(rng.choice(names))
        return random_const(rng, cfg)
    r = rng.random()
    if r < 0.12:
        return BinOp("/", _loc(), random_expr(rng, names, cfg, depth - 1),
                     _divisor(rng, names, cfg)) \
            if rng.random() < cfg.div_prob else \
            Var(rng.choice(names))
    if r < 0.24:
        from .syntax import Neg

        return Neg(_loc(), random_expr(rng, names, cfg, depth - 1))
    op = rng.choice(["+", "+", "-", "-", "*"])
    return BinOp(op, _loc(), random_expr(rng, names, cfg, depth - 1),
                 random_expr(rng, names, cfg, depth - 1))


def _seq(stmts: list[Stmt]) -> Stmt:
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(0, s, out)
    return out


def random_stmts(rng: random.Random, names: list[str],
                 mutexes: list[str], cfg: GeneratorConfig,
                 budget: int, branching: int, sync: bool) -> list[Stmt]:
    out: list[Stmt] = []
    while budget > 0:
        r = rng.random()
        if branching > 0 and r < cfg.loop_prob and budget >= 3:
            v = rng.choice(names)
            bound = rng.randint(1, 3)
            inner = random_stmts(rng, names, mutexes, cfg,
                                 min(budget - 3, 2), 0, sync)
            body = _seq([Assign(0, v, BinOp("+", _loc(), Var(v),
                                            Const(Fraction(1), Fraction(1))))]
                        + inner)
            guard_expr = BinOp("-", _loc(), Var(v),
                               Const(Fraction(bound), Fraction(bound)))
            out.append(While(0, guard_expr, "<", body))
            budget -= 2 + len(inner) + 1
            branching -= 1
        elif branching > 0 and r < cfg.loop_prob + 0.2 and budget >= 2:
            inner = random_stmts(rng, names, mutexes, cfg,
                                 min(budget - 1, 3), branching - 1, sync)
            cmp = rng.choice(["=", "!=", "<", ">", "<=", ">="])
            out.append(If(0, random_expr(rng, names, cfg, 1), cmp,
                          _seq(inner)))
            budget -= 1 + len(inner)
            branching -= 1
        elif sync and mutexes and r > 1 - cfg.sync_prob:
            kind = rng.randrange(4)
            m = rng.choice(mutexes)
            if kind == 0:
                out.append(Lock(0, m))
            elif kind == 1:
                out.append(Unlock(0, m))
            elif kind == 2:
                out.append(Yield(0))
            else:
                out.append(IsLocked(0, rng.choice(names), m))
            budget -= 1
        else:
            v = rng.choice(names)
            out.append(Assign(0, v, random_expr(rng, names, cfg)))
            budget -= 1
    return out or [Assign(0, names[0], random_const(rng, cfg))]


def random_program(rng: random.Random,
                   cfg: GeneratorConfig = GeneratorConfig(),
                   sync: bool = True) -> Program:
    n_threads = rng.randint(1, cfg.max_threads)
    n_vars = rng.randint(2, cfg.n_vars)
    names = [f"v{i}" for i in range(n_vars)]
    mutexes = [f"m{i}" for i in range(rng.randint(0, cfg.n_mutexes))] \
        if sync else []
    threads = []
    for tid in range(1, n_threads + 1):
        budget = rng.randint(1, cfg.max_stmts)
        body = _seq(random_stmts(rng, names, mutexes, cfg, budget,
                                 cfg.max_branching, sync))
        threads.append(Thread(tid, body))
    variables = sorted(names + (["spare"] if cfg.spare_var else []))
    prog = Program(
        threads=tuple(threads),
        mutexes=tuple(sorted(mutexes)),
        variables=tuple(variables),
        initial=(),
    )
    return relabel_program(prog)


def random_seq_program(rng: random.Random,
                       cfg: GeneratorConfig = GeneratorConfig(),
                       loop_free: bool = True) -> Program:
    """Single-thread program; with loop_free, only assigns/ifs/seqs."""
    local = GeneratorConfig(
        max_threads=1,
        max_stmts=cfg.max_stmts,
        const_lo=cfg.const_lo,
        const_hi=cfg.const_hi,
        wide_const_prob=cfg.wide_const_prob,
        div_prob=cfg.div_prob,
        sync_prob=0.0,
        loop_prob=0.0 if loop_free else cfg.loop_prob,
        max_branching=cfg.max_branching,
        n_vars=cfg.n_vars,
        spare_var=False,
    )
    n_vars = rng.randint(2, local.n_vars)
    names = [f"v{i}" for i in range(n_vars)]
    budget = rng.randint(1, local.max_stmts)
    body = _seq(random_stmts(rng, names, [], local, budget,
                             local.max_branching, False))
    prog = Program(
        threads=(Thread(1, body),),
        mutexes=(),
        variables=tuple(sorted(names)),
        initial=(),
    )
    return relabel_program(prog)
