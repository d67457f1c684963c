"""Scheduler-aware thread-modular analysis.

Environments and interferences are partitioned by scheduler configurations
(l = mutexes held by the thread, u = mutexes known free system-wide, and a
weak/sync tag).  Unprotected communications flow through weak
interferences filtered by a mutual-exclusion predicate; communications
protected by a mutex are exported at unlock (out) and imported at lock
(in) as sync-tagged interferences.  islocked() splits partitions on the u
component, which is what recovers priority-based mutual exclusion on
mono-processor real-time systems; with mono=False it degrades to the
sound multiprocessor reading X <- [0,1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .concrete import body_guard, else_guard, exit_guard, then_guard
from .interference import taint_closure, thread_writes
from .config import AnalysisSettings
from .domains import (
    BOT,
    BoxEnv,
    Interval,
    as_expr,
    get,
    transfer_assign,
    transfer_guard,
)
from .syntax import (
    Assign,
    BinOp,
    Const,
    Expr,
    Guard,
    If,
    IsLocked,
    Location,
    Lock,
    Neg,
    Program,
    Seq,
    Sid,
    Stmt,
    Unlock,
    Var,
    While,
    Yield,
    collect_lock_sets,
)

WEAK = "weak"


def sync(m: str) -> tuple[str, str]:
    return ("sync", m)


@dataclass(frozen=True)
class SchedConfig:
    """(held mutexes, known-free mutexes, weak/sync tag)."""

    held: frozenset[str]
    free: frozenset[str]
    tag: object = WEAK

    def sort_key(self) -> tuple:
        return (tuple(sorted(self.held)), tuple(sorted(self.free)),
                str(self.tag))

    def __str__(self) -> str:
        l = ",".join(sorted(self.held))
        u = ",".join(sorted(self.free))
        s = "weak" if self.tag == WEAK else f"sync({self.tag[1]})"
        return f"l={{{l}}} u={{{u}}} s={s}"


C0 = SchedConfig(frozenset(), frozenset(), WEAK)


def intf(c: SchedConfig, c2: SchedConfig) -> bool:
    """May two weak accesses under these configurations interleave?"""
    return (not (c.held & c2.held)
            and not (c.free & c2.held)
            and not (c2.free & c.held)
            and c.tag == WEAK and c2.tag == WEAK)


# sparse maps: absent key = bottom
PartitionedEnv = dict[SchedConfig, BoxEnv]
SchedKey = tuple[int, SchedConfig, str]  # (thread, config, variable)
SchedInterferenceAbs = dict[SchedKey, Interval]

ReadEvent = tuple[int, int, str, SchedConfig, SchedConfig]  # reader, writer


def envs_join(a: PartitionedEnv, b: PartitionedEnv) -> PartitionedEnv:
    out = dict(a)
    for c, env in b.items():
        out[c] = out[c].join(env) if c in out else env
    return out


def envs_widen(a: PartitionedEnv, b: PartitionedEnv,
               thresholds) -> PartitionedEnv:
    out = dict(a)
    for c, env in b.items():
        out[c] = out[c].widen(env, thresholds) if c in out else env
    return out


def sinterf_join(a: SchedInterferenceAbs,
                 b: SchedInterferenceAbs) -> SchedInterferenceAbs:
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k].join(v) if k in out else v
    return out


def sinterf_widen(a: SchedInterferenceAbs, b: SchedInterferenceAbs,
                  thresholds) -> SchedInterferenceAbs:
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k].widen(v, thresholds) if k in out else v
    return out


@dataclass(frozen=True)
class AbsStateC:
    envs: PartitionedEnv
    errors: frozenset[Location]
    interf: SchedInterferenceAbs

    def join(self, other: "AbsStateC") -> "AbsStateC":
        return AbsStateC(envs_join(self.envs, other.envs),
                         self.errors | other.errors,
                         sinterf_join(self.interf, other.interf))

    def widen(self, other: "AbsStateC", thresholds) -> "AbsStateC":
        return AbsStateC(envs_widen(self.envs, other.envs, thresholds),
                         self.errors | other.errors,
                         sinterf_widen(self.interf, other.interf, thresholds))

    def same_as(self, other: "AbsStateC") -> bool:
        return (self.envs == other.envs and self.errors == other.errors
                and self.interf == other.interf)


def sorted_configs(envs: PartitionedEnv) -> list[SchedConfig]:
    return sorted(envs, key=SchedConfig.sort_key)


def apply_sched(t: int, c: SchedConfig, envs: PartitionedEnv,
                interf: SchedInterferenceAbs, e: Expr,
                read_log: list[ReadEvent] | None = None) -> Expr:
    """Interference substitution restricted to configurations compatible
    with c; optionally logs which cross-thread writes reached each read."""
    env = envs[c]
    by_var: dict[str, Interval] = {}
    contributors: dict[str, set[tuple[int, SchedConfig]]] = {}
    for (t2, c2, x), v in interf.items():
        if t2 != t and intf(c, c2):
            by_var[x] = by_var.get(x, BOT).join(v)
            contributors.setdefault(x, set()).add((t2, c2))

    def go(e: Expr) -> Expr:
        if isinstance(e, Var):
            v = by_var.get(e.name, BOT)
            if v.is_bot:
                return e
            if read_log is not None:
                for t2, c2 in contributors[e.name]:
                    read_log.append((t, t2, e.name, c, c2))
            return as_expr(v.join(get(e.name, env)))
        if isinstance(e, Const):
            return e
        if isinstance(e, Neg):
            return Neg(e.loc, go(e.sub))
        if isinstance(e, BinOp):
            return BinOp(e.op, e.loc, go(e.left), go(e.right))
        raise TypeError(e)

    return go(e)


def in_sharp(t: int, l: frozenset[str], u: frozenset[str], m: str,
             env: BoxEnv, interf: SchedInterferenceAbs) -> BoxEnv:
    """Entering a critical section on m: import well-synchronized values
    written by other threads, unless mutual exclusion rules them out."""
    out = env
    for (t2, c2, x), v in sorted(interf.items(),
                                 key=lambda kv: (kv[0][0], kv[0][1].sort_key(),
                                                 kv[0][2])):
        if (c2.tag == sync(m) and t2 != t
                and not (l & c2.held) and not (l & c2.free)
                and not (c2.held & u)):
            updated, _ = transfer_assign(x, as_expr(v), env, frozenset())
            out = out.join(updated)
    return out


def out_sharp(t: int, l: frozenset[str], u: frozenset[str], m: str,
              env: BoxEnv,
              interf: SchedInterferenceAbs) -> SchedInterferenceAbs:
    """Leaving a critical section on m: publish the current value of every
    variable this thread wrote while holding m (read off the recorded weak
    interferences, a documented over-approximation)."""
    if env.is_bot:
        return {}
    modified = sorted({
        x for (t2, c2, x), v in interf.items()
        if t2 == t and c2.tag == WEAK and m in c2.held and not v.is_bot})
    key_conf = SchedConfig(l, u, sync(m))
    out: SchedInterferenceAbs = {}
    for x in modified:
        v = get(x, env)
        if not v.is_bot:
            out[(t, key_conf, x)] = v
    return out


@dataclass
class SchedRecorder:
    invariants: dict[Sid, PartitionedEnv] = field(default_factory=dict)
    branches: dict[Sid, tuple[bool, bool]] = field(default_factory=dict)
    read_log: list[ReadEvent] | None = None
    max_env_partitions: int = 0

    def at_primitive(self, sid: Sid, envs: PartitionedEnv) -> None:
        self.invariants[sid] = dict(envs)

    def at_branch(self, sid: Sid, taken: PartitionedEnv,
                  skipped: PartitionedEnv) -> None:
        self.branches[sid] = (bool(taken), bool(skipped))

    def see_partitions(self, envs: PartitionedEnv) -> None:
        self.max_env_partitions = max(self.max_env_partitions, len(envs))


def _coarsen(envs: PartitionedEnv, cap: int) -> PartitionedEnv:
    """Partition-explosion fallback: join partitions differing only in u,
    keeping the intersection of the u components (weaker knowledge)."""
    if len(envs) <= cap:
        return envs
    grouped: dict[frozenset[str], tuple[frozenset[str], BoxEnv]] = {}
    for c in sorted_configs(envs):
        if c.held in grouped:
            u, env = grouped[c.held]
            grouped[c.held] = (u & c.free, env.join(envs[c]))
        else:
            grouped[c.held] = (c.free, envs[c])
    return {SchedConfig(l, u, WEAK): env
            for l, (u, env) in grouped.items()}


def transfer_C(s: Stmt, t: int, st: AbsStateC,
               settings: AnalysisSettings = AnalysisSettings(),
               lock_sets: dict[int, frozenset[str]] | None = None,
               mono: bool = True,
               recorder: SchedRecorder | None = None) -> AbsStateC:
    """Abstract scheduled transfer for any statement form."""
    rec = recorder if recorder is not None else SchedRecorder()
    locks = lock_sets if lock_sets is not None else {}

    def seen(x: AbsStateC) -> AbsStateC:
        if len(x.envs) > settings.partition_cap:
            x = AbsStateC(_coarsen(x.envs, settings.partition_cap),
                          x.errors, x.interf)
        rec.see_partitions(x.envs)
        return x

    def assign(sid: Sid, var: str, e: Expr, x: AbsStateC) -> AbsStateC:
        rec.at_primitive(sid, x.envs)
        envs: PartitionedEnv = {}
        errors = x.errors
        interf = dict(x.interf)
        for c in sorted_configs(x.envs):
            e2 = apply_sched(t, c, x.envs, x.interf, e, rec.read_log)
            env, errors = transfer_assign(var, e2, x.envs[c], errors)
            if env.is_bot:
                continue
            envs[c] = env
            k = (t, c, var)
            written = get(var, env)
            interf[k] = interf[k].join(written) if k in interf else written
        return seen(AbsStateC(envs, errors, interf))

    def guard(g: Guard, x: AbsStateC) -> AbsStateC:
        rec.at_primitive(g.sid, x.envs)
        envs: PartitionedEnv = {}
        errors = x.errors
        for c in sorted_configs(x.envs):
            e2 = apply_sched(t, c, x.envs, x.interf, g.expr, rec.read_log)
            env, errors = transfer_guard(e2, g.cmp, x.envs[c], errors)
            if not env.is_bot:
                envs[c] = env
        return seen(AbsStateC(envs, errors, x.interf))

    def lock(sid: Sid, m: str, x: AbsStateC) -> AbsStateC:
        rec.at_primitive(sid, x.envs)
        envs: PartitionedEnv = {}
        interf = dict(x.interf)
        none: frozenset[str] = frozenset()
        for c in sorted_configs(x.envs):
            env = x.envs[c]
            for m2 in sorted(c.free):
                interf = sinterf_join(
                    interf, out_sharp(t, c.held, none, m2, env, x.interf))
            dest = SchedConfig(c.held | {m}, none, WEAK)
            entered = in_sharp(t, c.held, none, m, env, x.interf)
            envs[dest] = envs[dest].join(entered) if dest in envs else entered
        return seen(AbsStateC(envs, x.errors, interf))

    def unlock(sid: Sid, m: str, x: AbsStateC) -> AbsStateC:
        rec.at_primitive(sid, x.envs)
        envs: PartitionedEnv = {}
        interf = dict(x.interf)
        for c in sorted_configs(x.envs):
            env = x.envs[c]
            interf = sinterf_join(
                interf, out_sharp(t, c.held - {m}, c.free, m, env, x.interf))
            dest = SchedConfig(c.held - {m}, c.free, WEAK)
            envs[dest] = envs[dest].join(env) if dest in envs else env
        return seen(AbsStateC(envs, x.errors, interf))

    def yield_(sid: Sid, x: AbsStateC) -> AbsStateC:
        rec.at_primitive(sid, x.envs)
        envs: PartitionedEnv = {}
        interf = dict(x.interf)
        none: frozenset[str] = frozenset()
        for c in sorted_configs(x.envs):
            env = x.envs[c]
            for m2 in sorted(c.free):
                interf = sinterf_join(
                    interf, out_sharp(t, c.held, none, m2, env, x.interf))
            dest = SchedConfig(c.held, none, WEAK)
            envs[dest] = envs[dest].join(env) if dest in envs else env
        return seen(AbsStateC(envs, x.errors, interf))

    def islocked(sid: Sid, var: str, m: str, x: AbsStateC) -> AbsStateC:
        # the degraded route fixes the recorded interferences ({0,1}) and
        # the fallback environments
        degraded = assign(sid, var, Const(Fraction(0), Fraction(1)), x)
        precise = mono and not any(
            m in locks.get(t2, frozenset()) for t2 in locks if t2 > t)
        if not precise:
            return degraded
        envs: PartitionedEnv = {}
        for c in sorted_configs(x.envs):
            env = x.envs[c]
            d0 = SchedConfig(c.held, c.free | {m}, WEAK)
            env0, _ = transfer_assign(
                var, Const(Fraction(0), Fraction(0)),
                in_sharp(t, c.held, c.free, m, env, x.interf), frozenset())
            if not env0.is_bot:
                envs[d0] = envs[d0].join(env0) if d0 in envs else env0
            d1 = SchedConfig(c.held, c.free - {m}, WEAK)
            env1, _ = transfer_assign(
                var, Const(Fraction(1), Fraction(1)), env, frozenset())
            if not env1.is_bot:
                envs[d1] = envs[d1].join(env1) if d1 in envs else env1
        return seen(AbsStateC(envs, x.errors, degraded.interf))

    def go(s: Stmt, x: AbsStateC) -> AbsStateC:
        if isinstance(s, Assign):
            return assign(s.sid, s.var, s.expr, x)
        if isinstance(s, Guard):
            return guard(s, x)
        if isinstance(s, Seq):
            return go(s.second, go(s.first, x))
        if isinstance(s, If):
            entered = guard(then_guard(s), x)
            taken = go(s.body, entered)
            skipped = guard(else_guard(s), x)
            rec.at_branch(s.sid, entered.envs, skipped.envs)
            return taken.join(skipped)
        if isinstance(s, While):
            acc = AbsStateC({}, frozenset(), {})
            steps = 0
            while True:
                nxt = acc.widen(x.join(go(s.body, guard(body_guard(s), acc))),
                                settings.thresholds)
                steps += 1
                assert steps <= settings.loop_iter_cap, "loop lim diverged"
                if nxt.same_as(acc):
                    break
                acc = nxt
            if settings.decreasing_pass:
                acc = x.join(go(s.body, guard(body_guard(s), acc)))
            entered = guard(body_guard(s), acc)
            exited = guard(exit_guard(s), acc)
            rec.at_branch(s.sid, entered.envs, exited.envs)
            return exited
        if isinstance(s, Lock):
            return lock(s.sid, s.mutex, x)
        if isinstance(s, Unlock):
            return unlock(s.sid, s.mutex, x)
        if isinstance(s, Yield):
            return yield_(s.sid, x)
        if isinstance(s, IsLocked):
            return islocked(s.sid, s.var, s.mutex, x)
        raise TypeError(s)

    return go(s, st)


@dataclass(frozen=True)
class Race:
    kind: str  # "ww" | "rw"
    threads: tuple[int, int]  # rw: (reader, writer); ww: (min, max)
    var: str
    configs: tuple[tuple[str, str], ...]

    def sort_key(self) -> tuple:
        return (self.kind, self.threads, self.var)


def extract_races(p: Program, interf: SchedInterferenceAbs,
                  read_log: list[ReadEvent]) -> tuple[list[Race], list[Race]]:
    """Write/write races straight from the interference map; read/write
    races from the reads the substitution actually applied."""
    ww: dict[tuple[int, int, str], set[tuple[str, str]]] = {}
    items = sorted(interf.items(),
                   key=lambda kv: (kv[0][0], kv[0][1].sort_key(), kv[0][2]))
    for (t1, c1, x1), v1 in items:
        if c1.tag != WEAK or v1.is_bot:
            continue
        for (t2, c2, x2), v2 in items:
            if (c2.tag == WEAK and not v2.is_bot and x1 == x2 and t1 < t2
                    and intf(c1, c2)):
                ww.setdefault((t1, t2, x1), set()).add((str(c1), str(c2)))
    rw: dict[tuple[int, int, str], set[tuple[str, str]]] = {}
    for (reader, writer, x, c, c2) in read_log:
        rw.setdefault((reader, writer, x), set()).add((str(c), str(c2)))
    mk = lambda kind, d: [
        Race(kind, (a, b), x, tuple(sorted(cfgs)))
        for (a, b, x), cfgs in sorted(d.items())]
    return mk("ww", ww), mk("rw", rw)


@dataclass
class SchedThreadOutcome:
    final: PartitionedEnv
    invariants: dict[Sid, PartitionedEnv]
    branches: dict[Sid, tuple[bool, bool]]


@dataclass
class SchedResult:
    omega: frozenset[Location]
    interf: SchedInterferenceAbs
    races_ww: list[Race]
    races_rw: list[Race]
    iterations: int
    per_thread: dict[int, SchedThreadOutcome]
    max_env_partitions: int
    interference_entries: int
    idempotent: bool


def analyze_program_C(p: Program,
                      settings: AnalysisSettings = AnalysisSettings(),
                      mono: bool = True) -> SchedResult:
    """Outer fixpoint over scheduled interferences, then one recording pass
    (which doubles as an idempotence check) to collect invariants, races
    and partition statistics."""
    locks = collect_lock_sets(p)
    r0: PartitionedEnv = {C0: BoxEnv.initial(p)}
    omega: frozenset[Location] = frozenset()
    interf: SchedInterferenceAbs = {}
    rounds = 0
    while True:
        rounds += 1
        if rounds > settings.outer_round_cap:
            raise RuntimeError("scheduled interference fixpoint failed to stabilize")
        new_omega = omega
        joined: SchedInterferenceAbs = {}
        for t in p.threads:
            out = transfer_C(t.body, t.tid, AbsStateC(r0, omega, interf),
                             settings, locks, mono)
            new_omega = new_omega | out.errors
            joined = sinterf_join(joined, out.interf)
        if rounds <= settings.widening_delay:
            new_interf = sinterf_join(interf, joined)
        else:
            new_interf = sinterf_widen(interf, joined,
                                       settings.interference_thresholds)
        if rounds == settings.widening_delay + 2 and new_interf != interf:
            # cascade cutover, as in the non-scheduled analyzer: publish a
            # top interference at the always-compatible empty configuration
            # (weak and per-mutex sync) for everything the instability can
            # still reach, absorbing any later per-configuration growth
            seeds = {k[2] for k in new_interf
                     if interf.get(k) != new_interf[k]}
            for y in taint_closure(p, seeds):
                for t in p.threads:
                    if y in thread_writes(p, t.tid):
                        new_interf[(t.tid, C0, y)] = Interval.top()
                        for m in p.mutexes:
                            key = SchedConfig(frozenset(), frozenset(),
                                              sync(m))
                            new_interf[(t.tid, key, y)] = Interval.top()
        if new_omega == omega and new_interf == interf:
            break
        omega, interf = new_omega, new_interf

    # recording pass over the stable pair
    per_thread: dict[int, SchedThreadOutcome] = {}
    read_log: list[ReadEvent] = []
    max_parts = 0
    check_omega = omega
    check_interf: SchedInterferenceAbs = {}
    for t in p.threads:
        rec = SchedRecorder(read_log=read_log)
        out = transfer_C(t.body, t.tid, AbsStateC(r0, omega, interf),
                         settings, locks, mono, rec)
        per_thread[t.tid] = SchedThreadOutcome(out.envs, rec.invariants,
                                               rec.branches)
        max_parts = max(max_parts, rec.max_env_partitions)
        check_omega = check_omega | out.errors
        check_interf = sinterf_join(check_interf, out.interf)
    idempotent = (check_omega == omega
                  and sinterf_join(interf, check_interf) == interf)
    ww, rw = extract_races(p, interf, read_log)
    return SchedResult(
        omega=omega,
        interf=interf,
        races_ww=ww,
        races_rw=rw,
        iterations=rounds,
        per_thread=per_thread,
        max_env_partitions=max_parts,
        interference_entries=len(interf),
        idempotent=idempotent,
    )
