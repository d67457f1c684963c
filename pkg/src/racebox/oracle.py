"""Exhaustive concrete oracles for parallel executions.

Three engines over integer-point environments, all explicit-state BFS with
canonical deduplication (shortest witnesses first):

- run_interleavings: free interleaving of per-thread control paths.  Mutex
  primitives keep their blocking/ownership meaning but no priority or
  wake-up discipline applies, so the explored behaviors cover any number
  of processors; on sync-free programs this is exactly the sequentially
  consistent interleaving semantics.
- run_scheduled: mono-processor real-time scheduling; only the
  highest-priority ready thread steps, lock() parks the thread until the
  scheduler grants the mutex (highest-priority waiter first), yield blocks
  for a non-deterministic time.
- concrete_interference_fixpoint: per-thread path execution against a
  growing set of concrete interference triples (thread, var, value),
  iterated until the set stabilizes or a cap is reached.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .concrete import (
    PathSet,
    ValueMode,
    initial_state,
    paths,
    prim_step_env,
)

_MODE = ValueMode.INTEGER_POINTS
from .config import OracleBudget
from .syntax import (
    Assign,
    ControlPath,
    Guard,
    IsLocked,
    Location,
    Lock,
    Program,
    Stmt,
    Unlock,
    Yield,
    pretty_stmt,
)

READY = "ready"
YIELDING = "yield"
DONE = "done"  # path exhausted: a finished thread no longer occupies the
# processor, so lower-priority threads can run (thread exit is outside the
# formal scheduler model, whose examples end in yield)


def _wait(m: str) -> tuple[str, str]:
    return ("wait", m)


# ---------------------------------------------------------------------------
# Per-thread path tries


@dataclass
class _Trie:
    edges: list[list[tuple[Stmt, int]]]  # node -> [(stmt, next node)]
    ends: list[bool]  # node -> some complete path stops here

    @staticmethod
    def build(path_set: frozenset[ControlPath]) -> "_Trie":
        edges: list[list[tuple[Stmt, int]]] = [[]]
        ends = [False]
        for path in sorted(path_set, key=lambda p: (len(p),
                                                    [str(s.sid) for s in p])):
            node = 0
            for s in path:
                for s2, nxt in edges[node]:
                    if s2 is s or s2 == s:
                        node = nxt
                        break
                else:
                    edges.append([])
                    ends.append(False)
                    edges[node].append((s, len(edges) - 1))
                    node = len(edges) - 1
            ends[node] = True
        return _Trie(edges, ends)


def thread_tries(p: Program, unroll: int,
                 thread_paths: Optional[dict[int, frozenset[ControlPath]]] = None,
                 ) -> tuple[dict[int, _Trie], bool]:
    tries: dict[int, _Trie] = {}
    truncated = False
    for t in p.threads:
        if thread_paths is not None and t.tid in thread_paths:
            ps: PathSet = PathSet(frozenset(thread_paths[t.tid]), False)
        else:
            ps = paths(t.body, unroll)
        truncated = truncated or ps.truncated
        tries[t.tid] = _Trie.build(ps.paths)
    return tries, truncated


# ---------------------------------------------------------------------------
# Results


@dataclass
class ExploreResult:
    errors: frozenset[Location]
    truncated: bool
    terminal_envs: frozenset[tuple]
    vars: tuple[str, ...]
    states: int
    paths_truncated: bool
    witnesses: dict[Location, list[dict]] = field(default_factory=dict)
    sched_states: frozenset | None = None  # (status, held) pairs, on request

    def terminal_values(self, var: str) -> frozenset:
        i = self.vars.index(var)
        return frozenset(env[i] for env in self.terminal_envs)


def _witness_trace(parents, state, fmt) -> list[dict]:
    steps = []
    while state is not None:
        prev, action = parents[state]
        if action is not None:
            steps.append(fmt(action))
        state = prev
    steps.reverse()
    return steps


# ---------------------------------------------------------------------------
# Free (multiprocessor) interleavings


def run_interleavings(p: Program, unroll: int = 3,
                      budget: OracleBudget = OracleBudget(),
                      thread_paths: Optional[dict[int, frozenset[ControlPath]]] = None,
                      collect_witnesses: bool = True) -> ExploreResult:
    """Union of errors over all interleavings of per-thread control paths.

    Mutexes block and exclude; islocked reads the actual mutex state;
    yield is a pause any interleaving can realize anyway.  Threads step in
    any order (no priorities)."""
    tries, paths_trunc = thread_tries(p, unroll, thread_paths)
    tids = p.tids
    mutexes = p.mutexes
    midx = {m: i for i, m in enumerate(mutexes)}
    init = initial_state(p)
    idx = init.index()

    free_owner: tuple[Optional[int], ...] = (None,) * len(mutexes)
    start = [(tuple(0 for _ in tids), free_owner, env)
             for env in sorted(init.envs)]
    queue = deque((s, 0) for s in start)
    parents: dict = {s: (None, None) for s in start}
    seen = set(start)
    errors: dict[Location, list[dict]] = {}
    terminal: set[tuple] = set()
    truncated = False

    def fmt(action) -> dict:
        tid, stmt = action
        return {"thread": tid, "stmt-pretty": pretty_stmt(stmt).strip()}

    prim_cache: dict = {}

    def prim(stmt, env):
        key = (id(stmt), env)
        hit = prim_cache.get(key)
        if hit is None:
            hit = prim_step_env(stmt, env, idx, _MODE)
            prim_cache[key] = hit
        return hit

    while queue:
        state, depth = queue.popleft()
        nodes, owner, env = state
        if len(seen) > budget.max_states or depth >= budget.max_path_len:
            truncated = True
            break
        if all(tries[t].ends[nodes[i]] for i, t in enumerate(tids)):
            terminal.add(env)
        for i, t in enumerate(tids):
            for stmt, nxt in tries[t].edges[nodes[i]]:
                new_nodes = nodes[:i] + (nxt,) + nodes[i + 1:]
                succ: list[tuple] = []
                if isinstance(stmt, (Assign, Guard)):
                    envs2, errs = prim(stmt, env)
                    for loc in errs:
                        if loc not in errors:
                            errors[loc] = (_witness_trace(parents, state, fmt)
                                           + [fmt((t, stmt))]
                                           if collect_witnesses else [])
                    succ = [(new_nodes, owner, e2) for e2 in envs2]
                elif isinstance(stmt, Lock):
                    j = midx[stmt.mutex]
                    if owner[j] is None or owner[j] == t:
                        succ = [(new_nodes, owner[:j] + (t,) + owner[j + 1:],
                                 env)]
                elif isinstance(stmt, Unlock):
                    j = midx[stmt.mutex]
                    owner2 = owner[:j] + (None,) + owner[j + 1:] \
                        if owner[j] == t else owner
                    succ = [(new_nodes, owner2, env)]
                elif isinstance(stmt, Yield):
                    succ = [(new_nodes, owner, env)]
                elif isinstance(stmt, IsLocked):
                    j = midx[stmt.mutex]
                    val = 1 if owner[j] is not None else 0
                    k = idx[stmt.var]
                    succ = [(new_nodes, owner,
                             env[:k] + (val,) + env[k + 1:])]
                else:  # pragma: no cover
                    raise TypeError(stmt)
                for s2 in succ:
                    if s2 not in seen:
                        seen.add(s2)
                        if collect_witnesses:
                            parents[s2] = (state, (t, stmt))
                        queue.append((s2, depth + 1))

    return ExploreResult(
        errors=frozenset(errors),
        truncated=truncated,
        terminal_envs=frozenset(terminal),
        vars=p.variables,
        states=len(seen),
        paths_truncated=paths_trunc,
        witnesses=errors,
    )


# ---------------------------------------------------------------------------
# Real-time scheduled interleavings


def _subsets(xs: list[int]) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = [()]
    for x in xs:
        out += [s + (x,) for s in out]
    return out


def run_scheduled(p: Program, unroll: int = 3,
                  budget: OracleBudget = OracleBudget(),
                  thread_paths: Optional[dict[int, frozenset[ControlPath]]] = None,
                  collect_witnesses: bool = True,
                  keep_sched_states: bool = False) -> ExploreResult:
    """Explicit-state scheduled semantics: enabled -> statement -> sched.

    Only the highest-priority ready thread may step.  lock(m) parks the
    thread in wait(m); the scheduler grants a free mutex to its
    highest-priority waiter and wakes yielding threads non-deterministically
    (one branch per subset).  Errors reached along any feasible prefix are
    kept even if the path later blocks."""
    tries, paths_trunc = thread_tries(p, unroll, thread_paths)
    tids = p.tids
    pos_of = {t: i for i, t in enumerate(tids)}
    mutexes = p.mutexes
    init = initial_state(p)
    idx = init.index()

    status0 = (READY,) * len(tids)
    held0 = (frozenset(),) * len(tids)
    start = [(tuple(0 for _ in tids), status0, held0, env)
             for env in sorted(init.envs)]
    queue = deque((s, 0) for s in start)
    parents: dict = {s: (None, None) for s in start}
    seen = set(start)
    errors: dict[Location, list[dict]] = {}
    terminal: set[tuple] = set()
    truncated = False

    def sched_key(status, held) -> dict:
        return {
            "status": {t: (status[pos_of[t]] if isinstance(status[pos_of[t]], str)
                           else f"wait({status[pos_of[t]][1]})") for t in tids},
            "held": {t: sorted(held[pos_of[t]]) for t in tids},
        }

    def fmt(action) -> dict:
        tid, stmt, pre, post = action
        return {"thread": tid, "stmt-pretty": pretty_stmt(stmt).strip(),
                "pre-scheduler": sched_key(*pre),
                "post-scheduler": sched_key(*post)}

    def sched(status: tuple, held: tuple) -> list[tuple[tuple, tuple]]:
        status2 = list(status)
        held2 = list(held)
        for i, t in enumerate(tids):
            st = status[i]
            if isinstance(st, tuple) and st[0] == "wait":
                m = st[1]
                holders = [t2 for j, t2 in enumerate(tids) if m in held[j]]
                higher_waiter = any(
                    isinstance(status[j], tuple) and status[j] == _wait(m)
                    and t2 > t for j, t2 in enumerate(tids))
                if m in held[i] or (not holders and not higher_waiter):
                    status2[i] = READY
                    held2[i] = held[i] | {m}
        yielders = [i for i in range(len(tids)) if status2[i] == YIELDING]
        out = []
        for wake in _subsets(yielders):
            st3 = list(status2)
            for i in wake:
                st3[i] = READY
            out.append((tuple(st3), tuple(held2)))
        return out

    prim_cache: dict = {}

    def prim(stmt, env):
        key = (id(stmt), env)
        hit = prim_cache.get(key)
        if hit is None:
            hit = prim_step_env(stmt, env, idx, _MODE)
            prim_cache[key] = hit
        return hit

    while queue:
        state, depth = queue.popleft()
        nodes, status, held, env = state
        if len(seen) > budget.max_states or depth >= budget.max_path_len:
            truncated = True
            break
        if all(tries[t].ends[nodes[i]] for i, t in enumerate(tids)):
            terminal.add(env)
        for i, t in enumerate(tids):
            # a ready thread whose path is complete may retire, letting
            # lower-priority threads run
            if status[i] == READY and tries[t].ends[nodes[i]]:
                s2 = (nodes, status[:i] + (DONE,) + status[i + 1:], held, env)
                if s2 not in seen:
                    seen.add(s2)
                    if collect_witnesses:
                        parents[s2] = parents[state]
                    queue.append((s2, depth))
        for i, t in enumerate(tids):
            # enabled_t: t is ready and no higher-priority thread is
            if status[i] != READY:
                continue
            if any(status[j] == READY and t2 > t
                   for j, t2 in enumerate(tids)):
                continue
            for stmt, nxt in tries[t].edges[nodes[i]]:
                new_nodes = nodes[:i] + (nxt,) + nodes[i + 1:]
                mids: list[tuple[tuple, tuple, tuple]] = []  # (status, held, env)
                if isinstance(stmt, (Assign, Guard)):
                    envs2, errs = prim(stmt, env)
                    for loc in errs:
                        if loc not in errors:
                            step = {"thread": t,
                                    "stmt-pretty": pretty_stmt(stmt).strip(),
                                    "pre-scheduler": sched_key(status, held),
                                    "post-scheduler": sched_key(status, held)}
                            errors[loc] = (_witness_trace(parents, state, fmt)
                                           + [step]
                                           if collect_witnesses else [])
                    mids = [(status, held, e2) for e2 in envs2]
                elif isinstance(stmt, Yield):
                    mids = [(status[:i] + (YIELDING,) + status[i + 1:],
                             held, env)]
                elif isinstance(stmt, Lock):
                    mids = [(status[:i] + (_wait(stmt.mutex),) + status[i + 1:],
                             held, env)]
                elif isinstance(stmt, Unlock):
                    mids = [(status,
                             held[:i] + (held[i] - {stmt.mutex},) + held[i + 1:],
                             env)]
                elif isinstance(stmt, IsLocked):
                    anyheld = any(stmt.mutex in h for h in held)
                    val = 1 if anyheld else 0
                    k = idx[stmt.var]
                    mids = [(status, held, env[:k] + (val,) + env[k + 1:])]
                else:  # pragma: no cover
                    raise TypeError(stmt)
                for st2, hd2, e2 in mids:
                    for st3, hd3 in sched(st2, hd2):
                        s2 = (new_nodes, st3, hd3, e2)
                        if s2 not in seen:
                            seen.add(s2)
                            if collect_witnesses:
                                parents[s2] = (state,
                                               (t, stmt, (status, held),
                                                (st3, hd3)))
                            queue.append((s2, depth + 1))

    sched_states = None
    if keep_sched_states:
        sched_states = frozenset((st, hd) for (_, st, hd, _) in seen)
    return ExploreResult(
        errors=frozenset(errors),
        truncated=truncated,
        terminal_envs=frozenset(terminal),
        vars=p.variables,
        states=len(seen),
        paths_truncated=paths_trunc,
        witnesses=errors,
        sched_states=sched_states,
    )


# ---------------------------------------------------------------------------
# Concrete interference fixpoint


ConcreteInterference = frozenset[tuple[int, str, object]]


@dataclass
class ConcInterfResult:
    errors: frozenset[Location]
    interference: ConcreteInterference
    converged: bool
    rounds: int
    truncated: bool


def _run_thread_paths(tid: int, path_set: frozenset[ControlPath],
                      p: Program, interf_view: dict[str, frozenset],
                      omega: frozenset[Location], budget: OracleBudget,
                      ) -> tuple[frozenset[Location], set, bool]:
    """Execute every path of one thread against an interference view;
    returns (errors, writes, truncated)."""
    init = initial_state(p)
    idx = init.index()
    errors = set(omega)
    writes: set[tuple[int, str, object]] = set()
    truncated = False
    for path in sorted(path_set, key=lambda q: (len(q),
                                                [str(s.sid) for s in q])):
        envs = set(init.envs)
        for stmt in path:
            nxt: set = set()
            if isinstance(stmt, (Assign, Guard)):
                for env in envs:
                    succ, errs = prim_step_env(stmt, env, idx, _MODE,
                                               interf=interf_view, tid=tid)
                    errors |= errs
                    nxt.update(succ)
                if isinstance(stmt, Assign):
                    k = idx[stmt.var]
                    writes.update((tid, stmt.var, e[k]) for e in nxt)
            elif isinstance(stmt, (Lock, Unlock, Yield)):
                nxt = envs
            elif isinstance(stmt, IsLocked):
                k = idx[stmt.var]
                for env in envs:
                    for val in (0, 1):
                        nxt.add(env[:k] + (val,) + env[k + 1:])
                        writes.add((tid, stmt.var, val))
            else:  # pragma: no cover
                raise TypeError(stmt)
            if len(nxt) > budget.max_states:
                truncated = True
                nxt = set(sorted(nxt)[:budget.max_states])
            envs = nxt
            if not envs:
                break
    return frozenset(errors), writes, truncated


def concrete_interference_fixpoint(p: Program, unroll: int = 3,
                                   budget: OracleBudget = OracleBudget(),
                                   ) -> ConcInterfResult:
    """Kleene iteration of the concrete interference semantics over
    per-thread control paths.  converged=False when the round cap or the
    interference-size cap is hit (e.g. unbounded parallel increments)."""
    thread_paths: dict[int, frozenset[ControlPath]] = {}
    for t in p.threads:
        ps = paths(t.body, unroll)
        thread_paths[t.tid] = ps.paths
    omega: frozenset[Location] = frozenset()
    interf: set[tuple[int, str, object]] = set()
    truncated = False
    rounds = 0
    while True:
        rounds += 1
        new_omega = omega
        new_writes: set[tuple[int, str, object]] = set()
        for t in p.threads:
            view: dict[str, frozenset] = {}
            for (t2, x, v) in interf:
                if t2 != t.tid:
                    view.setdefault(x, set()).add(v)  # type: ignore[arg-type]
            view = {x: frozenset(vs) for x, vs in view.items()}
            errs, writes, trunc = _run_thread_paths(
                t.tid, thread_paths[t.tid], p, view, omega, budget)
            new_omega = new_omega | errs
            new_writes |= writes
            truncated = truncated or trunc
        new_interf = interf | new_writes
        if new_omega == omega and new_interf == interf:
            return ConcInterfResult(omega, frozenset(interf), not truncated,
                                    rounds, truncated)
        omega, interf = new_omega, new_interf
        if rounds >= budget.max_rounds or len(interf) > budget.max_interference:
            return ConcInterfResult(omega, frozenset(interf), False, rounds,
                                    truncated)


# ---------------------------------------------------------------------------
# Soundness comparison


@dataclass
class InclusionReport:
    verdict: str  # PASS | FAIL | INCONCLUSIVE
    missing: frozenset[Location]
    witness: list[dict] | None
    oracle_states: int
    oracle_truncated: bool


def check_soundness_inclusion(p: Program,
                              analyzer_errors: frozenset[Location],
                              oracle: str = "interleave",
                              unroll: int = 3,
                              budget: OracleBudget = OracleBudget(),
                              ) -> InclusionReport:
    """PASS iff every oracle-reachable error is an analyzer alarm;
    INCONCLUSIVE when the oracle hit its exploration budget."""
    run = run_scheduled if oracle == "scheduled" else run_interleavings
    res = run(p, unroll=unroll, budget=budget, collect_witnesses=False)
    if res.truncated:
        return InclusionReport("INCONCLUSIVE", frozenset(), None,
                               res.states, True)
    missing = res.errors - analyzer_errors
    if not missing:
        return InclusionReport("PASS", frozenset(), None, res.states, False)
    # re-run with parent tracking only to materialize a witness trace
    res = run(p, unroll=unroll, budget=budget, collect_witnesses=True)
    first = min(missing, key=lambda l: l.sort_key())
    return InclusionReport("FAIL", frozenset(missing),
                           res.witnesses.get(first, []), res.states, False)
