import json
import random
from fractions import Fraction

from racebox.concrete import paths
from racebox.config import OracleBudget
from racebox.interference import analyze_program_I
from racebox.oracle import (
    check_soundness_inclusion,
    concrete_interference_fixpoint,
    run_interleavings,
    run_scheduled,
)
from racebox.parser import parse_program
from racebox.randgen import random_program

F = Fraction


def test_dekker_mutual_exclusion(corpus):
    res = run_interleavings(corpus("dekker"), unroll=0)
    assert res.errors == frozenset()
    assert not res.truncated


def test_increment_final_values(corpus):
    res = run_interleavings(corpus("increment"), unroll=0)
    assert res.terminal_values("y") == frozenset({F(1), F(2)})
    assert res.errors == frozenset()


def test_single_thread_matches_exec(corpus):
    from racebox.concrete import exec_stmt, initial_state

    p = parse_program("thread 1 { x <- [0,1]; y <- 1 / x; }")
    res = run_interleavings(p, unroll=0)
    seq = exec_stmt(p.threads[0].body, initial_state(p))
    assert res.errors == seq.errors
    assert res.terminal_envs == seq.envs


def test_interleaving_budget_truncates():
    p = parse_program(
        "thread 1 { x <- [0,3]; y <- [0,3]; z <- [0,3]; }"
        "thread 2 { x <- [0,3]; y <- [0,3]; z <- [0,3]; }")
    res = run_interleavings(p, unroll=0, budget=OracleBudget(max_states=20))
    assert res.truncated


def test_scheduled_priority_mutex_terminal(corpus):
    res = run_scheduled(corpus("priority_mutex"), unroll=0)
    ti = res.vars.index("t")
    assert {env[ti] for env in res.terminal_envs} == {F(0)}
    assert res.errors == frozenset()


def test_scheduled_priority_flow_no_errors(corpus):
    res = run_scheduled(corpus("priority_flow"), unroll=0)
    assert res.errors == frozenset()


def test_scheduled_relock_noop():
    p = parse_program("mutex m; thread 1 { lock(m); lock(m); unlock(m); }")
    res = run_scheduled(p, unroll=0)
    assert res.errors == frozenset()
    assert len(res.terminal_envs) == 1


def test_scheduled_mutex_exclusivity_and_wait_consistency(corpus):
    res = run_scheduled(corpus("priority_mutex"), unroll=0,
                        keep_sched_states=True)
    for status, held in res.sched_states:
        for m in ("m",):
            holders = [i for i, h in enumerate(held) if m in h]
            assert len(holders) <= 1


def test_scheduled_high_priority_runs_first(corpus):
    # in priority_flow, thread 2 (high) must fully precede thread 1 until
    # it yields; b <- 1/x never sees x = 0
    res = run_scheduled(corpus("priority_flow"), unroll=0)
    bi = res.vars.index("b")
    assert {env[bi] for env in res.terminal_envs} == {F(1)}


def test_scheduled_included_in_interleavings():
    rng = random.Random(4242)
    for _ in range(15):
        p = random_program(rng)
        sched = run_scheduled(p, unroll=2, collect_witnesses=False)
        inter = run_interleavings(p, unroll=2, collect_witnesses=False)
        if not sched.truncated and not inter.truncated:
            assert sched.errors <= inter.errors


def test_projection_prefix_property(corpus):
    # witness traces project, per thread, to a prefix of some control path
    p = parse_program(
        "thread 1 { x <- [0,1]; y <- 1 / x; } thread 2 { x <- 1; }")
    res = run_interleavings(p, unroll=0)
    assert res.errors
    per_thread_paths = {t.tid: paths(t.body, 0).paths for t in p.threads}
    for loc, trace in res.witnesses.items():
        proj: dict[int, list[str]] = {}
        for step in trace:
            proj.setdefault(step["thread"], []).append(step["stmt-pretty"])
        for tid, stmts in proj.items():
            ok = False
            for path in per_thread_paths[tid]:
                from racebox.syntax import pretty_stmt

                full = [pretty_stmt(s).strip() for s in path]
                if full[:len(stmts)] == stmts:
                    ok = True
            assert ok


def test_witnesses_serialize_as_json(corpus):
    p = parse_program("thread 1 { x <- 1 / [0,0]; }")
    res = run_scheduled(p, unroll=0)
    (trace,) = res.witnesses.values()
    text = json.dumps(trace)
    steps = json.loads(text)
    assert steps[-1]["thread"] == 1
    assert "pre-scheduler" in steps[-1] and "post-scheduler" in steps[-1]


def test_concrete_interference_dekker_exact(corpus):
    res = concrete_interference_fixpoint(corpus("dekker"), unroll=0)
    assert res.converged
    flags = {(t, x, v) for (t, x, v) in res.interference
             if x.startswith("flag")}
    assert flags == {(1, "flag1", 1), (2, "flag2", 1)}


def test_concrete_interference_increment_diverges(corpus):
    res = concrete_interference_fixpoint(
        corpus("increment"), unroll=0,
        budget=OracleBudget(max_rounds=12))
    assert not res.converged
    xs = sorted(v for (t, x, v) in res.interference if x == "x")
    assert xs[:3] == [1, 1, 2]  # growing 1, 2, 3, ... per thread


def test_concrete_interference_single_thread():
    p = parse_program("thread 1 { x <- [0,1]; y <- 1 / x; }")
    res = concrete_interference_fixpoint(p, unroll=0)
    assert res.converged
    assert {t for (t, _, _) in res.interference} == {1}
    from racebox.concrete import exec_stmt, initial_state

    assert res.errors == exec_stmt(p.threads[0].body, initial_state(p)).errors


def test_inclusion_pass(corpus):
    p = corpus("increment")
    alarms = analyze_program_I(p).omega
    rep = check_soundness_inclusion(p, alarms, "interleave", unroll=0)
    assert rep.verdict == "PASS"


def test_inclusion_vacuous_on_trivial_program():
    p = parse_program("thread 1 { x <- 0; }")
    rep = check_soundness_inclusion(p, frozenset(), "interleave")
    assert rep.verdict == "PASS"


def test_inclusion_fail_with_witness():
    # adversarially drop one alarm from the analyzer's output
    p = parse_program("thread 1 { x <- 1 / [0,0]; }")
    rep = check_soundness_inclusion(p, frozenset(), "interleave")
    assert rep.verdict == "FAIL"
    assert rep.missing
    assert rep.witness and rep.witness[-1]["stmt-pretty"].startswith("x <-")


def test_inclusion_inconclusive_on_truncation():
    p = parse_program(
        "thread 1 { x <- [0,3]; y <- [0,3]; } thread 2 { x <- [0,3]; }")
    rep = check_soundness_inclusion(
        p, frozenset(), "interleave",
        budget=OracleBudget(max_states=5))
    assert rep.verdict == "INCONCLUSIVE"
