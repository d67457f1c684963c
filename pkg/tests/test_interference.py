from fractions import Fraction

from racebox.config import AnalysisSettings
from racebox.domains import BoxEnv, INF, Interval
from racebox.interference import (
    AbsStateI,
    analyze_program_I,
    analyze_stmt_I,
    apply_interference,
    interf_join,
    interf_leq,
)
from racebox.parser import parse_program
from racebox.seq import analyze_program_seq
from racebox.syntax import Const, Var

F = Fraction


def iv(lo, hi):
    return Interval.of(F(lo) if lo != "-inf" else -INF,
                       F(hi) if hi != "inf" else INF)


def test_apply_replaces_with_join():
    env = BoxEnv({"y": iv(0, 0)})
    interf = {(2, "y"): iv(5, 5)}
    out = apply_interference(1, env, interf, Var("y"))
    assert out == Const(F(0), F(5))


def test_apply_identity_without_interference():
    env = BoxEnv({"y": iv(0, 0), "z": iv(1, 2)})
    p = parse_program("thread 1 { x <- y + z * 2; }")
    e = p.threads[0].body.expr
    assert apply_interference(1, env, {}, e) is not e  # rebuilt ...
    assert apply_interference(1, env, {}, e) == e  # ... but identical
    # own-thread interference is ignored without self-interference
    assert apply_interference(1, env, {(1, "y"): iv(9, 9)}, e) == e


def test_apply_self_interference():
    env = BoxEnv({"y": iv(0, 0)})
    interf = {(1, "y"): iv(9, 9)}
    out = apply_interference(1, env, interf, Var("y"),
                             self_threads=frozenset({1}))
    assert out == Const(F(0), F(9))


def test_assign_extends_interference():
    p = parse_program("thread 1 { x <- x + 1; }")
    st = AbsStateI(BoxEnv({"x": iv(0, 0)}), frozenset(),
                   {(2, "x"): iv(1, 1)})
    out = analyze_stmt_I(p.threads[0].body, 1, st)
    assert out.env.get("x") == iv(1, 2)
    assert out.interf[(1, "x")] == iv(1, 2)


def test_self_interference_models_multiple_instances():
    # a single-instance incrementing thread keeps x at [1,1]; marking it
    # multi-instance feeds its own writes back and the bound diverges
    p = parse_program("thread 1 { x <- x + 1; }")
    single = analyze_program_I(p)
    assert single.interf[(1, "x")] == iv(1, 1)
    multi = analyze_program_I(p, self_threads=frozenset({1}))
    assert multi.interf[(1, "x")].hi == INF
    assert multi.interf[(1, "x")].lo == 1


def test_guard_without_interference_matches_seq():
    src = "thread 1 { x <- [0,5]; if x = 0 then { y <- 1 / x; } }"
    p = parse_program(src)
    assert analyze_program_I(p).omega == analyze_program_seq(p).omega


def test_dekker_flags_interference_exact(corpus):
    p = corpus("dekker")
    r = analyze_program_I(p)
    flags = {k: v for k, v in r.interf.items() if k[1].startswith("flag")}
    assert flags == {(1, "flag1"): iv(1, 1), (2, "flag2"): iv(1, 1)}
    # both branches of both conditionals stay satisfiable
    for tid in (1, 2):
        (branch,) = r.per_thread[tid].branches.values()
        assert branch == (True, True)


def test_increment_diverges_upward(corpus):
    p = corpus("increment")
    r = analyze_program_I(p)
    y = r.interf[(1, "y")]
    assert y.hi == INF and y.lo == 1
    assert r.omega == frozenset()


def test_priority_mutex_only_coarse_bound(corpus):
    p = corpus("priority_mutex")
    r = analyze_program_I(p)
    assert r.per_thread[1].final.get("t") == iv(-1, 1)
    assert r.warnings  # sync primitives were skipped with a diagnostic


def test_single_thread_matches_seq_and_two_rounds():
    src = "thread 1 { x <- [0,1]; y <- 1 / x; while x - 3 < 0 do { x <- x + 1; } }"
    p = parse_program(src)
    ri = analyze_program_I(p)
    rs = analyze_program_seq(p)
    assert ri.omega == rs.omega
    assert ri.iterations <= 2


def test_outer_fixpoint_idempotent(corpus):
    p = corpus("increment")
    s = AnalysisSettings()
    r = analyze_program_I(p, s)
    # one more full round from the stable pair changes nothing
    from racebox.domains import BoxEnv as BE
    from racebox.interference import interf_widen

    e0 = BE.initial(p)
    omega, interf = r.omega, r.interf
    new_omega = omega
    joined = {}
    for t in p.threads:
        out = analyze_stmt_I(t.body, t.tid, AbsStateI(e0, omega, interf), s)
        new_omega |= out.errors
        joined = interf_join(joined, out.interf)
    assert new_omega == omega
    assert interf_widen(interf, joined, ()) == interf


def test_interference_monotone_across_rounds(corpus):
    p = corpus("increment")
    s = AnalysisSettings()
    e0 = BoxEnv.initial(p)
    omega, interf = frozenset(), {}
    from racebox.interference import interf_widen

    prev = {}
    for rounds in range(1, 8):
        joined = {}
        new_omega = omega
        for t in p.threads:
            out = analyze_stmt_I(t.body, t.tid, AbsStateI(e0, omega, interf), s)
            new_omega |= out.errors
            joined = interf_join(joined, out.interf)
        new_interf = (interf_join(interf, joined) if rounds <= 2
                      else interf_widen(interf, joined, ()))
        assert interf_leq(interf, new_interf)
        if new_interf == interf and new_omega == omega:
            break
        omega, interf = new_omega, new_interf
