from fractions import Fraction

from racebox.config import AnalysisSettings
from racebox.domains import BOT, BoxEnv, INF, Interval
from racebox.interference import analyze_program_I
from racebox.parser import parse_program
from racebox.sched import (
    C0,
    AbsStateC,
    SchedConfig,
    WEAK,
    analyze_program_C,
    apply_sched,
    in_sharp,
    intf,
    out_sharp,
    sync,
    transfer_C,
)
from racebox.syntax import Const, Var, collect_lock_sets

F = Fraction


def iv(lo, hi):
    return Interval.of(F(lo) if lo != "-inf" else -INF,
                       F(hi) if hi != "inf" else INF)


def cfg(l=(), u=(), tag=WEAK):
    return SchedConfig(frozenset(l), frozenset(u), tag)


def joined_final(res, var):
    out = BOT
    for tid, o in res.per_thread.items():
        for c, env in o.final.items():
            out = out.join(env.get(var))
    return out


def hull(res, var):
    out = joined_final(res, var)
    for tid, o in res.per_thread.items():
        for sid, envs in o.invariants.items():
            for c, env in envs.items():
                out = out.join(env.get(var))
    return out


# -- the intf predicate


def test_intf_empty_configs():
    assert intf(cfg(), cfg())


def test_intf_shared_held_mutex():
    assert not intf(cfg(l={"m"}), cfg(l={"m"}))


def test_intf_known_free_vs_held():
    assert not intf(cfg(u={"m"}), cfg(l={"m"}))
    assert not intf(cfg(l={"m"}), cfg(u={"m"}))


def test_intf_requires_weak_tags():
    assert not intf(cfg(tag=sync("m")), cfg())
    assert not intf(cfg(), cfg(tag=sync("m")))


# -- apply under partitioning


def test_apply_excludes_mutually_exclusive_configs():
    envs = {cfg(u={"m"}): BoxEnv({"y": iv(0, 0)}),
            cfg(): BoxEnv({"y": iv(0, 0)})}
    interf = {(1, cfg(l={"m"}), "y"): iv(7, 7)}
    # reader knows m is free: the writer held m, excluded
    assert apply_sched(2, cfg(u={"m"}), envs, interf, Var("y")) == Var("y")
    # reader without knowledge: included
    assert apply_sched(2, cfg(), envs, interf, Var("y")) == Const(F(0), F(7))


def test_apply_ignores_sync_entries():
    envs = {cfg(): BoxEnv({"y": iv(0, 0)})}
    interf = {(1, cfg(tag=sync("m")), "y"): iv(7, 7)}
    assert apply_sched(2, cfg(), envs, interf, Var("y")) == Var("y")


# -- in/out


def test_in_no_sync_entries_identity():
    env = BoxEnv({"x": iv(1, 2)})
    assert in_sharp(2, frozenset(), frozenset(), "m", env, {}) == env


def test_in_imports_compatible_sync_values():
    env = BoxEnv({"x": iv(0, 0)})
    interf = {(1, cfg(tag=sync("m")), "x"): iv(5, 6)}
    out = in_sharp(2, frozenset(), frozenset(), "m", env, interf)
    assert out.get("x") == iv(0, 6)


def test_in_two_lock_exclusion():
    # values written by thread 1 while holding a mutex in common with the
    # importing thread are not imported
    env = BoxEnv({"x": iv(0, 0)})
    interf = {(1, SchedConfig(frozenset({"m2"}), frozenset(), sync("m1")),
               "x"): iv(5, 5)}
    holding_m2 = in_sharp(2, frozenset({"m2"}), frozenset(), "m1", env, interf)
    assert holding_m2.get("x") == iv(0, 0)
    free = in_sharp(2, frozenset(), frozenset(), "m1", env, interf)
    assert free.get("x") == iv(0, 5)


def test_in_ignores_own_thread():
    env = BoxEnv({"x": iv(0, 0)})
    interf = {(2, cfg(tag=sync("m")), "x"): iv(5, 5)}
    assert in_sharp(2, frozenset(), frozenset(), "m", env, interf) == env


def test_out_requires_weak_write_under_mutex():
    env = BoxEnv({"y": iv(1, 1), "z": iv(3, 3)})
    interf = {(1, cfg(l={"m"}), "y"): iv(1, 1)}
    out = out_sharp(1, frozenset(), frozenset(), "m", env, interf)
    assert out == {(1, cfg(tag=sync("m")), "y"): iv(1, 1)}
    # no weak interference under m: nothing published
    assert out_sharp(1, frozenset(), frozenset(), "m", env, {}) == {}


def test_unlock_emits_sync_with_post_removal_lockset():
    p = parse_program(
        "mutex m; thread 1 { lock(m); y <- 1; unlock(m); }")
    res = analyze_program_C(p)
    key = (1, SchedConfig(frozenset(), frozenset(), sync("m")), "y")
    assert res.interf[key] == iv(1, 1)


def test_lock_single_partition_moves_key():
    p = parse_program("mutex m; thread 1 { lock(m); x <- 1; }")
    st = AbsStateC({C0: BoxEnv.initial(p)}, frozenset(), {})
    out = transfer_C(p.threads[0].body, 1, st,
                     lock_sets=collect_lock_sets(p))
    assert set(out.envs) == {cfg(l={"m"})}
    assert out.envs[cfg(l={"m"})].get("x") == iv(1, 1)


def test_relock_is_noop_on_held_set():
    p = parse_program("mutex m; thread 1 { lock(m); lock(m); x <- 1; }")
    res = analyze_program_C(p)
    assert res.omega == frozenset()
    (final,) = res.per_thread[1].final.keys()
    assert final == cfg(l={"m"})


# -- whole-program behavior on the corpus


def test_priority_mutex_mono_exact(corpus):
    p = corpus("priority_mutex")
    res = analyze_program_C(p, mono=True)
    assert joined_final(res, "t") == iv(0, 0)
    assert res.omega == frozenset()
    races = [r for r in res.races_ww + res.races_rw if r.var in ("y", "z")]
    assert races == []


def test_priority_mutex_multi_loses_precision(corpus):
    p = corpus("priority_mutex")
    res = analyze_program_C(p, mono=False)
    assert joined_final(res, "t") == iv(-1, 1)
    # and the scheduled result dominates the non-scheduled analyzer's
    assert joined_final(analyze_program_C(p, mono=True), "t").leq(
        analyze_program_I(p).per_thread[1].final.get("t"))


def test_priority_mutex_islocked_relation(corpus):
    # in the partition where m is known free, x is exactly 0
    p = corpus("priority_mutex")
    res = analyze_program_C(p, mono=True)
    finals = res.per_thread[2].final
    for c, env in finals.items():
        if "m" in c.free:
            assert env.get("x") == iv(0, 0)


def test_producer_consumer_bounds(corpus):
    thr = tuple(sorted(F(t) for t in (-10_000, -1, 0, 1, 10, 10_000)))
    p = corpus("producer_consumer")
    res = analyze_program_C(p, AnalysisSettings(thresholds=thr), mono=True)
    assert hull(res, "x") == iv(0, 10)
    assert hull(res, "y").hi == INF
    assert res.omega == frozenset()


def test_priority_flow_alarms_both_sites(corpus):
    p = corpus("priority_flow")
    res = analyze_program_C(p, mono=True)
    assert len(res.omega) == 2


def test_well_synchronized_communication_hides_intermediate_writes():
    # inside a critical section the writer stores 0 then 5; a reader that
    # locks the same mutex can only import the final value, so 1/x is
    # provably safe here while the lock-blind analyzer must alarm
    src = """var x = [5,5]; var w; mutex m;
    thread 1 { lock(m); x <- 0; x <- 5; unlock(m); }
    thread 2 { lock(m); w <- 1 / x; unlock(m); }
    """
    p = parse_program(src)
    sched = analyze_program_C(p, mono=True)
    assert sched.omega == frozenset()
    assert joined_final(sched, "w").join(iv(0, 0)) == iv(0, F(1, 5))
    blind = analyze_program_I(p)
    assert len(blind.omega) == 1
    # and the scheduled oracle agrees that no error is reachable
    from racebox.oracle import run_scheduled

    o = run_scheduled(p, unroll=0)
    assert not o.truncated and o.errors == frozenset()


def test_sync_import_spans_initial_value():
    # the reader may also run first: its import must keep the initial 0,
    # so with a zero-crossing initial value the alarm stays
    src = """var x; var w; mutex m;
    thread 1 { lock(m); x <- 5; unlock(m); }
    thread 2 { lock(m); w <- 1 / x; unlock(m); }
    """
    p = parse_program(src)
    sched = analyze_program_C(p, mono=True)
    assert len(sched.omega) == 1  # x in {0, 5}: 0 is reachable
    from racebox.oracle import run_scheduled

    o = run_scheduled(p, unroll=0)
    assert o.errors <= sched.omega and len(o.errors) == 1


def test_degradation_equivalence_without_sync(corpus):
    for name in ("dekker", "increment"):
        p = corpus(name)
        rc = analyze_program_C(p, mono=False)
        ri = analyze_program_I(p)
        assert rc.omega == ri.omega


def test_races_on_increment(corpus):
    p = corpus("increment")
    res = analyze_program_C(p, mono=True)
    ww = {(r.threads, r.var) for r in res.races_ww}
    rw = {(r.threads, r.var) for r in res.races_rw}
    assert ((1, 2), "x") in ww
    assert ((1, 2), "x") in rw  # thread 1 reads x while thread 2 writes it


def test_no_races_single_thread():
    p = parse_program("thread 1 { x <- x + 1; y <- 1 / x; }")
    res = analyze_program_C(p)
    assert res.races_ww == [] and res.races_rw == []


def test_partition_invariant_l_u_disjoint(corpus):
    p = corpus("priority_mutex")
    res = analyze_program_C(p, mono=True)
    for tid, o in res.per_thread.items():
        for sid, envs in o.invariants.items():
            for c in envs:
                assert not (c.held & c.free)
                assert c.tag == WEAK


def test_idempotence_flag(corpus):
    for name in ("dekker", "increment", "priority_mutex", "priority_flow"):
        assert analyze_program_C(corpus(name), mono=True).idempotent


def test_partition_cap_coarsens():
    # three islocked tests in a row would make 2^3 u-partitions; a cap of 2
    # forces joins that only weaken the u component
    src = """mutex a; mutex b; mutex c;
    thread 1 { x <- islocked(a); y <- islocked(b); z <- islocked(c); w <- 1; }
    """
    p = parse_program(src)
    res = analyze_program_C(p, AnalysisSettings(partition_cap=2), mono=True)
    assert res.max_env_partitions <= 2
    assert joined_final(res, "w") == iv(1, 1)
