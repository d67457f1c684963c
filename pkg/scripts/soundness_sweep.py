#!/usr/bin/env python3
"""Randomized soundness sweep: concrete oracle errors must be covered by
analyzer alarms, for all three analyzer/oracle pairings.

Usage: soundness_sweep.py [N] [BASE_SEED]
"""

import pathlib
import random
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from racebox.config import OracleBudget
from racebox.interference import analyze_program_I
from racebox.oracle import run_interleavings, run_scheduled
from racebox.randgen import GeneratorConfig, random_program
from racebox.sched import analyze_program_C
from racebox.syntax import pretty_program


def main() -> None:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 500
    base = int(sys.argv[2]) if len(sys.argv) > 2 else 31_000
    budget = OracleBudget()
    t0 = time.monotonic()
    stats = {"checked": 0, "truncated": 0, "violations": 0, "max_rounds": 0}
    for i in range(n):
        rng = random.Random(base + i)
        cfg = GeneratorConfig(max_stmts=rng.choice((4, 6, 8, 12)))
        p = random_program(rng, cfg)
        ri = analyze_program_I(p)
        rt = analyze_program_C(p, mono=True)
        rf = analyze_program_C(p, mono=False)
        stats["max_rounds"] = max(stats["max_rounds"], ri.iterations,
                                  rt.iterations, rf.iterations)
        oi = run_interleavings(p, unroll=3, budget=budget,
                               collect_witnesses=False)
        os_ = run_scheduled(p, unroll=3, budget=budget,
                            collect_witnesses=False)
        for name, oracle, alarms in (
                ("interleave/interference", oi, ri.omega),
                ("interleave/scheduled-multi", oi, rf.omega),
                ("scheduled/scheduled-mono", os_, rt.omega)):
            if oracle.truncated:
                stats["truncated"] += 1
                continue
            stats["checked"] += 1
            missing = oracle.errors - alarms
            if missing:
                stats["violations"] += 1
                print(f"VIOLATION seed={base + i} pairing={name}"
                      f" labels={sorted(l.label for l in missing)}")
                print(pretty_program(p))
    dt = time.monotonic() - t0
    print(f"{n} programs, {stats['checked']} comparisons,"
          f" {stats['truncated']} truncated,"
          f" {stats['violations']} violations,"
          f" max {stats['max_rounds']} fixpoint rounds, {dt:.1f}s")
    sys.exit(1 if stats["violations"] else 0)


if __name__ == "__main__":
    main()
