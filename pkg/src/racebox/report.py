"""Run orchestration and machine/human report emission.

Reports are byte-deterministic for a given (program, config, seed): all
sets are emitted sorted and timing is only populated on request.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from fractions import Fraction

from .config import AnalysisSettings, OracleBudget
from .domains import BOT, DEFAULT_THRESHOLDS, BoxEnv, Interval
from .interference import analyze_program_I
from .oracle import (
    check_soundness_inclusion,
    concrete_interference_fixpoint,
    run_interleavings,
    run_scheduled,
)
from .parser import parse_program
from .sched import analyze_program_C
from .seq import analyze_program_seq
from .syntax import Location, Program, location_thread
from .transforms import fuzz_weakmem, negative_controls

ANALYZER_MODES = ("seq", "interference", "scheduled")
ORACLE_MODES = ("oracle-interleave", "oracle-scheduled", "oracle-interference")
MODES = ANALYZER_MODES + ORACLE_MODES + ("fuzz",)

SCHEMA_VERSION = 1

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "mode", "program_sha256", "config",
                 "alarms", "exit_code"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "mode": {"enum": list(MODES)},
        "program_sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "config": {"type": "object"},
        "alarms": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "line", "col", "kind"],
                "properties": {
                    "label": {"type": "integer"},
                    "line": {"type": "integer"},
                    "col": {"type": "integer"},
                    "kind": {"enum": ["div-by-zero"]},
                    "context": {"type": "string"},
                },
            },
        },
        "races": {
            "type": "object",
            "properties": {
                "ww": {"type": "array"},
                "rw": {"type": "array"},
            },
        },
        "interferences": {"type": "object"},
        "var_ranges": {"type": "object"},
        "invariants": {"type": "object"},
        "iterations": {"type": ["integer", "null"]},
        "partition_stats": {"type": ["object", "null"]},
        "oracle": {"type": ["object", "null"]},
        "fuzz": {"type": ["object", "null"]},
        "check": {"type": ["object", "null"]},
        "warnings": {"type": "array"},
        "timing_s": {"type": ["number", "null"]},
        "exit_code": {"type": "integer"},
    },
}


@dataclass(frozen=True)
class RunConfig:
    mode: str = "scheduled"
    unroll: int = 3
    widening_delay: int = 2
    thresholds: tuple[Fraction, ...] = DEFAULT_THRESHOLDS
    mono: bool = True
    self_interference: tuple[int, ...] = ()
    budget_states: int = 1_000_000
    seed: int = 0
    check_against: str | None = None
    decreasing_pass: bool = False
    timing: bool = False

    def settings(self) -> AnalysisSettings:
        return AnalysisSettings(
            thresholds=self.thresholds,
            widening_delay=self.widening_delay,
            decreasing_pass=self.decreasing_pass,
            self_interference=frozenset(self.self_interference),
        )

    def budget(self) -> OracleBudget:
        return OracleBudget(max_states=self.budget_states)

    def echo(self) -> dict:
        return {
            "mode": self.mode,
            "unroll": self.unroll,
            "widening_delay": self.widening_delay,
            "thresholds": [str(t) for t in self.thresholds],
            "mono": self.mono,
            "self_interference": list(self.self_interference),
            "budget_states": self.budget_states,
            "seed": self.seed,
            "check_against": self.check_against,
            "decreasing_pass": self.decreasing_pass,
        }


class ProgramMismatch(Exception):
    pass


def _alarm(loc: Location, p: Program) -> dict:
    tid = location_thread(p, loc)
    return {
        "label": loc.label,
        "line": loc.line,
        "col": loc.col,
        "kind": "div-by-zero",
        "context": f"thread {tid}, operator {loc.op!r}" if tid else loc.op,
    }


def _alarms(omega, p: Program) -> list[dict]:
    return [_alarm(l, p)
            for l in sorted(omega, key=lambda l: l.sort_key())]


def _join_env_var(env, var: str) -> Interval:
    if isinstance(env, BoxEnv):
        return env.get(var)
    out = BOT
    for c in env:  # partitioned env
        out = out.join(env[c].get(var))
    return out


def _var_ranges(p: Program, per_thread) -> dict:
    out = {}
    for v in p.variables:
        final = BOT
        hull = BOT
        for tid, res in per_thread.items():
            fv = _join_env_var(res.final, v)
            final = final.join(fv)
            hull = hull.join(fv)
            for sid, env in res.invariants.items():
                hull = hull.join(_join_env_var(env, v))
        out[v] = {"final": str(final), "hull": str(hull)}
    return out


def _invariant_dump(per_thread) -> dict:
    out = {}
    for tid, res in sorted(per_thread.items()):
        entry = {}
        for sid, env in sorted(res.invariants.items(), key=lambda kv: str(kv[0])):
            if isinstance(env, BoxEnv):
                entry[str(sid)] = str(env)
            else:
                entry[str(sid)] = {str(c): str(env[c])
                                   for c in sorted(env, key=lambda c: c.sort_key())}
        out[f"t{tid}"] = entry
    return out


def _terminal_summary(res, limit: int = 64) -> dict:
    vals: dict[str, list[str]] = {}
    for i, v in enumerate(res.vars):
        seen = sorted({env[i] for env in res.terminal_envs})[:limit]
        vals[v] = [str(x) for x in seen]
    return vals


def build_report(p: Program, source: str, cfg: RunConfig) -> dict:
    """Run the requested mode and assemble the report dictionary."""
    t0 = time.monotonic()
    settings = cfg.settings()
    budget = cfg.budget()
    rep: dict = {
        "schema_version": SCHEMA_VERSION,
        "mode": cfg.mode,
        "program_sha256": hashlib.sha256(source.encode()).hexdigest(),
        "config": cfg.echo(),
        "alarms": [],
        "races": {"ww": [], "rw": []},
        "interferences": {},
        "var_ranges": {},
        "invariants": {},
        "iterations": None,
        "partition_stats": None,
        "oracle": None,
        "fuzz": None,
        "check": None,
        "warnings": [],
        "timing_s": None,
        "exit_code": 0,
    }

    if cfg.mode == "seq":
        res = analyze_program_seq(p, settings)
        rep["alarms"] = _alarms(res.omega, p)
        rep["var_ranges"] = {v: {"final": str(res.final.get(v)),
                                 "hull": str(res.final.get(v))}
                             for v in p.variables}
        rep["invariants"] = {"t1": {str(s): str(e)
                                    for s, e in sorted(res.invariants.items(),
                                                       key=lambda kv: str(kv[0]))}}
        rep["iterations"] = 1

    elif cfg.mode == "interference":
        res = analyze_program_I(p, settings)
        rep["alarms"] = _alarms(res.omega, p)
        rep["interferences"] = {f"t{t}/{x}": str(v)
                                for (t, x), v in sorted(res.interf.items())}
        rep["var_ranges"] = _var_ranges(p, res.per_thread)
        rep["invariants"] = _invariant_dump(res.per_thread)
        rep["iterations"] = res.iterations
        rep["warnings"] = list(res.warnings)

    elif cfg.mode == "scheduled":
        res = analyze_program_C(p, settings, mono=cfg.mono)
        rep["alarms"] = _alarms(res.omega, p)
        rep["interferences"] = {
            f"t{t}/{c}/{x}": str(v)
            for (t, c, x), v in sorted(
                res.interf.items(),
                key=lambda kv: (kv[0][0], kv[0][1].sort_key(), kv[0][2]))}
        rep["races"] = {
            "ww": [{"kind": r.kind, "threads": list(r.threads), "var": r.var,
                    "configs": [list(c) for c in r.configs]}
                   for r in res.races_ww],
            "rw": [{"kind": r.kind, "threads": list(r.threads), "var": r.var,
                    "configs": [list(c) for c in r.configs]}
                   for r in res.races_rw],
        }
        rep["var_ranges"] = _var_ranges(p, res.per_thread)
        rep["invariants"] = _invariant_dump(res.per_thread)
        rep["iterations"] = res.iterations
        rep["partition_stats"] = {
            "max_env_partitions": res.max_env_partitions,
            "interference_entries": res.interference_entries,
            "idempotent": res.idempotent,
        }

    elif cfg.mode in ("oracle-interleave", "oracle-scheduled"):
        run = (run_interleavings if cfg.mode == "oracle-interleave"
               else run_scheduled)
        res = run(p, unroll=cfg.unroll, budget=budget)
        rep["alarms"] = _alarms(res.errors, p)
        rep["oracle"] = {
            "states": res.states,
            "truncated": res.truncated,
            "paths_truncated": res.paths_truncated,
            "terminal_env_count": len(res.terminal_envs),
            "terminal_values": _terminal_summary(res),
            "witnesses": {str(l.label): res.witnesses[l]
                          for l in sorted(res.witnesses,
                                          key=lambda l: l.sort_key())},
        }
        if res.truncated:
            rep["exit_code"] = 3
        if cfg.check_against:
            rep["check"] = _run_check(p, cfg, settings)

    elif cfg.mode == "oracle-interference":
        res = concrete_interference_fixpoint(p, unroll=cfg.unroll,
                                             budget=budget)
        rep["alarms"] = _alarms(res.errors, p)
        summary: dict[str, dict] = {}
        for (t, x, v) in res.interference:
            k = f"t{t}/{x}"
            e = summary.setdefault(k, {"count": 0, "min": None, "max": None})
            e["count"] += 1
            e["min"] = str(v) if e["min"] is None else str(min(Fraction(e["min"]), Fraction(v)))
            e["max"] = str(v) if e["max"] is None else str(max(Fraction(e["max"]), Fraction(v)))
        rep["interferences"] = dict(sorted(summary.items()))
        rep["oracle"] = {
            "converged": res.converged,
            "rounds": res.rounds,
            "interference_size": len(res.interference),
            "truncated": res.truncated,
        }
        if not res.converged:
            rep["exit_code"] = 3

    elif cfg.mode == "fuzz":
        fz = fuzz_weakmem(p, trials=50, seed=cfg.seed, unroll=cfg.unroll,
                          budget=budget, settings=settings)
        controls = negative_controls(budget=budget)
        rep["fuzz"] = {
            "trials": fz.trials,
            "seed": fz.seed,
            "oracle": fz.oracle,
            "per_rule": fz.per_rule,
            "inconclusive": fz.inconclusive,
            "violations": [{
                "thread": v.thread, "rules": v.rules, "missing": v.missing,
                "path_before": v.path_before, "path_after": v.path_after,
            } for v in fz.violations],
            "negative_controls": [{"name": c.name, "detected": c.detected}
                                  for c in controls],
        }
        if fz.violations or not all(c.detected for c in controls):
            rep["exit_code"] = 1

    else:
        raise ValueError(f"unknown mode {cfg.mode!r}")

    if cfg.mode in ANALYZER_MODES and rep["alarms"]:
        rep["exit_code"] = 1
    if cfg.timing:
        rep["timing_s"] = round(time.monotonic() - t0, 6)
    return rep


def _analyzer_alarms(p: Program, mode: str, cfg: RunConfig) -> frozenset:
    settings = cfg.settings()
    if mode == "seq":
        return frozenset(analyze_program_seq(p, settings).omega)
    if mode == "interference":
        return frozenset(analyze_program_I(p, settings).omega)
    if mode == "scheduled":
        return frozenset(analyze_program_C(p, settings, mono=cfg.mono).omega)
    raise ValueError(f"--check-against expects one of {ANALYZER_MODES}")


def _run_check(p: Program, cfg: RunConfig, settings) -> dict:
    alarms = _analyzer_alarms(p, cfg.check_against, cfg)
    oracle = "scheduled" if cfg.mode == "oracle-scheduled" else "interleave"
    inc = check_soundness_inclusion(p, alarms, oracle=oracle,
                                    unroll=cfg.unroll, budget=cfg.budget())
    return {
        "against": cfg.check_against,
        "verdict": inc.verdict,
        "missing": sorted(l.label for l in inc.missing),
        "witness": inc.witness,
        "oracle_states": inc.oracle_states,
    }


def report_to_json(rep: dict) -> str:
    return json.dumps(rep, sort_keys=True, indent=2) + "\n"


def analyze_source(source: str, cfg: RunConfig) -> dict:
    p = parse_program(source)
    return build_report(p, source, cfg)


def diff_reports(a: dict, b: dict) -> dict:
    """Alarm-set and race-set inclusion verdicts, both ways."""
    if a["program_sha256"] != b["program_sha256"]:
        raise ProgramMismatch("reports are about different programs")

    def alarm_set(r):
        return {x["label"] for x in r["alarms"]}

    def race_set(r):
        return {(x["kind"], tuple(x["threads"]), x["var"])
                for kind in ("ww", "rw") for x in r["races"][kind]}

    aa, bb = alarm_set(a), alarm_set(b)
    ra, rb = race_set(a), race_set(b)
    return {
        "alarms_a_in_b": aa <= bb,
        "alarms_b_in_a": bb <= aa,
        "races_a_in_b": ra <= rb,
        "races_b_in_a": rb <= ra,
        "alarms_only_a": sorted(aa - bb),
        "alarms_only_b": sorted(bb - aa),
    }
