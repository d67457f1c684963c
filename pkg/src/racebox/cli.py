"""Command-line entry point.

Exit codes: 0 analyzed with no alarms (or PASS), 1 alarms or violations
found (or FAIL), 2 usage/parse error, 3 internal or budget failure.
Set THESEE_MINI_COLOR=0|1 to force colored human output off or on.
"""

from __future__ import annotations

import os
import sys
from fractions import Fraction

import click

from .parser import ParseError, parse_program
from .report import (
    ANALYZER_MODES,
    MODES,
    RunConfig,
    build_report,
    report_to_json,
)


def _color_enabled() -> bool:
    env = os.environ.get("THESEE_MINI_COLOR")
    if env == "0":
        return False
    if env == "1":
        return True
    return sys.stdout.isatty()


def _c(text: str, code: str) -> str:
    if _color_enabled():
        return f"\033[{code}m{text}\033[0m"
    return text


def _human(rep: dict) -> str:
    lines = [f"mode: {rep['mode']}"]
    if rep["iterations"] is not None:
        lines.append(f"interference iterations: {rep['iterations']}")
    if rep["alarms"]:
        head = _c(f"{len(rep['alarms'])} alarm(s)", "31")
        lines.append(head)
        for a in rep["alarms"]:
            lines.append(f"  {a['kind']} at {a['line']}:{a['col']}"
                         f" (label {a['label']}, {a['context']})")
    else:
        lines.append(_c("no alarms", "32"))
    races = rep["races"]["ww"] + rep["races"]["rw"]
    if races:
        lines.append(_c(f"{len(races)} data race(s)", "33"))
        for r in races:
            t1, t2 = r["threads"]
            lines.append(f"  {r['kind']} race on {r['var']}"
                         f" between t{t1} and t{t2}")
    if rep["var_ranges"]:
        lines.append("variable ranges (final / reachable hull):")
        for v, d in sorted(rep["var_ranges"].items()):
            lines.append(f"  {v}: {d['final']} / {d['hull']}")
    if rep["partition_stats"]:
        ps = rep["partition_stats"]
        lines.append(f"partitions: max {ps['max_env_partitions']} env,"
                     f" {ps['interference_entries']} interference entries")
    if rep["oracle"]:
        o = rep["oracle"]
        if "states" in o:
            lines.append(f"oracle: {o['states']} states explored"
                         + (", truncated" if o["truncated"] else ""))
        if "converged" in o:
            lines.append(f"oracle: {'converged' if o['converged'] else 'diverged'}"
                         f" after {o['rounds']} rounds,"
                         f" {o['interference_size']} interference triples")
    if rep["check"]:
        c = rep["check"]
        verdict = c["verdict"]
        code = {"PASS": "32", "FAIL": "31"}.get(verdict, "33")
        lines.append(f"inclusion vs {c['against']}: " + _c(verdict, code))
        if c["missing"]:
            lines.append(f"  uncovered labels: {c['missing']}")
    if rep["fuzz"]:
        f = rep["fuzz"]
        lines.append(f"fuzz: {f['trials']} trials,"
                     f" {len(f['violations'])} violation(s),"
                     f" {f['inconclusive']} inconclusive")
        for name in sorted(f["per_rule"]):
            d = f["per_rule"][name]
            lines.append(f"  {name}: applied {d['applied']},"
                         f" skipped {d['skipped']}")
        for c in f["negative_controls"]:
            mark = "detected" if c["detected"] else "MISSED"
            lines.append(f"  control [{c['name']}]: {mark}")
    for w in rep["warnings"]:
        lines.append(_c(f"warning: {w}", "33"))
    if rep["timing_s"] is not None:
        lines.append(f"time: {rep['timing_s']}s")
    return "\n".join(lines) + "\n"


def _parse_thresholds(text: str | None):
    if not text:
        return None
    return tuple(sorted(Fraction(x.strip()) for x in text.split(",") if x.strip()))


def _parse_threads(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    out = []
    for part in text.split(","):
        part = part.strip().lstrip("t")
        if part:
            out.append(int(part))
    return tuple(out)


@click.command(name="analyze")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(MODES), default="scheduled",
              show_default=True, help="analysis or oracle to run")
@click.option("--unroll", type=int, default=3, show_default=True,
              help="loop unrolling bound for oracle control paths")
@click.option("--mono/--no-mono", default=True, show_default=True,
              help="assume a mono-processor real-time scheduler"
                   " (islocked is modeled precisely)")
@click.option("--widening-delay", type=int, default=2, show_default=True,
              help="interference-fixpoint rounds joined before widening")
@click.option("--thresholds", type=str, default=None,
              help="comma-separated widening thresholds, e.g. -1,0,1,10")
@click.option("--self-interference", type=str, default="",
              help="comma-separated thread ids that may run as several"
                   " instances (interference mode)")
@click.option("--budget-states", type=int, default=1_000_000,
              show_default=True, help="oracle state budget")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "json_output", is_flag=True, help="emit JSON")
@click.option("--out", type=click.Path(writable=True), default=None,
              help="write the report to a file instead of stdout")
@click.option("--check-against", type=click.Choice(ANALYZER_MODES),
              default=None, help="compare oracle errors against an"
                                 " analyzer's alarms")
@click.option("--decreasing-pass", is_flag=True,
              help="one decreasing loop re-execution after stabilization")
@click.option("--timing", is_flag=True,
              help="include wall-clock time in the report"
                   " (breaks byte-determinism)")
def main(file, mode, unroll, mono, widening_delay, thresholds,
         self_interference, budget_states, seed, json_output, out,
         check_against, decreasing_pass, timing):
    """Analyze a concurrent program or run a concrete oracle on it."""
    try:
        source = open(file, encoding="utf-8").read()
        program = parse_program(source)
    except (ParseError, OSError, UnicodeDecodeError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)

    cfg = RunConfig(
        mode=mode,
        unroll=unroll,
        widening_delay=widening_delay,
        thresholds=_parse_thresholds(thresholds) or RunConfig.thresholds,
        mono=mono,
        self_interference=_parse_threads(self_interference),
        budget_states=budget_states,
        seed=seed,
        check_against=check_against,
        decreasing_pass=decreasing_pass,
        timing=timing,
    )
    try:
        rep = build_report(program, source, cfg)
    except Exception as e:  # analyzer/oracle internal failure
        click.echo(f"internal error: {e}", err=True)
        sys.exit(3)

    text = report_to_json(rep) if json_output else _human(rep)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False, color=_color_enabled())

    code = rep["exit_code"]
    if rep["check"]:
        code = {"PASS": 0, "FAIL": 1}.get(rep["check"]["verdict"], 3)
    sys.exit(code)


if __name__ == "__main__":
    main()
