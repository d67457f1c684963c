"""Dataclass configuration shared by the analyzers and the CLI."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .domains import DEFAULT_THRESHOLDS


@dataclass(frozen=True)
class AnalysisSettings:
    """Tuning knobs of the abstract analyzers."""

    thresholds: tuple[Fraction, ...] = DEFAULT_THRESHOLDS
    widening_delay: int = 2  # outer interference rounds joined before widening
    # the outer interference widening jumps straight to +/-inf: the loop
    # lims inside each round already climb the threshold ladder, and a
    # ladder-free outer widening keeps the round count small and flat
    interference_thresholds: tuple[Fraction, ...] = ()
    decreasing_pass: bool = False  # one loop re-execution after stabilization
    partition_cap: int = 256  # scheduled-env partitions before coarsening
    loop_iter_cap: int = 10_000  # safety bound asserted on every loop lim
    outer_round_cap: int = 64  # safety bound on interference fixpoints
    self_interference: frozenset[int] = frozenset()  # multi-instance threads


@dataclass(frozen=True)
class OracleBudget:
    """Exploration limits for the concrete oracles."""

    max_states: int = 1_000_000
    max_path_len: int = 10_000
    max_interference: int = 200_000  # concrete interference set size
    max_rounds: int = 50  # concrete interference outer rounds
    loop_budget: int = 10_000  # Kleene state budget inside exec_stmt
