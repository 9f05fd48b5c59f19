"""Small hand-built instances with known values, used by tests and the CLI."""

from __future__ import annotations

import math

from .graph import PatrollingGraph
from .strategy import RegularStrategy, from_rows


def two_targets_with_loops() -> PatrollingGraph:
    """Two unit-cost targets joined both ways, each with a self-loop; all times 1."""
    return PatrollingGraph(
        ["t1", "t2"],
        {"t1": 1.0, "t2": 1.0},
        {("t1", "t2"): 1, ("t2", "t1"): 1, ("t1", "t1"): 1, ("t2", "t2"): 1},
    )


def alternating_loop(g: PatrollingGraph | None = None) -> RegularStrategy:
    g = g or two_targets_with_loops()
    mem = {"t1": 1, "t2": 1}
    return from_rows(g, mem, {("t1", 1): {("t2", 1): 1.0}, ("t2", 1): {("t1", 1): 1.0}})


def lazy_switching(g: PatrollingGraph | None = None, stay: float = 0.99) -> RegularStrategy:
    g = g or two_targets_with_loops()
    mem = {"t1": 1, "t2": 1}
    return from_rows(
        g,
        mem,
        {
            ("t1", 1): {("t1", 1): stay, ("t2", 1): 1.0 - stay},
            ("t2", 1): {("t2", 1): stay, ("t1", 1): 1.0 - stay},
        },
    )


def hub_with_two_targets() -> PatrollingGraph:
    """``t1 <-> v <-> t2`` with costs 1 and 2 and unit times."""
    return PatrollingGraph(
        ["t1", "v", "t2"],
        {"t1": 1.0, "t2": 2.0},
        {("t1", "v"): 1, ("v", "t1"): 1, ("v", "t2"): 1, ("t2", "v"): 1},
    )


OPTIMAL_HUB_P = (7.0 - math.sqrt(41.0)) / 2.0


def hub_memoryless(g: PatrollingGraph | None = None, p: float = OPTIMAL_HUB_P) -> RegularStrategy:
    """From ``v`` go to ``t1`` w.p. ``p`` and to ``t2`` otherwise; targets return to ``v``."""
    g = g or hub_with_two_targets()
    mem = {"t1": 1, "v": 1, "t2": 1}
    return from_rows(
        g,
        mem,
        {
            ("t1", 1): {("v", 1): 1.0},
            ("t2", 1): {("v", 1): 1.0},
            ("v", 1): {("t1", 1): p, ("t2", 1): 1.0 - p},
        },
    )


def hub_memoryless_value(p: float = OPTIMAL_HUB_P) -> float:
    """Worst attack damage of :func:`hub_memoryless` (closed form)."""
    return max(2.0 + 4.0 / (1.0 - p), 2.0 + (2.0 - p) / p)


def hub_with_memory(g: PatrollingGraph | None = None) -> RegularStrategy:
    """``v`` remembers where it came from: after ``t1`` go to ``t2``; after ``t2`` flip a coin."""
    g = g or hub_with_two_targets()
    mem = {"t1": 1, "v": 2, "t2": 1}
    return from_rows(
        g,
        mem,
        {
            ("t1", 1): {("v", 1): 1.0},
            ("v", 1): {("t2", 1): 1.0},
            ("t2", 1): {("v", 2): 1.0},
            ("v", 2): {("t1", 1): 0.5, ("t2", 1): 0.5},
        },
    )
