"""Patrolling graphs: data model, validation, generators and JSON I/O.

A patrolling graph is a directed graph whose vertices are Defender positions,
some of which are targets carrying a cost (damage per time unit), and whose
edges carry an integral traversal time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


class GraphError(ValueError):
    """Raised when a graph file cannot be parsed or fails validation."""


class PatrollingGraph:
    """Terrain model: vertices, target costs and timed edges.

    ``costs`` maps each target to its damage per time unit; its insertion
    order fixes the target order used everywhere else. ``edges`` maps
    ``(u, v)`` to the traversal time. Treat instances as immutable.
    """

    def __init__(
        self,
        vertices: Iterable[str],
        costs: Mapping[str, float],
        edges: Mapping[tuple[str, str], int],
    ):
        self.vertices: tuple[str, ...] = tuple(vertices)
        self.costs: dict[str, float] = dict(costs)
        self.edges: dict[tuple[str, str], int] = dict(edges)
        self._index = {v: i for i, v in enumerate(self.vertices)}

    def __repr__(self) -> str:
        return (
            f"PatrollingGraph(|V|={len(self.vertices)}, |T|={len(self.costs)}, "
            f"|E|={len(self.edges)})"
        )

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(self.costs)

    def index(self, vertex: str) -> int:
        return self._index[vertex]

    def is_target(self, vertex: str) -> bool:
        return vertex in self.costs

    def successors(self, vertex: str) -> list[str]:
        return [v for (u, v) in self.edges if u == vertex]

    def tm(self, u: str, v: str) -> int:
        return self.edges[(u, v)]

    @property
    def tm_max(self) -> int:
        return max(self.edges.values())

    @property
    def alpha_max(self) -> float:
        return max(self.costs.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PatrollingGraph):
            return NotImplemented
        return (
            self.vertices == other.vertices
            and list(self.costs.items()) == list(other.costs.items())
            and dict(self.edges) == dict(other.edges)
        )

    def __hash__(self) -> int:
        return hash((self.vertices, tuple(self.costs.items()), frozenset(self.edges.items())))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[tuple[str, str], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_failed(self) -> None:
        if self.violations:
            raise GraphError("; ".join(msg for _, msg in self.violations))


def scc_count(n: int, pairs: Iterable[tuple[int, int]]) -> int:
    pairs = list(pairs)
    if not pairs:
        return n
    rows, cols = zip(*pairs)
    adj = csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(n, n))
    count, _ = connected_components(adj, directed=True, connection="strong")
    return int(count)


def validate(g: PatrollingGraph) -> ValidationReport:
    """Check every structural invariant of ``g``; violations are collected, never raised."""
    out: list[tuple[str, str]] = []
    if len(set(g.vertices)) != len(g.vertices):
        out.append(("duplicate-vertex", "vertex identifiers must be unique"))
    known = set(g.vertices)
    if not g.costs:
        out.append(("no-targets", "at least one target is required"))
    for t, cost in g.costs.items():
        if t not in known:
            out.append(("unknown-target", f"target {t!r} is not a vertex"))
        if not (isinstance(cost, (int, float)) and math.isfinite(cost) and cost > 0):
            out.append(("bad-cost", f"cost of target {t!r} must be > 0, got {cost!r}"))
    for (u, v), t in g.edges.items():
        if u not in known or v not in known:
            out.append(("unknown-endpoint", f"edge ({u!r}, {v!r}) references an unknown vertex"))
        if isinstance(t, bool) or not isinstance(t, (int, np.integer)) or t < 1:
            out.append(("bad-time", f"traversal time must be ≥ 1 (integer), got {t!r} on ({u!r}, {v!r})"))
    if not any(rule in ("duplicate-vertex", "unknown-endpoint") for rule, _ in out):
        has_out = {u for (u, _) in g.edges}
        for v in g.vertices:
            if v not in has_out:
                out.append(("not-strongly-connected", f"vertex {v!r} has no outgoing edge"))
        pairs = [(g.index(u), g.index(v)) for (u, v) in g.edges]
        if not g.vertices or scc_count(len(g.vertices), pairs) != 1:
            out.append(("not-strongly-connected", "graph is not strongly connected"))
    return ValidationReport(tuple(out))


# generators

def gen_grid(n: int, seed: int) -> PatrollingGraph:
    """Random patrolling graph derived from an ``n x n`` grid.

    ``n`` grid cells are sampled without replacement; the first ``ceil(n/2)``
    in sampled order become unit-cost targets. Travel time between two chosen
    cells is their grid (Manhattan) distance. An edge is dropped when some
    third chosen cell lies on a route of at most the same length.
    """
    if n < 2:
        raise ValueError("grid size must be at least 2")
    rng = np.random.default_rng(seed)
    cells = rng.choice(n * n, size=n, replace=False)
    coords = [(int(c) // n, int(c) % n) for c in cells]
    names = [f"r{r}c{c}" for r, c in coords]

    def dist(a: int, b: int) -> int:
        return abs(coords[a][0] - coords[b][0]) + abs(coords[a][1] - coords[b][1])

    edges = {}
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            d = dist(a, b)
            if any(dist(a, w) + dist(w, b) <= d for w in range(n) if w != a and w != b):
                continue
            edges[(names[a], names[b])] = d
    costs = {names[i]: 1.0 for i in range(math.ceil(n / 2))}
    g = PatrollingGraph(names, costs, edges)
    report = validate(g)
    assert report.ok, report.violations
    return g


def gen_airport(gate_counts: Iterable[int]) -> PatrollingGraph:
    """Airport graph: a centre ``C`` with one chain of halls per terminal.

    Each hall serves two gates. The hall nearest the centre is attached to
    ``C``; every edge is bidirectional with unit time and every gate is a
    unit-cost target.
    """
    gate_counts = list(gate_counts)
    if not gate_counts:
        raise ValueError("at least one terminal is required")
    for k in gate_counts:
        if k < 2 or k % 2:
            raise ValueError(f"gate counts must be even and at least 2, got {k}")
    vertices = ["C"]
    costs: dict[str, float] = {}
    edges: dict[tuple[str, str], int] = {}

    def link(a: str, b: str) -> None:
        edges[(a, b)] = 1
        edges[(b, a)] = 1

    for t, k in enumerate(gate_counts):
        prev = "C"
        for h in range(k // 2):
            hall = f"T{t}H{h}"
            vertices.append(hall)
            link(prev, hall)
            for side in "ab":
                gate = f"T{t}G{h}{side}"
                vertices.append(gate)
                costs[gate] = 1.0
                link(hall, gate)
            prev = hall
    return PatrollingGraph(vertices, costs, edges)


def random_gate_counts(total_gates: int, seed: int, terminals: int = 3) -> list[int]:
    """Split ``total_gates`` (even) into ``terminals`` random even counts, each ≥ 2."""
    if total_gates % 2 or total_gates < 2 * terminals:
        raise ValueError("total gate count must be even and allow two gates per terminal")
    rng = np.random.default_rng(seed)
    pairs = total_gates // 2 - terminals
    extra = np.bincount(rng.integers(0, terminals, size=pairs), minlength=terminals)
    return [int(2 * (1 + e)) for e in extra]


def random_graph(n: int, seed, *, extra_edges: float = 0.3, max_time: int = 3) -> PatrollingGraph:
    """Small random strongly connected graph for property tests.

    A random Hamiltonian cycle guarantees strong connectivity; each remaining
    ordered pair (self-loops included) becomes an edge with probability
    ``extra_edges``. Roughly half of the vertices are targets with costs in
    ``[0.5, 2]``.
    """
    rng = np.random.default_rng(seed)
    names = [f"v{i}" for i in range(n)]
    order = rng.permutation(n)
    edges = {}
    for a, b in zip(order, np.roll(order, -1)):
        if a != b:
            edges[(names[a], names[b])] = int(rng.integers(1, max_time + 1))
    for a in range(n):
        for b in range(n):
            if (names[a], names[b]) not in edges and rng.random() < extra_edges:
                edges[(names[a], names[b])] = int(rng.integers(1, max_time + 1))
    if n == 1 and not edges:
        edges[(names[0], names[0])] = 1
    k = max(1, n // 2)
    chosen = sorted(rng.choice(n, size=k, replace=False))
    costs = {names[i]: float(np.round(rng.uniform(0.5, 2.0), 3)) for i in chosen}
    return PatrollingGraph(names, costs, edges)


def airport_baseline(g: PatrollingGraph) -> int:
    """Length of the shortest closed walk through all gates of an airport tree."""
    return 2 * (len(g.vertices) - 1)


# serialization

def to_dict(g: PatrollingGraph) -> dict:
    return {
        "vertices": list(g.vertices),
        "targets": [{"vertex": t, "cost": float(c)} for t, c in g.costs.items()],
        "edges": [{"from": u, "to": v, "time": int(t)} for (u, v), t in g.edges.items()],
    }


def _field(obj: Mapping, key: str, where: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise GraphError(f"{where}: missing field {key!r}")
    return obj[key]


def from_dict(data: Mapping, *, check: bool = True) -> PatrollingGraph:
    vertices = _field(data, "vertices", "graph")
    if not isinstance(vertices, list) or not all(isinstance(v, str) for v in vertices):
        raise GraphError("graph: field 'vertices' must be a list of strings")
    costs: dict[str, float] = {}
    for i, item in enumerate(_field(data, "targets", "graph")):
        where = f"targets[{i}]"
        vertex = _field(item, "vertex", where)
        if vertex in costs:
            raise GraphError(f"{where}: duplicate target {vertex!r}")
        costs[vertex] = _field(item, "cost", where)
    edges: dict[tuple[str, str], int] = {}
    for i, item in enumerate(_field(data, "edges", "graph")):
        where = f"edges[{i}]"
        key = (_field(item, "from", where), _field(item, "to", where))
        if key in edges:
            raise GraphError(f"{where}: duplicate edge {key!r}")
        edges[key] = _field(item, "time", where)
    g = PatrollingGraph(vertices, costs, edges)
    if check:
        validate(g).raise_if_failed()
    return g


def save(g: PatrollingGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(g), indent=2) + "\n")


def load(path: str | Path) -> PatrollingGraph:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_dict(data)
