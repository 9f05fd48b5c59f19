"""Finite-memory (regular) Defender strategies.

Every vertex ``v`` owns ``mem[v]`` memory elements; an augmented vertex is a
pair ``(v, m)`` with ``1 <= m <= mem[v]``. A regular strategy assigns to each
augmented vertex a distribution over augmented successors ``(w, m')`` with
``v -> w`` in the base graph.

All per-edge quantities live in flat arrays indexed by augmented edge, with
edges grouped by source row (CSR layout, see :class:`AugmentedLayout`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from .graph import PatrollingGraph

AugVertex = tuple[str, int]


class StrategyError(ValueError):
    """Raised for malformed or illegal strategy data."""


def memory_map(g: PatrollingGraph, default: int = 1, **per_vertex: int) -> dict[str, int]:
    mem = {v: default for v in g.vertices}
    mem.update(per_vertex)
    return mem


def check_memory(g: PatrollingGraph, mem: Mapping[str, int]) -> dict[str, int]:
    out = {}
    for v in g.vertices:
        k = mem.get(v)
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 1:
            raise StrategyError(f"memory size of {v!r} must be a positive integer, got {k!r}")
        out[v] = int(k)
    extra = set(mem) - set(g.vertices)
    if extra:
        raise StrategyError(f"memory given for unknown vertices: {sorted(extra)}")
    return out


class AugmentedLayout:
    """Full augmented edge structure of ``(g, mem)``.

    Attributes
    ----------
    aug : list of (vertex, m)
        Augmented vertices in vertex order, memory index ascending.
    src, dst : (K,) int arrays
        Endpoints of every admissible augmented edge, grouped by ``src``.
    row_ptr : (N+1,) int array
        Edges of row ``i`` are ``row_ptr[i]:row_ptr[i+1]``.
    tm : (K,) float array
        Base traversal time of each augmented edge.
    target_of : (N,) int array
        Index into ``g.targets`` for copies of a target, ``-1`` otherwise.
    """

    def __init__(self, g: PatrollingGraph, mem: Mapping[str, int]):
        self.graph = g
        self.mem = check_memory(g, mem)
        self.aug: list[AugVertex] = [(v, m) for v in g.vertices for m in range(1, self.mem[v] + 1)]
        self.index = {a: i for i, a in enumerate(self.aug)}
        succ: dict[str, list[str]] = {v: [] for v in g.vertices}
        for (u, v) in g.edges:
            succ[u].append(v)
        src, dst, tm, row_ptr = [], [], [], [0]
        for i, (v, _) in enumerate(self.aug):
            for w in succ[v]:
                for m2 in range(1, self.mem[w] + 1):
                    src.append(i)
                    dst.append(self.index[(w, m2)])
                    tm.append(g.edges[(v, w)])
            row_ptr.append(len(src))
        self.src = np.asarray(src, dtype=np.intp)
        self.dst = np.asarray(dst, dtype=np.intp)
        self.tm = np.asarray(tm, dtype=float)
        self.row_ptr = np.asarray(row_ptr, dtype=np.intp)
        targets = {t: k for k, t in enumerate(g.targets)}
        self.base = np.asarray([g.index(v) for v, _ in self.aug], dtype=np.intp)
        self.target_of = np.asarray([targets.get(v, -1) for v, _ in self.aug], dtype=np.intp)
        self.costs = np.asarray([g.costs[t] for t in g.targets], dtype=float)
        self.edge_index = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(self.src, self.dst))}

    @property
    def n_aug(self) -> int:
        return len(self.aug)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def n_targets(self) -> int:
        return len(self.costs)

    @cached_property
    def row_starts(self) -> np.ndarray:
        return self.row_ptr[:-1]

    def row_sum(self, x: np.ndarray) -> np.ndarray:
        return np.add.reduceat(x, self.row_starts, axis=-1)

    def row_max(self, x: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(x, self.row_starts, axis=-1)

    def row_argmax(self, x: np.ndarray) -> np.ndarray:
        """Edge index of the first maximum in every row."""
        out = np.empty(self.n_aug, dtype=np.intp)
        for i in range(self.n_aug):
            a, b = self.row_ptr[i], self.row_ptr[i + 1]
            out[i] = a + int(np.argmax(x[a:b]))
        return out

    def target_copies(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.target_of == k)

    def name(self, i: int) -> AugVertex:
        return self.aug[i]


_layouts: dict[tuple[int, tuple], AugmentedLayout] = {}


def layout_for(g: PatrollingGraph, mem: Mapping[str, int]) -> AugmentedLayout:
    key = (id(g), tuple(sorted(mem.items())))
    lay = _layouts.get(key)
    if lay is None or lay.graph is not g:
        if len(_layouts) > 64:
            _layouts.clear()
        lay = _layouts[key] = AugmentedLayout(g, mem)
    return lay


@dataclass(frozen=True)
class AugmentedGraph:
    vertices: tuple[AugVertex, ...]
    edges: tuple[tuple[int, int], ...]

    def named_edges(self) -> set[tuple[AugVertex, AugVertex]]:
        return {(self.vertices[a], self.vertices[b]) for a, b in self.edges}

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    layout: AugmentedLayout
    values: np.ndarray

    def row(self, a: AugVertex) -> np.ndarray:
        i = self.layout.index[a]
        return self.values[self.layout.row_ptr[i] : self.layout.row_ptr[i + 1]]

    def with_values(self, values: np.ndarray) -> "CoefficientMatrix":
        return CoefficientMatrix(self.layout, np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class RegularStrategy:
    """Probabilities over the full augmented edge structure (zeros allowed)."""

    layout: AugmentedLayout
    probs: np.ndarray

    @property
    def graph(self) -> PatrollingGraph:
        return self.layout.graph

    @property
    def memory(self) -> dict[str, int]:
        return self.layout.mem

    @property
    def rows(self) -> dict[AugVertex, dict[AugVertex, float]]:
        lay = self.layout
        out: dict[AugVertex, dict[AugVertex, float]] = {a: {} for a in lay.aug}
        for k in np.flatnonzero(self.probs > 0):
            out[lay.aug[lay.src[k]]][lay.aug[lay.dst[k]]] = float(self.probs[k])
        return out

    def prob(self, a: AugVertex, b: AugVertex) -> float:
        k = self.layout.edge_index.get((self.layout.index[a], self.layout.index[b]))
        return 0.0 if k is None else float(self.probs[k])

    def with_probs(self, probs: np.ndarray) -> "RegularStrategy":
        return RegularStrategy(self.layout, probs)


def from_rows(
    g: PatrollingGraph,
    mem: Mapping[str, int],
    rows: Mapping[AugVertex, Mapping[AugVertex, float]],
    *,
    tol: float = 1e-9,
) -> RegularStrategy:
    """Build a strategy from explicit rows, checking legality and renormalizing.

    Every augmented vertex needs a row; rows must sum to 1 within ``tol``.
    """
    lay = layout_for(g, mem)
    probs = np.zeros(lay.n_edges)
    for a in lay.aug:
        if a not in rows:
            raise StrategyError(f"no distribution given for augmented vertex {a}")
    for a, row in rows.items():
        if a not in lay.index:
            raise StrategyError(f"unknown augmented vertex {a}")
        for b, p in row.items():
            if b not in lay.index:
                raise StrategyError(f"unknown augmented vertex {b}")
            k = lay.edge_index.get((lay.index[a], lay.index[b]))
            if k is None:
                raise StrategyError(f"{a} -> {b} does not follow a graph edge")
            if not (0.0 <= p <= 1.0):
                raise StrategyError(f"probability {p} of {a} -> {b} is outside [0, 1]")
            probs[k] = p
    sums = lay.row_sum(probs)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        i = int(bad[0])
        raise StrategyError(f"row {lay.aug[i]} sums to {sums[i]!r}, expected 1")
    return RegularStrategy(lay, probs / np.repeat(sums, np.diff(lay.row_ptr)))


def check_strategy(sigma: RegularStrategy, tol: float = 1e-12) -> None:
    p = sigma.probs
    if np.any(p < 0) or np.any(p > 1):
        raise StrategyError("probabilities must lie in [0, 1]")
    sums = sigma.layout.row_sum(p)
    if np.any(np.abs(sums - 1.0) > tol):
        raise StrategyError("every row must sum to 1")


# parameterization

def random_init(g: PatrollingGraph, mem: Mapping[str, int], seed) -> CoefficientMatrix:
    lay = layout_for(g, mem)
    rng = np.random.default_rng(seed)
    return CoefficientMatrix(lay, rng.standard_normal(lay.n_edges))


def softmax_values(lay: AugmentedLayout, theta: np.ndarray) -> np.ndarray:
    shifted = theta - np.repeat(lay.row_max(theta), np.diff(lay.row_ptr))
    e = np.exp(shifted)
    return e / np.repeat(lay.row_sum(e), np.diff(lay.row_ptr))


def softmax(theta: CoefficientMatrix) -> RegularStrategy:
    return RegularStrategy(theta.layout, softmax_values(theta.layout, theta.values))


def _renormalize(lay: AugmentedLayout, p: np.ndarray) -> np.ndarray:
    return p / np.repeat(lay.row_sum(p), np.diff(lay.row_ptr))


def cutoff(sigma: RegularStrategy, threshold: float) -> RegularStrategy:
    """Zero entries below ``threshold`` (keeping each row's argmax) and renormalize."""
    lay = sigma.layout
    p = sigma.probs.copy()
    keep = p >= threshold
    keep[lay.row_argmax(p)] = True
    p[~keep] = 0.0
    return sigma.with_probs(_renormalize(lay, p))


def round_endpoints(sigma: RegularStrategy, threshold: float) -> RegularStrategy:
    """Snap entries within ``threshold`` of 0 or 1 to the endpoint and renormalize."""
    lay = sigma.layout
    p = sigma.probs.copy()
    top = lay.row_argmax(p)
    low = p <= threshold
    low[top] = False
    p[low] = 0.0
    p[p >= 1.0 - threshold] = 1.0
    return sigma.with_probs(_renormalize(lay, p))


def entropy(sigma: RegularStrategy) -> float:
    """Mean Shannon entropy (nats) of the rows."""
    p = sigma.probs
    terms = np.zeros_like(p)
    pos = p > 0
    terms[pos] = -p[pos] * np.log(p[pos])
    return float(terms.sum() / sigma.layout.n_aug)


def is_unambiguous(sigma: RegularStrategy) -> bool:
    lay = sigma.layout
    seen = set()
    for k in np.flatnonzero(sigma.probs > 0):
        key = (int(lay.src[k]), int(lay.base[lay.dst[k]]))
        if key in seen:
            return False
        seen.add(key)
    return True


def support_graph(sigma: RegularStrategy) -> AugmentedGraph:
    lay = sigma.layout
    ks = np.flatnonzero(sigma.probs > 0)
    return AugmentedGraph(
        tuple(lay.aug), tuple((int(lay.src[k]), int(lay.dst[k])) for k in ks)
    )


# serialization

def to_dict(sigma: RegularStrategy) -> dict:
    lay = sigma.layout
    rows = []
    for k in np.flatnonzero(sigma.probs > 0):
        a, b = lay.aug[lay.src[k]], lay.aug[lay.dst[k]]
        rows.append({"from": [a[0], a[1]], "to": [b[0], b[1]], "p": float(sigma.probs[k])})
    return {"memory": dict(lay.mem), "rows": rows}


def from_dict(g: PatrollingGraph, data: Mapping) -> RegularStrategy:
    if not isinstance(data, Mapping) or "memory" not in data:
        raise StrategyError("strategy: missing field 'memory'")
    if "rows" not in data:
        raise StrategyError("strategy: missing field 'rows'")
    mem = check_memory(g, data["memory"])
    rows: dict[AugVertex, dict[AugVertex, float]] = {}
    for i, item in enumerate(data["rows"]):
        try:
            a = (str(item["from"][0]), int(item["from"][1]))
            b = (str(item["to"][0]), int(item["to"][1]))
            p = float(item["p"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise StrategyError(f"rows[{i}]: malformed entry ({exc})") from exc
        if b in rows.setdefault(a, {}):
            raise StrategyError(f"rows[{i}]: duplicate entry {a} -> {b}")
        rows[a][b] = p
    return from_rows(g, mem, rows)


def save(sigma: RegularStrategy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(sigma), indent=2) + "\n")


def load(g: PatrollingGraph, path: str | Path) -> RegularStrategy:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise StrategyError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_dict(g, data)


def uniform(g: PatrollingGraph, mem: Mapping[str, int]) -> RegularStrategy:
    lay = layout_for(g, mem)
    return RegularStrategy(lay, _renormalize(lay, np.ones(lay.n_edges)))


__all__ = [
    "AugVertex",
    "AugmentedGraph",
    "AugmentedLayout",
    "CoefficientMatrix",
    "RegularStrategy",
    "StrategyError",
    "check_memory",
    "check_strategy",
    "cutoff",
    "entropy",
    "from_rows",
    "is_unambiguous",
    "layout_for",
    "memory_map",
    "random_init",
    "round_endpoints",
    "softmax",
    "softmax_values",
    "support_graph",
    "uniform",
]
