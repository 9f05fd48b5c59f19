"""Exact protection value of a regular strategy.

For every bottom strongly connected component ``B`` of the strategy's support
and every target ``tau``, the expected time ``y`` to reach ``tau`` from each
augmented vertex of ``B`` solves a linear system. An attack on ``tau`` that
starts while the Defender traverses ``(u, v)`` then costs
``alpha(tau) * (tm(u, v) + y[v])``. The value is the minimum over components
of the worst such damage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .strategy import AugmentedGraph, AugVertex, RegularStrategy, is_unambiguous, support_graph

INFINITE = math.inf
RESIDUAL_TOL = 1e-8
TIE_RTOL = 1e-9


class SolverError(ArithmeticError):
    """A hitting-time system could not be solved to the required residual."""

    def __init__(self, message: str, component: int | None = None, target: str | None = None):
        super().__init__(message)
        self.component = component
        self.target = target


@dataclass(frozen=True)
class BsccDecomposition:
    components: tuple[tuple[int, ...], ...]
    bottom_flags: tuple[bool, ...]

    @property
    def bottom(self) -> list[tuple[int, ...]]:
        return [c for c, b in zip(self.components, self.bottom_flags) if b]


def bottom_sccs(ghat: AugmentedGraph) -> BsccDecomposition:
    """SCC decomposition with bottom flags; components ordered by smallest member."""
    n = len(ghat.vertices)
    if ghat.edges:
        rows, cols = zip(*ghat.edges)
    else:
        rows, cols = (), ()
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(adj, directed=True, connection="strong")
    order: dict[int, int] = {}
    for i in range(n):
        order.setdefault(int(labels[i]), len(order))
    comp_of = np.asarray([order[int(lab)] for lab in labels], dtype=np.intp)
    members: list[list[int]] = [[] for _ in order]
    for i in range(n):
        members[comp_of[i]].append(i)
    bottom = [True] * len(members)
    for a, b in ghat.edges:
        if comp_of[a] != comp_of[b]:
            bottom[comp_of[a]] = False
    return BsccDecomposition(tuple(tuple(m) for m in members), tuple(bottom))


@dataclass(frozen=True)
class HittingTimeVector:
    component: tuple[int, ...]
    target: str
    values: np.ndarray | None  # aligned with ``component``; None when unreachable

    @property
    def infinite(self) -> bool:
        return self.values is None

    def as_dict(self, sigma: RegularStrategy) -> dict[AugVertex, float]:
        aug = sigma.layout.aug
        if self.values is None:
            return {aug[i]: INFINITE for i in self.component}
        return {aug[i]: float(y) for i, y in zip(self.component, self.values)}


def _component_edges(sigma: RegularStrategy, comp: tuple[int, ...]) -> np.ndarray:
    lay = sigma.layout
    ks = [np.arange(lay.row_ptr[i], lay.row_ptr[i + 1]) for i in comp]
    ks = np.concatenate(ks) if ks else np.zeros(0, dtype=np.intp)
    return ks[sigma.probs[ks] > 0]


def component_chain(sigma: RegularStrategy, comp: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Dense transition matrix of ``comp`` and expected one-step times."""
    lay = sigma.layout
    local = np.full(lay.n_aug, -1, dtype=np.intp)
    local[np.asarray(comp)] = np.arange(len(comp))
    ks = _component_edges(sigma, comp)
    rows, cols = local[lay.src[ks]], local[lay.dst[ks]]
    if np.any(cols < 0):
        raise ValueError("component is not closed under the support (not a bottom SCC)")
    P = np.zeros((len(comp), len(comp)))
    np.add.at(P, (rows, cols), sigma.probs[ks])
    c = np.zeros(len(comp))
    np.add.at(c, rows, sigma.probs[ks] * lay.tm[ks])
    return P, c


def pin_target(P: np.ndarray, c: np.ndarray, pinned: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(I - P, c)`` with the rows of ``pinned`` replaced by ``y = 0``."""
    A = -P
    A[pinned] = 0.0
    A[np.diag_indices_from(A)] += 1.0
    c = c.copy()
    c[pinned] = 0.0
    return A, c


def hitting_system(
    sigma: RegularStrategy, comp: tuple[int, ...], target_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(I - P, c)`` restricted to ``comp`` with target rows pinned to zero."""
    P, c = component_chain(sigma, comp)
    return pin_target(P, c, sigma.layout.target_of[np.asarray(comp)] == target_index)


def solve_dense(A: np.ndarray, c: np.ndarray, *, trans: bool = False) -> np.ndarray:
    """LU solve with one step of iterative refinement and a residual check."""
    lu = scipy.linalg.lu_factor(A, check_finite=False)
    return refined_solve(lu, A, c, trans=trans)


def refined_solve(lu, A: np.ndarray, c: np.ndarray, *, trans: bool = False) -> np.ndarray:
    t = 1 if trans else 0
    M = A.T if trans else A
    y = scipy.linalg.lu_solve(lu, c, trans=t, check_finite=False)
    y = y + scipy.linalg.lu_solve(lu, c - M @ y, trans=t, check_finite=False)
    res = np.max(np.abs(M @ y - c), initial=0.0)
    scale = max(1.0, np.max(np.abs(c), initial=0.0), np.max(np.abs(y), initial=0.0))
    if not np.all(np.isfinite(y)) or res > RESIDUAL_TOL * scale:
        raise SolverError(f"linear solve residual {res:.3e} exceeds tolerance")
    return y


def solve_hitting(
    comp: tuple[int, ...], target: str, sigma: RegularStrategy, chain=None
) -> HittingTimeVector:
    """Expected time to first reach ``target`` from each augmented vertex of ``comp``.

    ``comp`` must be a bottom component of the support of ``sigma``.
    """
    k = sigma.graph.targets.index(target)
    comp = tuple(comp)
    pinned = sigma.layout.target_of[np.asarray(comp)] == k
    if not np.any(pinned):
        return HittingTimeVector(comp, target, None)
    if chain is None:
        chain = component_chain(sigma, comp)
    A, c = pin_target(*chain, pinned)
    try:
        y = solve_dense(A, c)
    except SolverError as exc:
        raise SolverError(str(exc), target=target) from exc
    return HittingTimeVector(comp, target, y)


@dataclass(frozen=True)
class DamageMatrix:
    """Expected damages of one bottom component: ``values[target, edge]``."""

    component: tuple[int, ...]
    edges: np.ndarray  # flat augmented-edge indices of E(B)
    values: np.ndarray  # shape (|T|, |E(B)|), inf where the target is unreachable


def damage_edges(
    comp: tuple[int, ...], target: str, y: HittingTimeVector, sigma: RegularStrategy,
    edges: np.ndarray | None = None,
) -> np.ndarray:
    """``alpha(target) * (tm(e) + y[dst(e)])`` for every support edge ``e`` of ``comp``."""
    lay = sigma.layout
    ks = _component_edges(sigma, tuple(comp)) if edges is None else edges
    if y.infinite:
        return np.full(len(ks), INFINITE)
    local = np.full(lay.n_aug, -1, dtype=np.intp)
    local[np.asarray(y.component)] = np.arange(len(y.component))
    alpha = sigma.graph.costs[target]
    return alpha * (lay.tm[ks] + y.values[local[lay.dst[ks]]])


@dataclass(frozen=True)
class Witness:
    component: int
    target: str
    edge: tuple[AugVertex, AugVertex]
    damage: float
    reachable: bool = True
    ties: tuple[tuple[str, tuple[AugVertex, AugVertex]], ...] = ()


@dataclass(frozen=True)
class EvaluationReport:
    value: float
    best_component: int
    components: tuple[tuple[int, ...], ...]
    witness: tuple[Witness, ...]
    unambiguous: bool
    damages: tuple[DamageMatrix, ...] = field(repr=False, default=())
    hitting: dict = field(repr=False, default_factory=dict)

    @property
    def val_equals_bound(self) -> bool:
        return self.unambiguous

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)

    def to_dict(self) -> dict:
        def num(x: float):
            return "inf" if math.isinf(x) else float(x)

        return {
            "value": num(self.value),
            "unambiguous": self.unambiguous,
            "best_component": self.best_component,
            "witness": [
                {
                    "component": w.component,
                    "target": w.target,
                    "edge": [list(w.edge[0]), list(w.edge[1])],
                    "damage": num(w.damage),
                    "ties": [
                        {"target": t, "edge": [list(e[0]), list(e[1])]} for t, e in w.ties
                    ],
                }
                for w in self.witness
            ],
        }


def _argmax_with_ties(values: np.ndarray) -> tuple[int, list[int]]:
    """First index of the maximum, plus every index tied with it (relative tolerance)."""
    flat = values.ravel()
    top = float(np.max(flat))
    if math.isinf(top):
        tied = np.flatnonzero(np.isinf(flat))
    else:
        tied = np.flatnonzero(flat >= top - TIE_RTOL * max(1.0, abs(top)))
    return int(tied[0]), [int(i) for i in tied]


def evaluate(sigma: RegularStrategy, g=None) -> EvaluationReport:
    """Min over bottom components of the max expected damage over (target, edge).

    Ties are broken by lowest component index, then target order, then edge
    order; values equal within a relative ``1e-9`` count as ties.
    """
    if g is not None and g is not sigma.graph and g != sigma.graph:
        raise ValueError("strategy was built for a different graph")
    lay = sigma.layout
    targets = sigma.graph.targets
    dec = bottom_sccs(support_graph(sigma))
    bottoms = dec.bottom
    witnesses, matrices, hitting = [], [], {}
    worst = []
    for ci, comp in enumerate(bottoms):
        ks = _component_edges(sigma, comp)
        chain = component_chain(sigma, comp)
        vals = np.empty((len(targets), len(ks)))
        for ti, t in enumerate(targets):
            try:
                y = solve_hitting(comp, t, sigma, chain)
            except SolverError as exc:
                raise SolverError(
                    f"component {ci}, target {t!r}: {exc}", component=ci, target=t
                ) from exc
            hitting[(ci, t)] = y
            vals[ti] = damage_edges(comp, t, y, sigma, ks)
        matrices.append(DamageMatrix(comp, ks, vals))
        flat, tied = _argmax_with_ties(vals)
        ti, ei = divmod(flat, len(ks))
        edge = (lay.aug[lay.src[ks[ei]]], lay.aug[lay.dst[ks[ei]]])
        ties = tuple(
            (targets[i // len(ks)], (lay.aug[lay.src[ks[i % len(ks)]]], lay.aug[lay.dst[ks[i % len(ks)]]]))
            for i in tied
        )
        dmg = float(vals[ti, ei])
        witnesses.append(Witness(ci, targets[ti], edge, dmg, not math.isinf(dmg), ties))
        worst.append(dmg)
    worst_arr = np.asarray(worst)
    best = int(np.argmin(worst_arr))
    finite = worst_arr[np.isfinite(worst_arr)]
    if finite.size:
        low = float(finite.min())
        best = int(np.flatnonzero(worst_arr <= low + TIE_RTOL * max(1.0, abs(low)))[0])
    return EvaluationReport(
        value=float(worst_arr[best]),
        best_component=best,
        components=tuple(bottoms),
        witness=tuple(witnesses),
        unambiguous=is_unambiguous(sigma),
        damages=tuple(matrices),
        hitting=hitting,
    )


def attacker_best_response(report: EvaluationReport) -> list[dict]:
    """Per bottom component: the target to attack and the augmented edge that triggers it."""
    return [
        {
            "component": w.component,
            "target": w.target,
            "edge": w.edge,
            "damage": w.damage,
            "unreachable": not w.reachable,
        }
        for w in report.witness
    ]
