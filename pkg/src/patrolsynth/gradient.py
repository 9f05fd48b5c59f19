"""Differentiable surrogate of the protection value and its exact gradient.

The forward pass runs on the uncut softmax strategy, whose support is the
full augmented edge structure (one bottom component, every damage finite).
The hard maximum ``m`` of the damages is held constant under
differentiation; the surrogate is

    loss = sum over (target, edge) of ramp(damage)^2 + beta * mean row entropy

with ``ramp(t) = 1 + (t - m) / (eps * m)`` on ``[m - eps*m, m]`` and zero below.
Gradients flow through the hitting-time systems by the adjoint method: one
transposed solve per target, reusing the forward LU factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from .evaluator import SolverError, refined_solve
from .strategy import AugmentedLayout, CoefficientMatrix, softmax_values


def phi(t, m: float, eps: float):
    """Piecewise-linear ramp: 0 below ``m(1-eps)``, rising to 1 at ``t = m``."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= m - eps * m, 1.0 + (t - m) / (eps * m), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LossBreakdown:
    hard_max: float
    soft_loss: float
    entropy_term: float
    phi: np.ndarray  # (|T|, K) ramp values

    @property
    def total(self) -> float:
        return self.soft_loss + self.entropy_term

    def to_dict(self) -> dict:
        return {
            "hard_max": self.hard_max,
            "soft_loss": self.soft_loss,
            "entropy_term": self.entropy_term,
            "total": self.total,
            "active_pairs": int(np.count_nonzero(self.phi)),
        }


@dataclass
class ForwardState:
    probs: np.ndarray
    damages: np.ndarray  # (|T|, K)
    y: np.ndarray  # (|T|, N)
    factors: list
    systems: list  # (A, pinned) per target


def _row_repeat(lay: AugmentedLayout, x: np.ndarray) -> np.ndarray:
    return np.repeat(x, np.diff(lay.row_ptr))


def forward(lay: AugmentedLayout, probs: np.ndarray) -> ForwardState:
    """Solve every target's hitting-time system on the full support of ``probs``."""
    n, T = lay.n_aug, lay.n_targets
    P = np.zeros((n, n))
    np.add.at(P, (lay.src, lay.dst), probs)
    c = lay.row_sum(probs * lay.tm)
    y = np.empty((T, n))
    factors, systems = [], []
    for k in range(T):
        pinned = lay.target_of == k
        A = -P
        A[pinned] = 0.0
        A[np.diag_indices(n)] += 1.0
        ck = np.where(pinned, 0.0, c)
        lu = scipy.linalg.lu_factor(A, check_finite=False)
        try:
            y[k] = refined_solve(lu, A, ck)
        except SolverError as exc:
            raise SolverError(str(exc), component=0, target=lay.graph.targets[k]) from exc
        factors.append(lu)
        systems.append((A, pinned))
    damages = lay.costs[:, None] * (lay.tm[None, :] + y[:, lay.dst])
    return ForwardState(probs, damages, y, factors, systems)


def entropy_values(lay: AugmentedLayout, probs: np.ndarray) -> float:
    return float(scipy.special.entr(probs).sum() / lay.n_aug)


def loss_breakdown(
    lay: AugmentedLayout,
    probs: np.ndarray,
    damages: np.ndarray,
    eps: float,
    beta: float,
    hard_max: float | None = None,
) -> LossBreakdown:
    """Surrogate loss for strictly positive ``probs`` with finite ``damages``.

    ``hard_max`` overrides the maximum; finite-difference checks use it to
    emulate the stop-gradient.
    """
    if not np.all(np.isfinite(damages)):
        raise ValueError("forward damages must be finite (full-support strategy expected)")
    m = float(damages.max()) if hard_max is None else float(hard_max)
    ph = phi(damages, m, eps)
    return LossBreakdown(m, float(np.sum(ph**2)), beta * entropy_values(lay, probs), ph)


def loss(sigma, damages: np.ndarray, eps: float, beta: float) -> LossBreakdown:
    return loss_breakdown(sigma.layout, sigma.probs, damages, eps, beta)


def grad(theta: CoefficientMatrix, eps: float, beta: float) -> tuple[LossBreakdown, np.ndarray]:
    """Loss breakdown and d(total)/d(theta), shaped like ``theta.values``."""
    lay = theta.layout
    probs = softmax_values(lay, theta.values)
    fw = forward(lay, probs)
    lb = loss_breakdown(lay, probs, fw.damages, eps, beta)
    return lb, backward(lay, fw, lb, eps, beta)


def backward(
    lay: AugmentedLayout, fw: ForwardState, lb: LossBreakdown, eps: float, beta: float
) -> np.ndarray:
    m = lb.hard_max
    # d total / d damage; the lower kink takes the ramp-side slope
    g_dmg = 2.0 * lb.phi / (eps * m)
    g_dmg[lb.phi == 0.0] = 0.0
    g_probs = np.zeros(lay.n_edges)
    n = lay.n_aug
    for k in range(lay.n_targets):
        row = g_dmg[k]
        if not np.any(row):
            continue
        g_y = np.bincount(lay.dst, weights=lay.costs[k] * row, minlength=n)
        A, pinned = fw.systems[k]
        lam = refined_solve(fw.factors[k], A, g_y, trans=True)
        live = ~pinned[lay.src]
        g_probs[live] += lam[lay.src[live]] * (lay.tm[live] + fw.y[k, lay.dst[live]])
    if beta:
        g_probs += -beta * (np.log(fw.probs) + 1.0) / lay.n_aug
    # softmax Jacobian, row by row
    inner = lay.row_sum(fw.probs * g_probs)
    return fw.probs * (g_probs - _row_repeat(lay, inner))


def total_with_fixed_max(
    theta_values: np.ndarray, lay: AugmentedLayout, eps: float, beta: float, hard_max: float
) -> LossBreakdown:
    probs = softmax_values(lay, theta_values)
    fw = forward(lay, probs)
    return loss_breakdown(lay, probs, fw.damages, eps, beta, hard_max=hard_max)
