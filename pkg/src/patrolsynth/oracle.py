"""Independent checks for the evaluator.

None of these share code with the direct linear solves: hitting times come
from fixed-point iteration, damages from simulated walks, and the best
deterministic strategy from brute-force enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .evaluator import HittingTimeVector, evaluate
from .gradient import grad, total_with_fixed_max
from .graph import PatrollingGraph
from .strategy import AugVertex, CoefficientMatrix, RegularStrategy, layout_for

ENUMERATION_LIMIT = 10**6


class ConvergenceError(RuntimeError):
    pass


class InstanceTooLarge(ValueError):
    pass


def value_iteration_hitting(
    sigma: RegularStrategy,
    comp,
    target: str,
    tol: float = 1e-10,
    max_iters: int = 10_000_000,
) -> HittingTimeVector:
    """Iterate ``y <- c + P y`` from zero until both the sup-norm step and the
    extrapolated remaining error drop below ``tol``."""
    lay = sigma.layout
    comp = tuple(comp)
    k = sigma.graph.targets.index(target)
    members = np.asarray(comp)
    pinned = lay.target_of[members] == k
    if not pinned.any():
        raise ConvergenceError(f"target {target!r} has no copy in the component")
    local = np.full(lay.n_aug, -1, dtype=np.intp)
    local[members] = np.arange(len(comp))
    ks = np.flatnonzero((sigma.probs > 0) & (local[lay.src] >= 0))
    rows, cols = local[lay.src[ks]], local[lay.dst[ks]]
    live = ~pinned[rows]
    rows, cols, p, tm = rows[live], cols[live], sigma.probs[ks][live], lay.tm[ks][live]
    y = np.zeros(len(comp))
    prev = math.inf
    for _ in range(max_iters):
        new = np.bincount(rows, weights=p * (tm + y[cols]), minlength=len(comp))
        delta = float(np.max(np.abs(new - y), initial=0.0))
        y = new
        # a small step alone does not bound the error on slowly mixing chains;
        # use the observed contraction rate to estimate the remaining distance
        rate = delta / prev if prev > 0 else 0.0
        remaining = delta * rate / (1.0 - rate) if rate < 1.0 else math.inf
        if delta < tol and remaining < tol:
            return HittingTimeVector(comp, target, y)
        prev = delta
    raise ConvergenceError(f"value iteration did not converge in {max_iters} iterations")


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    std_error: float
    samples: int
    truncated: int


def _sampler(sigma: RegularStrategy):
    """Inverse-CDF sampling of successors for a vector of current states."""
    lay = sigma.layout
    within = np.zeros(lay.n_edges)
    for i in range(lay.n_aug):
        a, b = lay.row_ptr[i], lay.row_ptr[i + 1]
        within[a:b] = np.cumsum(sigma.probs[a:b])
    keyed = lay.src + within  # strictly increasing across rows

    def step(states: np.ndarray, u: np.ndarray) -> np.ndarray:
        k = np.searchsorted(keyed, states + u, side="right")
        k = np.clip(k, lay.row_ptr[states], lay.row_ptr[states + 1] - 1)
        # rounding can land on a trailing zero-probability entry; step back
        while True:
            bad = sigma.probs[k] == 0
            if not bad.any():
                return k
            k[bad] -= 1

    return step


def monte_carlo_damage(
    sigma: RegularStrategy,
    edge: tuple[AugVertex, AugVertex],
    target: str,
    samples: int = 100_000,
    horizon: float | None = None,
    seed=None,
) -> MonteCarloEstimate:
    """Empirical damage of attacking ``target`` as the Defender starts along ``edge``.

    Walks first traverse ``edge`` and then follow ``sigma``; each contributes
    ``alpha(target)`` times the time until it first reaches ``target``. Walks
    still running at ``horizon`` are dropped and counted as truncated.
    """
    lay = sigma.layout
    a, b = lay.index[edge[0]], lay.index[edge[1]]
    k0 = lay.edge_index.get((a, b))
    if k0 is None or sigma.probs[k0] <= 0:
        raise ValueError(f"{edge} is not in the support of the strategy")
    rng = np.random.default_rng(seed)
    if horizon is None:
        pilot = _simulate(sigma, k0, lay.graph.targets.index(target), 2_000, math.inf, rng,
                          max_steps=1_000_000)
        finite = pilot[np.isfinite(pilot)]
        horizon = 100.0 * (finite.max() if finite.size else 1.0)
    times = _simulate(sigma, k0, lay.graph.targets.index(target), samples, horizon, rng)
    done = np.isfinite(times)
    alpha = lay.graph.costs[target]
    d = alpha * times[done]
    n = int(done.sum())
    se = float(d.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MonteCarloEstimate(float(d.mean()) if n else math.inf, se, n, int(samples - n))


def _simulate(sigma, k0, target_index, samples, horizon, rng, max_steps=None) -> np.ndarray:
    lay = sigma.layout
    step = _sampler(sigma)
    times = np.full(samples, lay.tm[k0])
    states = np.full(samples, lay.dst[k0], dtype=np.intp)
    active = lay.target_of[states] != target_index
    out = np.where(active, np.inf, times)
    idx = np.flatnonzero(active)
    steps = 0
    while idx.size:
        k = step(states[idx], rng.random(idx.size))
        states[idx] = lay.dst[k]
        times[idx] += lay.tm[k]
        hit = lay.target_of[states[idx]] == target_index
        out[idx[hit]] = times[idx[hit]]
        keep = ~hit & (times[idx] <= horizon)
        idx = idx[keep]
        steps += 1
        if max_steps is not None and steps >= max_steps:
            break
    return out


def enumerate_deterministic(
    g: PatrollingGraph, mem: Mapping[str, int]
) -> tuple[float, RegularStrategy | None]:
    """Best value over all deterministic regular strategies (exhaustive)."""
    lay = layout_for(g, mem)
    degrees = np.diff(lay.row_ptr)
    count = math.prod(int(d) for d in degrees)
    if count > ENUMERATION_LIMIT:
        raise InstanceTooLarge(f"{count} deterministic strategies exceed the limit {ENUMERATION_LIMIT}")
    best_value, best = math.inf, None
    choices = [range(lay.row_ptr[i], lay.row_ptr[i + 1]) for i in range(lay.n_aug)]
    for pick in itertools.product(*choices):
        probs = np.zeros(lay.n_edges)
        probs[list(pick)] = 1.0
        sigma = RegularStrategy(lay, probs)
        value = evaluate(sigma).value
        if best is None or value < best_value:
            best_value, best = value, sigma
    return best_value, best


@dataclass(frozen=True)
class GradientCheck:
    max_rel_error: float
    checked: int
    skipped: int


def gradient_check(
    theta: CoefficientMatrix, eps: float, beta: float, step: float = 1e-5
) -> GradientCheck:
    """Compare the adjoint gradient with central differences, coordinate by coordinate.

    The hard maximum is frozen at its base value (stop-gradient). Coordinates
    whose perturbation moves any damage across the ramp's lower kink are
    skipped and counted.
    """
    base, g = grad(theta, eps, beta)
    band = base.phi > 0
    scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
    worst, checked, skipped = 0.0, 0, 0
    for i in range(len(theta.values)):
        up, down = theta.values.copy(), theta.values.copy()
        up[i] += step
        down[i] -= step
        lu = total_with_fixed_max(up, theta.layout, eps, beta, base.hard_max)
        ld = total_with_fixed_max(down, theta.layout, eps, beta, base.hard_max)
        if not (np.array_equal(lu.phi > 0, band) and np.array_equal(ld.phi > 0, band)):
            skipped += 1
            continue
        fd = (lu.total - ld.total) / (2.0 * step)
        denom = max(abs(fd), abs(g[i]), 1e-6 * scale)
        worst = max(worst, abs(fd - g[i]) / denom)
        checked += 1
    return GradientCheck(float(worst), checked, skipped)
