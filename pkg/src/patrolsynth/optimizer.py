"""Gradient-based strategy synthesis.

Each step: softmax of the coefficients, surrogate loss and its adjoint
gradient, decaying Gaussian noise added to the gradient, one Adam update,
then evaluation of the cut and rounded strategy. The best evaluated strategy
over all steps is returned.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .evaluator import SolverError, evaluate
from .gradient import backward, forward, loss_breakdown
from .graph import PatrollingGraph
from .strategy import (
    CoefficientMatrix,
    RegularStrategy,
    cutoff,
    layout_for,
    random_init,
    round_endpoints,
    softmax,
    softmax_values,
)


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 100
    eps: float = 0.3
    beta: float = 0.2
    learning_rate: float = 0.5
    cutoff_threshold: float = 0.1
    rounding_threshold: float = 0.001
    noise_std0: float = 0.05
    noise_decay: float = 0.95
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.beta < 0 or self.learning_rate <= 0:
            raise ValueError("beta must be >= 0 and learning_rate > 0")
        if self.noise_std0 < 0 or not 0.0 < self.noise_decay <= 1.0:
            raise ValueError("noise_std0 must be >= 0 and noise_decay in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, shape, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        """Return updated parameters (descent direction)."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(state: Adam, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    return state.step(params, grad, lr)


def noise_std(step: int, cfg: OptimizerConfig) -> float:
    return cfg.noise_std0 * cfg.noise_decay**step


def noise(step: int, cfg: OptimizerConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    std = noise_std(step, cfg)
    if std == 0.0:
        return np.zeros(size)
    return rng.normal(0.0, std, size)


@dataclass(frozen=True)
class TraceRecord:
    step: int
    loss: float
    hard_max: float
    eval_value: float
    unambiguous: bool
    seconds: float = field(default=0.0, compare=False)


TRACE_COLUMNS = ("step", "loss", "hard_max", "eval_value", "unambiguous")


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def trace_csv(trace: list[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace:
        w.writerow([r.step, _fmt(r.loss), _fmt(r.hard_max), _fmt(r.eval_value), int(r.unambiguous)])
    return buf.getvalue()


@dataclass
class SynthesisResult:
    best_strategy: RegularStrategy
    best_value: float
    best_step: int
    trace: list[TraceRecord]
    final_coefficients: CoefficientMatrix

    @property
    def mean_step_seconds(self) -> float:
        secs = [r.seconds for r in self.trace if r.step > 0]
        return float(np.mean(secs)) if secs else 0.0


def evaluation_strategy(theta: CoefficientMatrix, cfg: OptimizerConfig) -> RegularStrategy:
    sigma = cutoff(softmax(theta), cfg.cutoff_threshold)
    return round_endpoints(sigma, cfg.rounding_threshold)


def synthesize(
    g: PatrollingGraph,
    mem: Mapping[str, int],
    cfg: OptimizerConfig = OptimizerConfig(),
    init: CoefficientMatrix | None = None,
) -> SynthesisResult:
    """Run one optimization trial; ``cfg.seed`` fixes init and noise streams."""
    lay = layout_for(g, mem)
    init_seq, noise_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    theta = init if init is not None else random_init(g, mem, init_seq)
    rng = np.random.default_rng(noise_seq)
    adam = Adam(lay.n_edges, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    trace: list[TraceRecord] = []
    best_value, best_step, best_sigma = math.inf, 0, None

    def record(step: int, lb, sigma: RegularStrategy, started: float) -> None:
        nonlocal best_value, best_step, best_sigma
        report = evaluate(sigma)
        trace.append(
            TraceRecord(step, lb.total, lb.hard_max, report.value, report.unambiguous,
                        time.perf_counter() - started)
        )
        if best_sigma is None or report.value < best_value:
            best_value, best_step, best_sigma = report.value, step, sigma

    if cfg.steps == 0:
        started = time.perf_counter()
        probs = softmax_values(lay, theta.values)
        lb = loss_breakdown(lay, probs, forward(lay, probs).damages, cfg.eps, cfg.beta)
        record(0, lb, evaluation_strategy(theta, cfg), started)

    for step in range(1, cfg.steps + 1):
        started = time.perf_counter()
        try:
            probs = softmax_values(lay, theta.values)
            fw = forward(lay, probs)
            lb = loss_breakdown(lay, probs, fw.damages, cfg.eps, cfg.beta)
            g_theta = backward(lay, fw, lb, cfg.eps, cfg.beta)
            g_theta = g_theta + noise(step - 1, cfg, rng, lay.n_edges)
            theta = theta.with_values(adam.step(theta.values, g_theta, cfg.learning_rate))
            record(step, lb, evaluation_strategy(theta, cfg), started)
        except SolverError as exc:
            raise SolverError(f"step {step}: {exc}", exc.component, exc.target) from exc

    return SynthesisResult(best_sigma, best_value, best_step, trace, theta)
