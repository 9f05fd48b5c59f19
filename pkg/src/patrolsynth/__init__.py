"""Finite-memory Defender strategies for adversarial patrolling graphs."""

from .evaluator import EvaluationReport, attacker_best_response, evaluate, solve_hitting
from .graph import PatrollingGraph, gen_airport, gen_grid, validate
from .optimizer import OptimizerConfig, SynthesisResult, synthesize
from .strategy import RegularStrategy, cutoff, entropy, is_unambiguous, softmax

__version__ = "0.1.0"

__all__ = [
    "EvaluationReport",
    "OptimizerConfig",
    "PatrollingGraph",
    "RegularStrategy",
    "SynthesisResult",
    "attacker_best_response",
    "cutoff",
    "entropy",
    "evaluate",
    "gen_airport",
    "gen_grid",
    "is_unambiguous",
    "softmax",
    "solve_hitting",
    "synthesize",
    "validate",
]
