"""Fixpoint evaluation, structural rule expansion and derivation tracing."""

from .evaluate import (
    REWRITE_MODES,
    EvalConfig,
    EvaluationState,
    IterationBoundExceeded,
    Support,
    evaluate,
    initial_state,
    item_universe_size,
    iteration_bound,
    materialize,
)
from .kernels import use_numba
from .structural import StructuralError, expand_structural_rules
from .trace import DerivationTree, TraceError, trace

__all__ = [
    "REWRITE_MODES",
    "DerivationTree",
    "EvalConfig",
    "EvaluationState",
    "IterationBoundExceeded",
    "StructuralError",
    "Support",
    "TraceError",
    "evaluate",
    "expand_structural_rules",
    "initial_state",
    "item_universe_size",
    "iteration_bound",
    "materialize",
    "trace",
    "use_numba",
]
