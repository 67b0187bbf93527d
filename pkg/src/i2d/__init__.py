"""Information inference diagrams: a modeling language and inference engine
for tracing which information becomes available to which entities."""

from .dsl import ParseError, parse, parse_file, print_diagram, resolve_imports
from .engine import EvalConfig, EvaluationState, evaluate, trace
from .model import (
    Diagram,
    Entity,
    Flow,
    Item,
    Requirement,
    Rule,
    leaf_entities,
    merge_item,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "Diagram",
    "Entity",
    "EvalConfig",
    "EvaluationState",
    "Flow",
    "Item",
    "ParseError",
    "Requirement",
    "Rule",
    "evaluate",
    "leaf_entities",
    "merge_item",
    "parse",
    "parse_file",
    "print_diagram",
    "resolve_imports",
    "trace",
    "validate",
]
