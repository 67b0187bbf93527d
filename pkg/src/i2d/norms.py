"""Checking normative requirements against an evaluated diagram.

``a, b in E`` holds when every listed item is present somewhere in E
(at least one leaf of a complex entity); ``a, b not-in E`` holds when no
leaf of E holds any of them.  Presence means a grade above the check
threshold.  Class atoms such as ``sec(x)`` stand for every item carrying
the class, each matching (entity, item) pair being its own witness.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import EvaluationState, trace
from .engine.trace import DerivationTree
from .model import ClassAtom, Diagram, ItemPattern, Requirement, format_key, leaf_entities


class TargetError(LookupError):
    pass


@dataclass(frozen=True)
class Witness:
    entity: str
    item: tuple
    grade: float
    derivation: DerivationTree | None = None


@dataclass(frozen=True)
class Missing:
    """An item pattern absent from a target group of an ``in`` requirement."""

    entity: str
    pattern: str


@dataclass(frozen=True)
class Verdict:
    index: int
    requirement: Requirement
    satisfied: bool
    threshold: float
    witnesses: tuple = ()
    missing: tuple = ()

    @property
    def status(self) -> str:
        return "satisfied" if self.satisfied else "violated"


def _leaf_names(diagram: Diagram, name: str) -> list:
    return [l.name for l in leaf_entities(diagram.entity(name))]


def target_groups(req: Requirement, diagram: Diagram) -> list:
    """``(member, leaves)`` groups a requirement quantifies over.

    A named entity is one group; an entity class gives one group per
    classed entity; the wildcard gives one group per leaf outside the
    exceptions.
    """
    ents = diagram.entity_map
    if req.target is None:
        excluded = set()
        for ex in req.exceptions:
            if ex not in ents:
                raise TargetError(f"unknown entity {ex}")
            excluded.update(_leaf_names(diagram, ex))
        return [(l.name, [l.name]) for l in diagram.leaves() if l.name not in excluded]
    if req.target in ents:
        return [(req.target, _leaf_names(diagram, req.target))]
    if req.target in diagram.entity_classes:
        return [
            (e.name, _leaf_names(diagram, e.name))
            for e in diagram.all_entities()
            if req.target in e.classes
        ]
    raise TargetError(f"unknown entity or entity class {req.target}")


def resolve_target(req: Requirement, diagram: Diagram) -> set:
    """The simple entities a requirement talks about."""
    out: set = set()
    for _, leaves in target_groups(req, diagram):
        out.update(leaves)
    return out


def _matches(pattern, key) -> bool:
    if isinstance(pattern, ItemPattern):
        return key == pattern.key
    return pattern.cls in key[1]


def _pattern_text(pattern) -> str:
    if isinstance(pattern, ClassAtom):
        return f"{pattern.cls}({pattern.var})"
    return format_key(pattern.key)


def check_requirement(req: Requirement, state: EvaluationState, index: int = 0,
                      threshold: float = 0.0, diagram: Diagram | None = None,
                      with_traces: bool = True) -> Verdict:
    diagram = diagram or state.diagram
    groups = target_groups(req, diagram)
    if not req.present:
        witnesses = []
        seen: set = set()
        for _, leaves in groups:
            for leaf in leaves:
                held = state.items.get(leaf, {})
                for pattern in req.items:
                    for key in sorted(held, key=lambda k: (k[0], sorted(k[1]))):
                        g = held[key]
                        if g > threshold and _matches(pattern, key) and (leaf, key) not in seen:
                            seen.add((leaf, key))
                            tree = trace(state, leaf, key) if with_traces else None
                            witnesses.append(Witness(leaf, key, g, tree))
        return Verdict(index, req, not witnesses, threshold, tuple(witnesses))
    missing = []
    for member, leaves in groups:
        for pattern in req.items:
            found = any(
                g > threshold and _matches(pattern, key)
                for leaf in leaves
                for key, g in state.items.get(leaf, {}).items()
            )
            if not found:
                missing.append(Missing(member, _pattern_text(pattern)))
    return Verdict(index, req, not missing, threshold, missing=tuple(missing))


def check(state: EvaluationState, diagram: Diagram | None = None,
          threshold: float = 0.0, with_traces: bool = True) -> list:
    """One :class:`Verdict` per requirement of ``diagram`` (default: the evaluated one).

    Targets are resolved against the evaluated diagram, so children and
    flows added by entity-classification rules count.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    reqs = (diagram or state.diagram).requirements
    return [
        check_requirement(req, state, i, threshold, state.diagram, with_traces)
        for i, req in enumerate(reqs, 1)
    ]
