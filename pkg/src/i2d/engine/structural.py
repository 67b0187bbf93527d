"""Expansion of entity-classification rules that change structure.

``erule c -> entity E`` attaches E as a child of every c-classified
entity.  A simple parent turns complex; its own items and flow
endpoints move to a residual leaf ``<parent>_self`` so that every flow
still ends at a simple entity.  ``erule c -> flow ...`` adds a flow per
leaf of every c-classified entity, creating a missing counterpart as a
new top-level entity.  Item outcomes are seeded by the evaluator.
"""

from __future__ import annotations

from dataclasses import replace

from ..model import (
    SELF,
    Diagram,
    Entity,
    Flow,
    leaf_entities,
    with_implicit_classes,
)


class StructuralError(Exception):
    pass


def residual_name(parent: str) -> str:
    return f"{parent}_self"


def map_entity(entities: tuple, name: str, fn) -> tuple:
    """Rebuild the forest with ``fn`` applied to the entity called ``name``."""
    out = []
    for e in entities:
        if e.name == name:
            out.append(fn(e))
        elif e.children:
            out.append(replace(e, children=map_entity(e.children, name, fn)))
        else:
            out.append(e)
    return tuple(out)


def retarget_flows(flows: tuple, mapping: dict, only: set | None = None) -> tuple:
    """Rename flow endpoints through ``mapping`` (restricted to flow names in ``only``)."""
    out = []
    for f in flows:
        subs = retarget_flows(f.subflows, mapping, only)
        if only is None or f.name in only:
            f = replace(f, origin=mapping.get(f.origin, f.origin),
                        target=mapping.get(f.target, f.target))
        out.append(replace(f, subflows=subs))
    return tuple(out)


def attach_child(diagram: Diagram, parent: str, child: Entity) -> Diagram:
    """Add ``child`` below ``parent``; a simple parent with content gets a residual leaf."""
    taken = set(diagram.entity_map)
    for e in child.walk():
        if e.name in taken:
            raise StructuralError(f"entity name collision: {e.name}")
        taken.add(e.name)
    target = diagram.entity(parent)
    flows = diagram.flows
    if target.is_complex:
        new = replace(target, children=target.children + (child,))
    else:
        touching = any(parent in (f.origin, f.target) for f in diagram.all_flows())
        children: tuple = ()
        if target.items or touching:
            res = residual_name(parent)
            if res in taken:
                raise StructuralError(f"entity name collision: {res}")
            children = (Entity(res, frozenset(), target.items),)
            flows = retarget_flows(flows, {parent: res})
        new = replace(target, items=(), children=children + (child,))
    entities = map_entity(diagram.entities, parent, lambda _: new)
    return replace(diagram, entities=entities, flows=flows)


def _instantiate_flow(template: Flow, leaf: str, base: str) -> Flow:
    origin = leaf if template.origin == SELF else template.origin
    target = leaf if template.target == SELF else template.target
    name = template.name or base
    return replace(template, name=f"{name}_{leaf}", origin=origin, target=target)


def expand_structural_rules(diagram: Diagram) -> Diagram:
    """Apply entity and flow outcomes of entity-classification rules to a fixpoint.

    Idempotent: children and flows already present are not added twice.
    """
    if not any(er.entity or er.flow for er in diagram.entity_rules):
        return diagram
    applied: set = set()
    changed = True
    while changed:
        changed = False
        for idx, er in enumerate(diagram.entity_rules):
            if er.item is not None:
                continue
            classed = [e.name for e in diagram.all_entities() if er.cls in e.classes]
            for name in classed:
                if (idx, name) in applied:
                    continue
                applied.add((idx, name))
                if er.entity is not None:
                    current = diagram.entity(name)
                    if any(c.name == er.entity.name for c in current.children):
                        continue
                    diagram = attach_child(diagram, name, er.entity)
                    changed = True
                else:
                    diagram, added = _add_rule_flows(diagram, idx, er.flow, name)
                    changed = changed or added
    return with_implicit_classes(diagram)


def _add_rule_flows(diagram: Diagram, idx: int, template: Flow, name: str):
    other = template.target if template.origin == SELF else template.origin
    ents = diagram.entity_map
    added = False
    if other not in ents:
        diagram = replace(diagram, entities=diagram.entities + (Entity(other),))
        ents = diagram.entity_map
    elif ents[other].is_complex:
        raise StructuralError(
            f"entity rule E{idx + 1}: counterpart {other} is complex and cannot be a flow endpoint")
    for leaf in leaf_entities(ents[name]):
        if leaf.name == other:
            raise StructuralError(
                f"entity rule E{idx + 1}: flow from {other} to itself")
        f = _instantiate_flow(template, leaf.name, f"erule{idx + 1}")
        existing = diagram.flow_map.get(f.name)
        if existing is not None:
            if (existing.origin, existing.target) == (f.origin, f.target):
                continue
            raise StructuralError(f"flow name collision: {f.name}")
        diagram = replace(diagram, flows=diagram.flows + (f,))
        added = True
    return diagram, added
