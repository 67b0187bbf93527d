"""Canonical text rendering of diagrams.

``parse(print_diagram(d)) == d`` for every valid diagram ``d``.
"""

from __future__ import annotations

from dataclasses import replace

from ..model import (
    AnyClassAtom,
    ClassAtom,
    Diagram,
    Entity,
    EntityRule,
    Flow,
    Item,
    ItemPattern,
    Requirement,
    Rule,
    format_classes,
    format_key,
    with_implicit_classes,
)

INDENT = "  "


def _grade(g: float) -> str:
    return "" if g == 1.0 else f" @{g!r}"


def format_item_decl(it: Item) -> str:
    cs = sorted(it.classes)
    s = f"item {it.name}"
    if cs:
        s += " : " + ", ".join(cs)
    return s + _grade(it.grade) + ";"


def format_itemref(it: Item) -> str:
    return format_key(it.key) + ("" if it.grade == 1.0 else f"@{it.grade!r}")


def format_entity(e: Entity, depth: int = 0) -> list:
    pad = INDENT * depth
    head = f"entity {e.name}"
    if e.classes:
        head += " : " + ", ".join(sorted(e.classes))
    if not e.items and not e.children:
        return [pad + head + ";"]
    lines = [pad + head + " {"]
    for it in e.items:
        lines.append(pad + INDENT + format_item_decl(it))
    for c in e.children:
        lines.extend(format_entity(c, depth + 1))
    lines.append(pad + "}")
    return lines


def format_flow(f: Flow, depth: int = 0) -> list:
    pad = INDENT * depth
    head = "flow "
    if f.name:
        head += f"{f.name}: "
    head += f"{f.origin} -> {f.target}"
    if f.classes:
        head += " : " + ", ".join(sorted(f.classes))
    if f.items or f.wildcard:
        refs = (["*"] if f.wildcard else []) + [format_itemref(i) for i in f.items]
        head += " [" + ", ".join(refs) + "]"
    if not f.subflows:
        return [pad + head + ";"]
    lines = [pad + head + " {"]
    for s in f.subflows:
        lines.extend(format_flow(s, depth + 1))
    lines.append(pad + "}")
    return lines


def format_premise(p) -> str:
    if isinstance(p, ItemPattern):
        return format_key(p.key)
    if isinstance(p, ClassAtom):
        return ("!" if p.negated else "") + f"{p.cls}({p.var})"
    if isinstance(p, AnyClassAtom):
        return f"*{p.capture or ''}({p.var})"
    raise TypeError(p)


def format_outcome(o) -> str:
    name = getattr(o, "name", None) or o.var
    return name + format_classes(o.classes | o.class_vars)


def format_rule(r: Rule) -> str:
    s = "rule "
    if r.scope:
        s += "on " + ", ".join(sorted(r.scope)) + ": "
    s += ", ".join(format_premise(p) for p in r.premises)
    if r.rewrite:
        s += " => "
    else:
        s += " |- "
        if r.probability != 1.0:
            s += f"@{r.probability!r} "
    s += ", ".join(format_outcome(o) for o in r.outcomes)
    return s + ";"


def format_entity_rule(er: EntityRule) -> list:
    head = f"erule {er.cls} -> "
    if er.item is not None:
        return [head + format_item_decl(er.item)]
    if er.entity is not None:
        lines = format_entity(er.entity)
        lines[0] = head + lines[0]
        return lines
    lines = format_flow(er.flow)
    lines[0] = head + lines[0]
    return lines


def format_requirement(req: Requirement) -> str:
    items = ", ".join(
        format_premise(p) for p in req.items
    )
    op = "in" if req.present else "not-in"
    if req.target is None:
        target = "*"
        if req.exceptions:
            target += " \\ " + ", ".join(req.exceptions)
    else:
        target = req.target
    return f"require {items} {op} {target};"


def print_diagram(diagram: Diagram) -> str:
    """Canonical DSL text for ``diagram``; empty diagrams print as ``""``."""
    sections: list = []
    if diagram.imports:
        sections.append([f'use "{name}";' for name in diagram.imports])

    implicit = with_implicit_classes(replace(
        diagram, item_classes=frozenset(), entity_classes=frozenset(),
        flow_classes=frozenset()))
    decls = []
    for kind, declared, used in (
        ("item", diagram.item_classes, implicit.item_classes),
        ("entity", diagram.entity_classes, implicit.entity_classes),
        ("flow", diagram.flow_classes, implicit.flow_classes),
    ):
        extra = sorted(declared - used)
        if extra:
            decls.append(f"class {kind} " + ", ".join(extra) + ";")
    if decls:
        sections.append(decls)

    if diagram.entities:
        lines = []
        for e in diagram.entities:
            lines.extend(format_entity(e))
        sections.append(lines)
    if diagram.flows:
        lines = []
        for f in diagram.flows:
            lines.extend(format_flow(f))
        sections.append(lines)
    if diagram.rules or diagram.entity_rules:
        lines = [format_rule(r) for r in diagram.rules]
        for er in diagram.entity_rules:
            lines.extend(format_entity_rule(er))
        sections.append(lines)
    if diagram.requirements:
        sections.append([format_requirement(r) for r in diagram.requirements])
    if not sections:
        return ""
    return "\n\n".join("\n".join(s) for s in sections) + "\n"
