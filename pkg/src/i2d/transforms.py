"""Model transformations and views.

All functions are pure: they return a new diagram and leave the input
untouched.  :func:`apply` runs one :class:`Transformation`, re-expands
entity-classification rules (the cascade a change may trigger) and
rejects results that are no longer valid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .engine.structural import (
    StructuralError,
    attach_child,
    expand_structural_rules,
    map_entity,
    retarget_flows,
)
from .model import (
    Diagram,
    Entity,
    EntityRule,
    Flow,
    Item,
    ItemOutcome,
    ItemPattern,
    Requirement,
    Rule,
    leaf_entities,
    merge_item,
    merge_items,
    validate,
    with_implicit_classes,
)

log = logging.getLogger(__name__)

KINDS = (
    "add_item", "add_entity", "add_flow", "classify", "add_rule",
    "add_entity_rule", "add_requirement", "refine", "bisect", "fold",
)


class TransformError(Exception):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, eq=True)
class Transformation:
    kind: str
    params: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transformation {self.kind!r}")


# -- helpers ----------------------------------------------------------------


def _require_entity(d: Diagram, name: str) -> Entity:
    try:
        return d.entity(name)
    except KeyError:
        raise TransformError(f"unknown entity {name}") from None


def _check_fresh_entities(d: Diagram, *entities: Entity) -> None:
    taken = set(d.entity_map)
    for e in entities:
        for sub in e.walk():
            if sub.name in taken:
                raise TransformError(f"entity name collision: {sub.name}")
            taken.add(sub.name)


def _map_flow(flows: tuple, name: str, fn) -> tuple:
    out = []
    for f in flows:
        if f.name == name:
            out.append(fn(f))
        else:
            out.append(replace(f, subflows=_map_flow(f.subflows, name, fn)))
    return tuple(out)


def _fresh_flow_name(d: Diagram, base: str, taken: set | None = None) -> str:
    taken = set(d.flow_map) | (taken or set())
    name, k = base, 2
    while name in taken:
        name = f"{base}_{k}"
        k += 1
    return name


# -- simple additions ------------------------------------------------------


def add_item(d: Diagram, entity: str, item: Item) -> Diagram:
    e = _require_entity(d, entity)
    if e.is_complex:
        raise TransformError(f"{entity} is complex; items belong to simple entities")
    new = replace(e, items=merge_item(e.items, item))
    return replace(d, entities=map_entity(d.entities, entity, lambda _: new))


def add_entity(d: Diagram, entity: Entity, parent: str | None = None) -> Diagram:
    _check_fresh_entities(d, entity)
    if parent is None:
        return replace(d, entities=d.entities + (entity,))
    _require_entity(d, parent)
    try:
        return attach_child(d, parent, entity)
    except StructuralError as exc:
        raise TransformError(str(exc)) from None


def add_flow(d: Diagram, flow: Flow) -> Diagram:
    if not flow.name:
        flow = replace(flow, name=_fresh_flow_name(d, f"{flow.origin}_to_{flow.target}"))
    taken = set(d.flow_map)
    for f in flow.walk():
        if f.name in taken:
            raise TransformError(f"flow name collision: {f.name}")
        taken.add(f.name)
    return replace(d, flows=d.flows + (flow,))


def add_rule(d: Diagram, rule: Rule) -> Diagram:
    return replace(d, rules=d.rules + (rule,))


def add_entity_rule(d: Diagram, rule: EntityRule) -> Diagram:
    return replace(d, entity_rules=d.entity_rules + (rule,))


def add_requirement(d: Diagram, req: Requirement) -> Diagram:
    return replace(d, requirements=d.requirements + (req,))


def classify(d: Diagram, kind: str, names, classes) -> Diagram:
    """Add classes to entities, flows or items.

    Classifying an item changes its identity, so every occurrence of an
    item with that name is reclassified: entity item sets, flow items,
    concrete rule premises and outcomes, requirements and entity-rule seeds.
    """
    names = set(names)
    cs = frozenset(classes)
    if kind == "entity":
        for n in names:
            _require_entity(d, n)
        ents = d.entities
        for n in sorted(names):
            ents = map_entity(ents, n, lambda e: replace(e, classes=e.classes | cs))
        return replace(d, entities=ents, entity_classes=d.entity_classes | cs)
    if kind == "flow":
        flows = d.flows
        for n in sorted(names):
            if n not in d.flow_map:
                raise TransformError(f"unknown flow {n}")
            flows = _map_flow(flows, n, lambda f: replace(f, classes=f.classes | cs))
        return replace(d, flows=flows, flow_classes=d.flow_classes | cs)
    if kind != "item":
        raise TransformError(f"cannot classify {kind}")

    def fix_item(it):
        return replace(it, classes=it.classes | cs) if it.name in names else it

    def fix_entity(e: Entity) -> Entity:
        return replace(e, items=merge_items((), (fix_item(i) for i in e.items)),
                       children=tuple(fix_entity(c) for c in e.children))

    def fix_flow(f: Flow) -> Flow:
        return replace(f, items=merge_items((), (fix_item(i) for i in f.items)),
                       subflows=tuple(fix_flow(s) for s in f.subflows))

    def fix_rule(r: Rule) -> Rule:
        return replace(
            r,
            premises=tuple(fix_item(p) if isinstance(p, ItemPattern) else p for p in r.premises),
            outcomes=tuple(fix_item(o) if isinstance(o, ItemOutcome) else o for o in r.outcomes),
        )

    def fix_req(q: Requirement) -> Requirement:
        return replace(q, items=tuple(
            fix_item(p) if isinstance(p, ItemPattern) else p for p in q.items))

    def fix_erule(er: EntityRule) -> EntityRule:
        return replace(
            er,
            item=fix_item(er.item) if er.item is not None else None,
            entity=fix_entity(er.entity) if er.entity is not None else None,
            flow=fix_flow(er.flow) if er.flow is not None else None,
        )

    return replace(
        d,
        entities=tuple(fix_entity(e) for e in d.entities),
        flows=tuple(fix_flow(f) for f in d.flows),
        rules=tuple(fix_rule(r) for r in d.rules),
        requirements=tuple(fix_req(q) for q in d.requirements),
        entity_rules=tuple(fix_erule(er) for er in d.entity_rules),
        item_classes=d.item_classes | cs,
    )


# -- refinement and bisection ------------------------------------------------


def refine_entity(d: Diagram, entity: str, children, retarget: dict,
                  keep: str | None = None) -> Diagram:
    """Turn simple ``entity`` into a complex one with ``children``.

    ``retarget`` maps every flow touching the entity to the child leaf
    that takes its place; the entity's own items move to child ``keep``.
    """
    e = _require_entity(d, entity)
    if e.is_complex:
        raise TransformError(f"{entity} is already complex")
    children = tuple(children)
    if not children:
        raise TransformError("refinement needs at least one child")
    _check_fresh_entities(d, *children)
    leaves = {l.name for c in children for l in leaf_entities(c)}
    touching = [f.name for f in d.all_flows() if entity in (f.origin, f.target)]
    missing = [n for n in touching if n not in retarget]
    if missing:
        raise TransformError("no retarget entry for flow " + ", ".join(missing))
    for flow, child in retarget.items():
        if flow not in d.flow_map:
            raise TransformError(f"unknown flow {flow}")
        if child not in leaves:
            raise TransformError(f"retarget of {flow}: {child} is not a simple child of {entity}")
    if e.items:
        if keep is None:
            raise TransformError(f"{entity} holds items; name the child that keeps them")
        if keep not in leaves:
            raise TransformError(f"{keep} is not a simple child of {entity}")

    def place(c: Entity) -> Entity:
        if c.name == keep:
            return replace(c, items=merge_items(c.items, e.items))
        return replace(c, children=tuple(place(x) for x in c.children))

    new = replace(e, items=(), children=tuple(place(c) for c in children))
    flows = d.flows
    for flow, child in retarget.items():
        flows = retarget_flows(flows, {entity: child}, only={flow})
    return replace(d, entities=map_entity(d.entities, entity, lambda _: new), flows=flows)


def bisect(d: Diagram, flow: str, mediator) -> Diagram:
    """Route simple flow ``flow`` through ``mediator``.

    The flow becomes complex with sub-flows ``origin -> mediator`` and
    ``mediator -> target`` carrying the same items.  A fresh mediator is
    added as a top-level entity; it starts out holding those flow items the
    origin declares (all declared items for a wildcard flow), at the grade
    the flow lets through.  Items the origin only derives reach the
    mediator through the first sub-flow.  An existing simple mediator merges
    these items by maximum grade.
    """
    if isinstance(mediator, str):
        mediator = Entity(mediator)
    f = d.flow_map.get(flow)
    if f is None:
        raise TransformError(f"unknown flow {flow}")
    if f.is_complex:
        raise TransformError(f"flow {flow} is already complex")
    if mediator.name in (f.origin, f.target):
        raise TransformError("the mediator must differ from both flow endpoints")
    origin = d.entity(f.origin)
    declared = {it.key: it for it in origin.items}
    if f.wildcard:
        seeds = tuple(origin.items)
    else:
        seeds = tuple(
            Item(it.name, it.classes, min(it.grade, declared[it.key].grade))
            for it in f.items if it.key in declared
        )
    seeds = tuple(s for s in seeds if s.grade > 0.0)

    existing = d.entity_map.get(mediator.name)
    if existing is None:
        if mediator.is_complex:
            raise TransformError("the mediator must be a simple entity")
        _check_fresh_entities(d, mediator)
        med = replace(mediator, items=merge_items(mediator.items, seeds))
        entities = d.entities + (med,)
    else:
        if existing.is_complex:
            raise TransformError(f"mediator {mediator.name} is complex")
        clash = [s for s in seeds if any(i.key == s.key and i.grade != s.grade
                                         for i in existing.items)]
        if clash:
            log.warning("mediator %s already holds %s; keeping the higher grade",
                        existing.name, ", ".join(str(c) for c in clash))
        med = replace(existing, classes=existing.classes | mediator.classes,
                      items=merge_items(existing.items, merge_items(mediator.items, seeds)))
        entities = map_entity(d.entities, existing.name, lambda _: med)

    n1 = _fresh_flow_name(d, f"{flow}_1")
    n2 = _fresh_flow_name(d, f"{flow}_2", {n1})
    first = Flow(n1, f.origin, mediator.name, f.classes, f.items, f.wildcard)
    second = Flow(n2, mediator.name, f.target, f.classes, f.items, f.wildcard)
    complex_flow = replace(f, items=(), wildcard=False, subflows=(first, second))
    flows = _map_flow(d.flows, flow, lambda _: complex_flow)
    return replace(d, entities=entities, flows=flows)


# -- views -------------------------------------------------------------------


def _union_flow_items(flows) -> tuple:
    items: tuple = ()
    wildcard = False
    for f in flows:
        for s in f.walk():
            if s.is_complex:
                continue
            wildcard = wildcard or s.wildcard
            items = merge_items(items, s.items)
    return items, wildcard


def collapse_flow(d: Diagram, name: str) -> Diagram:
    """Show complex flow ``name`` as one simple flow carrying its sub-flows' items."""
    f = d.flow_map.get(name)
    if f is None:
        raise TransformError(f"unknown flow {name}")
    if not f.is_complex:
        return d
    items, wildcard = _union_flow_items([f])
    simple = replace(f, items=items, wildcard=wildcard, subflows=())
    return replace(d, flows=_map_flow(d.flows, name, lambda _: simple))


def fold_view(d: Diagram, entity: str, depth: int = 0, flows: str = "deconstruct",
              log_: list | None = None) -> Diagram:
    """Abstract ``entity`` to ``depth`` levels of nesting.

    Entities ``depth`` levels below ``entity`` (``entity`` itself for
    depth 0) become simple; each holds the max-grade union of its former
    leaves' items.  Flows into removed entities are redirected to the
    fold, flows inside a fold are dropped (and noted in ``log_``), and
    duplicate redirected flows merge their items.  With
    ``flows="collapse"`` every complex flow is first shown as a simple one.
    Depths beyond the tree height leave the entity unchanged.
    """
    if flows not in ("collapse", "deconstruct"):
        raise ValueError("flows must be 'collapse' or 'deconstruct'")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    root = _require_entity(d, entity)
    notes = log_ if log_ is not None else []

    if flows == "collapse":
        for f in list(d.flows):
            for sub in f.walk():
                if sub.is_complex:
                    d = collapse_flow(d, sub.name)
                    notes.append(f"collapsed complex flow {sub.name}")
                    break
        root = d.entity(entity)

    mapping: dict = {}

    def fold(e: Entity, level: int) -> Entity:
        if not e.is_complex:
            return e
        if level < depth:
            return replace(e, children=tuple(fold(c, level + 1) for c in e.children))
        items: tuple = ()
        for leaf in leaf_entities(e):
            items = merge_items(items, leaf.items)
            if leaf.name != e.name:
                mapping[leaf.name] = e.name
        return replace(e, items=items, children=())

    new_root = fold(root, 0)
    if not mapping:
        return d
    entities = map_entity(d.entities, entity, lambda _: new_root)

    def redirect(fs: tuple) -> tuple:
        out = []
        for f in fs:
            subs = redirect(f.subflows)
            o = mapping.get(f.origin, f.origin)
            t = mapping.get(f.target, f.target)
            if o == t:
                notes.append(f"dropped flow {f.name} inside {o}")
                continue
            if f.is_complex and not subs:
                notes.append(f"dropped complex flow {f.name}: no sub-flows left")
                continue
            out.append(replace(f, origin=o, target=t, subflows=subs))
        return _merge_duplicates(tuple(out), notes)

    return replace(d, entities=entities, flows=redirect(d.flows))


def _merge_duplicates(flows: tuple, notes: list) -> tuple:
    out: list = []
    index: dict = {}
    for f in flows:
        key = (f.origin, f.target)
        if f.is_complex or key not in index:
            if not f.is_complex:
                index[key] = len(out)
            out.append(f)
            continue
        prev = out[index[key]]
        notes.append(f"merged flow {f.name} into {prev.name}")
        out[index[key]] = replace(
            prev,
            classes=prev.classes | f.classes,
            items=merge_items(prev.items, f.items),
            wildcard=prev.wildcard or f.wildcard,
        )
    return tuple(out)


# -- dispatch ----------------------------------------------------------------


def _run(d: Diagram, t: Transformation) -> Diagram:
    p = t.params
    if t.kind == "add_item":
        return add_item(d, p["entity"], p["item"])
    if t.kind == "add_entity":
        return add_entity(d, p["entity"], p.get("parent"))
    if t.kind == "add_flow":
        return add_flow(d, p["flow"])
    if t.kind == "classify":
        return classify(d, p["kind"], p["names"], p["classes"])
    if t.kind == "add_rule":
        return add_rule(d, p["rule"])
    if t.kind == "add_entity_rule":
        return add_entity_rule(d, p["rule"])
    if t.kind == "add_requirement":
        return add_requirement(d, p["requirement"])
    if t.kind == "refine":
        return refine_entity(d, p["entity"], p["children"], p.get("retarget", {}), p.get("keep"))
    if t.kind == "bisect":
        return bisect(d, p["flow"], p["mediator"])
    return fold_view(d, p["entity"], p.get("depth", 0), p.get("flows", "deconstruct"))


def apply(diagram: Diagram, t: Transformation) -> Diagram:
    """Apply ``t``, cascade entity-classification rules and validate the result."""
    try:
        d = _run(diagram, t)
        d = expand_structural_rules(with_implicit_classes(d))
    except StructuralError as exc:
        raise TransformError(str(exc)) from None
    report = validate(d)
    if report:
        raise TransformError("; ".join(str(i) for i in report.issues))
    return d


def apply_all(diagram: Diagram, transformations) -> Diagram:
    for t in transformations:
        diagram = apply(diagram, t)
    return diagram


def from_statement(stmt) -> Transformation:
    """Build a :class:`Transformation` from a parsed script statement."""
    return Transformation(stmt.kind, dict(stmt.params))


def run_script(diagram: Diagram, statements) -> Diagram:
    """Apply parsed script statements in order; errors name the failing line."""
    for stmt in statements:
        try:
            diagram = apply(diagram, from_statement(stmt))
        except TransformError as exc:
            raise TransformError(f"line {stmt.line}: {exc}", stmt.line) from None
    return diagram
