"""Immutable data model for information inference diagrams.

Diagrams are trees of entities holding fuzzy sets of information items,
flows between simple entities, inference rules, entity-classification
rules and normative requirements.  Every value here is a frozen
dataclass; transformations build new diagrams instead of mutating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Iterator, Union

ItemKey = tuple[str, frozenset]

SELF = "self"


def item_key(name: str, classes: Iterable[str] = ()) -> ItemKey:
    return (name, frozenset(classes))


def format_classes(classes: Iterable[str]) -> str:
    cs = sorted(classes)
    if not cs:
        return ""
    if len(cs) == 1:
        return ":" + cs[0]
    return ":{" + ",".join(cs) + "}"


def format_key(key: ItemKey) -> str:
    """Render an item identity as ``name``, ``name:c`` or ``name:{c,d}``."""
    return key[0] + format_classes(key[1])


def parse_key(text: str) -> ItemKey:
    """Inverse of :func:`format_key`."""
    name, _, rest = text.partition(":")
    rest = rest.strip()
    if rest.startswith("{") and rest.endswith("}"):
        rest = rest[1:-1]
    classes = [c.strip() for c in rest.split(",") if c.strip()]
    return item_key(name.strip(), classes)


@dataclass(frozen=True)
class Item:
    """A named fact with a membership grade.

    Identity is ``(name, classes)``; the grade is an attribute that merges
    by maximum.
    """

    name: str
    classes: frozenset = frozenset()
    grade: float = 1.0

    @property
    def key(self) -> ItemKey:
        return (self.name, self.classes)

    def __str__(self) -> str:
        s = format_key(self.key)
        return s if self.grade == 1.0 else f"{s}@{self.grade!r}"


@dataclass(frozen=True)
class Entity:
    name: str
    classes: frozenset = frozenset()
    items: tuple = ()
    children: tuple = ()

    @property
    def is_complex(self) -> bool:
        return bool(self.children)

    def walk(self) -> Iterator["Entity"]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class Flow:
    """A directed sharing relation between two simple entities.

    ``items`` are flow constraints (their grade caps what passes);
    ``wildcard`` shares every item of the origin.  A flow with
    ``subflows`` is complex and propagates nothing by itself.
    """

    name: str
    origin: str
    target: str
    classes: frozenset = frozenset()
    items: tuple = ()
    wildcard: bool = False
    subflows: tuple = ()

    @property
    def is_complex(self) -> bool:
        return bool(self.subflows)

    def walk(self) -> Iterator["Flow"]:
        yield self
        for sub in self.subflows:
            yield from sub.walk()


# -- rules -----------------------------------------------------------------


@dataclass(frozen=True)
class ItemPattern:
    """A concrete item reference, matched by exact identity."""

    name: str
    classes: frozenset = frozenset()

    @property
    def key(self) -> ItemKey:
        return (self.name, self.classes)


@dataclass(frozen=True)
class ClassAtom:
    """``c(x)`` or ``!c(x)``."""

    cls: str
    var: str
    negated: bool = False


@dataclass(frozen=True)
class AnyClassAtom:
    """``*(x)`` permits extra classes on x; ``*v(x)`` also captures them as v."""

    var: str
    capture: str | None = None


Premise = Union[ItemPattern, ClassAtom, AnyClassAtom]


@dataclass(frozen=True)
class ItemOutcome:
    name: str
    classes: frozenset = frozenset()
    class_vars: frozenset = frozenset()


@dataclass(frozen=True)
class VarOutcome:
    """``x:{d,...}``: a new item named like the item bound to x."""

    var: str
    classes: frozenset = frozenset()
    class_vars: frozenset = frozenset()


Outcome = Union[ItemOutcome, VarOutcome]


class RuleKind(Enum):
    INFERENCE = "inference"
    CLASS_BASED = "class-based"
    CLASS_REWRITE = "class-rewrite"
    REWRITE_ARROW = "rewrite-arrow"
    ENTITY_CLASSIFICATION = "entity-classification"


@dataclass(frozen=True)
class Rule:
    premises: tuple
    outcomes: tuple
    scope: frozenset = frozenset()
    probability: float = 1.0
    rewrite: bool = False

    @property
    def kind(self) -> RuleKind:
        if self.rewrite:
            return RuleKind.REWRITE_ARROW
        if all(isinstance(p, ItemPattern) for p in self.premises):
            return RuleKind.INFERENCE
        if any(isinstance(o, VarOutcome) for o in self.outcomes):
            return RuleKind.CLASS_REWRITE
        return RuleKind.CLASS_BASED

    @cached_property
    def variables(self) -> frozenset:
        return frozenset(p.var for p in self.premises if not isinstance(p, ItemPattern))

    @cached_property
    def captures(self) -> frozenset:
        return frozenset(
            p.capture for p in self.premises
            if isinstance(p, AnyClassAtom) and p.capture
        )


@dataclass(frozen=True)
class EntityRule:
    """``C(c) |- i``, ``C(c) |- e`` or ``C(c) |- f``.

    Exactly one of ``item``, ``entity`` and ``flow`` is set.  In a flow
    outcome the classified entity is written as :data:`SELF`.
    """

    cls: str
    item: Item | None = None
    entity: Entity | None = None
    flow: Flow | None = None

    @property
    def kind(self) -> RuleKind:
        return RuleKind.ENTITY_CLASSIFICATION


# -- requirements -----------------------------------------------------------


@dataclass(frozen=True)
class Requirement:
    """``items in|not-in target``.

    ``target`` is an entity name or entity class; ``None`` is the wildcard,
    which alone may carry ``exceptions``.
    """

    items: tuple
    present: bool
    target: str | None
    exceptions: tuple = ()


# -- diagram ----------------------------------------------------------------


@dataclass(frozen=True)
class Diagram:
    entities: tuple = ()
    flows: tuple = ()
    rules: tuple = ()
    entity_rules: tuple = ()
    requirements: tuple = ()
    item_classes: frozenset = frozenset()
    entity_classes: frozenset = frozenset()
    flow_classes: frozenset = frozenset()
    imports: tuple = ()

    @cached_property
    def entity_map(self) -> dict:
        out = {}
        for root in self.entities:
            for e in root.walk():
                out.setdefault(e.name, e)
        return out

    @cached_property
    def parent_map(self) -> dict:
        out = {}
        for root in self.entities:
            for e in root.walk():
                for c in e.children:
                    out.setdefault(c.name, e.name)
        return out

    @cached_property
    def flow_map(self) -> dict:
        out = {}
        for f in self.all_flows():
            out.setdefault(f.name, f)
        return out

    def entity(self, name: str) -> Entity:
        return self.entity_map[name]

    def all_entities(self) -> Iterator[Entity]:
        for root in self.entities:
            yield from root.walk()

    def leaves(self) -> list:
        return [e for e in self.all_entities() if not e.is_complex]

    def all_flows(self) -> Iterator[Flow]:
        for f in self.flows:
            yield from f.walk()

    def simple_flows(self) -> list:
        return [f for f in self.all_flows() if not f.is_complex]

    def ancestors(self, name: str) -> list:
        out = []
        parents = self.parent_map
        while name in parents:
            name = parents[name]
            out.append(name)
        return out

    def effective_classes(self, name: str) -> frozenset:
        """Own entity classes plus those inherited from ancestors."""
        ents = self.entity_map
        cs = set(ents[name].classes)
        for a in self.ancestors(name):
            cs |= ents[a].classes
        return frozenset(cs)


def leaf_entities(entity: Entity) -> list:
    """Depth-first simple descendants; a simple entity yields itself."""
    if not entity.is_complex:
        return [entity]
    out = []
    for child in entity.children:
        out.extend(leaf_entities(child))
    return out


def merge_item(items: Iterable[Item], new: Item) -> tuple:
    """Insert ``new`` into ``items``; an item of equal identity keeps the max grade."""
    out = []
    found = False
    for it in items:
        if it.key == new.key:
            found = True
            if new.grade > it.grade:
                it = new
        out.append(it)
    if not found:
        out.append(new)
    return tuple(out)


def merge_items(items: Iterable[Item], more: Iterable[Item]) -> tuple:
    out = tuple(items)
    for it in more:
        out = merge_item(out, it)
    return out


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    message: str
    where: str = ""

    def __str__(self) -> str:
        return f"{self.where}: {self.message}" if self.where else self.message


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    def add(self, message: str, where: str = "") -> None:
        self.issues.append(Issue(message, where))

    def __bool__(self) -> bool:
        return bool(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def __len__(self) -> int:
        return len(self.issues)

    def messages(self) -> list:
        return [i.message for i in self.issues]


def _grade_ok(g: float) -> bool:
    return 0.0 <= g <= 1.0


def used_classes(diagram: Diagram) -> tuple[set, set, set]:
    """Item, entity and flow classes referenced anywhere in ``diagram``."""
    item_cs: set = set()
    entity_cs: set = set()
    flow_cs: set = set()

    def scan_entity(e: Entity) -> None:
        for sub in e.walk():
            entity_cs.update(sub.classes)
            for it in sub.items:
                item_cs.update(it.classes)

    def scan_flow(f: Flow) -> None:
        for sub in f.walk():
            flow_cs.update(sub.classes)
            for it in sub.items:
                item_cs.update(it.classes)

    for e in diagram.entities:
        scan_entity(e)
    for f in diagram.flows:
        scan_flow(f)
    for r in diagram.rules:
        entity_cs.update(r.scope)
        for p in r.premises:
            if isinstance(p, ItemPattern):
                item_cs.update(p.classes)
            elif isinstance(p, ClassAtom):
                item_cs.add(p.cls)
        for o in r.outcomes:
            item_cs.update(o.classes)
    for er in diagram.entity_rules:
        entity_cs.add(er.cls)
        if er.item is not None:
            item_cs.update(er.item.classes)
        if er.entity is not None:
            scan_entity(er.entity)
        if er.flow is not None:
            scan_flow(er.flow)
    for req in diagram.requirements:
        for p in req.items:
            if isinstance(p, ItemPattern):
                item_cs.update(p.classes)
            else:
                item_cs.add(p.cls)
    return item_cs, entity_cs, flow_cs


def with_implicit_classes(diagram: Diagram) -> Diagram:
    """Register every class used in ``diagram`` in its registries."""
    from dataclasses import replace

    item_cs, entity_cs, flow_cs = used_classes(diagram)
    # an entity class may also appear as a requirement target
    for req in diagram.requirements:
        if req.target is not None and req.target not in diagram.entity_map:
            entity_cs.add(req.target)
    return replace(
        diagram,
        item_classes=diagram.item_classes | item_cs,
        entity_classes=diagram.entity_classes | entity_cs,
        flow_classes=diagram.flow_classes | flow_cs,
    )


def validate(diagram: Diagram) -> ValidationReport:
    """Check every structural invariant; problems become report entries."""
    report = ValidationReport()

    kinds = {
        "item": diagram.item_classes,
        "entity": diagram.entity_classes,
        "flow": diagram.flow_classes,
    }
    seen_kind: dict = {}
    for kind, names in kinds.items():
        for n in sorted(names):
            if n in seen_kind:
                report.add(
                    f"class declared as both {seen_kind[n]} and {kind} class", n
                )
            else:
                seen_kind[n] = kind

    item_cs, entity_cs, flow_cs = used_classes(diagram)
    for kind, used, declared in (
        ("item", item_cs, diagram.item_classes),
        ("entity", entity_cs, diagram.entity_classes),
        ("flow", flow_cs, diagram.flow_classes),
    ):
        for c in sorted(used - declared):
            report.add(f"undeclared {kind} class", c)

    # entities
    names: dict = {}
    for e in diagram.all_entities():
        if not e.name:
            report.add("entity name must be non-empty")
        names[e.name] = names.get(e.name, 0) + 1
        if e.is_complex and e.items:
            report.add("only simple entities hold items", e.name)
        for it in e.items:
            if not it.name:
                report.add("item name must be non-empty", e.name)
            if not _grade_ok(it.grade):
                report.add(f"grade of {it} outside [0, 1]", e.name)
        if len({it.key for it in e.items}) != len(e.items):
            report.add("duplicate item identity", e.name)
    for n, count in names.items():
        if count > 1:
            report.add("duplicate entity name", n)

    ents = diagram.entity_map
    for n in sorted(set(ents) & set(diagram.entity_classes)):
        report.add("name is both an entity and an entity class", n)

    # flows
    flow_names: dict = {}
    for f in diagram.all_flows():
        flow_names[f.name] = flow_names.get(f.name, 0) + 1
        for end in (f.origin, f.target):
            if end not in ents:
                report.add(f"unknown entity {end}", f.name)
            elif ents[end].is_complex:
                report.add("flow endpoints must be simple", f.name)
        if f.origin == f.target:
            report.add("flow endpoints must differ", f.name)
        if f.is_complex and (f.items or f.wildcard):
            report.add("complex flows carry no items of their own", f.name)
        for it in f.items:
            if not _grade_ok(it.grade):
                report.add(f"grade of {it} outside [0, 1]", f.name)
    for n, count in flow_names.items():
        if count > 1:
            report.add("duplicate flow name", n)

    # rules
    for idx, r in enumerate(diagram.rules, 1):
        _validate_rule(r, f"R{idx}", report)
    for idx, er in enumerate(diagram.entity_rules, 1):
        where = f"E{idx}"
        set_count = sum(x is not None for x in (er.item, er.entity, er.flow))
        if set_count != 1:
            report.add("entity rule needs exactly one outcome", where)
        if er.flow is not None:
            fl = er.flow
            if fl.is_complex:
                report.add("entity rule flow must be simple", where)
            if (fl.origin == SELF) == (fl.target == SELF):
                report.add(
                    "entity rule flow must name the classified entity "
                    "as exactly one endpoint",
                    where,
                )
        if er.item is not None and not _grade_ok(er.item.grade):
            report.add("grade outside [0, 1]", where)

    # requirements
    for idx, req in enumerate(diagram.requirements, 1):
        where = f"N{idx}"
        if not req.items:
            report.add("requirement without items", where)
        for p in req.items:
            if isinstance(p, ClassAtom) and p.negated:
                report.add("negated class atoms are not allowed in requirements", where)
            elif isinstance(p, AnyClassAtom):
                report.add("wildcard atoms are not allowed in requirements", where)
        if req.target is None:
            for ex in req.exceptions:
                if ex not in ents:
                    report.add(f"unknown entity {ex}", where)
        else:
            if req.exceptions:
                report.add("exceptions are only allowed with the wildcard target", where)
            if req.target not in ents and req.target not in diagram.entity_classes:
                report.add(f"unknown entity or entity class {req.target}", where)
    return report


def _validate_rule(r: Rule, where: str, report: ValidationReport) -> None:
    if not r.premises:
        report.add("rule without premises", where)
    if not r.outcomes:
        report.add("rule without outcomes", where)
    if not _grade_ok(r.probability):
        report.add("probability outside [0, 1]", where)
    item_names = {p.name for p in r.premises if isinstance(p, ItemPattern)}
    item_names |= {o.name for o in r.outcomes if isinstance(o, ItemOutcome)}
    variables = r.variables
    for v in sorted(variables & item_names):
        report.add(f"variable {v} is also used as an item name", where)
    for o in r.outcomes:
        if isinstance(o, VarOutcome) and o.var not in variables:
            report.add(f"unbound variable {o.var}", where)
        for cv in sorted(o.class_vars - r.captures):
            report.add(f"unbound class variable {cv}", where)
    if r.rewrite:
        items = [p for p in r.premises if isinstance(p, ItemPattern)]
        if items and variables:
            report.add("rewrite arrow mixes item and class premises", where)
        elif len(items) > 1 or len(variables) > 1:
            report.add("rewrite arrow takes exactly one premise", where)
        if len(r.outcomes) != 1:
            report.add("rewrite arrow takes exactly one outcome", where)
        if r.probability != 1.0:
            report.add("rewrite arrows carry no probability", where)
