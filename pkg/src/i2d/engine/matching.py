"""Premise matching and outcome instantiation for inference rules.

Class atoms over a variable match *strictly* by default: ``c0(x), c1(x)``
binds x only to items whose class set is exactly ``{c0, c1}``.  A
wildcard ``*(x)``, a capture ``*v(x)`` or a negated atom ``!d(x)`` on the
same variable relaxes this to "at least these classes, none of the
negated ones".
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from ..model import AnyClassAtom, ClassAtom, ItemKey, ItemPattern, Rule, VarOutcome


@dataclass(frozen=True)
class VarConstraint:
    positive: frozenset
    negative: frozenset
    relaxed: bool
    captures: tuple

    def accepts(self, classes: frozenset) -> bool:
        if self.relaxed:
            return self.positive <= classes and not (self.negative & classes)
        return classes == self.positive


def var_constraints(premises) -> dict:
    """Per-variable class constraints, in first-appearance order."""
    pos: dict = {}
    neg: dict = {}
    relaxed: dict = {}
    caps: dict = {}
    for p in premises:
        if isinstance(p, ItemPattern):
            continue
        v = p.var
        pos.setdefault(v, set())
        neg.setdefault(v, set())
        relaxed.setdefault(v, False)
        caps.setdefault(v, [])
        if isinstance(p, ClassAtom):
            if p.negated:
                neg[v].add(p.cls)
                relaxed[v] = True
            else:
                pos[v].add(p.cls)
        elif isinstance(p, AnyClassAtom):
            relaxed[v] = True
            if p.capture:
                caps[v].append(p.capture)
    return {
        v: VarConstraint(frozenset(pos[v]), frozenset(neg[v]), relaxed[v], tuple(caps[v]))
        for v in pos
    }


@dataclass(frozen=True)
class Binding:
    """A premise binding: item keys in premise order plus variable values."""

    items: tuple  # concrete item keys, then one key per variable
    variables: tuple  # (var, key) pairs
    captured: tuple  # (class var, classes) pairs

    def var(self, name: str) -> ItemKey:
        return dict(self.variables)[name]


class CompiledRule:
    """A rule prepared for repeated matching against item sets."""

    def __init__(self, rule: Rule, index: int):
        self.rule = rule
        self.index = index
        self.id = f"R{index + 1}"
        self.items = tuple(p.key for p in rule.premises if isinstance(p, ItemPattern))
        self.constraints = var_constraints(rule.premises)
        self.var_order = tuple(self.constraints)

    def bindings(self, present):
        """Yield every :class:`Binding` over ``present`` (a set or mapping of keys)."""
        for k in self.items:
            if k not in present:
                return
        candidates = []
        for v in self.var_order:
            c = self.constraints[v]
            cands = sorted(
                (k for k in present if c.accepts(k[1])),
                key=_sort_key,
            )
            if not cands:
                return
            candidates.append(cands)
        for combo in itertools.product(*candidates):
            captured = []
            for v, k in zip(self.var_order, combo):
                for cap in self.constraints[v].captures:
                    captured.append((cap, k[1]))
            yield Binding(
                self.items + tuple(combo),
                tuple(zip(self.var_order, combo)),
                tuple(captured),
            )

    def instantiate(self, binding: Binding) -> list:
        """Outcome item keys for ``binding``."""
        caps: dict = {}
        for name, classes in binding.captured:
            caps[name] = caps.get(name, frozenset()) | classes
        env = dict(binding.variables)
        out = []
        for o in self.rule.outcomes:
            classes = set(o.classes)
            for cv in o.class_vars:
                classes |= caps.get(cv, frozenset())
            name = env[o.var][0] if isinstance(o, VarOutcome) else o.name
            key = (name, frozenset(classes))
            if key not in out:
                out.append(key)
        return out

    def matches_single(self, key: ItemKey) -> bool:
        """Whether a one-premise rule (a rewrite arrow) matches ``key``."""
        if self.items:
            return key == self.items[0]
        return all(c.accepts(key[1]) for c in self.constraints.values())

    def single_binding(self, key: ItemKey) -> Binding:
        if self.items:
            return Binding((key,), (), ())
        captured = []
        for v in self.var_order:
            for cap in self.constraints[v].captures:
                captured.append((cap, key[1]))
        return Binding(
            tuple(key for _ in self.var_order),
            tuple((v, key) for v in self.var_order),
            tuple(captured),
        )


def _sort_key(key: ItemKey):
    return (key[0], sorted(key[1]))
