"""Brute-force reference evaluator.

Rescans every flow and every rule binding until nothing changes.  Shares
no matching or propagation code with the engine; only the model types.
Rewrite arrows and structural entity rules are out of scope.
"""

from __future__ import annotations

import itertools

from i2d.model import AnyClassAtom, ClassAtom, ItemPattern, VarOutcome


def _leaves_of(e):
    if not e.children:
        return [e]
    return [l for c in e.children for l in _leaves_of(c)]


def _inherited(diagram):
    """Leaf name -> classes of the leaf and every ancestor."""
    out = {}

    def walk(e, acc):
        acc = acc | e.classes
        if not e.children:
            out[e.name] = acc
        for c in e.children:
            walk(c, acc)

    for e in diagram.entities:
        walk(e, frozenset())
    return out


def _simple_flows(flows):
    for f in flows:
        if f.subflows:
            yield from _simple_flows(f.subflows)
        else:
            yield f


def _fits(var, premises, classes):
    atoms = [p for p in premises if not isinstance(p, ItemPattern) and p.var == var]
    need = {a.cls for a in atoms if isinstance(a, ClassAtom) and not a.negated}
    banned = {a.cls for a in atoms if isinstance(a, ClassAtom) and a.negated}
    loose = any(isinstance(a, AnyClassAtom) for a in atoms) or bool(banned)
    if loose:
        return need.issubset(classes) and not banned.intersection(classes)
    return set(classes) == need


def _fire(rule, held):
    """(outcome key, grade) for every binding of ``rule`` over ``held``."""
    fixed = [p.key for p in rule.premises if isinstance(p, ItemPattern)]
    if any(k not in held for k in fixed):
        return
    names = []
    for p in rule.premises:
        if not isinstance(p, ItemPattern) and p.var not in names:
            names.append(p.var)
    pools = [[k for k in held if _fits(v, rule.premises, k[1])] for v in names]
    for choice in itertools.product(*pools):
        env = dict(zip(names, choice))
        captured = {}
        for p in rule.premises:
            if isinstance(p, AnyClassAtom) and p.capture:
                captured[p.capture] = captured.get(p.capture, frozenset()) | env[p.var][1]
        used = fixed + list(choice)
        g = rule.probability * min(held[k] for k in used)
        for o in rule.outcomes:
            cls = set(o.classes)
            for cv in o.class_vars:
                cls |= captured.get(cv, frozenset())
            name = env[o.var][0] if isinstance(o, VarOutcome) else o.name
            yield (name, frozenset(cls)), g


def reference_fixpoint(diagram) -> dict:
    """Leaf -> {item key: grade} at the least fixpoint."""
    leaves = [l for e in diagram.entities for l in _leaves_of(e)]
    held = {l.name: {} for l in leaves}

    def bump(leaf, key, g):
        if g > held[leaf].get(key, 0.0):
            held[leaf][key] = g
            return True
        return False

    for l in leaves:
        for it in l.items:
            bump(l.name, it.key, it.grade)
    for er in diagram.entity_rules:
        if er.item is None:
            continue
        for e in diagram.all_entities():
            if er.cls in e.classes:
                for l in _leaves_of(e):
                    bump(l.name, er.item.key, er.item.grade)

    inherited = _inherited(diagram)
    flows = list(_simple_flows(diagram.flows))
    changed = True
    while changed:
        changed = False
        for f in flows:
            src = dict(held[f.origin])
            if f.wildcard:
                caps = {k: 1.0 for k in src}
            else:
                caps = {}
                for it in f.items:
                    caps[it.key] = max(caps.get(it.key, 0.0), it.grade)
            for k, cap in caps.items():
                if k in src:
                    changed |= bump(f.target, k, min(src[k], cap))
        for rule in diagram.rules:
            for l in leaves:
                if rule.scope and not (rule.scope & inherited[l.name]):
                    continue
                for key, g in list(_fire(rule, dict(held[l.name]))):
                    changed |= bump(l.name, key, g)
    return held
