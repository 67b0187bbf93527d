"""Least-fixpoint evaluation of flows and inference rules.

Each leaf entity owns a fuzzy item set; the evaluator alternates max-min
flow propagation (a dense kernel, see :mod:`.kernels`) with rule
application until nothing changes.  Derived grades are
``p * min(premise grades)``, propagated grades ``min(origin, flow cap)``,
and every merge takes the maximum, so item sets only ever grow.

Rewrite arrows change what flows carry, not what entities hold.  In
``stratified`` mode the substitutions are decided from a quiescent state
(first from the flow-free local closure) and frozen until the global
fixpoint of that stratum is reached; a new stratum starts only if more
substitutions have become applicable.  ``iterative`` mode re-decides them
before every sweep and is sensitive to propagation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from ..model import (
    Diagram,
    Item,
    ItemKey,
    ItemOutcome,
    ItemPattern,
    leaf_entities,
)
from . import kernels
from .matching import CompiledRule
from .structural import expand_structural_rules

REWRITE_MODES = ("stratified", "iterative")


class IterationBoundExceeded(RuntimeError):
    """The evaluator ran past its iteration bound (an engine defect)."""


@dataclass(frozen=True)
class EvalConfig:
    rewrite_mode: str = "stratified"
    max_iterations: int | str = "auto"
    tnorm: str = "min-times-p"
    accel: bool | None = None

    def __post_init__(self):
        if self.rewrite_mode not in REWRITE_MODES:
            raise ValueError(f"unknown rewrite mode {self.rewrite_mode!r}")
        if self.tnorm != "min-times-p":
            raise ValueError(f"unsupported grade policy {self.tnorm!r}")
        if self.max_iterations != "auto" and (
            not isinstance(self.max_iterations, int) or self.max_iterations < 1
        ):
            raise ValueError("max_iterations must be a positive integer or 'auto'")


@dataclass(frozen=True)
class Support:
    """One way an item came to be held by a leaf."""

    kind: str  # declared | seed | flow | rule
    source: str = ""  # entity rule id, flow name or rule id
    premises: tuple = ()  # ((entity, key), ...)
    rank: tuple = ()  # tie-break order


@dataclass(frozen=True)
class EvaluationState:
    diagram: Diagram
    items: dict  # leaf -> {key: grade}, grades > 0 only
    flow_items: dict  # simple flow -> effective item keys at the fixpoint
    applied: frozenset  # (rule id, leaf, premise keys)
    provenance: dict = field(repr=False)  # (leaf, key) -> tuple[Support]
    iterations: int = 0
    strata: int = 0
    bound: int = 0

    def grade(self, entity: str, key: ItemKey) -> float:
        if entity in self.items:
            return self.items[entity].get(key, 0.0)
        e = self.diagram.entity(entity)
        return max((self.items[l.name].get(key, 0.0) for l in leaf_entities(e)), default=0.0)

    def holds(self, entity: str, key: ItemKey, threshold: float = 0.0) -> bool:
        return self.grade(entity, key) > threshold

    def entity_items(self, entity: str) -> dict:
        """Item grades at ``entity``; complex entities fold their leaves by max."""
        if entity in self.items:
            return dict(self.items[entity])
        out: dict = {}
        for leaf in leaf_entities(self.diagram.entity(entity)):
            for k, g in self.items[leaf.name].items():
                if g > out.get(k, 0.0):
                    out[k] = g
        return out

    def listing(self) -> list:
        """``(entity, key, grade)`` sorted by entity, item name, class set."""
        out = []
        for leaf in sorted(self.items):
            for k, g in sorted(self.items[leaf].items(), key=lambda kv: (kv[0][0], sorted(kv[0][1]))):
                out.append((leaf, k, g))
        return out

    @cached_property
    def heights(self) -> dict:
        from .trace import derivation_heights

        return derivation_heights(self)


def item_universe_size(diagram: Diagram) -> int:
    names: set = set()
    for e in diagram.all_entities():
        names.update(i.name for i in e.items)
    for f in diagram.all_flows():
        names.update(i.name for i in f.items)
    for r in diagram.rules:
        names.update(p.name for p in r.premises if isinstance(p, ItemPattern))
        names.update(o.name for o in r.outcomes if isinstance(o, ItemOutcome))
    for er in diagram.entity_rules:
        if er.item is not None:
            names.add(er.item.name)
    return len(names) * 2 ** len(diagram.item_classes)


def iteration_bound(diagram: Diagram) -> int:
    """``|names| * 2^|item classes| * |leaves| + 1``."""
    return item_universe_size(diagram) * max(1, len(diagram.leaves())) + 1


class _Evaluator:
    def __init__(self, diagram: Diagram, config: EvalConfig, observer=None):
        self.diagram = diagram
        self.config = config
        self.observer = observer
        self.leaves = [e.name for e in diagram.leaves()]
        self.leaf_index = {n: i for i, n in enumerate(self.leaves)}
        self.leaf_classes = [diagram.effective_classes(n) for n in self.leaves]
        self.keys: list = []
        self.key_index: dict = {}
        self.cap = 16
        self.grades = np.zeros((len(self.leaves), self.cap))
        self.flows = diagram.simple_flows()
        self.src = np.array([self.leaf_index[f.origin] for f in self.flows], dtype=np.int64)
        self.dst = np.array([self.leaf_index[f.target] for f in self.flows], dtype=np.int64)
        self.carry = np.zeros((len(self.flows), self.cap))
        self.carried: list = [set() for _ in self.flows]
        self.signature: frozenset = frozenset()
        self.carry_cols = -1
        rules = [CompiledRule(r, i) for i, r in enumerate(diagram.rules)]
        self.rules = [r for r in rules if not r.rule.rewrite]
        self.rewrites = [r for r in rules if r.rule.rewrite]
        self.scopes = {r.index: self._scope(r.rule.scope) for r in rules}
        self.ledger: dict = {}
        self.rule_supports: dict = {}
        self.iterations = 0
        self.strata = 0
        if config.max_iterations == "auto":
            self.bound = iteration_bound(diagram)
        else:
            self.bound = config.max_iterations
        self.accel = kernels.use_numba() if config.accel is None else config.accel

    def _scope(self, scope: frozenset) -> list:
        if not scope:
            return list(range(len(self.leaves)))
        return [i for i, cs in enumerate(self.leaf_classes) if cs & scope]

    # -- item universe ---------------------------------------------------

    def intern(self, key: ItemKey) -> int:
        idx = self.key_index.get(key)
        if idx is not None:
            return idx
        idx = len(self.keys)
        self.keys.append(key)
        self.key_index[key] = idx
        if idx >= self.cap:
            self.cap *= 2
            grades = np.zeros((self.grades.shape[0], self.cap))
            grades[:, : self.grades.shape[1]] = self.grades
            self.grades = grades
            carry = np.zeros((self.carry.shape[0], self.cap))
            carry[:, : self.carry.shape[1]] = self.carry
            self.carry = carry
        return idx

    def raise_grade(self, leaf: int, key: ItemKey, g: float) -> bool:
        if g <= 0.0:
            return False
        k = self.intern(key)
        if g > self.grades[leaf, k]:
            self.grades[leaf, k] = g
            return True
        return False

    def present(self, leaf: int) -> dict:
        row = self.grades[leaf, : len(self.keys)]
        return {self.keys[k]: float(row[k]) for k in np.flatnonzero(row > 0.0)}

    def presence(self) -> list:
        return [frozenset(self.present(i)) for i in range(len(self.leaves))]

    def snapshot(self) -> dict:
        return {n: self.present(i) for i, n in enumerate(self.leaves)}

    # -- seeding ---------------------------------------------------------

    def seed(self) -> None:
        d = self.diagram
        for e in d.leaves():
            i = self.leaf_index[e.name]
            for it in e.items:
                self.raise_grade(i, it.key, it.grade)
                self.intern(it.key)
        for f in self.flows:
            for it in f.items:
                self.intern(it.key)
        for idx, er in enumerate(d.entity_rules):
            if er.item is None:
                continue
            for e in d.all_entities():
                if er.cls in e.classes:
                    for leaf in leaf_entities(e):
                        self.raise_grade(self.leaf_index[leaf.name], er.item.key, er.item.grade)

    # -- rules -----------------------------------------------------------

    def apply_rules_once(self) -> bool:
        changed = False
        for cr in self.rules:
            p = cr.rule.probability
            for leaf in self.scopes[cr.index]:
                present = self.present(leaf)
                if not present:
                    continue
                for b in cr.bindings(present):
                    grades = tuple(present[k] for k in b.items)
                    fp = (cr.index, leaf, b.items)
                    if self.ledger.get(fp) == grades:
                        continue
                    first = fp not in self.ledger
                    self.ledger[fp] = grades
                    g = p * min(grades)
                    outs = cr.instantiate(b)
                    for out in outs:
                        if first and g > 0.0:
                            prem = tuple((self.leaves[leaf], k) for k in b.items)
                            rank = (1, cr.index, tuple((k[0], tuple(sorted(k[1]))) for k in b.items))
                            sup = Support("rule", cr.id, prem, rank)
                            self.rule_supports.setdefault((self.leaves[leaf], out), []).append(sup)
                        if self.raise_grade(leaf, out, g):
                            changed = True
        return changed

    def rules_closure(self) -> bool:
        changed = False
        guard = 0
        while self.apply_rules_once():
            changed = True
            guard += 1
            if guard > self.bound:
                raise IterationBoundExceeded("rule closure exceeded the iteration bound")
        return changed

    # -- flows -----------------------------------------------------------

    def build_carry(self, presence: list) -> frozenset:
        """Fill the carry matrix from flow items and rewrite substitutions."""
        self.carry[:, :] = 0.0
        active = set()
        for fi, f in enumerate(self.flows):
            origin = self.leaf_index[f.origin]
            if f.wildcard:
                base = {k: 1.0 for k in self.keys}
            else:
                base = {}
                for it in f.items:
                    base[it.key] = max(base.get(it.key, 0.0), it.grade)
            held = presence[origin]
            for rr in self.rewrites:
                if origin not in self.scopes[rr.index]:
                    continue
                for k in list(base):
                    if k not in base or not rr.matches_single(k):
                        continue
                    j = rr.instantiate(rr.single_binding(k))[0]
                    if j == k or j not in held:
                        continue
                    w = base.pop(k)
                    base[j] = max(base.get(j, 0.0), w)
                    active.add((fi, rr.index, k, j))
            for k, w in base.items():
                idx = self.intern(k)
                self.carry[fi, idx] = w
                if w > 0.0:
                    self.carried[fi].add(k)
        self.carry_cols = len(self.keys)
        self.signature = frozenset(active)
        return self.signature

    def propagate(self) -> bool:
        if not self.flows:
            return False
        return kernels.propagate(self.grades, self.src, self.dst, self.carry,
                                 len(self.keys), self.accel)

    # -- driver ----------------------------------------------------------

    def notify(self) -> None:
        if self.observer is not None:
            self.observer(self.iterations, self.snapshot())

    def tick(self) -> None:
        self.iterations += 1
        # leave room for the confirming pass
        if self.iterations >= self.bound:
            raise IterationBoundExceeded(
                f"no fixpoint after {self.bound} iterations")
        self.notify()

    def run(self) -> None:
        self.seed()
        self.notify()
        if self.config.rewrite_mode == "stratified":
            self.run_stratified()
        else:
            self.run_iterative()
        # the final, confirming pass
        self.iterations += 1

    def run_stratified(self) -> None:
        if self.rules_closure():
            self.tick()
        frozen = self.presence()
        self.build_carry(frozen)
        self.strata = 1
        while True:
            changed = self.propagate()
            changed = self.rules_closure() or changed
            if len(self.keys) != self.carry_cols:
                self.build_carry(frozen)
            if changed:
                self.tick()
                continue
            current = self.presence()
            before = self.signature
            if self.build_carry(current) == before:
                return
            frozen = current
            self.strata += 1

    def run_iterative(self) -> None:
        self.strata = 1
        previous = None
        while True:
            sig = self.build_carry(self.presence())
            changed = self.propagate()
            changed = self.rules_closure() or changed
            if not changed and sig == previous:
                return
            previous = sig
            if changed:
                self.tick()

    # -- result ----------------------------------------------------------

    def result(self) -> EvaluationState:
        items = self.snapshot()
        provenance: dict = {}
        for e in self.diagram.leaves():
            for it in e.items:
                if it.grade > 0.0:
                    provenance.setdefault((e.name, it.key), []).append(Support("declared", rank=(0,)))
        for idx, er in enumerate(self.diagram.entity_rules):
            if er.item is None or er.item.grade <= 0.0:
                continue
            for e in self.diagram.all_entities():
                if er.cls in e.classes:
                    for leaf in leaf_entities(e):
                        cell = (leaf.name, er.item.key)
                        sup = Support("seed", f"E{idx + 1}", (), (0, idx))
                        if sup not in provenance.setdefault(cell, []):
                            provenance[cell].append(sup)
        for cell, sups in self.rule_supports.items():
            provenance.setdefault(cell, []).extend(sups)
        for fi, f in enumerate(self.flows):
            at_origin = items[f.origin]
            at_target = items[f.target]
            for k in sorted(self.carried[fi], key=lambda k: (k[0], sorted(k[1]))):
                if k in at_origin and k in at_target:
                    provenance.setdefault((f.target, k), []).append(
                        Support("flow", f.name, ((f.origin, k),), (2, fi)))
        flow_items = {}
        for fi, f in enumerate(self.flows):
            row = self.carry[fi, : len(self.keys)]
            flow_items[f.name] = tuple(self.keys[k] for k in np.flatnonzero(row > 0.0))
        return EvaluationState(
            diagram=self.diagram,
            items=items,
            flow_items=flow_items,
            applied=frozenset((f"R{r + 1}", self.leaves[l], ks) for r, l, ks in self.ledger),
            provenance={c: tuple(sorted(s, key=lambda s: s.rank)) for c, s in provenance.items()},
            iterations=self.iterations,
            strata=self.strata,
            bound=self.bound,
        )


def evaluate(diagram: Diagram, config: EvalConfig | None = None,
             observer: Callable[[int, dict], None] | None = None) -> EvaluationState:
    """Compute the least fixpoint of ``diagram``.

    Entity-classification rules are expanded first (idempotent).
    ``observer(iteration, snapshot)`` is called with the leaf item grades
    after seeding and after every productive iteration.
    """
    config = config or EvalConfig()
    diagram = expand_structural_rules(diagram)
    ev = _Evaluator(diagram, config, observer)
    ev.run()
    return ev.result()


def initial_state(diagram: Diagram) -> EvaluationState:
    """Declared (and seeded) items only, without any propagation or inference."""
    diagram = expand_structural_rules(diagram)
    ev = _Evaluator(diagram, EvalConfig())
    ev.seed()
    return ev.result()


def materialize(diagram: Diagram, state: EvaluationState) -> Diagram:
    """A copy of the (expanded) diagram whose leaves declare their fixpoint items."""
    base = state.diagram

    def rebuild(e):
        if e.is_complex:
            return replace(e, children=tuple(rebuild(c) for c in e.children))
        held = state.items.get(e.name, {})
        items = tuple(
            Item(k[0], k[1], g)
            for k, g in sorted(held.items(), key=lambda kv: (kv[0][0], sorted(kv[0][1])))
        )
        return replace(e, items=items)

    return replace(base, entities=tuple(rebuild(e) for e in base.entities))


__all__ = [
    "EvalConfig",
    "EvaluationState",
    "IterationBoundExceeded",
    "Support",
    "evaluate",
    "initial_state",
    "item_universe_size",
    "iteration_bound",
    "materialize",
]
