"""Derivation trees for items held at the fixpoint."""

from __future__ import annotations

from dataclasses import dataclass

from ..model import ItemKey, format_key


class TraceError(LookupError):
    pass


@dataclass(frozen=True)
class DerivationTree:
    entity: str
    item: ItemKey
    grade: float
    kind: str  # declared | seed | flow | rule
    source: str = ""
    children: tuple = ()

    @property
    def height(self) -> int:
        return 1 + max((c.height for c in self.children), default=0)

    @property
    def size(self) -> int:
        return 1 + sum(c.size for c in self.children)

    def describe(self) -> str:
        head = f"{format_key(self.item)} at {self.entity} @{self.grade:g}"
        if self.kind == "declared":
            return head + " (declared)"
        if self.kind == "seed":
            return head + f" (entity rule {self.source})"
        if self.kind == "flow":
            return head + f" <- flow {self.source} from {self.children[0].entity}"
        return head + f" <- rule {self.source}"

    def render(self, indent: str = "  ", depth: int = 0) -> list:
        lines = [indent * depth + self.describe()]
        for c in self.children:
            lines.extend(c.render(indent, depth + 1))
        return lines

    def to_dict(self) -> dict:
        return {
            "entity": self.entity,
            "item": format_key(self.item),
            "grade": self.grade,
            "kind": self.kind,
            "source": self.source,
            "children": [c.to_dict() for c in self.children],
        }


def derivation_heights(state) -> dict:
    """Minimal derivation height per held cell and the support achieving it.

    Declared and seeded items have height 0; a flow hop or rule
    application sits one above its highest premise.  Ties go to the
    support of lowest rank (declaration order).
    """
    best: dict = {}
    pending = []
    for cell, sups in state.provenance.items():
        for s in sups:
            if s.kind in ("declared", "seed"):
                cand = (0, s.rank)
                if cell not in best or cand < best[cell][0]:
                    best[cell] = (cand, s)
            else:
                pending.append((cell, s))
    changed = True
    while changed:
        changed = False
        for cell, s in pending:
            hs = []
            for p in s.premises:
                if p not in best:
                    break
                hs.append(best[p][0][0])
            else:
                cand = (1 + max(hs), s.rank)
                if cell not in best or cand < best[cell][0]:
                    best[cell] = (cand, s)
                    changed = True
    return best


def trace(state, entity: str, item: ItemKey) -> DerivationTree:
    """One minimal derivation tree for ``item`` at leaf ``entity``."""
    if entity not in state.items:
        raise TraceError(f"{entity} is not a simple entity of the evaluated diagram")
    if item not in state.items[entity]:
        raise TraceError(f"{format_key(item)} is not held by {entity}")
    best = state.heights

    def build(cell) -> DerivationTree:
        leaf, key = cell
        (_, _), s = best[cell]
        grade = state.items[leaf][key]
        children = tuple(build(p) for p in s.premises)
        return DerivationTree(leaf, key, grade, s.kind, s.source, children)

    return build((entity, item))
