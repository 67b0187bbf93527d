"""Importing data-flow diagrams and exporting Graphviz DOT.

DFD documents are JSON objects of this shape (``version`` must be 1)::

    {"version": 1,
     "nodes": [{"id": "n1", "kind": "process", "label": "Web server"}],
     "boundaries": [{"id": "b1", "label": "Server", "members": ["n1"]}],
     "edges": [{"id": "e1", "source": "n1", "target": "n2", "label": "request"}]}

``kind`` is one of ``process``, ``datastore`` and ``external-entity``.
Boundary members are node or boundary ids; a member belongs to at most
one boundary.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .model import Diagram, Entity, Flow, Item, format_key, with_implicit_classes

NODE_CLASSES = {
    "process": "dfd_process",
    "datastore": "dfd_datastore",
    "external-entity": "dfd_external",
}
BOUNDARY_CLASS = "dfd_trust_boundary"
DATA_CLASS = "dfd_data"


class DfdError(ValueError):
    pass


@dataclass(frozen=True)
class DfdDocument:
    nodes: tuple
    boundaries: tuple
    edges: tuple


_IDENT = re.compile(r"[^A-Za-z0-9_]+")


def sanitize(label: str) -> str:
    """Turn a free-text label into an identifier."""
    s = _IDENT.sub("_", label.strip()).strip("_")
    if not s:
        return ""
    return s if not s[0].isdigit() else "_" + s


def _fields(obj, required, where):
    if not isinstance(obj, dict):
        raise DfdError(f"{where}: expected an object")
    for k in required:
        if k not in obj:
            raise DfdError(f"{where}: missing field '{k}'")
    return obj


def load_dfd(data) -> DfdDocument:
    """Validate a decoded DFD document."""
    if not isinstance(data, dict):
        raise DfdError("document must be a JSON object")
    if data.get("version") != 1:
        raise DfdError(f"unsupported version {data.get('version')!r}")
    nodes = tuple(_fields(n, ("id", "kind"), f"node {i}")
                  for i, n in enumerate(data.get("nodes", [])))
    boundaries = tuple(_fields(b, ("id", "members"), f"boundary {i}")
                       for i, b in enumerate(data.get("boundaries", [])))
    edges = tuple(_fields(e, ("id", "source", "target"), f"edge {i}")
                  for i, e in enumerate(data.get("edges", [])))
    ids: set = set()
    for obj in nodes + boundaries:
        if obj["id"] in ids:
            raise DfdError(f"duplicate id {obj['id']}")
        ids.add(obj["id"])
    node_ids = {n["id"] for n in nodes}
    for n in nodes:
        if n["kind"] not in NODE_CLASSES:
            raise DfdError(f"node {n['id']}: unknown kind {n['kind']!r}")
    owner: dict = {}
    for b in boundaries:
        for m in b["members"]:
            if m not in ids:
                raise DfdError(f"boundary {b['id']}: unknown member {m}")
            if m == b["id"]:
                raise DfdError(f"boundary {b['id']} contains itself")
            if m in owner:
                raise DfdError(f"{m} belongs to both {owner[m]} and {b['id']}")
            owner[m] = b["id"]
    # boundary nesting must be acyclic
    for b in boundaries:
        seen, cur = set(), b["id"]
        while cur in owner:
            if cur in seen:
                raise DfdError(f"boundary {b['id']} is nested in itself")
            seen.add(cur)
            cur = owner[cur]
    edge_ids: set = set()
    for e in edges:
        if e["id"] in edge_ids:
            raise DfdError(f"duplicate edge id {e['id']}")
        edge_ids.add(e["id"])
        for end in ("source", "target"):
            if e[end] not in node_ids:
                raise DfdError(f"edge {e['id']}: {end} {e[end]} is not a node")
        if e["source"] == e["target"]:
            raise DfdError(f"edge {e['id']}: source and target coincide")
    return DfdDocument(nodes, boundaries, edges)


def import_dfd(data) -> Diagram:
    """Build a diagram from a DFD document (decoded JSON or :class:`DfdDocument`)."""
    doc = data if isinstance(data, DfdDocument) else load_dfd(data)
    names: dict = {}
    used: set = set()

    def name_for(obj) -> str:
        label = sanitize(str(obj.get("label", "")))
        ident = sanitize(str(obj["id"])) or "node"
        name = label if label and label not in used else ident
        base, k = name, 2
        while name in used:
            name = f"{base}_{k}"
            k += 1
        used.add(name)
        return name

    for obj in doc.nodes + doc.boundaries:
        names[obj["id"]] = name_for(obj)

    owner = {m: b["id"] for b in doc.boundaries for m in b["members"]}
    by_id = {o["id"]: o for o in doc.nodes + doc.boundaries}
    boundary_ids = {b["id"] for b in doc.boundaries}

    def build(oid: str) -> Entity:
        obj = by_id[oid]
        if oid in boundary_ids:
            kids = tuple(build(m) for m in obj["members"])
            return Entity(names[oid], frozenset({BOUNDARY_CLASS}), (), kids)
        return Entity(names[oid], frozenset({NODE_CLASSES[obj["kind"]]}))

    roots = tuple(build(o["id"]) for o in doc.nodes + doc.boundaries if o["id"] not in owner)
    flows = []
    taken: set = set()
    for e in doc.edges:
        fname = sanitize(str(e["id"])) or "flow"
        base, k = fname, 2
        while fname in taken:
            fname = f"{base}_{k}"
            k += 1
        taken.add(fname)
        item = sanitize(str(e.get("label", ""))) or f"data_{fname}"
        flows.append(Flow(fname, names[e["source"]], names[e["target"]],
                          items=(Item(item, frozenset({DATA_CLASS})),)))
    return with_implicit_classes(Diagram(entities=roots, flows=tuple(flows)))


def read_dfd(path) -> Diagram:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DfdError(f"{path}: invalid JSON: {exc}") from None
    return import_dfd(data)


def topology_skeleton(diagram: Diagram) -> dict:
    """Entity nesting and flow endpoints, ignoring items and classes."""
    parents = diagram.parent_map
    return {
        "entities": sorted((e.name, parents.get(e.name)) for e in diagram.all_entities()),
        "flows": sorted((f.origin, f.target) for f in diagram.simple_flows()),
    }


def topology_only(diagram: Diagram) -> Diagram:
    """Entity nesting and flow endpoints only, as a diagram (for canonical-print diffs)."""

    def strip_entity(e: Entity) -> Entity:
        return Entity(e.name, children=tuple(strip_entity(c) for c in e.children))

    def strip_flow(f: Flow) -> Flow:
        return Flow(f.name, f.origin, f.target, subflows=tuple(strip_flow(s) for s in f.subflows))

    return Diagram(entities=tuple(strip_entity(e) for e in diagram.entities),
                   flows=tuple(strip_flow(f) for f in diagram.flows))


# -- DOT ---------------------------------------------------------------------


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(diagram: Diagram, state=None, verdicts=()) -> str:
    """Graphviz DOT text: clusters for complex entities, one edge per simple flow.

    Edges drawn from a complex flow are dashed.  With an evaluation
    ``state`` each leaf lists its items, derived ones with their grade;
    leaves holding a violation witness are drawn red.
    """
    declared = {(l.name, it.key) for l in diagram.leaves() for it in l.items}
    hot = {w.entity for v in verdicts for w in v.witnesses}
    hot |= {m.entity for v in verdicts for m in v.missing}
    lines = ["digraph model {", "  compound=true;", "  node [shape=box];"]

    def node_label(e: Entity) -> str:
        parts = [e.name]
        if e.classes:
            parts[0] += " : " + ", ".join(sorted(e.classes))
        if state is not None:
            held = state.items.get(e.name, {})
            for key in sorted(held, key=lambda k: (k[0], sorted(k[1]))):
                g = held[key]
                if (e.name, key) in declared:
                    parts.append(format_key(key))
                else:
                    parts.append(f"{format_key(key)} @{g:g} (derived)")
        else:
            parts.extend(str(it) for it in e.items)
        return "\\n".join(p.replace('"', '\\"') for p in parts)

    def emit(e: Entity, depth: int) -> None:
        pad = "  " * depth
        if e.is_complex:
            lines.append(f"{pad}subgraph {_q('cluster_' + e.name)} {{")
            label = e.name + (" : " + ", ".join(sorted(e.classes)) if e.classes else "")
            lines.append(f"{pad}  label={_q(label)};")
            for c in e.children:
                emit(c, depth + 1)
            lines.append(f"{pad}}}")
        else:
            attrs = [f'label="{node_label(e)}"']
            if e.name in hot:
                attrs += ["color=red", "penwidth=2"]
            lines.append(f"{pad}{_q(e.name)} [{', '.join(attrs)}];")

    for e in diagram.entities:
        emit(e, 1)

    def edges(f: Flow, dashed: bool) -> None:
        if f.is_complex:
            for s in f.subflows:
                edges(s, True)
            return
        label = "*" if f.wildcard else ", ".join(str(i) for i in f.items)
        attrs = [f"label={_q(f.name + ': ' + label if label else f.name)}"]
        if dashed:
            attrs.append("style=dashed")
        lines.append(f"  {_q(f.origin)} -> {_q(f.target)} [{', '.join(attrs)}];")

    for f in diagram.flows:
        edges(f, False)
    lines.append("}")
    return "\n".join(lines) + "\n"
