"""Schema imports (``use "name";``).

A schema is an ordinary ``.i2d`` fragment.  Importing merges its class
registrations, rules, entity rules and requirements into the importing
diagram; entities and flows declared by a schema are merged as
templates when their names are not already taken.
"""

from __future__ import annotations

import os
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Callable

from ..model import Diagram, validate
from .lexer import ParseError
from .parser import parse_file, parse

ENV_VAR = "I2D_PATH"


class ImportError_(ParseError):
    """Missing schema, import cycle or conflicting class kinds."""


Schema = Diagram


def search_path(extra=None, base_dir=None) -> list:
    """Directories searched for schemata, in priority order.

    Explicit directories first, then ``$I2D_PATH``, then the directory of
    the importing file; bundled schemata are the last resort.
    """
    dirs = []
    if extra:
        if isinstance(extra, (str, Path)):
            extra = str(extra).split(os.pathsep)
        dirs.extend(Path(p) for p in extra if p)
    env = os.environ.get(ENV_VAR, "")
    dirs.extend(Path(p) for p in env.split(os.pathsep) if p)
    if base_dir is not None:
        dirs.append(Path(base_dir))
    return dirs


def bundled_schema(name: str) -> str | None:
    res = resources.files("i2d").joinpath("schemas", f"{name}.i2d")
    if res.is_file():
        return res.read_text(encoding="utf-8")
    return None


def file_loader(paths=None, base_dir=None) -> Callable[[str], Schema]:
    dirs = search_path(paths, base_dir)

    def load(name: str) -> Schema:
        fname = name if name.endswith(".i2d") else f"{name}.i2d"
        for d in dirs:
            candidate = d / fname
            if candidate.is_file():
                return parse_file(candidate)
        text = bundled_schema(name.removesuffix(".i2d"))
        if text is not None:
            return parse(text, f"<schema {name}>")
        raise ImportError_(f"schema not found: {name}")

    return load


def _class_kinds(d: Diagram) -> dict:
    out: dict = {}
    for kind, names in (("item", d.item_classes), ("entity", d.entity_classes),
                        ("flow", d.flow_classes)):
        for n in names:
            out.setdefault(n, set()).add(kind)
    return out


def _merge(base: Diagram, schema: Diagram) -> Diagram:
    kinds = _class_kinds(base)
    for name, ks in _class_kinds(schema).items():
        both = kinds.get(name, set()) | ks
        if len(both) > 1:
            raise ImportError_(
                f"conflicting class kind for {name}: declared as "
                + " and ".join(sorted(both)) + " class")
    ents = set(base.entity_map)
    flows = set(base.flow_map)
    new_entities = tuple(e for e in schema.entities if e.name not in ents)
    new_flows = tuple(f for f in schema.flows if f.name not in flows)

    def union(a: tuple, b: tuple) -> tuple:
        return a + tuple(x for x in b if x not in a)

    return replace(
        base,
        entities=base.entities + new_entities,
        flows=base.flows + new_flows,
        rules=union(base.rules, schema.rules),
        entity_rules=union(base.entity_rules, schema.entity_rules),
        requirements=union(base.requirements, schema.requirements),
        item_classes=base.item_classes | schema.item_classes,
        entity_classes=base.entity_classes | schema.entity_classes,
        flow_classes=base.flow_classes | schema.flow_classes,
    )


def resolve_imports(diagram: Diagram, loader: Callable[[str], Schema]) -> Diagram:
    """Merge every imported schema (transitively) into ``diagram``.

    The result has no pending imports.  Imported rules follow the
    diagram's own rules, schemata taken in name order, so the result does
    not depend on the order of ``use`` statements.  Duplicate content is
    merged idempotently; cycles and class-kind conflicts raise.
    """
    done: dict = {}

    def load(name: str, stack: tuple) -> Diagram:
        if name in stack:
            raise ImportError_("import cycle: " + " -> ".join(stack + (name,)))
        if name in done:
            return done[name]
        schema = loader(name)
        flat = replace(schema, imports=())
        for sub in sorted(schema.imports):
            flat = _merge(flat, load(sub, stack + (name,)))
        done[name] = flat
        return flat

    result = replace(diagram, imports=())
    for name in sorted(diagram.imports):
        result = _merge(result, load(name, ()))
    report = validate(result)
    if report:
        raise ImportError_("; ".join(str(i) for i in report.issues))
    return result
