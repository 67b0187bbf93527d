"""``i2d`` command-line front end.

Exit codes: 0 all requirements satisfied (or nothing to check), 1 some
requirement violated, 2 model or usage error, 3 I/O error.  With several
input files the highest code wins; reports keep the input order.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .dsl import ParseError, file_loader, parse, parse_script, print_diagram, resolve_imports
from .dsl.printer import format_requirement
from .engine import (
    REWRITE_MODES,
    EvalConfig,
    StructuralError,
    TraceError,
    evaluate,
    trace,
)
from .interop import DfdError, export_dot, read_dfd
from .model import format_key, parse_key
from .norms import TargetError, check
from .transforms import TransformError, fold_view, run_script

EXIT_OK, EXIT_VIOLATED, EXIT_MODEL, EXIT_IO = 0, 1, 2, 3
MODEL_ERRORS = (ParseError, TransformError, StructuralError, TargetError, DfdError,
                TraceError, ValueError)


@dataclass
class RunReport:
    """Facts gathered for one input; rendered as text or JSON lines."""

    path: str
    records: list = field(default_factory=list)
    exit_code: int = EXIT_OK

    def add(self, kind: str, **fields) -> None:
        self.records.append({"kind": kind, "file": self.path, **fields})

    def fail(self, code: int, message: str, line: int | None = None,
             column: int | None = None) -> None:
        self.add("diagnostic", severity="error", message=message, line=line, column=column)
        self.exit_code = max(self.exit_code, code)

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)
        return "".join(_text(r) for r in self.records)


def _grade(g: float) -> str:
    return f"{g:g}"


def _tree_lines(tree: dict, depth: int) -> list:
    head = f"{tree['item']} at {tree['entity']} @{_grade(tree['grade'])}"
    if tree["kind"] == "declared":
        head += " (declared)"
    elif tree["kind"] == "seed":
        head += f" (entity rule {tree['source']})"
    elif tree["kind"] == "flow":
        head += f" <- flow {tree['source']} from {tree['children'][0]['entity']}"
    else:
        head += f" <- rule {tree['source']}"
    out = ["  " * depth + head]
    for c in tree["children"]:
        out.extend(_tree_lines(c, depth + 1))
    return out


def _text(r: dict) -> str:
    kind = r["kind"]
    if kind == "diagnostic":
        where = r["file"]
        if r.get("line") is not None:
            where += f":{r['line']}:{r['column']}"
        return f"{where}: error: {r['message']}\n"
    if kind == "summary":
        return (f"{r['file']}: {r['iterations']} iterations, {r['strata']} strata, "
                f"{r['entities']} simple entities, {r['items']} items held\n")
    if kind == "entity-items":
        items = ", ".join(f"{i['item']}@{_grade(i['grade'])}" for i in r["items"])
        return f"{r['entity']}: {items}\n"
    if kind == "verdict":
        lines = [f"[{r['index']}] {r['requirement']} {r['status']}"]
        for w in r["witnesses"]:
            lines.append(f"  witness {w['item']} at {w['entity']} @{_grade(w['grade'])}")
            if w.get("derivation"):
                lines.extend(_tree_lines(w["derivation"], 2))
        for m in r["missing"]:
            lines.append(f"  missing {m['pattern']} in {m['entity']}")
        return "\n".join(lines) + "\n"
    if kind == "trace":
        return "\n".join([f"trace {r['target']}"] + _tree_lines(r["derivation"], 1)) + "\n"
    if kind == "document":
        return r["text"]
    raise ValueError(kind)


# -- loading -----------------------------------------------------------------


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def load_model(path: str, schema_path=None, resolve: bool = True):
    """Parse ``path`` (``-`` for stdin) and merge its imported schemata."""
    text = _read(path)
    d = parse(text, "<stdin>" if path == "-" else path)
    if resolve and d.imports:
        base = os.getcwd() if path == "-" else os.path.dirname(os.path.abspath(path))
        d = resolve_imports(d, file_loader(schema_path, base))
    return d


def _guard(report: RunReport, fn) -> RunReport:
    try:
        fn(report)
    except OSError as exc:
        report.fail(EXIT_IO, f"{exc.strerror or exc}")
    except ParseError as exc:
        loc = exc.location
        msg = exc.message
        if exc.expected:
            msg += " (expected " + ", ".join(exc.expected) + ")"
        report.fail(EXIT_MODEL, msg, loc.line if loc else None, loc.column if loc else None)
    except MODEL_ERRORS as exc:
        report.fail(EXIT_MODEL, str(exc))
    return report


def _config(args) -> EvalConfig:
    return EvalConfig(rewrite_mode=args.rewrite_mode)


def _items_records(report: RunReport, state) -> None:
    leaves = sorted(state.items)
    report.add("summary", iterations=state.iterations, strata=state.strata,
               entities=len(leaves), items=sum(len(state.items[l]) for l in leaves))
    for leaf in leaves:
        held = state.items[leaf]
        keys = sorted(held, key=lambda k: (k[0], sorted(k[1])))
        report.add("entity-items", entity=leaf,
                   items=[{"item": format_key(k), "grade": held[k]} for k in keys])


def _trace_records(report: RunReport, state, targets) -> None:
    for target in targets:
        item, sep, entity = target.rpartition("@")
        if not sep or not item or not entity:
            raise ValueError(f"trace target must be ITEM@ENTITY, got {target!r}")
        tree = trace(state, entity, parse_key(item))
        report.add("trace", target=target, derivation=tree.to_dict())


def _evaluate_file(path: str, args, with_check: bool) -> RunReport:
    def run(report: RunReport) -> None:
        d = load_model(path, args.schema_path)
        state = evaluate(d, _config(args))
        if not with_check:
            _items_records(report, state)
        else:
            report.add("summary", iterations=state.iterations, strata=state.strata,
                       entities=len(state.items),
                       items=sum(len(v) for v in state.items.values()))
            for v in check(state, threshold=args.threshold):
                report.add(
                    "verdict", index=v.index, requirement=format_requirement(v.requirement),
                    status=v.status, threshold=v.threshold,
                    witnesses=[{"entity": w.entity, "item": format_key(w.item),
                                "grade": w.grade,
                                "derivation": w.derivation.to_dict() if w.derivation else None}
                               for w in v.witnesses],
                    missing=[{"entity": m.entity, "pattern": m.pattern} for m in v.missing],
                )
                if not v.satisfied:
                    report.exit_code = max(report.exit_code, EXIT_VIOLATED)
        _trace_records(report, state, args.trace)

    return _guard(RunReport(path), run)


def _run_many(paths, fn) -> list:
    if len(paths) == 1:
        return [fn(paths[0])]
    with ThreadPoolExecutor(max_workers=min(8, len(paths))) as pool:
        return list(pool.map(fn, paths))


# -- commands ----------------------------------------------------------------


def cmd_check(args) -> list:
    return _run_many(args.paths, lambda p: _evaluate_file(p, args, True))


def cmd_eval(args) -> list:
    return _run_many(args.paths, lambda p: _evaluate_file(p, args, False))


def _emit_document(report: RunReport, text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        report.add("document", text=text)


def cmd_transform(args) -> list:
    def run(report: RunReport) -> None:
        d = load_model(args.path, args.schema_path, resolve=False)
        script_text = _read(args.script)
        statements = parse_script(script_text, "<stdin>" if args.script == "-" else args.script)
        try:
            d = run_script(d, statements)
        except TransformError as exc:
            report.fail(EXIT_MODEL, str(exc), exc.line, 1 if exc.line else None)
            return
        _emit_document(report, print_diagram(d), args.output)

    return [_guard(RunReport(args.path), run)]


def cmd_view(args) -> list:
    def run(report: RunReport) -> None:
        d = load_model(args.path, args.schema_path, resolve=False)
        notes: list = []
        view = fold_view(d, args.entity, args.depth, args.flows, notes)
        for n in notes:
            logging.getLogger("i2d.view").info(n)
        _emit_document(report, print_diagram(view), args.output)

    return [_guard(RunReport(args.path), run)]


def cmd_export(args) -> list:
    def run(report: RunReport) -> None:
        d = load_model(args.path, args.schema_path)
        if args.target == "i2d":
            _emit_document(report, print_diagram(d), args.output)
            return
        state = verdicts = None
        if args.evaluate:
            state = evaluate(d, _config(args))
            verdicts = check(state, threshold=args.threshold)
            d = state.diagram
        _emit_document(report, export_dot(d, state, verdicts or ()), args.output)

    return [_guard(RunReport(args.path), run)]


def cmd_import_dfd(args) -> list:
    def run(report: RunReport) -> None:
        if args.path == "-":
            from .interop import import_dfd
            try:
                data = json.loads(sys.stdin.read())
            except json.JSONDecodeError as exc:
                raise DfdError(f"invalid JSON: {exc}") from None
            d = import_dfd(data)
        else:
            d = read_dfd(args.path)
        _emit_document(report, print_diagram(d), args.output)

    return [_guard(RunReport(args.path), run)]


# -- argument parsing --------------------------------------------------------


def _threshold(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("threshold must lie in [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text",
                        help="report format (json: one JSON object per line)")
    common.add_argument("--schema-path", action="append", default=[], metavar="DIR",
                        help="directory searched for imported schemata (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", help="log to stderr")

    evalopts = argparse.ArgumentParser(add_help=False)
    evalopts.add_argument("--threshold", type=_threshold, default=0.0,
                          help="grades above this count as present (default 0)")
    evalopts.add_argument("--rewrite-mode", choices=REWRITE_MODES, default="stratified")
    evalopts.add_argument("--trace", action="append", default=[], metavar="ITEM@ENTITY",
                          help="print a derivation of ITEM at ENTITY (repeatable)")

    p = argparse.ArgumentParser(prog="i2d", description="Item-flow model checker.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common, evalopts], help="evaluate and check requirements")
    c.add_argument("paths", nargs="+", metavar="MODEL")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("eval", parents=[common, evalopts], help="print fixpoint item sets")
    e.add_argument("paths", nargs="+", metavar="MODEL")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("transform", parents=[common], help="apply a transformation script")
    t.add_argument("path", metavar="MODEL")
    t.add_argument("script", metavar="SCRIPT")
    t.add_argument("-o", "--output", metavar="OUT")
    t.set_defaults(func=cmd_transform)

    v = sub.add_parser("view", parents=[common], help="fold an entity")
    v.add_argument("path", metavar="MODEL")
    v.add_argument("entity")
    v.add_argument("depth", type=int, nargs="?", default=0)
    v.add_argument("--flows", choices=("deconstruct", "collapse"), default="deconstruct")
    v.add_argument("-o", "--output", metavar="OUT")
    v.set_defaults(func=cmd_view)

    x = sub.add_parser("export", parents=[common, evalopts], help="export as DOT or canonical DSL")
    x.add_argument("path", metavar="MODEL")
    x.add_argument("target", nargs="?", choices=("dot", "i2d"), default="dot")
    x.add_argument("--evaluate", action="store_true",
                   help="annotate derived items and highlight violations")
    x.add_argument("-o", "--output", metavar="OUT")
    x.set_defaults(func=cmd_export)

    d = sub.add_parser("import-dfd", parents=[common], help="convert a DFD JSON document")
    d.add_argument("path", metavar="DFD")
    d.add_argument("-o", "--output", metavar="OUT")
    d.set_defaults(func=cmd_import_dfd)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    reports = args.func(args)
    for r in reports:
        if args.format == "json":
            sys.stdout.write(r.render("json"))
            continue
        # diagnostics go to stderr in text mode
        for rec in r.records:
            stream = sys.stderr if rec["kind"] == "diagnostic" else sys.stdout
            stream.write(_text(rec))
    sys.stdout.flush()
    return max((r.exit_code for r in reports), default=EXIT_OK)


if __name__ == "__main__":
    sys.exit(main())
