"""Recursive-descent parser for the ``.i2d`` language.

Grammar (``[]`` optional, ``*`` repetition)::

    model     := stmt*
    stmt      := use | classdecl | entity | flow | rule | erule | require
    use       := 'use' STRING ';'
    classdecl := 'class' ('item'|'entity'|'flow') IDENT (',' IDENT)* ';'
    entity    := 'entity' IDENT [':' idlist] ('{' (item | entity)* '}' | ';')
    item      := 'item' IDENT [':' classes] ['@' NUMBER] ';'
    flow      := 'flow' [IDENT ':'] IDENT '->' IDENT [':' idlist]
                 ['[' ('*' | itemref (',' itemref)*) ']'] ('{' flow* '}' | ';')
    rule      := 'rule' ['on' idlist ':'] premise (',' premise)*
                 ('|-' ['@' NUMBER] outcome (',' outcome)* | '=>' outcome) ';'
    premise   := ['!'] IDENT '(' VAR ')' | '*' [IDENT] '(' VAR ')' | itemref
    outcome   := IDENT [':' classset]
    erule     := 'erule' IDENT '->' ('item' ... | 'entity' ... | 'flow' ...)
    require   := 'require' reqitem (',' reqitem)* ('in'|'not-in') target ';'
    target    := '*' ['\\' IDENT (',' IDENT)*] | IDENT
    itemref   := IDENT [':' classset] ['@' NUMBER]
    classset  := IDENT | '{' IDENT (',' IDENT)* '}'
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..model import (
    SELF,
    AnyClassAtom,
    ClassAtom,
    Diagram,
    Entity,
    EntityRule,
    Flow,
    Item,
    ItemOutcome,
    ItemPattern,
    Requirement,
    Rule,
    VarOutcome,
    merge_item,
    validate,
    with_implicit_classes,
)
from .lexer import Location, ParseError, Token, tokenize


@dataclass(frozen=True)
class SourceModel:
    text: str
    path: str = "<input>"


class _Parser:
    def __init__(self, text: str, path: str):
        self.tokens = tokenize(text, path)
        self.pos = 0
        self.path = path
        # element name -> location, for diagnostics after parsing
        self.locations: dict = {}

    # -- token helpers --------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, value: str, kind: str | None = None) -> bool:
        t = self.tok
        return t.value == value and t.kind != "string" and (kind is None or t.kind == kind)

    def accept(self, value: str) -> Token | None:
        if self.at(value):
            tok = self.tok
            self.pos += 1
            return tok
        return None

    def expect(self, *values: str) -> Token:
        for v in values:
            if self.at(v):
                tok = self.tok
                self.pos += 1
                return tok
        self.fail(f"unexpected {self.describe(self.tok)}", expected=values)

    def ident(self, what: str = "identifier") -> str:
        tok = self.tok
        if tok.kind != "ident":
            self.fail(f"unexpected {self.describe(tok)}", expected=(what,))
        self.pos += 1
        return tok.value

    def number(self) -> float:
        tok = self.tok
        if tok.kind != "number":
            self.fail(f"unexpected {self.describe(tok)}", expected=("number",))
        self.pos += 1
        return float(tok.value)

    def fail(self, message: str, expected=(), tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(message, tok.location, tuple(f"'{e}'" if e not in (
            "identifier", "number", "string", "statement", "class", "variable",
            "entity name", "flow name", "item name") else e for e in expected))

    @staticmethod
    def describe(tok: Token) -> str:
        if tok.kind == "eof":
            return "end of input"
        if tok.kind == "string":
            return f'string "{tok.value}"'
        return f"'{tok.value}'"

    # -- shared pieces -------------------------------------------------

    def idlist(self) -> list:
        out = [self.ident("class")]
        while self.accept(","):
            out.append(self.ident("class"))
        return out

    def classset(self) -> list:
        if self.accept("{"):
            out = [self.ident("class")]
            while self.accept(","):
                out.append(self.ident("class"))
            self.expect("}")
            return out
        return [self.ident("class")]

    def grade(self) -> float:
        if self.accept("@"):
            return self.number()
        return 1.0

    def itemref(self, with_grade: bool = True) -> Item:
        name = self.ident("item name")
        classes = self.classset() if self.accept(":") else []
        grade = self.grade() if with_grade else 1.0
        return Item(name, frozenset(classes), grade)

    # -- statements ----------------------------------------------------

    def model(self):
        entities: list = []
        flows: list = []
        rules: list = []
        erules: list = []
        reqs: list = []
        imports: list = []
        registries = {"item": set(), "entity": set(), "flow": set()}
        while self.tok.kind != "eof":
            t = self.tok
            if self.at("entity", "kw"):
                entities.append(self.entity())
            elif self.at("flow", "kw"):
                flows.append(self.flow())
            elif self.at("rule", "kw"):
                self.locations[f"R{len(rules) + 1}"] = t.location
                rules.append(self.rule())
            elif self.at("erule", "kw"):
                self.locations[f"E{len(erules) + 1}"] = t.location
                erules.append(self.erule())
            elif self.at("require", "kw"):
                self.locations[f"N{len(reqs) + 1}"] = t.location
                reqs.append(self.require())
            elif self.at("use", "kw"):
                self.pos += 1
                if self.tok.kind == "string":
                    imports.append(self.tok.value)
                    self.pos += 1
                else:
                    imports.append(self.ident("string"))
                self.expect(";")
            elif self.at("class", "kw"):
                self.pos += 1
                kind = self.expect("item", "entity", "flow").value
                for name in self.idlist():
                    self.locations.setdefault(name, t.location)
                    registries[kind].add(name)
                self.expect(";")
            else:
                self.fail(f"unexpected {self.describe(t)}", expected=(
                    "entity", "flow", "rule", "erule", "require", "use", "class"))
        return Diagram(
            entities=tuple(entities),
            flows=tuple(flows),
            rules=tuple(rules),
            entity_rules=tuple(erules),
            requirements=tuple(reqs),
            item_classes=frozenset(registries["item"]),
            entity_classes=frozenset(registries["entity"]),
            flow_classes=frozenset(registries["flow"]),
            imports=tuple(imports),
        )

    def entity(self) -> Entity:
        self.expect("entity")
        return self.entity_body()

    def entity_body(self) -> Entity:
        loc = self.tok.location
        name = self.ident("entity name")
        self.locations.setdefault(name, loc)
        classes = self.idlist() if self.accept(":") else []
        items: tuple = ()
        children: list = []
        if self.accept("{"):
            while not self.accept("}"):
                if self.at("item", "kw"):
                    self.pos += 1
                    it = self.item_body()
                    items = merge_item(items, it)
                elif self.at("entity", "kw"):
                    children.append(self.entity())
                else:
                    self.fail(f"unexpected {self.describe(self.tok)}",
                              expected=("item", "entity", "}"))
            self.accept(";")
        else:
            self.expect(";")
        return Entity(name, frozenset(classes), items, tuple(children))

    def item_body(self) -> Item:
        name = self.ident("item name")
        classes = []
        if self.accept(":"):
            if self.at("{"):
                classes = self.classset()
            else:
                classes = self.idlist()
        g = self.grade()
        self.expect(";")
        return Item(name, frozenset(classes), g)

    def flow(self) -> Flow:
        self.expect("flow")
        return self.flow_body()

    def flow_body(self) -> Flow:
        loc = self.tok.location
        name = ""
        if self.tok.kind == "ident" and self.peek().value == ":":
            name = self.ident("flow name")
            self.pos += 1
            self.locations.setdefault(name, loc)
        origin = self.ident("entity name")
        self.expect("->")
        target = self.ident("entity name")
        classes = self.idlist() if self.accept(":") else []
        items: tuple = ()
        wildcard = False
        if self.accept("["):
            if not self.at("]"):
                while True:
                    if self.accept("*"):
                        wildcard = True
                    else:
                        items = merge_item(items, self.itemref())
                    if not self.accept(","):
                        break
            self.expect("]")
        subflows = []
        if self.accept("{"):
            while not self.accept("}"):
                if not self.at("flow", "kw"):
                    self.fail(f"unexpected {self.describe(self.tok)}", expected=("flow", "}"))
                subflows.append(self.flow())
            self.accept(";")
        else:
            self.expect(";")
        return Flow(name, origin, target, frozenset(classes), items, wildcard, tuple(subflows))

    def rule(self) -> Rule:
        self.expect("rule")
        scope = []
        if self.accept("on"):
            scope = self.idlist()
            self.expect(":")
        premises = [self.premise()]
        while self.accept(","):
            premises.append(self.premise())
        variables = {p.var for p in premises if not isinstance(p, ItemPattern)}
        captures = {p.capture for p in premises if isinstance(p, AnyClassAtom) and p.capture}
        op = self.expect("|-", "=>").value
        prob = 1.0
        if op == "|-" and self.accept("@"):
            prob = self.number()
        outcomes = [self.outcome(variables, captures)]
        if op == "|-":
            while self.accept(","):
                outcomes.append(self.outcome(variables, captures))
        self.expect(";")
        return Rule(tuple(premises), tuple(outcomes), frozenset(scope), prob, op == "=>")

    def premise(self):
        if self.accept("!"):
            cls = self.ident("class")
            return ClassAtom(cls, self.var_arg(), negated=True)
        if self.accept("*"):
            capture = None
            if self.tok.kind == "ident":
                capture = self.ident("variable")
            return AnyClassAtom(self.var_arg(), capture)
        if self.tok.kind == "ident" and self.peek().value == "(":
            cls = self.ident("class")
            return ClassAtom(cls, self.var_arg())
        it = self.itemref(with_grade=False)
        return ItemPattern(it.name, it.classes)

    def var_arg(self) -> str:
        self.expect("(")
        v = self.ident("variable")
        self.expect(")")
        return v

    def outcome(self, variables: set, captures: set):
        name = self.ident("item name")
        cs = self.classset() if self.accept(":") else []
        classes = frozenset(c for c in cs if c not in captures)
        class_vars = frozenset(c for c in cs if c in captures)
        if name in variables:
            return VarOutcome(name, classes, class_vars)
        return ItemOutcome(name, classes, class_vars)

    def erule(self) -> EntityRule:
        self.expect("erule")
        cls = self.ident("class")
        self.expect("->")
        kind = self.expect("item", "entity", "flow").value
        if kind == "item":
            return EntityRule(cls, item=self.item_body())
        if kind == "entity":
            return EntityRule(cls, entity=self.entity_body())
        return EntityRule(cls, flow=self.flow_body())

    def require(self) -> Requirement:
        self.expect("require")
        items = [self.reqitem()]
        while self.accept(","):
            items.append(self.reqitem())
        present = self.expect("in", "not-in").value == "in"
        target = None
        exceptions: list = []
        if self.accept("*"):
            if self.accept("\\"):
                exceptions = [self.ident("entity name")]
                while self.accept(","):
                    exceptions.append(self.ident("entity name"))
        else:
            target = self.ident("entity name")
        self.expect(";")
        return Requirement(tuple(items), present, target, tuple(exceptions))

    def reqitem(self):
        if self.tok.kind == "ident" and self.peek().value == "(":
            cls = self.ident("class")
            return ClassAtom(cls, self.var_arg())
        it = self.itemref(with_grade=False)
        return ItemPattern(it.name, it.classes)


# -- anonymous flow naming ---------------------------------------------------


def name_anonymous_flows(diagram: Diagram) -> Diagram:
    """Give every unnamed flow the name ``<origin>_to_<target>[_k]``."""
    taken = {f.name for f in diagram.all_flows() if f.name}

    def fresh(f: Flow) -> str:
        base = f"{f.origin}_to_{f.target}"
        name, k = base, 2
        while name in taken:
            name = f"{base}_{k}"
            k += 1
        taken.add(name)
        return name

    def fix(f: Flow) -> Flow:
        subs = tuple(fix(s) for s in f.subflows)
        name = f.name or fresh(f)
        return replace(f, name=name, subflows=subs)

    if all(f.name for f in diagram.all_flows()):
        return diagram
    return replace(diagram, flows=tuple(fix(f) for f in diagram.flows))


def _locate(parser: _Parser, where: str) -> Location | None:
    return parser.locations.get(where)


def parse_raw(source, path: str = "<input>") -> tuple:
    """Parse without validation; returns ``(diagram, locations)``."""
    if isinstance(source, SourceModel):
        text, path = source.text, source.path
    else:
        text = source
    p = _Parser(text, path)
    d = p.model()
    d = name_anonymous_flows(with_implicit_classes(d))
    return d, p.locations


def parse(source, path: str = "<input>") -> Diagram:
    """Parse ``.i2d`` text into a validated :class:`Diagram`.

    Raises :class:`ParseError` for syntax errors and for models that break
    a structural invariant (the first offending element is located).
    """
    d, locations = parse_raw(source, path)
    report = validate(d)
    if report:
        first = report.issues[0]
        loc = locations.get(first.where) or Location(
            source.path if isinstance(source, SourceModel) else path, 1, 1)
        raise ParseError("; ".join(str(i) for i in report.issues), loc)
    return d


def parse_file(path) -> Diagram:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), str(path))


# -- transformation scripts -------------------------------------------------


@dataclass(frozen=True)
class ScriptStatement:
    line: int
    kind: str
    params: dict


_TRANSFORM_WORDS = ("add", "classify", "refine", "bisect", "fold")


class _ScriptParser(_Parser):
    def script(self) -> list:
        out = []
        while self.tok.kind != "eof":
            t = self.tok
            word = t.value
            if t.kind != "ident" or word not in _TRANSFORM_WORDS:
                self.fail(f"unexpected {self.describe(t)}", expected=_TRANSFORM_WORDS)
            self.pos += 1
            kind, params = getattr(self, "s_" + word)()
            out.append(ScriptStatement(t.location.line, kind, params))
        return out

    def s_add(self):
        what = self.tok.value
        if self.at("item", "kw"):
            self.pos += 1
            entity = self.ident("entity name")
            return "add_item", {"entity": entity, "item": self.item_body()}
        if self.at("entity", "kw"):
            self.pos += 1
            parent = None
            if self.accept("in"):
                parent = self.ident("entity name")
            return "add_entity", {"entity": self.entity_body(), "parent": parent}
        if self.at("flow", "kw"):
            return "add_flow", {"flow": self.flow()}
        if self.at("rule", "kw"):
            return "add_rule", {"rule": self.rule()}
        if self.at("erule", "kw"):
            return "add_entity_rule", {"rule": self.erule()}
        if self.at("require", "kw"):
            return "add_requirement", {"requirement": self.require()}
        self.fail(f"unexpected '{what}'", expected=(
            "item", "entity", "flow", "rule", "erule", "require"))

    def s_classify(self):
        kind = self.expect("entity", "item", "flow").value
        names = [self.ident()]
        while self.accept(","):
            names.append(self.ident())
        self.expect(":")
        classes = self.idlist()
        self.expect(";")
        return "classify", {"kind": kind, "names": tuple(names), "classes": tuple(classes)}

    def s_refine(self):
        entity = self.ident("entity name")
        self.expect("{")
        children = []
        while not self.accept("}"):
            children.append(self.entity())
        keep = None
        retarget = {}
        while not self.accept(";"):
            word = self.ident()
            if word == "keep":
                keep = self.ident("entity name")
            elif word == "retarget":
                while True:
                    flow = self.ident("flow name")
                    self.expect("->")
                    retarget[flow] = self.ident("entity name")
                    if not self.accept(","):
                        break
            else:
                self.fail(f"unexpected '{word}'", expected=("keep", "retarget", ";"),
                          tok=self.peek(-1))
        return "refine", {"entity": entity, "children": tuple(children),
                          "keep": keep, "retarget": retarget}

    def s_bisect(self):
        flow = self.ident("flow name")
        mediator = self.entity_body()
        return "bisect", {"flow": flow, "mediator": mediator}

    def s_fold(self):
        entity = self.ident("entity name")
        depth = 0
        if self.tok.kind == "number":
            depth = int(self.number())
        flows = "deconstruct"
        if self.tok.kind == "ident":
            flows = self.ident()
            if flows not in ("collapse", "deconstruct"):
                self.fail(f"unexpected '{flows}'", expected=("collapse", "deconstruct"),
                          tok=self.peek(-1))
        self.expect(";")
        return "fold", {"entity": entity, "depth": depth, "flows": flows}


def parse_script(text: str, path: str = "<script>") -> list:
    """Parse a transformation script into :class:`ScriptStatement` records."""
    return _ScriptParser(text, path).script()
