import pytest

from i2d import evaluate, parse
from i2d.norms import TargetError, check, resolve_target


def verdicts(text, threshold=0.0):
    return check(evaluate(parse(text)), threshold=threshold)


def test_webapp_satisfied(load):
    (v,) = check(evaluate(load("webapp.i2d")))
    assert v.satisfied and v.status == "satisfied"


def test_not_in_violation_has_traced_witness(load):
    (v,) = check(evaluate(load("intercepted.i2d")))
    assert not v.satisfied
    (w,) = v.witnesses
    assert (w.entity, w.item, w.grade) == ("ISP", ("c", frozenset({"sec"})), 1.0)
    assert w.derivation is not None and w.derivation.entity == "ISP"


def test_in_on_complex_entity_needs_one_leaf():
    base = "entity S { entity S1 { item a; } entity S2; }"
    (v,) = verdicts(base + "require a in S;")
    assert v.satisfied
    (v,) = verdicts(base + "require a in S2;")
    assert not v.satisfied and v.missing[0].entity == "S2"


def test_in_on_entity_class_needs_every_member():
    d = "entity A : k { item a; } entity B : k; require a in k;"
    (v,) = verdicts(d)
    assert not v.satisfied
    assert [m.entity for m in v.missing] == ["B"]


def test_wildcard_with_exceptions():
    d = "entity A { item a; } entity B { item a; } entity C; require a in * \\ C;"
    (v,) = verdicts(d)
    assert v.satisfied
    (v,) = verdicts(d.replace("\\ C", ""))
    assert not v.satisfied
    (v,) = verdicts("entity A { item a; } entity B; require a not-in * \\ A;")
    assert v.satisfied


def test_in_on_empty_entity_is_violated():
    (v,) = verdicts("entity E; require a in E;")
    assert not v.satisfied


def test_class_patterns_use_subset_matching():
    (v,) = verdicts("entity U : u { item c:{sec,enc}; } require sec(x) not-in u;")
    assert not v.satisfied


def test_threshold():
    text = "entity U : u { item a @0.3; } require a not-in u;"
    assert not verdicts(text)[0].satisfied
    assert verdicts(text, threshold=0.3)[0].satisfied
    assert not verdicts(text, threshold=0.29)[0].satisfied
    with pytest.raises(ValueError):
        verdicts(text, threshold=1.5)


def test_resolve_target(load):
    d = load("webapp.i2d")
    from i2d.model import ItemPattern, Requirement

    assert resolve_target(Requirement((ItemPattern("a"),), True, "Server"), d) == {
        "WebServer", "Database"}
    assert resolve_target(Requirement((ItemPattern("a"),), True, "untrusted"), d) == set()
    with pytest.raises(TargetError):
        resolve_target(Requirement((ItemPattern("a"),), True, "Nope"), d)


def test_targets_include_structural_children():
    (v,) = verdicts("entity A : k; erule k -> entity Log; erule k -> item t;"
                    "require t in Log;")
    assert v.satisfied
