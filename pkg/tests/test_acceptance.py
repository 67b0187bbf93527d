"""Acceptance checks.

Each test prints one ``PASS``/``FAIL`` line.  Run directly
(``python3 tests/test_acceptance.py``) for the summary alone.
"""

from __future__ import annotations

import difflib
import functools
import sys
import time
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from corpus import random_diagram  # noqa: E402
from oracle import reference_fixpoint  # noqa: E402

from i2d import EvalConfig, evaluate, parse, parse_file, print_diagram  # noqa: E402
from i2d.dsl import file_loader, parse_script, resolve_imports  # noqa: E402
from i2d.engine import IterationBoundExceeded, initial_state, materialize  # noqa: E402
from i2d.interop import read_dfd, topology_only  # noqa: E402
from i2d.model import ItemPattern, Requirement, item_key  # noqa: E402
from i2d.norms import check  # noqa: E402
from i2d.transforms import bisect, fold_view, run_script  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS_SIZE = 1000
TIME_LIMIT = 1.0


def report(name: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


@functools.lru_cache(maxsize=None)
def corpus(rewrites: bool) -> tuple:
    return tuple(random_diagram(seed, rewrites) for seed in range(CORPUS_SIZE))


@functools.lru_cache(maxsize=None)
def corpus_states(rewrites: bool) -> tuple:
    return tuple(evaluate(d) for d in corpus(rewrites))


def names_at(state, entity) -> set:
    return {k[0] for k in state.entity_items(entity)}


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# -- worked examples ------------------------------------------------------------


def accept_webapp() -> bool:
    def run():
        d = parse_file(FIXTURES / "webapp.i2d")
        s = evaluate(d)
        return s, check(s)

    (s, verdicts), dt = timed(run)
    client, web = names_at(s, "Client"), names_at(s, "WebServer")
    ok = ({"Response", "UserData"} <= client
          and {"Request", "UserData", "Response"} <= web
          and [v.satisfied for v in verdicts] == [True]
          and dt < TIME_LIMIT)
    return report("web application model", ok,
                  f"Client={sorted(client)} WebServer={sorted(web)} "
                  f"verdict={verdicts[0].status} time={dt:.3f}s")


def accept_interception_progression() -> bool:
    script = lambda name: parse_script((FIXTURES / name).read_text(), name)  # noqa: E731
    steps = []

    def plain():
        s = evaluate(parse_file(FIXTURES / "plaintext.i2d"))
        return "c" in names_at(s, "Client"), "Client gains c"

    def intercepted():
        d = run_script(parse_file(FIXTURES / "plaintext.i2d"), script("intercept.script"))
        (v,) = check(evaluate(d))
        wit = [(w.entity, w.item) for w in v.witnesses]
        ok = not v.satisfied and wit == [("ISP", item_key("c", ["sec"]))]
        return ok, f"{v.status}, witnesses={[(e, k[0]) for e, k in wit]}"

    def encrypted():
        d = run_script(parse_file(FIXTURES / "encrypted.i2d"),
                       script("encrypted_intercept.script"))
        s = evaluate(d)
        isp = names_at(s, "ISP")
        (v,) = check(s)
        ok = v.satisfied and {"kC_pub", "c_enc"} <= isp and "c" not in isp
        return ok, f"{v.status}, ISP={sorted(isp)}"

    def mitm():
        d = parse_file(FIXTURES / "mitm.i2d")
        s = evaluate(d)
        (v,) = check(s)
        attackers = {e.name for e in d.all_entities() if "attacker" in e.classes}
        at = {w.entity for w in v.witnesses}
        ok = not v.satisfied and at and at <= attackers
        return ok, f"{v.status} at {sorted(at)}"

    all_ok = True
    for label, fn in (("a", plain), ("b", intercepted), ("c", encrypted), ("d", mitm)):
        (ok, detail), dt = timed(fn)
        ok = bool(ok) and dt < TIME_LIMIT
        all_ok &= ok
        steps.append(f"({label}) {'ok' if ok else 'FAIL'} {detail} [{dt:.3f}s]")
    return report("interception progression", all_ok, "; ".join(steps))


# -- corpus properties -----------------------------------------------------------


def accept_termination() -> bool:
    failures = []
    worst = 0.0
    runs = 0
    for rewrites in (False, True):
        for seed, d in enumerate(corpus(rewrites)):
            for mode in ("stratified", "iterative"):
                runs += 1
                try:
                    s = evaluate(d, EvalConfig(rewrite_mode=mode))
                except IterationBoundExceeded:
                    failures.append((seed, rewrites, mode))
                    continue
                if s.iterations > s.bound:
                    failures.append((seed, rewrites, mode))
                worst = max(worst, s.iterations / s.bound)
    return report("termination", not failures,
                  f"{runs} runs over {CORPUS_SIZE} diagrams (with and without rewrite arrows), "
                  f"{len(failures)} bound violations, max iterations/bound={worst:.3f}")


def accept_oracle() -> bool:
    diffs = [seed for seed, (d, s) in enumerate(zip(corpus(False), corpus_states(False)))
             if reference_fixpoint(d) != s.items]
    return report("oracle equivalence", not diffs,
                  f"{CORPUS_SIZE - len(diffs)}/{CORPUS_SIZE} diagrams equal "
                  f"(exact items and grades); mismatching seeds={diffs[:10]}")


def accept_monotonicity() -> bool:
    violations = 0
    steps = 0
    for rewrites in (False, True):
        for d in corpus(rewrites):
            prev = None

            def watch(_, snap):
                nonlocal prev, violations, steps
                steps += 1
                if prev is not None:
                    for leaf, items in prev.items():
                        for k, g in items.items():
                            if snap[leaf].get(k, 0.0) < g:
                                violations += 1
                prev = snap

            evaluate(d, observer=watch)
    return report("monotonicity", violations == 0,
                  f"{steps} observed iterations, {violations} removals or grade decreases")


def _probe_requirements(d, state, entity) -> tuple:
    reqs = [replace(r, target=entity, exceptions=()) for r in d.requirements]
    for k in sorted(state.entity_items(entity), key=lambda k: (k[0], sorted(k[1]))):
        pat = ItemPattern(k[0], k[1])
        reqs.append(Requirement((pat,), True, entity))
        reqs.append(Requirement((pat,), False, entity))
    reqs.append(Requirement((ItemPattern("absent_everywhere"),), True, entity))
    return tuple(reqs)


def accept_view_consistency() -> bool:
    checked = mismatches = not_idempotent = 0
    for d, s in zip(corpus(False), corpus_states(False)):
        complex_ = [e.name for e in d.all_entities() if e.is_complex]
        if not complex_:
            continue
        m = materialize(d, s)
        for name in complex_:
            view = fold_view(m, name)
            if fold_view(view, name) != view:
                not_idempotent += 1
            reqs = _probe_requirements(d, s, name)
            vs = initial_state(view)
            a = [v.satisfied for v in check(s, replace(d, requirements=reqs), with_traces=False)]
            b = [v.satisfied for v in check(vs, replace(view, requirements=reqs),
                                             with_traces=False)]
            checked += len(reqs)
            mismatches += a != b
    ok = mismatches == 0 and not_idempotent == 0
    return report("view consistency", ok,
                  f"{checked} verdicts compared, {mismatches} entities with differing verdicts, "
                  f"{not_idempotent} non-idempotent folds")


def accept_bisection() -> bool:
    flows = changed = 0
    for d, s in zip(corpus(False), corpus_states(False)):
        for f in d.simple_flows():
            flows += 1
            after = evaluate(bisect(d, f.name, "FreshMediator"))
            if after.items[f.target] != s.items[f.target]:
                changed += 1
    return report("bisection pass-through", changed == 0,
                  f"{flows} flows bisected, {changed} targets changed")


def accept_roundtrip() -> bool:
    bad = []
    texts = sorted(p for p in FIXTURES.glob("*.i2d") if p.name != "syntax_error.i2d")
    for p in texts:
        d = parse_file(p)
        if parse(print_diagram(d)) != d:
            bad.append(p.name)
    for rewrites in (False, True):
        for seed, d in enumerate(corpus(rewrites)):
            if parse(print_diagram(d)) != d:
                bad.append(seed)
    s = evaluate(parse("entity A { item a @0.8; } rule a |- @0.5 b;"))
    g = s.grade("A", item_key("b"))
    ok = not bad and g == 0.4
    return report("DSL round trip", ok,
                  f"{len(texts)} fixtures + {2 * CORPUS_SIZE} corpus diagrams, "
                  f"{len(bad)} mismatches; a@0.8 with p=0.5 gives b@{g!r}")


def accept_schema() -> bool:
    loader = file_loader()
    with_tcp = evaluate(resolve_imports(parse_file(FIXTURES / "tcp_usage.i2d"), loader))
    without = evaluate(resolve_imports(parse_file(FIXTURES / "tcp_plain.i2d"), loader))
    fp = item_key("fingerprinted_operating_system")
    derived = sorted((leaf, k) for (_, leaf, ks) in with_tcp.applied for k in ks)
    ok = (with_tcp.holds("Client", fp)
          and derived == [(leaf, item_key("p", ["TCP"])) for leaf in ("Client", "Server")]
          and not without.applied
          and not any(fp in items for items in without.items.values()))
    return report("schema import", ok,
                  f"rule bindings with TCP={[(l, k[0]) for l, k in derived]}, "
                  f"without TCP={len(without.applied)}")


def accept_dfd_import() -> bool:
    imported = print_diagram(topology_only(read_dfd(FIXTURES / "webapp_dfd.json")))
    handwritten = print_diagram(topology_only(parse_file(FIXTURES / "webapp.i2d")))
    diff = list(difflib.unified_diff(handwritten.splitlines(), imported.splitlines(),
                                     "handwritten", "imported", lineterm=""))
    return report("DFD import topology", not diff,
                  "canonical prints identical" if not diff else "\n".join(diff))


CHECKS = [
    accept_webapp,
    accept_interception_progression,
    accept_termination,
    accept_oracle,
    accept_monotonicity,
    accept_view_consistency,
    accept_bisection,
    accept_roundtrip,
    accept_schema,
    accept_dfd_import,
]


def test_webapp():
    assert accept_webapp()


def test_interception_progression():
    assert accept_interception_progression()


def test_termination():
    assert accept_termination()


def test_oracle_equivalence():
    assert accept_oracle()


def test_monotonicity():
    assert accept_monotonicity()


def test_view_consistency():
    assert accept_view_consistency()


def test_bisection_pass_through():
    assert accept_bisection()


def test_dsl_roundtrip():
    assert accept_roundtrip()


def test_schema_import():
    assert accept_schema()


def test_dfd_import():
    assert accept_dfd_import()


if __name__ == "__main__":
    results = [check_() for check_ in CHECKS]
    print(f"{sum(results)}/{len(results)} acceptance checks passed")
    sys.exit(0 if all(results) else 1)
