import json
import subprocess
import sys

import pytest

from i2d.cli import main
from conftest import FIXTURES


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def fx(name):
    return FIXTURES / name


def test_check_satisfied(capsys):
    code, out, _ = run(capsys, "check", fx("webapp.i2d"))
    assert code == 0
    assert "require UserData not-in untrusted; satisfied" in out


def test_check_violation_lists_witness_and_trace(capsys):
    code, out, _ = run(capsys, "check", fx("intercepted.i2d"))
    assert code == 1
    assert "witness c:sec at ISP @1" in out
    assert "c:sec at ISP @1 (declared)" in out


def test_check_encrypted_and_mitm(capsys):
    assert run(capsys, "check", fx("encrypted_intercepted.i2d"))[0] == 0
    code, out, _ = run(capsys, "check", fx("mitm.i2d"))
    assert code == 1 and "<- rule R8" in out


def test_syntax_error_exit_2(capsys):
    code, out, err = run(capsys, "check", fx("syntax_error.i2d"))
    assert code == 2 and out == ""
    assert "syntax_error.i2d:2:14: error: unexpected '['" in err


def test_missing_file_exit_3(capsys):
    code, _, err = run(capsys, "check", fx("nope.i2d"))
    assert code == 3 and "No such file" in err


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["check", "--threshold", "2", str(fx("webapp.i2d"))])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_eval_listing(capsys):
    code, out, _ = run(capsys, "eval", fx("webapp.i2d"))
    assert code == 0
    assert "Client: Request@1, Response@1, UserData@1" in out.splitlines()
    code, out, _ = run(capsys, "eval", fx("grades.i2d"))
    assert "A: a@0.8, b@0.4" in out.splitlines()


def test_eval_empty(capsys):
    code, out, _ = run(capsys, "eval", fx("empty.i2d"))
    assert code == 0
    assert out.splitlines()[1:] == []


def test_eval_ignores_violations(capsys):
    assert run(capsys, "eval", fx("intercepted.i2d"))[0] == 0


def test_schema_resolution(capsys):
    _, out, _ = run(capsys, "eval", fx("tcp_usage.i2d"))
    assert "Server: fingerprinted_operating_system@1, p:TCP@1" in out


def test_schema_path_flag(capsys, tmp_path):
    (tmp_path / "tcp.i2d").write_text("rule TCP(x), *(x) |- custom;")
    _, out, _ = run(capsys, "eval", "--schema-path", tmp_path, fx("tcp_usage.i2d"))
    assert "Client: custom@1, p:TCP@1" in out


def test_trace_flag(capsys):
    code, out, _ = run(capsys, "eval", "--trace", "UserData@Client", fx("webapp.i2d"))
    assert "trace UserData@Client" in out
    assert "  UserData at Client @1 <- flow response from WebServer" in out
    code, _, err = run(capsys, "eval", "--trace", "Nothing@Client", fx("webapp.i2d"))
    assert code == 2 and "not held" in err


def test_json_and_text_carry_same_facts(capsys):
    _, text, _ = run(capsys, "check", fx("mitm.i2d"))
    _, js, _ = run(capsys, "check", "--format", "json", fx("mitm.i2d"))
    records = [json.loads(line) for line in js.splitlines()]
    assert [r["kind"] for r in records] == ["summary", "verdict"]
    v = records[1]
    assert v["status"] == "violated" and v["witnesses"][0]["entity"] == "ISP"
    assert f"{v['requirement']} {v['status']}" in text
    assert f"{records[0]['iterations']} iterations" in text


def test_json_diagnostic(capsys):
    code, out, _ = run(capsys, "check", "--format", "json", fx("syntax_error.i2d"))
    (rec,) = [json.loads(line) for line in out.splitlines()]
    assert code == 2 and rec["kind"] == "diagnostic" and rec["line"] == 2


def test_multiple_files_keep_order_and_worst_code(capsys):
    code, out, err = run(capsys, "check", fx("intercepted.i2d"), fx("webapp.i2d"), fx("syntax_error.i2d"))
    assert code == 2
    assert out.index("intercepted.i2d") < out.index("webapp.i2d")


def test_output_is_deterministic(capsys):
    first = run(capsys, "check", "--format", "json", fx("mitm.i2d"), fx("webapp.i2d"))
    second = run(capsys, "check", "--format", "json", fx("mitm.i2d"), fx("webapp.i2d"))
    assert first == second


def test_rewrite_mode_flag(capsys, tmp_path):
    p = tmp_path / "m.i2d"
    p.write_text("entity A { item k; item s; } entity B; flow A -> B [k];"
                 "rule s |- j; rule k => j;")
    _, strat, _ = run(capsys, "eval", p)
    _, it, _ = run(capsys, "eval", "--rewrite-mode", "iterative", p)
    assert "B: j@1" in strat.splitlines()
    assert "B: j@1, k@1" in it.splitlines()


def test_threshold_flag(capsys, tmp_path):
    p = tmp_path / "m.i2d"
    p.write_text("entity U : u { item a @0.3; } require a not-in u;")
    assert run(capsys, "check", p)[0] == 1
    assert run(capsys, "check", "--threshold", "0.5", p)[0] == 0


def test_transform(capsys, tmp_path):
    out_path = tmp_path / "out.i2d"
    code, _, _ = run(capsys, "transform", fx("plaintext.i2d"), fx("intercept.script"), "-o", out_path)
    assert code == 0
    assert out_path.read_text() == fx("intercepted.i2d").read_text()
    assert run(capsys, "check", out_path)[0] == 1


def test_transform_empty_script_is_canonical_print(capsys, tmp_path):
    empty = tmp_path / "empty.script"
    empty.write_text("")
    code, out, _ = run(capsys, "transform", fx("encrypted_intercepted.i2d"), empty)
    assert code == 0 and out == fx("encrypted_intercepted.i2d").read_text()


def test_transform_failure_names_line(capsys, tmp_path):
    s = tmp_path / "bad.script"
    s.write_text("bisect content ISP;\nbisect content ISP2;\n")
    code, _, err = run(capsys, "transform", fx("plaintext.i2d"), s)
    assert code == 2 and ":2:1: error: line 2:" in err


def test_view(capsys):
    code, out, _ = run(capsys, "view", fx("webapp.i2d"), "Server", "0")
    assert code == 0
    assert "entity Server {\n  item UserData;\n}" in out
    assert "entity WebServer" not in out
    code, _, err = run(capsys, "view", fx("webapp.i2d"), "Nobody")
    assert code == 2 and "unknown entity Nobody" in err


def test_view_of_simple_entity_is_identity(capsys):
    from i2d import parse, print_diagram

    _, out, _ = run(capsys, "view", fx("webapp.i2d"), "Client")
    assert out == print_diagram(parse(fx("webapp.i2d").read_text()))


def test_export_dot(capsys):
    import pydot

    code, out, _ = run(capsys, "export", fx("webapp.i2d"), "dot")
    assert code == 0 and pydot.graph_from_dot_data(out)
    code, out, _ = run(capsys, "export", "--evaluate", fx("intercepted.i2d"))
    assert "color=red" in out


def test_import_dfd(capsys):
    code, out, _ = run(capsys, "import-dfd", fx("webapp_dfd.json"))
    assert code == 0 and "entity Server : dfd_trust_boundary {" in out


def test_stdin(monkeypatch, capsys):
    import io

    monkeypatch.setattr(sys, "stdin", io.StringIO("entity A { item a; } require a in A;"))
    assert run(capsys, "check", "-")[0] == 0


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "i2d.cli", "check", str(fx("intercepted.i2d"))],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "violated" in r.stdout
