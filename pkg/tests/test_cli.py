import json
import shutil
import subprocess
import sys

import pytest

from foldlog.cli import EXIT_BLOWUP, EXIT_INVALID, EXIT_NONE, EXIT_OK, main
from foldlog.parser import parse_clause

from _gen import FIXTURES

KEYS = {"version", "command", "compiled", "outcomes", "completeness", "residual", "answers",
        "warnings", "diagnostics", "exit"}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--format", "json")
    report = json.loads(out)
    assert KEYS <= set(report)
    assert report["exit"] == code
    return code, report, err


def fx(name):
    return str(FIXTURES / f"{name}.fl")


def test_compile_prints_inverse_rules(capsys):
    code, out, _ = run(capsys, "compile", fx("horn_ic"))
    assert code == EXIT_OK
    assert "CCrr1: p1(X,Y,Z) :- r(X,Y,Z)." in out
    assert "CCrr2: p2(X,$sk_r_0_U(X,Y,Z)) :- r(X,Y,Z)." in out


def test_compile_disjunctive(capsys):
    code, report, _ = run_json(capsys, "compile", fx("disjunctive"))
    assert "CCrr1: p1(X) ; p3(X) :- r(X)." in report["compiled"]
    assert "CCrr2: p2(X) ; p3(X) :- r(X)." in report["compiled"]


def test_unsafe_rule_exit_2(capsys, tmp_path):
    f = tmp_path / "bad.fl"
    f.write_text("#edb p/1.\n#res\nr(X,Y) :- p(X).\n")
    code, out, err = run(capsys, "compile", str(f))
    assert code == EXIT_INVALID
    assert "unsafe" in err and "Y" in err and out == ""


def test_missing_file_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "fold", str(tmp_path / "nope.fl"))
    assert code == EXIT_INVALID and "error" in err


def test_fold_horn_ic(capsys):
    code, report, _ = run_json(capsys, "fold", fx("horn_ic"))
    assert code == EXIT_OK
    (o,) = report["outcomes"]
    assert o["kind"] == "CompleteFolding" and o["clause"] == "q(X,Y) :- r(X,Y,Z), Z > 1."
    assert [p["step"] for p in o["proof"]][:2] == ["QUERY", "RESOLVE"]
    assert report["completeness"] is None and report["answers"] is None


def test_fold_no_foldings_exit_1(capsys):
    code, report, _ = run_json(capsys, "fold", fx("key_wide"))
    assert code == EXIT_NONE
    assert all(o["kind"] == "NoResource" for o in report["outcomes"])


def test_fold_check_completeness(capsys):
    code, report, _ = run_json(capsys, "fold", fx("disjunctive"), "--check-completeness")
    assert code == EXIT_OK
    assert report["completeness"]["status"] == "Proven"
    assert report["completeness"]["refutation"][-1]["clause"] == ":-."


def test_fold_residual(capsys):
    _, report, _ = run_json(capsys, "fold", fx("residual"), "--check-completeness")
    assert report["completeness"]["status"] == "NotProven"
    assert report["residual"] == ["p4(X) , p5(X)"]


def test_fold_bad_depth(capsys):
    code, _, err = run(capsys, "fold", fx("horn_ic"), "--depth", "0")
    assert code == EXIT_INVALID and "depth" in err


def test_fold_text_with_proof(capsys):
    code, out, _ = run(capsys, "fold", fx("horn_ic"), "--proof")
    assert code == EXIT_OK
    assert out.splitlines()[0] == "CompleteFolding: q(X,Y) :- r(X,Y,Z), Z > 1."
    assert "resolve IC1" in out


@pytest.mark.parametrize("name", ["horn_ic", "medical_partial", "four_cases_cwa", "disjunctive_cwa", "inclusion", "negation_compiled"])
def test_clauses_round_trip(capsys, name):
    _, report, _ = run_json(capsys, "fold", fx(name))
    for o in report["outcomes"]:
        assert str(parse_clause(o["clause"])) == o["clause"]
        for step in o["proof"]:
            assert str(parse_clause(step["clause"])) == step["clause"]


def test_output_is_byte_stable(capsys):
    first = run(capsys, "fold", fx("four_cases"), "--format", "json")[1]
    second = run(capsys, "fold", fx("four_cases"), "--format", "json")[1]
    assert first == second


def test_eval_edge(capsys):
    code, report, _ = run_json(capsys, "eval", fx("edge_pairs"))
    assert code == EXIT_OK
    assert report["answers"] == [["a", "b"], ["a", "c"], ["b", "c"]]


def test_eval_disjunctive(capsys):
    _, report, _ = run_json(capsys, "eval", fx("certain"))
    assert report["answers"] == [["a"]] and report["route"] == "certain"


def test_eval_mccrr_route(capsys):
    _, report, _ = run_json(capsys, "eval", fx("all_paths"))
    assert report["route"] == "mccrr"
    assert any("modified completion" in w for w in report["warnings"])


def test_eval_blowup_exit_3(capsys, tmp_path):
    f = tmp_path / "many.fl"
    facts = "".join(f"r(c{i}).\n" for i in range(12))
    f.write_text((FIXTURES / "certain.fl").read_text().split("#facts")[0] + "#facts\n" + facts)
    code, _, err = run(capsys, "eval", str(f), "--cap", "100")
    assert code == EXIT_BLOWUP and "subcomputations" in err


def test_eval_needs_facts(capsys):
    code, _, _ = run(capsys, "eval", fx("horn_ic"))
    assert code == EXIT_INVALID


def test_console_script():
    exe = shutil.which("foldlog")
    cmd = [exe] if exe else [sys.executable, "-m", "foldlog.cli"]
    proc = subprocess.run(cmd + ["fold", fx("horn_ic")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "CompleteFolding: q(X,Y) :- r(X,Y,Z), Z > 1." in proc.stdout
