import json
import subprocess
import sys
from importlib import resources

import pytest

from bigpieces.cli import main


@pytest.fixture
def square(tmp_path):
    p = tmp_path / "E.pcs"
    assert main(["gen", "four_graphs", "-o", str(p)]) == 0
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_and_cubes(tmp_path, square, capsys):
    capsys.readouterr()
    code, out, _ = run(capsys, "cubes", square, "--ratio", 0.25, "-o", tmp_path / "t.tree")
    assert code == 0 and json.loads(out)["c1"] >= 0.05
    assert (tmp_path / "t.tree").read_text().startswith("cubes v1")


def test_construct_then_verify(tmp_path, square, capsys):
    F, tr, tree = tmp_path / "F.pcs", tmp_path / "trace.json", tmp_path / "t.tree"
    code, out, _ = run(capsys, "construct", square, "--scenario", "four_graphs", "-o", F, "--trace", tr,
                       "--tree", tree, "--no-validate", "--plot", tmp_path / "res.tsv")
    assert code == 0 and json.loads(out)["halted"] == "residual_tol"
    assert (tmp_path / "res.tsv").read_text().startswith("stage\tresidual")
    code, out, _ = run(capsys, "verify", "containment", "--E", square, "--F", F)
    assert code == 0 and json.loads(out)["status"] == "pass"
    code, out, _ = run(capsys, "verify", "decay", "--trace", tr)
    assert code == 0
    code, out, _ = run(capsys, "verify", "lemma1", "--trace", tr, "--tree", tree)
    assert code == 0
    # separation fails honestly on adjacent same-stage pieces
    code, out, _ = run(capsys, "verify", "separation", "--trace", tr, "--tree", tree)
    assert code == 1 and json.loads(out)["reports"][0]["counterexamples"]
    code, out, _ = run(capsys, "verify", "bp", "--F", F, "--trace", tr, "--scenario", "four_graphs",
                       "--theta", 0.1, "--samples", 60, "--report", tmp_path / "bp.json")
    assert code == 0
    code, out, _ = run(capsys, "report", tmp_path / "bp.json", "--format", "text")
    assert code == 0 and "bp" in out


def test_adr_deterministic(square, tmp_path, capsys):
    a = run(capsys, "adr", square, "--seed", 7, "--plot", tmp_path / "a.tsv")[1]
    b = run(capsys, "adr", square, "--seed", 7)[1]
    assert a == b
    assert run(capsys, "adr", square, "--seed", 7, "--cap", 1.01)[0] == 1


def test_extend(tmp_path, capsys):
    E = tmp_path / "E.pcs"
    E.write_text("pcs v1 n=1 k=1 eps=0.01\n" + "\n".join(repr(i / 100) for i in range(101)) + "\n")
    G = tmp_path / "G.pcs"
    G.write_text("pcs v1 n=1 k=1 eps=0.01\n" + "\n".join(repr(i / 100) for i in range(51)) + "\n")
    code, out, _ = run(capsys, "extend", G, "--ambient", E, "--A", 10, "-o", tmp_path / "Gt.pcs")
    assert code == 0 and json.loads(out)["rounds"] >= 1
    code, out, _ = run(capsys, "verify", "lemma2_containment", "--G", G, "--E", E, "--A", 10)
    assert code == 0


def test_usage_errors(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "no_such_scenario", "-o", tmp_path / "x.pcs")
    assert code == 2 and json.loads(err)["message"].startswith("scenario not found")
    code, _, err = run(capsys, "verify", "containment", "--E", tmp_path / "x.pcs")
    assert code == 2
    code, _, err = run(capsys, "adr", tmp_path / "missing.pcs")
    assert code == 2 and "error" in json.loads(err)


def test_oracle_failure_exit_code(tmp_path, capsys):
    d = json.loads((resources.files("bigpieces") / "scenarios" / "perpendicular_cross.scn").read_text())
    d["theta1"] = 0.95
    bad = tmp_path / "bad.scn"
    bad.write_text(json.dumps(d))
    E = tmp_path / "E.pcs"
    assert main(["gen", str(bad), "-o", str(E)]) == 0
    code, _, err = run(capsys, "construct", E, "--scenario", bad, "--no-validate", "-o", tmp_path / "F.pcs")
    assert code == 1 and "R" in json.loads(err)


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "bigpieces.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("bigpieces")
