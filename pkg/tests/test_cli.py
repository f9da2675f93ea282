import json
import subprocess
import sys

import pytest

from causalineq.cli import main
from causalineq.io import constraint_from_dict, load_graph


@pytest.fixture
def fig1(graph_dir):
    return str(graph_dir / "instrument.yaml")


@pytest.fixture
def fig2(graph_dir):
    return str(graph_dir / "two_block.yaml")


def call(capsys, *argv):
    status = main([str(a) for a in argv])
    out = capsys.readouterr()
    return status, out.out, out.err


VIOLATING = """intervened: OBS
variables: Z:2 X:2 Y:2
values:
0.5
0
0
0
0
0.5
0
0
"""


@pytest.fixture
def violating_table(tmp_path):
    p = tmp_path / "bad.dist"
    p.write_text(VIOLATING)
    return p


def test_derive_equalities(capsys, fig2):
    status, out, _ = call(capsys, "derive-equalities", fig2)
    assert status == 0
    assert "P_{x,w2,y,z}(w1) = P(w1)" in out
    assert "[marginalize]" in out


def test_derive_inequalities_flags(capsys, fig1):
    status, out, _ = call(capsys, "derive-inequalities", fig1)
    assert status == 0
    assert "c-component {X,Y}:" in out
    assert "[trivial: single-term, implied-by-equalities]" in out


def test_findineqs_instrumental(capsys, fig1):
    status, out, _ = call(capsys, "findineqs", fig1)
    assert status == 0
    assert "sum_{y}(max_{z}(P(x,y|z))) <= 1" in out


def test_findineqs_pointwise(capsys, fig1):
    status, out, _ = call(capsys, "findineqs", fig1, "--pointwise", "2")
    assert status == 0 and "where B =" in out


def test_bounds_symbolic_and_numeric(capsys, fig2, tmp_path):
    d = tmp_path / "tabs"
    assert call(capsys, "oracle-export", fig2, "--out", d, "-a", "OBS", "-a", "W1,W2,Y")[0] == 0
    status, out, _ = call(capsys, "bounds", fig2, "--target", "W1,W2,X,Y", "-d", d / "obs.dist", "-d", d / "do_W1_W2_Y.dist")
    assert status == 0
    assert "target: P_{w1,x,w2,y}(z)" in out
    assert "bounding inequalities:" in out and "numeric bounds (cell):" in out
    status, out, _ = call(capsys, "bounds", fig2, "--target", "W1,W2,X,Y", "-d", d / "obs.dist",
                          "-d", d / "do_W1_W2_Y.dist", "--closure")
    assert "point-identified" in out


def test_oracle_export_then_evaluate(capsys, fig2, tmp_path):
    d = tmp_path / "tabs"
    status, out, _ = call(capsys, "oracle-export", fig2, "--out", d, "--seed", "3", "-a", "OBS", "-a", "W1,W2,X")
    assert status == 0 and out.count("wrote") == 2
    status, out, _ = call(capsys, "evaluate", fig2, "-d", d / "obs.dist", "-d", d / "do_W1_X_W2.dist")
    assert status == 0, out
    assert "no violation" in out


def test_iv_test_exit_codes(capsys, fig1, tmp_path, violating_table):
    status, out, _ = call(capsys, "iv-test", fig1, "-d", violating_table)
    assert status == 1
    assert "VIOLATED" in out and "proj:{Y}:{X,Y}" in out
    call(capsys, "oracle-export", fig1, "--out", tmp_path, "-a", "OBS")
    status, out, _ = call(capsys, "iv-test", fig1, "-d", tmp_path / "obs.dist")
    assert status == 0


def test_evaluate_reports_violation(capsys, fig1, violating_table):
    status, out, _ = call(capsys, "evaluate", fig1, "-d", violating_table)
    assert status == 1 and "VIOLATION" in out


def test_oracle_verify(capsys, fig1):
    status, out, _ = call(capsys, "oracle-verify", fig1, "--models", "3")
    assert status == 0 and out.strip().endswith("PASS")


def test_table_error_reports_line(capsys, fig1, tmp_path):
    p = tmp_path / "broken.dist"
    p.write_text(VIOLATING.replace("0.5\n0\n0\n0\n0\n", "0.5\n0\nabc\n0\n0\n"))
    status, out, err = call(capsys, "iv-test", fig1, "-d", p)
    assert status == 2
    assert f"{p}:6" in err and err.startswith("error:")


@pytest.mark.parametrize(
    "argv",
    [
        ["findineqs", "{g}", "-a", "Q"],
        ["bounds", "{g}", "--target", "X,NOPE"],
        ["evaluate", "{g}", "-d", "/nonexistent/table.dist"],
        ["derive-equalities", "/nonexistent/graph.yaml"],
    ],
)
def test_input_errors_exit_2(capsys, fig1, argv):
    status, out, err = call(capsys, *[a.format(g=fig1) for a in argv])
    assert status == 2 and err.startswith("error:") and out == ""


def test_bad_graph_file(capsys, tmp_path):
    p = tmp_path / "cyc.yaml"
    p.write_text("observed: {A: 2, B: 2}\nedges: [A -> B, B -> A]\n")
    assert call(capsys, "derive-equalities", p)[0] == 2


def test_cap_flag_and_env(capsys, fig2, monkeypatch):
    assert call(capsys, "derive-inequalities", fig2, "--cap", "2")[0] == 2
    monkeypatch.setenv("CAUSALINEQ_MAX_COMPONENT", "2")
    status, _, err = call(capsys, "derive-inequalities", fig2)
    assert status == 2 and "CAUSALINEQ_MAX_COMPONENT" in err
    assert call(capsys, "derive-inequalities", fig2, "--cap", "3")[0] == 0


@pytest.mark.parametrize("command", ["derive-equalities", "derive-inequalities", "findineqs"])
def test_json_deterministic_and_roundtrips(capsys, fig2, command):
    extra = ["-a", "W1,W2,Y"] if command == "findineqs" else []
    _, first, _ = call(capsys, command, fig2, "--format", "json", *extra)
    _, second, _ = call(capsys, command, fig2, "--format", "json", *extra)
    assert first == second
    doc = json.loads(first)
    g = load_graph(fig2)
    items = []
    for key in ("equalities", "inequalities", "kept", "projected"):
        items += doc.get(key, [])
    assert items
    for item in items:
        c = constraint_from_dict(item)
        assert c.render(g) == item["text"]
        assert c.ident(g) == item["id"]


def test_output_file(capsys, fig1, tmp_path):
    p = tmp_path / "out.txt"
    status, out, _ = call(capsys, "findineqs", fig1, "-o", p)
    assert status == 0 and out == ""
    assert "max_{z}" in p.read_text()


def test_console_entry_point(fig1):
    r = subprocess.run([sys.executable, "-m", "causalineq", "findineqs", fig1], capture_output=True, text=True)
    assert r.returncode == 0 and "sum_{y}" in r.stdout
