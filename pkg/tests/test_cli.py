import json
import subprocess

import pytest

from gradlike.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_models(capsys):
    code, out, _ = run(["list-models"], capsys)
    assert code == 0
    names = [l.split("\t")[0] for l in out.splitlines()]
    assert {"autonomous_sin", "reversible", "reversible_mu", "slow_transit", "ap_perturbed"} <= set(names)


def test_classify_positive_and_files(tmp_path, capsys):
    js, csv, svg = tmp_path / "r.json", tmp_path / "e.csv", tmp_path / "f.svg"
    code, _, _ = run(["classify", "lib:autonomous_sin", "--json", str(js), "--csv", str(csv), "--svg", str(svg)], capsys)
    assert code == 0
    rep = json.loads(js.read_text())
    assert rep["gradient_like"] and rep["word"] == "US"
    assert csv.read_text().splitlines()[0] == "position,label"
    assert "u-curve" in svg.read_text()


def test_classify_negative_verdict(capsys):
    code, out, _ = run(["classify", "lib:reversible"], capsys)
    assert code == 1
    assert json.loads(out)["assumption1"]["status"] == "fails"


def test_classify_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        p = tmp_path / f"r{k}.json"
        assert run(["classify", "lib:riccati_gauss", "--seed", "7", "--json", str(p)], capsys)[0] == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize(
    "argv",
    [
        ["classify", "lib:nope"],
        ["classify", "word:UUX"],
        ["classify", "/no/such/file.json"],
        ["frobnicate"],
        ["classify"],
        ["poincare", "lib:autonomous_sin"],
    ],
)
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err


def test_malformed_specs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["classify", str(bad)], capsys)[0] == 2
    bad.write_text(json.dumps({"rhs": "sin(2*pi*x"}))
    assert run(["classify", str(bad)], capsys)[0] == 2
    bad.write_text(json.dumps({"rhs": "sin(2*pi*y)"}))
    assert run(["classify", str(bad)], capsys)[0] == 2


def test_numerical_failure(tmp_path, capsys):
    spec = tmp_path / "log.json"
    spec.write_text(json.dumps({"rhs": "ln(x - 2)"}))
    code, _, err = run(["simulate", str(spec), "0", "0.5", "1"], capsys)
    assert code == 3 and "numerical failure" in err


def test_equiv(capsys):
    code, out, _ = run(["equiv", "lib:autonomous_sin", "lib:riccati_gauss"], capsys)
    assert code == 0 and json.loads(out)["equivalent"]
    code, out, _ = run(["equiv", "word:UUSUSS", "word:UUSSUS"], capsys)
    assert code == 1
    doc = json.loads(out)
    assert not doc["orientation_preserving"] and doc["with_reflection"]
    assert run(["equiv", "word:UUSUSS", "word:UUSSUS", "--allow-reflection"], capsys)[0] == 0


def test_autonomize_round_trip(tmp_path, capsys):
    spec = tmp_path / "m.json"
    assert run(["autonomize", "SUSU", "--out", str(spec), "--svg", str(tmp_path / "a.svg")], capsys)[0] == 0
    doc = json.loads(spec.read_text())
    assert doc["word"] == "USUS"
    code, out, _ = run(["classify", str(spec)], capsys)
    assert code == 0 and json.loads(out)["word"] == "USUS"


def test_poincare(tmp_path, capsys):
    spec = tmp_path / "p.json"
    spec.write_text(json.dumps({"rhs": "0.1*sin(2*pi*x)", "period": 1.0}))
    csv = tmp_path / "o.csv"
    code, out, _ = run(["poincare", str(spec), "--csv", str(csv)], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["rational"] == "0" and rep["verdict"] == "hyperbolic periodic structure"
    assert len(csv.read_text().splitlines()) == 3


def test_equimorph(tmp_path, capsys):
    csv = tmp_path / "phi.csv"
    code, out, _ = run(["equimorph", "expr:-1", "expr:-2 - sin(t)", "--csv", str(csv)], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["ok"] and rep["conjugacy_residual"] <= 1e-8
    assert csv.read_text().startswith("C,tau,C1")
    assert run(["equimorph", "expr:1", "expr:-1"], capsys)[0] == 3


def test_simulate_csv(capsys):
    code, out, _ = run(["simulate", "lib:autonomous_sin", "0", "0.25", "2"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split(",")[:2] == ["t", "x"]
    assert float(lines[-1].split(",")[0]) == pytest.approx(2.0)


def test_almost_periods(capsys):
    code, out, _ = run(["almost-periods", "lib:ap_perturbed", "0.5", "0.1", "--window", "100"], capsys)
    assert code == 0
    assert json.loads(out)["relatively_dense"]


def test_console_script():
    r = subprocess.run(["gradlike", "classify", "word:XYZ"], capture_output=True, text=True)
    assert r.returncode == 2
    r = subprocess.run(["gradlike", "list-models"], capture_output=True, text=True)
    assert r.returncode == 0 and "slow_transit" in r.stdout
