import csv
import json

import pytest

from knapsack_contracts.cli import main
from knapsack_contracts.experiments import run_preset


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_then_nonadapt_oracle(tmp_path, capsys):
    inst = str(tmp_path / "a.json")
    assert run(capsys, "gen", "alpha-gap", "--eps", "1/10", "--gamma", "1/4", "--out", inst)[0] == 0
    code, out, _ = run(capsys, "oracle", inst, "--class", "nonadapt")
    assert code == 0
    data = json.loads(out)
    assert data["value"] == "1/10"
    assert data["invocation"].startswith("knapsack-contracts oracle")
    code, out, _ = run(capsys, "--format", "text", "oracle", inst, "--class", "nonadapt")
    assert "value: 1/10" in out


def test_policy_and_eval(tmp_path, capsys):
    inst, pol = str(tmp_path / "i.json"), str(tmp_path / "p.json")
    run(capsys, "gen", "random", "--n", "4", "--seed", "3", "--profile", "positive-w", "--out", inst)
    for algo, extra in (("skc", []), ("skc-of", ["--t", "1"]), ("skc-bound", ["--delta", "1/2"]),
                        ("ordered", ["--epsilon", "1/2"])):
        assert run(capsys, "policy", inst, "--algo", algo, *extra, "--out", pol)[0] == 0
        code, out, _ = run(capsys, "eval", inst, pol, "--exact")
        assert code == 0 and json.loads(out)["exact"] is True
    first = run(capsys, "eval", inst, pol, "--mc", "1000", "--seed", "7")
    second = run(capsys, "eval", inst, pol, "--mc", "1000", "--seed", "7")
    assert first == second and first[0] == 0


def test_contract_reduce_and_phi(tmp_path, capsys):
    inst, red = str(tmp_path / "c.json"), str(tmp_path / "r.json")
    run(capsys, "gen", "random-contract", "--n", "2", "--seed", "1", "--out", inst)
    assert run(capsys, "reduce", inst, "--out", red)[0] == 0
    code, out, _ = run(capsys, "solve-phi", red, "--budget", "1")
    assert code == 0 and "phi" in json.loads(out)
    code, out, _ = run(capsys, "contract", inst, "--agent", "0", "--action", "0")
    assert code in (0, 1)


def test_usage_and_parse_errors(tmp_path, capsys):
    assert run(capsys, "oracle")[0] == 2
    assert run(capsys, "gen", "alpha-gap", "--out", str(tmp_path / "x.json"))[0] == 2
    assert run(capsys, "gen", "alpha-gap", "--eps", "3/4", "--out", str(tmp_path / "x.json"))[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "oracle", str(bad), "--class", "adapt")
    assert code == 2 and "line 1" in err
    assert run(capsys, "oracle", str(tmp_path / "missing.json"), "--class", "adapt")[0] == 2


def test_too_large_exits_one(tmp_path, capsys):
    inst = str(tmp_path / "big.json")
    run(capsys, "gen", "random", "--n", "12", "--out", inst)
    assert run(capsys, "oracle", inst, "--class", "adapt")[0] == 1


def test_experiment_writes_csv_and_json(tmp_path, capsys):
    out = tmp_path / "res"
    code, stdout, _ = run(capsys, "experiment", "skc-bound", "--out", str(out))
    assert code == 0 and json.loads(stdout)["failed"] == 0
    with open(out / "skc-bound.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) >= 50 and all(r["pass"] == "True" for r in rows)
    assert {"experiment", "quantity", "value", "bound", "pass"} <= set(rows[0])
    report = json.loads((out / "skc-bound.json").read_text())
    assert all(r["criterion"] == 1 for r in report["rows"])


def test_failing_experiment_exits_one(tmp_path, capsys):
    assert run(capsys, "experiment", "bounded-gap", "--out", str(tmp_path))[0] == 1


def test_process_pool_matches_serial(monkeypatch):
    serial = run_preset("lp-gap", workers=1)
    monkeypatch.setenv("KC_WORKERS", "2")
    pooled = run_preset("reduction-equiv")
    again = run_preset("reduction-equiv", workers=1)
    strip = lambda rep: [(r.params, r.quantity, r.value, r.passed) for r in rep.rows]
    assert strip(pooled) == strip(again)
    assert serial.passed
