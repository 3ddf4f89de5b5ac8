import csv
import io
import json
import pathlib
import subprocess
import sys

import jsonschema
import pytest

from ksumwalk.cli import main

SCHEMA = json.loads((pathlib.Path(__file__).parents[1] / "schemas" / "report.json").read_text())


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def records(text):
    lines = [json.loads(line) for line in text.splitlines() if line]
    for rec in lines:
        jsonschema.validate(rec, SCHEMA)
    return lines


# -- simulate


def test_simulate_single_path_reproducible():
    argv = ("simulate", "--model", "ksum", "--p", "0.5", "--theta", "0", "--k", "1", "--n", "10", "--paths", "1", "--seed", "7")
    code, text = run(*argv)
    assert code == 0
    (rec,) = records(text)
    path = rec["paths"][0]
    assert len(path["outcomes"]) == 10 and set(path["outcomes"]) <= {0, 1}
    assert path["final"] == sum(path["outcomes"])
    assert run(*argv)[1] == text
    assert rec["manifest"]["master_seed"] == 7


def test_simulate_theta_one_is_rejected(capsys):
    code, _ = run("simulate", "--theta", "1.0", "--n", "10")
    assert code == 2
    assert "theta" in capsys.readouterr().err


def test_simulate_minimal_manifest_records_canonical():
    code, text = run("simulate", "--model", "mrw", "--r", "0.6", "--q", "0.3", "--k", "3", "--n", "20", "--seed", "1")
    assert code == 0
    canonical = records(text)[0]["manifest"]["canonical"]
    assert canonical["p"] == pytest.approx(0.428571, abs=1e-6)
    assert canonical["theta"] == pytest.approx(0.3, abs=1e-12)


def test_simulate_elephant_steps_are_signed():
    code, text = run("simulate", "--model", "erw", "--alpha", "0.75", "--k", "2", "--n", "30", "--paths", "2", "--seed", "3")
    assert code == 0
    for path in records(text)[0]["paths"]:
        assert set(path["outcomes"]) <= {-1, 1}
        assert path["final"] == sum(path["outcomes"])


def test_simulate_summary_and_csv():
    code, text = run("simulate", "--p", "0.4", "--theta", "0.5", "--k", "2", "--n", "200", "--paths", "500", "--seed", "5")
    assert code == 0
    (rec,) = records(text)
    assert rec["type"] == "summary_stats" and rec["count"] == 500
    code, text = run("simulate", "--n", "5", "--paths", "3", "--seed", "5", "--out", "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["path", "outcomes", "final", "center_of_mass"]
    assert len(rows) == 4
    assert text.endswith("\r\n")


def test_missing_model_flags():
    assert run("simulate", "--model", "mrw", "--r", "0.6", "--n", "5")[0] == 2
    assert run("sigma2", "--model", "erw")[0] == 2


# -- sigma2


def test_sigma2_examples():
    code, text = run("sigma2", "--p", "0.5", "--theta", "0.5", "--k", "2")
    rec = records(text)[0]
    assert code == 0
    assert rec["sigma2"] == pytest.approx(0.8125, rel=1e-14)
    assert rec["branch"] == "ThetaHalf"
    assert rec["stationary_sigma2"] == pytest.approx(5 / 6, rel=1e-12)
    rec = records(run("sigma2", "--p", "0.3", "--theta", "0", "--k", "5")[1])[0]
    assert rec["sigma2"] == pytest.approx(0.21, rel=1e-15) and rec["branch"] == "ThetaZero"
    rec = records(run("sigma2", "--model", "erw", "--alpha", "0.75", "--k", "2")[1])[0]
    assert rec["canonical"] == pytest.approx(3.25, rel=1e-14)
    assert rec["printed"] == pytest.approx(0.8125, rel=1e-14)
    assert rec["discrepancy"] is True


# -- oracle


def test_oracle_pmf_rows():
    code, text = run("oracle", "--p", "0.5", "--theta", "0.5", "--k", "1", "--n", "2")
    assert code == 0
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["s", "prob"]
    assert [(int(s), float(v)) for s, v in rows[1:]] == [(0, 0.375), (1, 0.25), (2, 0.375)]
    rows = list(csv.reader(io.StringIO(run("oracle", "--p", "0.3", "--theta", "0.4", "--k", "2", "--n", "1")[1])))
    assert [float(v) for _, v in rows[1:]] == [pytest.approx(0.7), pytest.approx(0.3)]


def test_oracle_moments_and_trajectory():
    rec = records(run("oracle", "--p", "0.5", "--theta", "0.5", "--k", "1", "--n", "2", "--moments")[1])[0]
    assert rec["mean"] == pytest.approx(1.0) and rec["variance"] == pytest.approx(0.75)
    rec = records(run("oracle", "--p", "0.3", "--theta", "0", "--k", "2", "--trajectory", "20")[1])[0]
    assert rec["var_over_n"] == pytest.approx([0.21] * 20, rel=1e-12)


def test_oracle_budget_exit_code(capsys):
    code, _ = run("oracle", "--p", "0.5", "--theta", "0.5", "--k", "17", "--n", "10")
    assert code == 3
    assert "budget" in capsys.readouterr().err
    assert run("oracle", "--p", "0.5", "--theta", "0.5", "--k", "16", "--n", "5000")[0] == 3


# -- verify


def test_verify_all_iid_passes_and_validates():
    code, text = run("verify", "--p", "0.5", "--theta", "0", "--k", "2", "--n", "500", "--paths", "4000", "--seed", "11")
    recs = records(text)
    summary = recs[-1]
    assert summary["type"] == "summary"
    assert code == 0 and summary["passed"]
    assert summary["checks"] == len(recs) - 1
    assert set(summary["manifest"]["verdicts"]) == {"clt", "fclt", "com", "lil", "martingale", "mapping"}
    assert "wall_clock" not in summary["manifest"]


def test_verify_failing_check_exits_one():
    # a model with memory judged against a deliberately tight variance level
    code, text = run(
        "verify", "--suite", "clt", "--p", "0.5", "--theta", "0.5", "--k", "2", "--n", "500", "--paths", "4000",
        "--seed", "1", "--sigma-level", "0.01",
    )
    assert code == 1
    assert records(text)[-1]["failed"] >= 1


def test_verify_timing_fields():
    _, text = run("verify", "--suite", "mapping", "--p", "0.5", "--theta", "0.3", "--k", "2", "--n", "40", "--seed", "1", "--timing")
    recs = records(text)
    assert all("runtime" in r for r in recs[:-1])
    assert "wall_clock" in recs[-1]["manifest"]


def test_verify_bad_grid_and_lil_guard():
    assert run("verify", "--suite", "clt", "--n", "100", "--paths", "10", "--seed", "1", "--grid", "a,b")[0] == 2
    assert run("verify", "--suite", "lil", "--n", "10", "--paths", "10", "--seed", "1")[0] == 2


def test_verify_budget_exit_code():
    assert run("verify", "--n", "100000", "--paths", "10000000", "--seed", "1")[0] == 3


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as err:
        run("simulate", "--n", "ten")
    assert err.value.code == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "ksumwalk", "sigma2", "--p", "0.5", "--theta", "0.5", "--k", "1"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert json.loads(proc.stdout)["sigma2"] == pytest.approx(0.75)
