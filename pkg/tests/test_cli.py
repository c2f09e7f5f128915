import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from trajbasket import cli
from trajbasket.clustering import feature_vector, select_clustering
from trajbasket.markov import fit_basket
from trajbasket.scenarios import BasketTruth, builtin_scenario, simulate_basket
from trajbasket.trajectory import read_trial_csv, write_trial_csv

SIM = ["simulate", "--scenario", "1", "--n", "20", "--reps", "12", "--seed", "42",
       "--threshold", "0.467", "--iterations", "800", "--burn-in", "200"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_writes_reports(tmp_path, capsys):
    code, out, _ = run(capsys, *SIM, "--out", str(tmp_path))
    assert code == 0
    for name in ("clustering_results.csv", "rejection_probs_n20.csv", "posterior_summaries.csv", "manifest.json"):
        assert (tmp_path / name).exists()
    m = json.loads((tmp_path / "manifest.json").read_text())
    cfg = m["config"]
    assert (cfg["seed"], cfg["reps"], cfg["n"], cfg["threshold"], cfg["scenario"]) == (42, 12, [20], 0.467, "1")
    assert cfg["iterations"] == 800 and cfg["sigma"] == 1.0 and m["version"]


def test_simulate_is_byte_reproducible(tmp_path, capsys):
    run(capsys, *SIM, "--out", str(tmp_path / "a"))
    run(capsys, *SIM, "--out", str(tmp_path / "b"), "--threads", "2")
    for name in ("clustering_results.csv", "rejection_probs_n20.csv", "posterior_summaries.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_cluster_only_multiple_n(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--scenario", "2", "--n", "20", "50", "--reps", "10",
                     "--cluster-only", "--arms", "Proposed", "OrrOnly", "--out", str(tmp_path))
    assert code == 0
    with open(tmp_path / "clustering_results.csv", newline="") as fh:
        assert {r["n"] for r in csv.DictReader(fh)} == {"20", "50"}
    assert not (tmp_path / "rejection_probs_n20.csv").exists()


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert run(capsys, *SIM[:9], "--cluster-only")[0] == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_unknown_scenario(capsys):
    code, _, err = run(capsys, "simulate", "--scenario", "9")
    assert code == 1 and "unknown scenario" in err


@pytest.mark.parametrize("argv", [
    ["simulate", "--scenario", "1", "--threshold", "1.5"],
    ["simulate", "--scenario", "1", "--arms", "EXNEX"],
    ["simulate", "--scenario", "1", "--iterations", "10", "--burn-in", "20"],
    ["frobnicate"],
])
def test_config_errors_exit_1(argv, capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        code = cli.main(argv + (["--out", str(tmp_path)] if argv[0] == "simulate" else []))
        raise SystemExit(code)
    assert exc.value.code == 1


def test_derive_threshold(capsys):
    code, out, _ = run(capsys, "derive-threshold", "--scenario", "1", "--reps", "400000", "--json")
    assert code == 0
    doc = json.loads(out)
    assert abs(doc["threshold"] - 0.467) < 0.005 and doc["se"] > 0


def test_derive_threshold_degenerate(tmp_path, capsys):
    path = tmp_path / "pd.json"
    path.write_text(json.dumps({"baskets": [{"pi0": [0, 0, 0, 1], "P": np.eye(4).tolist()}]}))
    code, out, _ = run(capsys, "derive-threshold", "--scenario", str(path), "--reps", "5000")
    assert code == 0 and out.startswith("threshold 0.00000")


def test_derive_threshold_bad_input(capsys):
    assert run(capsys, "derive-threshold", "--reps", "0")[0] == 1
    assert run(capsys, "derive-threshold", "--basket", "6", "--reps", "10")[0] == 1


def _write(tmp_path, rows, name="trial.csv"):
    p = tmp_path / name
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["basket_id", "patient_id", "assessment_index", "state"])
        w.writerows(rows)
    return p


def test_analyze_single_basket(tmp_path, capsys):
    p = _write(tmp_path, [("B1", 1, 1, "SD"), ("B1", 1, 2, "PR"), ("B1", 1, 3, "PR"),
                          ("B1", 2, 1, "SD"), ("B1", 2, 2, "PD")])
    code, out, _ = run(capsys, "analyze", str(p), "--out", str(tmp_path / "o"),
                       "--iterations", "2000", "--burn-in", "500")
    assert code == 0 and "u=1" in out
    part = json.loads((tmp_path / "o" / "partition.json").read_text())
    assert part["labels"] == [0] and part["basket_ids"] == ["B1"]
    with open(tmp_path / "o" / "summaries.csv", newline="") as fh:
        (row,) = list(csv.DictReader(fh))
    assert row["method"] == "hierarchical"
    models = json.loads((tmp_path / "o" / "baskets.json").read_text())
    np.testing.assert_allclose(models[0]["final_state"], [0.0625, 0.5625, 0.0625, 0.3125], atol=1e-12)
    assert (tmp_path / "o" / "manifest.json").exists()


def _two_regime_trial(tmp_path):
    lo = BasketTruth([0, 0, 0.2, 0.8], builtin_scenario(1).baskets[0].P)
    hi = BasketTruth([0.6, 0.3, 0.1, 0.0], np.eye(4))
    baskets = [simulate_basket(t, 40, 11, (j,), basket_id=f"B{j + 1}")
               for j, t in enumerate([lo, lo, lo, hi, hi])]
    p = tmp_path / "five.csv"
    write_trial_csv(baskets, p)
    return p


def test_analyze_two_regimes(tmp_path, capsys):
    p = _two_regime_trial(tmp_path)
    code, out, _ = run(capsys, "analyze", str(p), "--out", str(tmp_path / "o"), "--with-independent",
                       "--iterations", "2000", "--burn-in", "500")
    assert code == 0
    direct = select_clustering([feature_vector(fit_basket(b)) for b in read_trial_csv(p)])
    part = json.loads((tmp_path / "o" / "partition.json").read_text())
    assert part["u"] == direct.u == 2
    assert part["labels"] == list(direct.labels) == [0, 0, 0, 1, 1]
    assert len(part["per_basket_silhouette"]) == 5
    with open(tmp_path / "o" / "summaries.csv", newline="") as fh:
        methods = [r["method"] for r in csv.DictReader(fh)]
    assert methods == ["hierarchical"] * 5 + ["beta-binomial"] * 5


def test_cluster_command(tmp_path, capsys):
    p = _two_regime_trial(tmp_path)
    code, out, _ = run(capsys, "cluster", str(p))
    assert code == 0 and json.loads(out)["labels"] == [0, 0, 0, 1, 1]


def test_missing_column_is_data_error(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("basket_id,patient_id,assessment_index\nB1,1,1\n")
    code, _, err = run(capsys, "analyze", str(p))
    assert code == 2 and "state" in err


def test_bad_row_is_data_error(tmp_path, capsys):
    p = _write(tmp_path, [("B1", 1, 1, "SD"), ("B1", 1, 2, "??")])
    code, _, err = run(capsys, "cluster", str(p))
    assert code == 2 and "row 2" in err
    assert run(capsys, "cluster", str(tmp_path / "absent.csv"))[0] == 2


def test_sampler_failure_is_numerical_error(tmp_path, capsys, monkeypatch):
    from trajbasket import bayes

    def boom(*a, **k):
        raise FloatingPointError("non-finite sampler state")

    monkeypatch.setattr(bayes.kernels, "logit_normal_mcmc", boom)
    p = _write(tmp_path, [("B1", 1, 1, "SD")])
    assert run(capsys, "analyze", str(p), "--out", str(tmp_path / "o"))[0] == 3


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "trajbasket.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "trajbasket" in out.stdout
