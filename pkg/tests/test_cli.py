import json

import numpy as np
import pandas as pd
import pytest
import yaml

from folddiff import cli
from folddiff.report import read_results_csv, read_results_json
from folddiff.simulator import SimConfig, draw_dataset
from folddiff.data import write_dataset


@pytest.fixture
def toy(tmp_path):
    d, _ = draw_dataset(SimConfig(n=80, J=5, seed=3), 0)
    write_dataset(d, tmp_path / "W.csv", tmp_path / "M.csv", exposure="case")
    return tmp_path


def run(*args):
    return cli.main([str(a) for a in args])


def base_args(root, out="out"):
    return ["--counts", root / "W.csv", "--meta", root / "M.csv", "--exposure", "case", "--out", root / out]


def test_psi1g_mean_sums_to_zero(toy):
    assert run("estimate", *base_args(toy), "--estimand", "psi1g", "--center", "mean", "--b", 1000) == 0
    df = pd.read_csv(toy / "out" / "results.csv")
    assert abs(df.estimate.sum()) <= 1e-10
    assert list(df.columns) == ["category", "estimate", "se", "ci_lower", "ci_upper", "sim_lower", "sim_upper",
                                "p_value", "flags"]


def test_rerun_from_manifest_is_byte_identical(toy):
    args = base_args(toy, "a") + ["--covariates", "x", "--menu", "light", "--k", 3, "--v", 3, "--b", 2000]
    assert run("estimate", *args) == 0
    assert run("estimate", "--config", toy / "a" / "manifest.json", "--out", toy / "b") == 0
    for name in ("results.csv", "results.json", "learner_weights.csv", "propensity_summary.csv"):
        assert (toy / "a" / name).read_bytes() == (toy / "b" / name).read_bytes()
    # worker count never changes the numbers
    assert run("estimate", *base_args(toy, "c"), "--covariates", "x", "--menu", "light", "--k", 3, "--v", 3,
               "--b", 2000, "--threads", 2) == 0
    assert (toy / "a" / "results.csv").read_bytes() == (toy / "c" / "results.csv").read_bytes()


def test_manifest_lists_every_tunable(toy):
    assert run("estimate", *base_args(toy), "--estimand", "psi1", "--b", 500) == 0
    doc = json.loads((toy / "out" / "manifest.json").read_text())
    assert set(cli.DEFAULTS["estimate"]) == set(doc["config"])
    assert doc["config"]["method"] == "plugin" and doc["config"]["b"] == 500
    assert "numpy" in doc["versions"]


def test_reference_by_name(toy):
    args = base_args(toy) + ["--covariates", "x", "--center", "ref:cat2", "--menu", "light", "--k", 3, "--b", 1000]
    assert run("estimate", *args) == 0
    rows = {r.category: r for r in read_results_csv(toy / "out" / "results.csv")}
    assert rows["cat2"].estimate == 0.0 and rows["cat2"].se == 0.0
    assert "reference" in rows["cat2"].flags


def test_results_round_trip(toy):
    assert run("estimate", *base_args(toy), "--estimand", "psi1g", "--b", 1000) == 0
    csv_rows = read_results_csv(toy / "out" / "results.csv")
    report = read_results_json(toy / "out" / "results.json")
    assert report.estimand == "psi1g" and report.method == "plugin"
    for a, b in zip(csv_rows, report.rows):
        assert a.category == b.category and a.flags == b.flags
        np.testing.assert_array_equal([a.estimate, a.se, a.ci_lower, a.sim_upper, a.p_value],
                                      [b.estimate, b.se, b.ci_lower, b.sim_upper, b.p_value])


def test_plugin_has_no_inference(toy):
    assert run("estimate", *base_args(toy), "--covariates", "x", "--method", "plugin", "--menu", "light",
               "--estimand", "psi2") == 0
    df = pd.read_csv(toy / "out" / "results.csv")
    assert df.se.isna().all() and df["flags"].str.contains("no_inference").all()


def test_config_file_and_override(toy):
    cfg = {"counts": str(toy / "W.csv"), "meta": str(toy / "M.csv"), "exposure": "case", "estimand": "psi1g",
           "center": "mean", "b": 700, "out": str(toy / "cfg")}
    (toy / "run.yaml").write_text(yaml.safe_dump(cfg))
    assert run("estimate", "--config", toy / "run.yaml", "--b", 800) == 0
    doc = json.loads((toy / "cfg" / "manifest.json").read_text())
    assert doc["config"]["b"] == 800 and doc["config"]["center"] == "mean"
    (toy / "bad.yaml").write_text("bogus_key: 1\n")
    assert run("estimate", "--config", toy / "bad.yaml") == 1


def test_exit_codes(toy, monkeypatch, capsys):
    assert run("estimate", "--counts", toy / "W.csv") == 1  # missing required options
    assert run("estimate", *base_args(toy), "--estimand", "psi1", "--method", "tmle") == 1
    assert run("estimate", *base_args(toy), "--center", "ref:nope") == 1
    assert run("nonsense") == 1
    meta = pd.read_csv(toy / "M.csv")
    meta.loc[0, "case"] = 2
    meta.to_csv(toy / "M2.csv", index=False)
    assert run("estimate", "--counts", toy / "W.csv", "--meta", toy / "M2.csv", "--exposure", "case",
               "--out", toy / "x") == 2
    assert "exposure not binary" in capsys.readouterr().err

    def fail(*a, **k):
        raise ArithmeticError("no convergence")

    monkeypatch.setattr(cli, "estimate_adjusted", fail)
    assert run("estimate", *base_args(toy), "--menu", "light", "--k", 3) == 3


def test_validate(toy, capsys):
    assert run("validate", "--counts", toy / "W.csv", "--meta", toy / "M.csv", "--exposure", "case") == 0
    out = capsys.readouterr().out
    assert out.count(" ok ") == 5 and "0 flagged" in out

    W = pd.read_csv(toy / "W.csv")
    W["cat3"] = 0.0
    W.to_csv(toy / "W0.csv", index=False)
    assert run("validate", "--counts", toy / "W0.csv", "--meta", toy / "M.csv", "--exposure", "case") == 0
    out = capsys.readouterr().out
    flagged = [line for line in out.splitlines() if line.startswith("cat") and not line.startswith("category") and " ok " not in line]
    assert len(flagged) == 1 and "all_zero" in flagged[0]


def test_simulate(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--n", 60, "--j", 3, "--reps", 2, "--b", 500, "--out", out) == 0
    for name in ("summary.csv", "replicates.csv", "plot_mse_by_category.csv", "plot_coverage_by_category.csv",
                 "report.json", "manifest.json", "runtime.json"):
        assert (out / name).exists()
    plot = pd.read_csv(out / "plot_mse_by_category.csv")
    assert list(plot.category) == [1, 2, 3]
    report = json.loads((out / "report.json").read_text())
    assert report["estimand"] == "psi2g" and report["centering"] == "mean"
    assert set(report["simultaneous_coverage"]) == {"psi1_plugin", "psi2_tmle", "psi2_onestep"}
    assert run("simulate", "--config", out / "manifest.json", "--out", tmp_path / "sim2") == 0
    assert (out / "replicates.csv").read_bytes() == (tmp_path / "sim2" / "replicates.csv").read_bytes()


def test_paper_scale_flag():
    cfg, _ = cli.resolve(["simulate", "--paper-scale", "--out", "x"])
    assert (cfg["j"], cfg["reps"], cfg["n"]) == (51, 500, 100)
    cfg, _ = cli.resolve(["simulate", "--paper-scale", "--reps", "10", "--mean", "gamma_B", "--out", "x"])
    assert (cfg["j"], cfg["reps"], cfg["mean"]) == (51, 10, "gamma_B")
    cfg, _ = cli.resolve(["simulate", "--out", "x"])
    assert (cfg["j"], cfg["reps"], cfg["center"]) == (11, 300, "mean")
