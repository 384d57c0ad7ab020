import json
import os

import numpy as np

from fnirvar.cli import main


def run(argv):
    return main([str(a) for a in argv])


def simulate_small(tmp_path, seed=7, reps=2, sub="sim"):
    out = tmp_path / sub
    code = run(["simulate", "--study", "table1", "--n", 24, "--t", 160,
                "--reps", reps, "--seed", seed, "--out-dir", out])
    assert code == 0
    return out


def test_simulate_writes_panels_and_manifest(tmp_path):
    out = simulate_small(tmp_path, reps=3)
    files = sorted(p.name for p in out.iterdir())
    assert files == ["manifest.json", "panel_rep000.csv", "panel_rep001.csv",
                     "panel_rep002.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["config"]["study"] == "table1"
    assert manifest["config"]["seed"] == 7
    assert manifest["config"]["reps"] == 3


def test_simulate_determinism_byte_identical(tmp_path):
    a = simulate_small(tmp_path, sub="a")
    b = simulate_small(tmp_path, sub="b")
    assert (a / "panel_rep000.csv").read_bytes() == (b / "panel_rep000.csv").read_bytes()
    assert (a / "panel_rep001.csv").read_bytes() == (b / "panel_rep001.csv").read_bytes()
    c = simulate_small(tmp_path, seed=8, sub="c")
    assert (a / "panel_rep000.csv").read_bytes() != (c / "panel_rep000.csv").read_bytes()


def test_simulate_workers_do_not_change_results(tmp_path):
    a = simulate_small(tmp_path, sub="w1")
    os.environ["FNIRVAR_WORKERS"] = "2"
    try:
        b = simulate_small(tmp_path, sub="w2")
    finally:
        del os.environ["FNIRVAR_WORKERS"]
    assert (a / "panel_rep001.csv").read_bytes() == (b / "panel_rep001.csv").read_bytes()


def test_config_file_merging_and_flag_priority(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"t": 150, "reps": 2, "n": 20}))
    out = tmp_path / "merged"
    code = run(["simulate", "--study", "table2", "--config", cfg,
                "--t", 140, "--seed", 1, "--out-dir", out])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["t"] == 140      # explicit flag wins
    assert manifest["config"]["reps"] == 2     # config value used
    assert manifest["config"]["n"] == 20


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus_key": 1}))
    code = run(["simulate", "--study", "table1", "--config", cfg,
                "--out-dir", tmp_path / "x"])
    assert code == 2


def test_malformed_config_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    code = run(["simulate", "--study", "table1", "--config", cfg,
                "--out-dir", tmp_path / "x"])
    assert code == 2


def test_missing_input_exits_3(tmp_path):
    code = run(["estimate", "--input", tmp_path / "nope.csv",
                "--out-dir", tmp_path / "x"])
    assert code == 3


def test_pipeline_error_exits_4(tmp_path):
    sim = simulate_small(tmp_path)
    code = run(["backtest", "--input", sim / "panel_rep000.csv",
                "--lookback", 500, "--out-dir", tmp_path / "bt"])  # lookback > T
    assert code == 4


def test_estimate_outputs(tmp_path):
    sim = simulate_small(tmp_path)
    out = tmp_path / "est"
    code = run(["estimate", "--input", sim / "panel_rep000.csv", "--r", 3,
                "--lf", 1, "--d", 2, "--k", 2, "--seed", 3, "--out-dir", out])
    assert code == 0
    summary = json.loads((out / "fit.json").read_text())
    assert summary["n_factors"] == 3
    assert summary["n_lags"] == 1
    assert summary["embedding_dim"] == 2
    assert summary["n_clusters"] == 2
    assert len(summary["labels"]) == 24
    for name in ("loadings.csv", "factors.csv", "factor_coeffs.csv",
                 "phi.csv", "embedding.csv", "manifest.json"):
        assert (out / name).exists()


def test_backtest_outputs_and_determinism(tmp_path):
    sim = simulate_small(tmp_path)
    args = ["backtest", "--input", sim / "panel_rep000.csv", "--lookback", 100,
            "--refit-every", 30, "--predictor", "fnirvar", "--r", 3, "--lf", 1,
            "--d", 2, "--k", 2, "--cost-bpts", 0, "--cost-bpts", 1, "--seed", 4]
    out1, out2 = tmp_path / "bt1", tmp_path / "bt2"
    assert run(args + ["--out-dir", out1]) == 0
    assert run(args + ["--out-dir", out2]) == 0
    for name in ("report.json", "steps.csv", "predictions.csv", "realizations.csv",
                 "cumulative_pnl.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert (out1 / "cumulative_pnl.png").exists()
    report = json.loads((out1 / "report.json").read_text())
    assert set(report["sharpe"]) == {"0.0", "1.0"}
    assert report["n_steps"] > 0


def test_backtest_with_preprocessing_and_value_weights(tmp_path):
    sim = simulate_small(tmp_path, seed=9)
    panel_csv = sim / "panel_rep000.csv"
    rng = np.random.default_rng(0)
    import csv as csv_mod
    with open(panel_csv) as fh:
        rows = list(csv_mod.reader(fh))
    vol_path = tmp_path / "volumes.csv"
    with open(vol_path, "w", newline="") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(rows[0])
        for row in rows[1:]:
            if row[0] == "s001":  # volumes cover the post-market-removal universe
                continue
            writer.writerow([row[0], *[f"{v:.1f}" for v in
                                       rng.uniform(1e4, 1e6, len(row) - 1)]])
    code = run(["backtest", "--input", panel_csv, "--lookback", 100,
                "--market-id", "s001", "--clip-threshold", 50.0,
                "--portfolio", "value", "--alpha", 1e-3, "--beta", 5e5,
                "--decile", 50, "--volumes", vol_path, "--r", 2, "--lf", 1,
                "--d", 1, "--k", 1, "--seed", 2, "--out-dir", tmp_path / "btv"])
    assert code == 0


def test_eigengap_study_minimal_run(tmp_path):
    out = tmp_path / "eig"
    code = run(["eigengap-study", "--sigma-lambda2", 9e-3, "--n-grid", "10",
                "--reps", 1, "--t", 60, "--seed", 5, "--out-dir", out])
    assert code == 0
    lines = (out / "eigengap_study.csv").read_text().strip().splitlines()
    assert lines[0] == "n,replicate,lambda_max_common,lambda_max_idio,lambda_min_common"
    assert len(lines) == 2
    assert (out / "eigengap_study.png").exists()
