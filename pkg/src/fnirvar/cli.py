"""Command-line entry point: simulation, estimation and backtesting runs.

Every run writes a manifest echoing the fully resolved configuration (config
file values overridden by explicit flags) so results can be reproduced from
the artifacts alone. All randomness flows from the single --seed, split
deterministically per replicate, so reruns are byte-identical.

Exit codes: 2 configuration error, 3 file I/O error, 4 pipeline error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

import fnirvar
from fnirvar import plots
from fnirvar.backtest import BacktestConfig, ModelOptions, PortfolioSpec, run_rolling
from fnirvar.factors import (
    estimate_pca,
    fit_factor_var,
    select_num_factors,
    select_var_order,
)
from fnirvar.nirvar import fit_nirvar
from fnirvar.panel import PanelLoadError, clip_outliers, excess_returns, load_csv, save_csv
from fnirvar.simulate import build_study, simulate
from fnirvar.util import derive_int_seed

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PIPELINE = 4

WORKERS_ENV = "FNIRVAR_WORKERS"


class ConfigError(Exception):
    pass


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(count, 1)


def _int_or_auto(text):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}")


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object of option values")
    return data


def _resolve(args, config_path, argv) -> dict:
    """Merge config-file values under explicit flags; reject unknown keys."""
    resolved = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if not config_path:
        return resolved
    file_values = _load_config_file(config_path)
    unknown = set(file_values) - set(resolved)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    explicit = _explicit_flags(argv)
    for key, value in file_values.items():
        if key not in explicit:
            resolved[key] = value
    return resolved


def _explicit_flags(argv) -> set:
    # long-option tokens become dest names: --out-dir -> out_dir
    dests = set()
    for tok in argv:
        tok = tok.split("=", 1)[0]
        if tok.startswith("--"):
            dests.add(tok[2:].replace("-", "_"))
    return dests


def _write_manifest(out_dir: Path, command: str, resolved: dict) -> None:
    manifest = {
        "command": command,
        "version": fnirvar.__version__,
        "config": {k: v for k, v in sorted(resolved.items())},
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_matrix_csv(path, matrix, row_labels, col_labels, corner="id") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([corner, *col_labels])
        for label, row in zip(row_labels, np.atleast_2d(matrix)):
            writer.writerow([label, *[repr(float(v)) for v in row]])


def _load_input_panel(resolved):
    panel = load_csv(resolved["input"], layout=resolved.get("layout", "rows_are_series"))
    if resolved.get("market_id"):
        panel = excess_returns(panel, resolved["market_id"])
    if resolved.get("clip_threshold") is not None:
        panel, n_clipped = clip_outliers(panel, resolved["clip_threshold"])
        if n_clipped:
            print(f"clipped {n_clipped} outlier entries", file=sys.stderr)
    return panel


# --- simulate ----------------------------------------------------------------

def _simulate_one(task):
    study, n, t, burn_in, root_seed, rep, overrides = task
    dgp = build_study(study, n=n, seed=derive_int_seed(root_seed, 11, rep), **overrides)
    out = simulate(dgp.params, t, burn_in=burn_in,
                   seed=derive_int_seed(root_seed, 12, rep))
    return rep, out.to_panel(), dgp.meta


def cmd_simulate(resolved) -> int:
    out_dir = Path(resolved["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    overrides = {}
    if resolved.get("sigma_lambda2") is not None:
        overrides["sigma_sq"] = resolved["sigma_lambda2"]
    if resolved.get("loading_scale") is not None:
        overrides["loading_scale"] = resolved["loading_scale"]
    tasks = [
        (resolved["study"], resolved.get("n"), resolved["t"], resolved["burn_in"],
         resolved["seed"], rep, overrides)
        for rep in range(resolved["reps"])
    ]
    workers = _workers()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = sorted(pool.map(_simulate_one, tasks), key=lambda r: r[0])
    else:
        results = [_simulate_one(t) for t in tasks]
    meta = results[0][2]
    for rep, panel, _ in results:
        save_csv(panel, out_dir / f"panel_rep{rep:03d}.csv")
    resolved_meta = dict(resolved)
    resolved_meta["study_params"] = meta
    _write_manifest(out_dir, "simulate", resolved_meta)
    print(f"wrote {len(results)} panel(s) to {out_dir}")
    return 0


# --- estimate ----------------------------------------------------------------

def cmd_estimate(resolved) -> int:
    out_dir = Path(resolved["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    panel = _load_input_panel(resolved)
    r = resolved["r"]
    if r == "auto":
        r = select_num_factors(panel, resolved["r_max"])
    fit = estimate_pca(panel, r)
    lf = resolved["lf"]
    if lf == "auto":
        lf = select_var_order(fit.factors, resolved["lf_max"])
    fit.coeffs = fit_factor_var(fit.factors, lf)
    fit.n_lags = lf
    residual = (panel.values - fit.mean[:, None]) - fit.loadings @ fit.factors
    nirvar = fit_nirvar(residual, dim=resolved["d"], n_clusters=resolved["k"],
                        seed=resolved["seed"], gmm_restarts=resolved["gmm_restarts"])

    ids = list(panel.asset_ids)
    comp = [f"c{j}" for j in range(1, r + 1)]
    _write_matrix_csv(out_dir / "loadings.csv", fit.loadings, ids, comp)
    _write_matrix_csv(out_dir / "factors.csv", fit.factors, comp, panel.timestamps)
    lag_rows = [f"lag{j}_c{i}" for j in range(lf, 0, -1) for i in range(1, r + 1)]
    _write_matrix_csv(out_dir / "factor_coeffs.csv", fit.coeffs, lag_rows, comp)
    _write_matrix_csv(out_dir / "phi.csv", nirvar.coeffs, ids, ids)
    emb_cols = [f"e{j}" for j in range(1, nirvar.embedding_dim + 1)]
    _write_matrix_csv(out_dir / "embedding.csv", nirvar.embedding, ids, emb_cols)
    summary = {
        "n_series": panel.n_series,
        "n_steps": panel.n_steps,
        "n_factors": r,
        "n_lags": lf,
        "embedding_dim": nirvar.embedding_dim,
        "n_clusters": nirvar.n_clusters,
        "labels": {a: int(l) for a, l in zip(ids, nirvar.labels)},
        "ridge_rows": [ids[i] for i in nirvar.ridge_rows],
        "top_eigenvalues": [float(v) for v in fit.eigenvalues],
    }
    with open(out_dir / "fit.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "estimate", resolved)
    print(f"fitted r={r}, lf={lf}, d={nirvar.embedding_dim}, k={nirvar.n_clusters}; "
          f"artifacts in {out_dir}")
    return 0


# --- backtest ----------------------------------------------------------------

def cmd_backtest(resolved) -> int:
    out_dir = Path(resolved["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    panel = _load_input_panel(resolved)
    volumes = None
    if resolved.get("volumes"):
        volumes = load_csv(resolved["volumes"],
                           layout=resolved.get("layout", "rows_are_series")).values
    config = BacktestConfig(
        lookback=resolved["lookback"],
        refit_every=resolved["refit_every"],
        predictor=resolved["predictor"],
        portfolio=PortfolioSpec(
            kind=resolved["portfolio"],
            alpha=resolved["alpha"],
            beta=resolved["beta"],
            decile_pct=resolved["decile"],
        ),
        cost_bpts=tuple(resolved["cost_bpts"]) if resolved["cost_bpts"] else (0.0,),
        periods_per_year=resolved["periods_per_year"],
        periods_per_day=resolved["periods_per_day"],
        seed=resolved["seed"],
        model=ModelOptions(
            n_factors=resolved["r"], r_max=resolved["r_max"],
            n_lags=resolved["lf"], l_max=resolved["lf_max"],
            dim=resolved["d"], n_clusters=resolved["k"],
            gmm_restarts=resolved["gmm_restarts"],
            reuse_labels=bool(resolved.get("reuse_labels", False)),
        ),
    )
    report = run_rolling(panel, config, volumes=volumes)

    report_path = Path(resolved["out"]) if resolved.get("out") else out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    levels = report.cost_levels
    with open(out_dir / "steps.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "timestamp", "pnl",
                         *[f"cost_drag_{c:g}" for c in levels]])
        for i, ts in enumerate(report.timestamps):
            writer.writerow([i, ts, repr(float(report.pnl[i])),
                             *[repr(float(report.cost_drag[j, i])) for j in range(len(levels))]])
    ids = list(panel.asset_ids)
    _write_matrix_csv(out_dir / "predictions.csv", report.predictions.T, ids,
                      report.timestamps)
    _write_matrix_csv(out_dir / "realizations.csv", report.realizations.T, ids,
                      report.timestamps)
    cumulative = {c: report.cumulative_pnl_bpts(c) for c in levels}
    with open(out_dir / "cumulative_pnl.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "timestamp", *[f"cum_pnl_bpts_{c:g}" for c in levels]])
        for i, ts in enumerate(report.timestamps):
            writer.writerow([i, ts, *[repr(float(cumulative[c][i])) for c in levels]])
    plots.plot_cumulative_pnl(cumulative, out_dir / "cumulative_pnl.png",
                              title=f"Cumulative PnL ({resolved['predictor']})")
    _write_manifest(out_dir, "backtest", resolved)
    print(f"backtest over {report.n_steps} steps "
          f"({len(report.skipped_steps)} skipped); mspe={report.mspe:.6g}; "
          f"report at {report_path}")
    return 0


# --- eigengap study ----------------------------------------------------------

def _eigengap_one(task):
    n, rep, t, burn_in, root_seed, n_index, overrides = task
    dgp = build_study("eigengap", n=n, seed=derive_int_seed(root_seed, 21, n_index, rep),
                      **overrides)
    out = simulate(dgp.params, t, burn_in=burn_in,
                   seed=derive_int_seed(root_seed, 22, n_index, rep))
    steps = out.values.shape[1]
    common_cov = out.common @ out.common.T / steps
    idio_cov = out.idio @ out.idio.T / steps
    common_vals = np.sort(np.linalg.eigvalsh(common_cov))[::-1]
    idio_vals = np.sort(np.linalg.eigvalsh(idio_cov))[::-1]
    r = dgp.params.n_factors
    return (n, rep, float(common_vals[0]), float(idio_vals[0]), float(common_vals[r - 1]))


def cmd_eigengap_study(resolved) -> int:
    out_dir = Path(resolved["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        grid = [int(x) for x in str(resolved["n_grid"]).split(",")]
    except ValueError:
        raise ConfigError(f"--n-grid must be comma-separated integers, "
                          f"got {resolved['n_grid']!r}") from None
    overrides = {"sigma_sq": resolved["sigma_lambda2"]}
    if resolved.get("loading_scale") is not None:
        overrides["loading_scale"] = resolved["loading_scale"]
    tasks = [
        (n, rep, resolved["t"], resolved["burn_in"], resolved["seed"], i, overrides)
        for i, n in enumerate(grid)
        for rep in range(resolved["reps"])
    ]
    workers = _workers()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = sorted(pool.map(_eigengap_one, tasks), key=lambda r: (r[0], r[1]))
    else:
        rows = [_eigengap_one(t) for t in tasks]
    csv_path = out_dir / "eigengap_study.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "replicate", "lambda_max_common",
                         "lambda_max_idio", "lambda_min_common"])
        for row in rows:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4])])
    by_n = {n: [r for r in rows if r[0] == n] for n in grid}
    common_means = [float(np.mean([r[2] for r in by_n[n]])) for n in grid]
    idio_means = [float(np.mean([r[3] for r in by_n[n]])) for n in grid]
    plots.plot_eigenvalue_growth(grid, common_means, idio_means,
                                 out_dir / "eigengap_study.png")
    _write_manifest(out_dir, "eigengap-study", resolved)
    print(f"eigengap study over N in {grid} written to {csv_path}")
    return 0


# --- parser ------------------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--config", help="JSON file of option values; explicit flags win")
    sub.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
    sub.add_argument("--out-dir", dest="out_dir", default="fnirvar_out",
                     help="directory for result artifacts")


def _add_input(sub):
    sub.add_argument("--input", required=True, help="panel CSV to load")
    sub.add_argument("--layout", choices=["rows_are_series", "rows_are_time"],
                     default="rows_are_series")
    sub.add_argument("--market-id", dest="market_id",
                     help="subtract this series and drop it before modelling")
    sub.add_argument("--clip-threshold", dest="clip_threshold", type=float,
                     help="zero out entries with |x| above this value")


def _add_model(sub):
    sub.add_argument("--r", type=_int_or_auto, default="auto",
                     help="factor count, or 'auto' for the information criterion")
    sub.add_argument("--r-max", dest="r_max", type=int, default=15)
    sub.add_argument("--lf", type=_int_or_auto, default="auto",
                     help="factor VAR order, or 'auto' for AIC")
    sub.add_argument("--lf-max", dest="lf_max", type=int, default=6)
    sub.add_argument("--d", type=_int_or_auto, default="auto",
                     help="embedding dimension, or 'auto' for the noise-edge count")
    sub.add_argument("--k", type=_int_or_auto, default="auto",
                     help="cluster count, or 'auto' to match the embedding dimension")
    sub.add_argument("--gmm-restarts", dest="gmm_restarts", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fnirvar",
        description="Simulation, two-step estimation and backtesting of "
                    "factor plus network-VAR panels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="sample panels from a bundled study recipe")
    _add_common(p_sim)
    p_sim.add_argument("--study", required=True, choices=["table1", "table2", "eigengap"])
    p_sim.add_argument("--n", type=int, help="panel dimension (study default if omitted)")
    p_sim.add_argument("--t", type=int, default=1500, help="sample length")
    p_sim.add_argument("--reps", type=int, default=1, help="number of replicate panels")
    p_sim.add_argument("--burn-in", dest="burn_in", type=int, default=500)
    p_sim.add_argument("--sigma-lambda2", dest="sigma_lambda2", type=float,
                       help="loading mixture variance (eigengap study knob)")
    p_sim.add_argument("--loading-scale", dest="loading_scale", type=float,
                       help="override the study loading scale")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="fit the two-step model to a panel CSV")
    _add_common(p_est)
    _add_input(p_est)
    _add_model(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_back = sub.add_parser("backtest", help="rolling one-step-ahead evaluation")
    _add_common(p_back)
    _add_input(p_back)
    _add_model(p_back)
    p_back.add_argument("--predictor", choices=["fnirvar", "factors", "factors-lasso"],
                        default="fnirvar")
    p_back.add_argument("--lookback", type=int, required=True)
    p_back.add_argument("--refit-every", dest="refit_every", type=int, default=1)
    p_back.add_argument("--portfolio", choices=["equal", "value"], default="equal")
    p_back.add_argument("--alpha", type=float, default=1e-3)
    p_back.add_argument("--beta", type=float, default=5e5)
    p_back.add_argument("--decile", type=float, default=100.0,
                        help="trade only the top pct of signals by magnitude")
    p_back.add_argument("--cost-bpts", dest="cost_bpts", type=float, action="append",
                        default=None, help="transaction cost level; repeatable")
    p_back.add_argument("--periods-per-year", dest="periods_per_year", type=float,
                        default=252.0)
    p_back.add_argument("--periods-per-day", dest="periods_per_day", type=int, default=1,
                        help="group this many periods into one day for Sharpe/mean PnL")
    p_back.add_argument("--reuse-labels", dest="reuse_labels", action="store_true",
                        help="keep cluster labels across refits (cheap refit mode)")
    p_back.add_argument("--volumes", help="dollar-volume CSV for the value portfolio")
    p_back.add_argument("--out", help="report JSON path (default: out-dir/report.json)")
    p_back.set_defaults(func=cmd_backtest)

    p_eig = sub.add_parser("eigengap-study",
                           help="eigenvalue growth of the component covariances with N")
    _add_common(p_eig)
    p_eig.add_argument("--sigma-lambda2", dest="sigma_lambda2", type=float, required=True)
    p_eig.add_argument("--n-grid", dest="n_grid", default="50,100,200,400")
    p_eig.add_argument("--reps", type=int, default=20)
    p_eig.add_argument("--t", type=int, default=1000)
    p_eig.add_argument("--burn-in", dest="burn_in", type=int, default=500)
    p_eig.add_argument("--loading-scale", dest="loading_scale", type=float)
    p_eig.set_defaults(func=cmd_eigengap_study)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolved = _resolve(args, args.config, argv)
        resolved["command"] = args.command
        return args.func(resolved)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PanelLoadError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
