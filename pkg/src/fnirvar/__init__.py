"""Factor plus network-restricted VAR modelling for high-dimensional panels."""

from fnirvar.panel import Panel, load_csv, save_csv, excess_returns, clip_outliers, log_diff
from fnirvar.graphs import (
    BlockModelSpec,
    sample_assignments,
    sample_adjacency,
    sample_weights,
    build_phi,
    spectral_radius,
)
from fnirvar.simulate import (
    FnirvarParams,
    SimulationOutput,
    companion_matrix,
    check_stationarity,
    simulate,
    population_covariances,
    eigengap,
    build_study,
)
from fnirvar.factors import (
    FactorFit,
    estimate_pca,
    select_num_factors,
    fit_factor_var,
    select_var_order,
    forecast_factors,
    decompose,
)
from fnirvar.nirvar import (
    NirvarFit,
    embedding_dimension,
    spectral_embed,
    cluster_gmm,
    build_restriction,
    restricted_var_ols,
    nirvar_forecast,
    fit_nirvar,
)
from fnirvar.baselines import LassoVarFit, lasso_var, predict_factors_only
from fnirvar.backtest import (
    BacktestConfig,
    PortfolioSpec,
    BacktestReport,
    run_rolling,
    pnl_step,
    sharpe,
    apply_costs,
    value_weights,
    decile_filter,
    mspe,
)

__version__ = "0.1.0"
