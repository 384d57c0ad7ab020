"""Figure rendering for report outputs.

Figures are written next to the delimited files they visualise; the CSVs stay
the canonical output. Uses the Agg backend so runs work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIG_PARAMS = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 130,
    "axes.labelsize": 11,
    "axes.titlesize": 11,
    "legend.fontsize": 9,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def plot_cumulative_pnl(cumulative_by_cost: dict, out_path, title="Cumulative PnL") -> None:
    """Line chart of cumulative PnL (bpts) per transaction-cost level."""
    with plt.rc_context(FIG_PARAMS):
        fig, ax = plt.subplots()
        for cost, series in cumulative_by_cost.items():
            ax.plot(np.arange(1, len(series) + 1), series, label=f"{cost:g} bpts cost")
        ax.set_xlabel("evaluation step")
        ax.set_ylabel("cumulative PnL (bpts)")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)


def plot_eigenvalue_growth(n_values, common_max, idio_max, out_path,
                           title="Eigenvalue growth with dimension") -> None:
    """Mean top eigenvalues of the common and idiosyncratic sample covariances
    against the panel dimension."""
    n_values = np.asarray(n_values)
    with plt.rc_context(FIG_PARAMS):
        fig, ax = plt.subplots()
        ax.plot(n_values, common_max, "o-", label="largest common eigenvalue")
        ax.plot(n_values, idio_max, "s--", label="largest idiosyncratic eigenvalue")
        ax.set_xlabel("panel dimension N")
        ax.set_ylabel("eigenvalue")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
