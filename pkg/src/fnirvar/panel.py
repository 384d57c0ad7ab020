"""Loading, validation and elementary transforms of observation panels.

A panel holds one series per row and one time step per column. CSV is the
single ingestion format: wide layout, one header row and one identifier
column. Missing data is rejected, never imputed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class PanelLoadError(ValueError):
    """Raised when a CSV file cannot be turned into a valid panel."""


def _time_keys(timestamps):
    """Sort keys for time labels: numeric when every label parses, else lexicographic."""
    try:
        return [float(t) for t in timestamps]
    except ValueError:
        return list(timestamps)


@dataclass(frozen=True)
class Panel:
    """N series observed at T common time points, rows = series.

    values: (N, T) float array with no missing entries.
    asset_ids: N unique series labels.
    timestamps: T strictly increasing time labels.
    """

    values: np.ndarray
    asset_ids: tuple
    timestamps: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        if values.ndim != 2:
            raise ValueError(f"values must be 2-d, got shape {values.shape}")
        n, t = values.shape
        if len(self.asset_ids) != n:
            raise ValueError(f"{len(self.asset_ids)} asset ids for {n} rows")
        if len(self.timestamps) != t:
            raise ValueError(f"{len(self.timestamps)} timestamps for {t} columns")
        if len(set(self.asset_ids)) != n:
            raise ValueError("asset ids are not unique")
        if not np.isfinite(values).all():
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(
                f"non-finite entry for series {self.asset_ids[i]!r} "
                f"at time {self.timestamps[j]!r}"
            )
        keys = _time_keys(self.timestamps)
        for a, b in zip(keys, keys[1:]):
            if not a < b:
                raise ValueError(f"timestamps not strictly increasing at {b!r}")

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def row(self, asset_id) -> np.ndarray:
        return self.values[self.asset_ids.index(asset_id)]


def load_csv(path, layout: str = "rows_are_series") -> Panel:
    """Load a wide CSV into a Panel, normalising layout to rows-as-series.

    rows_are_series: header = (id column, time labels...), one row per series.
    rows_are_time:   header = (time column, asset ids...), one row per step.
    """
    if layout not in ("rows_are_series", "rows_are_time"):
        raise PanelLoadError(f"unknown layout {layout!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or len(rows[0]) < 2:
        raise PanelLoadError(f"{path}: need a header row plus at least one data row")
    header = rows[0]
    col_labels = [h.strip() for h in header[1:]]
    row_labels = []
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise PanelLoadError(f"{path}: line {r} has {len(row)} cells, expected {len(header)}")
        label = row[0].strip()
        row_labels.append(label)
        parsed = []
        for cell, col in zip(row[1:], col_labels):
            cell = cell.strip()
            if not cell:
                raise PanelLoadError(f"{path}: empty cell at row {label!r}, column {col!r}")
            try:
                value = float(cell)
            except ValueError:
                raise PanelLoadError(
                    f"{path}: cell {cell!r} at row {label!r}, column {col!r} is not numeric"
                ) from None
            if math.isnan(value):
                raise PanelLoadError(f"{path}: missing value at row {label!r}, column {col!r}")
            parsed.append(value)
        data.append(parsed)
    values = np.asarray(data, dtype=float)
    if layout == "rows_are_time":
        values = values.T
        asset_ids, timestamps = col_labels, row_labels
    else:
        asset_ids, timestamps = row_labels, col_labels
    if len(set(asset_ids)) != len(asset_ids):
        dupes = sorted({a for a in asset_ids if asset_ids.count(a) > 1})
        raise PanelLoadError(f"{path}: duplicate asset ids {dupes}")
    try:
        return Panel(values, asset_ids, timestamps)
    except ValueError as exc:
        raise PanelLoadError(f"{path}: {exc}") from None


def save_csv(panel: Panel, path, id_header: str = "asset_id") -> None:
    """Write a panel in the rows-as-series wide layout at full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([id_header, *panel.timestamps])
        for name, row in zip(panel.asset_ids, panel.values):
            writer.writerow([name, *[repr(float(v)) for v in row]])


def excess_returns(panel: Panel, market_id) -> Panel:
    """Subtract the market series from every other series and drop it."""
    if market_id not in panel.asset_ids:
        raise ValueError(f"market id {market_id!r} not in panel")
    idx = panel.asset_ids.index(market_id)
    market = panel.values[idx]
    keep = [i for i in range(panel.n_series) if i != idx]
    values = panel.values[keep] - market
    ids = [panel.asset_ids[i] for i in keep]
    return Panel(values, ids, panel.timestamps)


def clip_outliers(panel: Panel, threshold: float = 0.25):
    """Zero out entries with |x| strictly above threshold.

    Returns (clipped panel, number of entries set to zero).
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    mask = np.abs(panel.values) > threshold
    values = np.where(mask, 0.0, panel.values)
    return Panel(values, panel.asset_ids, panel.timestamps), int(mask.sum())


def log_diff(series) -> np.ndarray:
    """First difference of the logarithm of a strictly positive series."""
    series = np.asarray(series, dtype=float)
    bad = np.nonzero(series <= 0)[0]
    if bad.size:
        raise ValueError(f"series entry at index {bad[0]} is not strictly positive")
    logs = np.log(series)
    return logs[1:] - logs[:-1]
