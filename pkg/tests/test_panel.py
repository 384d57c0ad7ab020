import math

import numpy as np
import pytest

from fnirvar.panel import (
    Panel,
    PanelLoadError,
    clip_outliers,
    excess_returns,
    load_csv,
    log_diff,
    save_csv,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_small_csv(tmp_path):
    path = write(tmp_path / "p.csv",
                 "asset_id,1,2,3,4\na,0.1,0.2,0.3,0.4\nb,1,2,3,4\nc,-1,-2,-3,-4\n")
    panel = load_csv(path)
    assert panel.n_series == 3 and panel.n_steps == 4
    assert panel.asset_ids == ("a", "b", "c")
    assert np.array_equal(panel.row("b"), [1.0, 2.0, 3.0, 4.0])


def test_load_rows_are_time(tmp_path):
    path = write(tmp_path / "p.csv", "t,a,b\n1,0.1,0.2\n2,0.3,0.4\n")
    panel = load_csv(path, layout="rows_are_time")
    assert panel.asset_ids == ("a", "b")
    assert np.array_equal(panel.values, [[0.1, 0.3], [0.2, 0.4]])


def test_empty_cell_names_location(tmp_path):
    path = write(tmp_path / "p.csv", "asset_id,1,2\na,0.1,\nb,1,2\n")
    with pytest.raises(PanelLoadError, match=r"row 'a', column '2'"):
        load_csv(path)


def test_non_numeric_cell_names_location(tmp_path):
    path = write(tmp_path / "p.csv", "asset_id,1,2\na,0.1,x\n")
    with pytest.raises(PanelLoadError, match=r"'x' at row 'a', column '2'"):
        load_csv(path)


def test_duplicate_ids_rejected(tmp_path):
    path = write(tmp_path / "p.csv", "asset_id,1,2\na,1,2\na,3,4\n")
    with pytest.raises(PanelLoadError, match="duplicate"):
        load_csv(path)


def test_non_monotone_timestamps_rejected(tmp_path):
    path = write(tmp_path / "p.csv", "asset_id,2,1\na,1,2\n")
    with pytest.raises(PanelLoadError, match="strictly increasing"):
        load_csv(path)


def test_unknown_layout_rejected(tmp_path):
    path = write(tmp_path / "p.csv", "asset_id,1\na,1\n")
    with pytest.raises(PanelLoadError, match="unknown layout"):
        load_csv(path, layout="sideways")


def test_nan_rejected_in_constructor():
    with pytest.raises(ValueError, match="non-finite"):
        Panel(np.array([[1.0, np.nan]]), ["a"], ["1", "2"])


def test_round_trip_full_precision(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((4, 7)) * np.pi
    panel = Panel(values, ["w", "x", "y", "z"], [str(i) for i in range(7)])
    save_csv(panel, tmp_path / "p.csv")
    back = load_csv(tmp_path / "p.csv")
    assert np.array_equal(back.values, panel.values)
    assert back.asset_ids == panel.asset_ids


def test_excess_returns_market_minus_itself_is_zero():
    values = np.vstack([np.arange(4.0)] * 3)
    panel = Panel(values, ["a", "b", "mkt"], list("1234"))
    out = excess_returns(panel, "mkt")
    assert out.n_series == 2
    assert np.array_equal(out.values, np.zeros((2, 4)))


def test_excess_returns_forced_arithmetic():
    panel = Panel(np.array([[0.02], [0.01]]), ["a", "mkt"], ["1"])
    out = excess_returns(panel, "mkt")
    assert out.asset_ids == ("a",)
    assert np.allclose(out.values, [[0.01]])


def test_excess_returns_loop_oracle():
    rng = np.random.default_rng(3)
    values = rng.standard_normal((5, 10))
    panel = Panel(values, ["a", "b", "c", "d", "m"], [str(i) for i in range(10)])
    out = excess_returns(panel, "m")
    # element-wise oracle
    for i, name in enumerate(["a", "b", "c", "d"]):
        for t in range(10):
            assert out.row(name)[t] == pytest.approx(values[i, t] - values[4, t], abs=1e-15)
    # column sums drop by (N-1) * market value
    expect = values[:4].sum(axis=0) - 4 * values[4]
    assert np.allclose(out.values.sum(axis=0), expect, atol=1e-12)


def test_excess_returns_row_permutation_equivariance():
    rng = np.random.default_rng(4)
    values = rng.standard_normal((4, 6))
    ids = ["a", "b", "c", "m"]
    ts = [str(i) for i in range(6)]
    out = excess_returns(Panel(values, ids, ts), "m")
    perm = [2, 0, 1, 3]
    out_p = excess_returns(Panel(values[perm], [ids[i] for i in perm], ts), "m")
    for name in ("a", "b", "c"):
        assert np.array_equal(out.row(name), out_p.row(name))


def test_excess_returns_missing_market():
    panel = Panel(np.ones((2, 2)), ["a", "b"], ["1", "2"])
    with pytest.raises(ValueError, match="market id"):
        excess_returns(panel, "zzz")


def test_clip_outliers_examples():
    panel = Panel(np.array([[0.30, 0.10, -0.40, 0.25]]), ["a"], list("1234"))
    clipped, count = clip_outliers(panel, 0.25)
    assert np.array_equal(clipped.values, [[0.0, 0.10, 0.0, 0.25]])
    assert count == 2


def test_clip_outliers_identity_and_idempotence():
    rng = np.random.default_rng(5)
    panel = Panel(rng.uniform(-0.2, 0.2, (3, 8)), ["a", "b", "c"],
                  [str(i) for i in range(8)])
    clipped, count = clip_outliers(panel, 0.25)
    assert count == 0 and np.array_equal(clipped.values, panel.values)
    wild = Panel(rng.uniform(-1, 1, (3, 8)), ["a", "b", "c"], [str(i) for i in range(8)])
    once, _ = clip_outliers(wild, 0.25)
    twice, again = clip_outliers(once, 0.25)
    assert again == 0 and np.array_equal(once.values, twice.values)


def test_clip_outliers_bad_threshold():
    panel = Panel(np.ones((1, 2)), ["a"], ["1", "2"])
    with pytest.raises(ValueError):
        clip_outliers(panel, 0.0)


def test_log_diff_examples():
    assert np.allclose(log_diff([3.0, 3.0, 3.0]), [0.0, 0.0])
    out = log_diff([1.0, math.e, math.e**2])
    assert np.allclose(out, [1.0, 1.0], atol=1e-12)


def test_log_diff_loop_oracle():
    rng = np.random.default_rng(6)
    series = rng.uniform(0.5, 5.0, 40)
    out = log_diff(series)
    oracle = [math.log(series[t + 1] / series[t]) for t in range(39)]
    assert np.allclose(out, oracle, atol=1e-12)


def test_log_diff_nonpositive_names_index():
    with pytest.raises(ValueError, match="index 2"):
        log_diff([1.0, 2.0, 0.0, 3.0])
