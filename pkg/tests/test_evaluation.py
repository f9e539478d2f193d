import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from aquatwin import evaluation as ev
from aquatwin.data import CONSUMPTION
from conftest import daily_frame


def test_mae_examples():
    assert ev.mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ev.mae([10, 20], [12, 18]) == 2.0
    assert ev.mae([1, 5, 2], [4, 4, 4]) == ev.mae([4, 4, 4], [1, 5, 2])
    with pytest.raises(ValueError):
        ev.mae([], [])


def test_rmse_examples(rng):
    assert ev.rmse([3.0], [3.0]) == 0.0
    assert ev.rmse([0.0], [3.0]) == 3.0
    y, p = rng.normal(size=20), rng.normal(size=20)
    assert ev.rmse(y, p) == pytest.approx(math.sqrt(sum((y - p) ** 2) / 20), rel=1e-14)


def test_mape_examples():
    assert ev.mape([5.0, 7.0], [5.0, 7.0]) == 0.0
    assert ev.mape([100.0], [90.0]) == pytest.approx(10.0)
    value, excluded = ev.mape_detail([0.0, 100.0, 50.0], [3.0, 90.0, 55.0])
    assert excluded == 1 and value == pytest.approx(10.0)
    with pytest.raises(ValueError):
        ev.mape([0.0, 0.0], [1.0, 1.0])


def test_length_mismatch():
    with pytest.raises(ValueError):
        ev.rmse([1.0, 2.0], [1.0])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-1e6, 1e6)), arrays(np.float64, n, elements=st.floats(-1e6, 1e6)))))
def test_mae_le_rmse(pair):
    y, p = pair
    assert ev.mae(y, p) <= ev.rmse(y, p) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 10, elements=st.floats(1, 1e3)), st.floats(1e-3, 1e3))
def test_metrics_detect_translation(y, c):
    for metric in (ev.mae, ev.rmse, ev.mape):
        assert metric(y, y + c) > 0
        assert metric(y, y - c) > 0


class Perfect:
    name = "perfect"

    def fit(self, train):
        return self

    def predict(self, history, dates):
        return history.column(CONSUMPTION).loc[pd.DatetimeIndex(dates)].to_numpy()


class Offset(Perfect):
    def __init__(self, c):
        self.c = c
        self.name = f"offset{c}"

    def predict(self, history, dates):
        return super().predict(history, dates) + self.c


def frame(n=400):
    return daily_frame({"consumption": np.random.default_rng(0).uniform(50, 150, n)}, start="2022-01-01")


def test_compare_perfect_model_zero_row():
    res = ev.compare({"perfect": Perfect}, frame(), {"6 Months": 183})
    r = res.get("perfect", "6 Months")
    assert (r.mae, r.rmse, r.mape_pct, r.n) == (0.0, 0.0, 0.0, 183)


def test_compare_two_models_ranked_by_mae():
    f = frame()
    res = ev.compare({"a": lambda: Offset(2.0), "b": lambda: Offset(-0.5)}, f, {"6 Months": 183, "18 Months": 300})
    assert res.get("a", "6 Months").mae == pytest.approx(2.0)
    assert res.get("b", "18 Months").mae == pytest.approx(0.5)
    assert ("b", "6 Months", "mae") in ev.best_flags(res.reports)
    assert ("a", "6 Months", "mae") not in ev.best_flags(res.reports)
    t = res.table()
    assert list(t.columns) == ["model", "horizon", "mae", "rmse", "mape_pct", "n"]
    assert len(t) == 4


def test_compare_holdout_is_final_days():
    f = frame(100)
    seen = {}

    class Spy(Perfect):
        def fit(self, train):
            seen["last"] = train.index[-1]
            return self

    res = ev.compare({"spy": Spy}, f, {"h": 10})
    assert seen["last"] == f.index[-11]
    assert res.predictions[("spy", "h")]["date"].iloc[0] == f.index[-10]


def test_compare_horizon_beyond_data():
    with pytest.raises(ValueError):
        ev.compare({"p": Perfect}, frame(100), {"too long": 100})


def test_compare_deterministic():
    f = frame()
    a = ev.compare({"a": lambda: Offset(1.0)}, f, {"h": 100})
    b = ev.compare({"a": lambda: Offset(1.0)}, f, {"h": 100})
    assert ev.report_csv(a.reports) == ev.report_csv(b.reports)


def test_report_layout_fixture():
    reports = [
        ev.MetricReport("Prophet Adv. Engineering", "6 Months", 5.76, 8.31, 18.61, 183),
        ev.MetricReport("Naive", "6 Months", 9.0, 11.0, 25.0, 183),
    ]
    text = ev.report_text(reports)
    lines = text.splitlines()
    assert lines[0].split() == ["6", "Months", "6", "Months", "6", "Months"]
    assert lines[1].split() == ["Model", "MAE", "RMSE", "MAPE"]
    assert lines[3].split()[-3:] == ["5.76*", "8.31*", "18.61%*"]
    assert lines[3].startswith("Prophet Adv. Engineering ")
    assert lines[4].split() == ["Naive", "9.00", "11.00", "25.00%"]
    csv = ev.report_csv(reports)
    assert csv.splitlines()[0] == "model,horizon,mae,rmse,mape_pct,n"
    assert csv.splitlines()[1] == "Prophet Adv. Engineering,6 Months,5.760000,8.310000,18.610000,183"


def test_plot_csv():
    pred = pd.DataFrame({"date": pd.date_range("2024-01-01", periods=2), "actual": [1.0, 2.0],
                         "predicted": [1.5, 2.5]})
    assert ev.plot_csv(pred) == "date,actual,predicted\n2024-01-01,1.000000,1.500000\n2024-01-02,2.000000,2.500000\n"
