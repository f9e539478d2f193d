import json
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from aquatwin import data as d
from conftest import daily_frame


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- consumption ingestion -------------------------------------------------

def test_consumption_three_rows(tmp_path):
    p = write(tmp_path, "c.csv", "date,consumption_m3\n2024-01-01,10\n2024-01-02,11.5\n2024-01-03,9\n")
    f = d.parse_consumption_csv(p)
    assert len(f) == 3 and f.freq == "daily"
    assert f.column("consumption").tolist() == [10.0, 11.5, 9.0]


def test_consumption_duplicate_date_is_named(tmp_path):
    p = write(tmp_path, "c.csv", "date,consumption_m3\n2024-01-01,10\n2024-01-01,12\n")
    with pytest.raises(d.IngestError, match="2024-01-01"):
        d.parse_consumption_csv(p)


def test_consumption_out_of_order_sorted(tmp_path):
    p = write(tmp_path, "c.csv", "date,consumption_m3\n2024-01-03,3\n2024-01-01,1\n2024-01-02,2\n")
    f = d.parse_consumption_csv(p)
    assert list(f.index.strftime("%Y-%m-%d")) == ["2024-01-01", "2024-01-02", "2024-01-03"]
    assert f.column("consumption").tolist() == [1.0, 2.0, 3.0]


def test_consumption_bad_rows_reported_with_line_numbers(tmp_path):
    p = write(tmp_path, "c.csv", "date,consumption_m3\n2024-01-01,1\nnot-a-date,2\n2024-01-03,-4\n")
    with pytest.raises(d.IngestError) as exc:
        d.parse_consumption_csv(p)
    text = str(exc.value)
    assert "line 3" in text and "line 4" in text and "negative" in text
    lenient = d.parse_consumption_csv(p, strict=False)
    assert len(lenient) == 1 and len(lenient.diagnostics) == 2


def test_consumption_missing_file():
    with pytest.raises(d.IngestError):
        d.parse_consumption_csv("/nonexistent/file.csv")


def test_consumption_empty_cell_is_missing(tmp_path):
    p = write(tmp_path, "c.csv", "date,consumption_m3\n2024-01-01,\n2024-01-02,4\n")
    f = d.parse_consumption_csv(p)
    assert math.isnan(f.column("consumption").iloc[0])


# --- meteo ingestion -------------------------------------------------------

METEO_HEADER = "fecha,tmed,prec,tmin,horatmin,tmax,horatmax,dir,velmedia,racha,horaracha,sol,presMax,horaPresMax,presMin,horaPresMin\n"


def test_meteo_numeric_cells(tmp_path):
    p = write(tmp_path, "m.csv", METEO_HEADER + "2024-07-01,20.1,0.0,15.0,05:00,25.3,15:10,27,2.1,8.3,14:00,10.2,1015,10,1010,18\n")
    f = d.parse_meteo_csv(p)
    assert f.column("tmax").iloc[0] == 25.3
    assert f.column("prec").iloc[0] == 0.0
    assert f.text["horatmax"].iloc[0] == "15:10"


def test_meteo_empty_prec_is_missing_not_zero(tmp_path):
    p = write(tmp_path, "m.csv", "fecha,tmax,prec\n2024-07-01,25,\n")
    f = d.parse_meteo_csv(p)
    assert math.isnan(f.column("prec").iloc[0])


def test_meteo_decimal_comma_and_case(tmp_path):
    p = write(tmp_path, "m.csv", "FECHA;TMAX;Prec\n2024-07-01;12,5;0,3\n")
    f = d.parse_meteo_csv(p)
    assert f.column("tmax").iloc[0] == 12.5
    assert f.column("prec").iloc[0] == pytest.approx(0.3)


def test_meteo_missing_mandatory_column(tmp_path):
    p = write(tmp_path, "m.csv", "fecha,tmed\n2024-07-01,20\n")
    with pytest.raises(d.IngestError, match="tmax"):
        d.parse_meteo_csv(p)


def test_aemet_json_adapter(tmp_path):
    body = [{"fecha": "2024-07-02", "indicativo": "3195", "tmax": "31,4", "prec": "Ip", "horatmax": "16:20"},
            {"fecha": "2024-07-01", "indicativo": "3195", "tmax": "30,0", "prec": "1,2"}]
    p = write(tmp_path, "a.json", json.dumps(body))
    f = d.parse_aemet_json(p)
    assert f.column("tmax").tolist() == [30.0, 31.4]
    assert f.column("prec").tolist() == [pytest.approx(1.2), 0.0]


def test_join_drops_missing_consumption_and_fills_meteo():
    c = daily_frame({"consumption": [1.0, np.nan, 3.0, 4.0]})
    m = daily_frame({"tmax": [20.0, 21.0, np.nan, 23.0]})
    j = d.join(c, m)
    assert j.column("consumption").tolist() == [1.0, 3.0, 4.0]
    assert j.column("tmax").tolist() == [20.0, 21.0, 23.0]


# --- aggregation -----------------------------------------------------------

def test_weekly_total():
    f = daily_frame({"consumption": [10.0] * 7}, start="2024-01-01")  # Monday..Sunday
    w = d.aggregate(f, "weekly")
    assert len(w) == 1 and w.column("consumption").iloc[0] == 70.0


def test_tmax_max_policy():
    f = daily_frame({"tmax": [20.0, 30.0]})
    assert d.aggregate(f, "weekly").column("tmax").iloc[0] == 30.0


def test_mixed_policy_month_oracle():
    rng = np.random.default_rng(3)
    n = 31
    vals = {"consumption": rng.uniform(50, 150, n), "tmax": rng.uniform(10, 35, n),
            "tmin": rng.uniform(0, 10, n), "tmed": rng.uniform(10, 20, n), "prec": rng.uniform(0, 5, n)}
    f = daily_frame(vals, start="2024-03-01")
    m = d.aggregate(f, "monthly")
    assert len(m) == 1
    row = m.data.iloc[0]
    assert row["consumption"] == pytest.approx(math.fsum(vals["consumption"]), rel=1e-12)
    assert row["tmax"] == max(vals["tmax"])
    assert row["tmin"] == min(vals["tmin"])
    assert row["tmed"] == pytest.approx(sum(vals["tmed"]) / n, rel=1e-12)
    assert row["prec"] == pytest.approx(math.fsum(vals["prec"]), rel=1e-12)


def test_coarse_to_fine_rejected():
    f = d.aggregate(daily_frame({"consumption": [1.0] * 14}), "weekly")
    with pytest.raises(ValueError):
        d.aggregate(f, "daily")


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 60), elements=st.floats(0, 1e4)))
def test_weekly_conservation(values):
    f = daily_frame({"consumption": values}, start="2024-01-03")
    w = d.aggregate(f, "weekly")
    assert w.column("consumption").sum() == pytest.approx(values.sum(), rel=1e-9, abs=1e-9)


# --- forward fill ----------------------------------------------------------

def test_forward_fill_examples():
    f = d.forward_fill(daily_frame({"tmax": [5.0, np.nan, np.nan, 7.0]}), "tmax")
    assert f.column("tmax").tolist() == [5.0, 5.0, 5.0, 7.0]
    g = d.forward_fill(daily_frame({"tmax": [np.nan, 3.0]}), "tmax")
    assert math.isnan(g.column("tmax").iloc[0]) and g.column("tmax").iloc[1] == 3.0


def test_forward_fill_long_oracle(rng):
    x = rng.normal(size=500)
    x[rng.random(500) < 0.3] = np.nan
    got = d.forward_fill(daily_frame({"tmax": x}), "tmax").column("tmax").to_numpy()
    last = np.nan
    for i, v in enumerate(x):
        last = v if not np.isnan(v) else last
        assert (np.isnan(last) and np.isnan(got[i])) or got[i] == last


# --- scaling ---------------------------------------------------------------

def test_minmax_example_and_constant():
    z, p = d.minmax_scale([0, 5, 10])
    assert z.tolist() == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        d.minmax_scale([3, 3, 3])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-1e6, 1e6)))
def test_minmax_range_and_roundtrip(x):
    if np.ptp(x) == 0:
        return
    z, p = d.minmax_scale(x)
    assert z.min() == 0.0 and z.max() == 1.0
    assert np.all((z >= 0) & (z <= 1))
    assert np.max(np.abs(p.inverse(z) - x)) <= 1e-12 * max(1.0, np.max(np.abs(x)))


def test_zscore_population_sigma():
    z, p = d.zscore_scale([-1.0, 0.0, 1.0])
    assert z == pytest.approx([-math.sqrt(1.5), 0.0, math.sqrt(1.5)], abs=1e-12)
    assert p.std == pytest.approx(math.sqrt(2 / 3))
    with pytest.raises(ValueError):
        d.zscore_scale([2.0, 2.0])


def test_zscore_moments_and_roundtrip(rng):
    x = rng.normal(40, 7, size=300)
    z, p = d.zscore_scale(x)
    assert abs(z.mean()) < 1e-10 * len(x)
    assert z.std(ddof=0) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(p.inverse(z) - x)) <= 1e-12 * np.max(np.abs(x))


# --- correlation -----------------------------------------------------------

def naive_pearson(x, y):
    """Raw-sums textbook form, computed with exact fractions."""
    from fractions import Fraction
    X = [Fraction(v) for v in x]
    Y = [Fraction(v) for v in y]
    n = len(X)
    num = n * sum(a * b for a, b in zip(X, Y)) - sum(X) * sum(Y)
    den2 = (n * sum(a * a for a in X) - sum(X) ** 2) * (n * sum(b * b for b in Y) - sum(Y) ** 2)
    return float(num) / math.sqrt(float(den2))


def test_pearson_examples(rng):
    assert d.pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    x = rng.normal(size=20)
    assert d.pearson_r(x, -x) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(ValueError):
        d.pearson_r([1, 1, 1], [1, 2, 3])


def test_pearson_against_exact_oracle(rng):
    for _ in range(20):
        x, y = rng.normal(size=15), rng.normal(size=15)
        assert d.pearson_r(x, y) == pytest.approx(naive_pearson(x, y), abs=1e-12)


def test_pearson_pairwise_deletion():
    x = [1.0, 2.0, np.nan, 4.0, 5.0]
    y = [2.0, 1.0, 7.0, np.nan, 3.0]
    assert d.pearson_r(x, y) == pytest.approx(naive_pearson([1, 2, 5], [2, 1, 3]), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 10, elements=st.floats(-100, 100)), arrays(np.float64, 10, elements=st.floats(-100, 100)))
def test_pearson_symmetric_and_bounded(x, y):
    if np.ptp(x) < 1e-6 or np.ptp(y) < 1e-6:
        return
    r = d.pearson_r(x, y)
    assert r == d.pearson_r(y, x)
    assert -1.0 <= r <= 1.0


def test_pearson_sign_flip(rng):
    x, y = rng.normal(size=30), rng.normal(size=30)
    assert d.pearson_r(-2 * x + 1, 3 * y) == pytest.approx(-d.pearson_r(x, y), abs=1e-12)


def test_correlation_matrix_identical_columns():
    f = daily_frame({"a": [1.0, 2.0, 4.0], "b": [1.0, 2.0, 4.0]})
    m = d.correlation_matrix(f)
    assert m.get("a", "b") == pytest.approx(1.0, abs=1e-15)
    assert m.get("a", "a") == 1.0


def test_correlation_matrix_oracle_and_failures(rng):
    f = daily_frame({"a": rng.normal(size=40), "b": rng.normal(size=40), "c": rng.normal(size=40),
                     "k": np.ones(40)})
    m = d.correlation_matrix(f)
    assert np.array_equal(m.values[:3, :3], m.values[:3, :3].T)
    assert np.all(np.diag(m.values) == 1.0)
    for a in "abc":
        for b in "abc":
            if a != b:
                assert m.get(a, b) == pytest.approx(naive_pearson(f.column(a), f.column(b)), abs=1e-12)
    assert math.isnan(m.get("a", "k")) and ("a", "k") in m.failures


def test_significant_threshold():
    x = np.arange(50, dtype=float)
    f = daily_frame({"consumption": x, "tmax": x + np.sin(x), "noise": np.cos(x * 7.3)})
    assert d.correlation_matrix(f).significant("consumption") == ["tmax"]


# --- split -----------------------------------------------------------------

def test_split_fraction():
    train, test = d.train_test_split(daily_frame({"consumption": np.arange(10.0)}), fraction=0.8)
    assert (len(train), len(test)) == (8, 2)


def test_split_date_at_start_rejected():
    f = daily_frame({"consumption": np.arange(10.0)})
    with pytest.raises(ValueError):
        d.train_test_split(f, split_date="2024-01-01")


def test_split_boundary_membership():
    f = daily_frame({"consumption": np.arange(100.0)})
    cut = pd.Timestamp("2024-02-15")
    train, test = d.train_test_split(f, split_date=cut)
    assert train.index.max() < cut <= test.index.min()
    assert train.index.max() < test.index.min()
    assert len(train) + len(test) == 100
    assert train.index.append(test.index).equals(f.index)
