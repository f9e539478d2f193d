"""Uniform fit / predict adapters over every forecasting model.

All adapters forecast one step ahead: the prediction for day ``t`` may use
observed consumption up to ``t - 1`` (plus whatever the shared feature
definitions expose) and the same-day temperature, which is treated as a
known future regressor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import additive, gbt, lstm
from .data import CONSUMPTION, TimeSeriesFrame
from .features import FeatureMatrix, FeatureSpec, assemble, feature_frame

_DERIVED = re.compile(r"^(?P<col>.+)_(?P<kind>lag|roll)(?P<k>\d+)$")


def regressor_table(frame: TimeSeriesFrame, names) -> pd.DataFrame:
    """Raw columns plus derived ``<col>_lag<k>`` / ``<col>_roll<w>`` columns on the frame's dates."""
    out = {}
    for name in names:
        if name in frame.data.columns:
            out[name] = frame.data[name]
            continue
        m = _DERIVED.match(name)
        if not m or m["col"] not in frame.data.columns:
            raise KeyError(f"cannot resolve regressor {name!r}")
        k = int(m["k"])
        spec = (FeatureSpec(lags=(k,), lag_columns=(m["col"],), rolling_columns=(), temporal=(), regressors=())
                if m["kind"] == "lag" else
                FeatureSpec(lags=(), lag_columns=(), rolling_window=k, rolling_columns=(m["col"],), temporal=(),
                            regressors=()))
        out[name] = feature_frame(frame, spec)[name].reindex(frame.index)
    return pd.DataFrame(out, index=frame.index)


def _rows(frame: TimeSeriesFrame, dates) -> TimeSeriesFrame:
    return TimeSeriesFrame(frame.data.loc[pd.DatetimeIndex(dates)], frame.freq)


class Forecaster:
    name = "base"

    def fit(self, train: TimeSeriesFrame) -> "Forecaster":
        raise NotImplementedError

    def predict(self, history: TimeSeriesFrame, dates) -> np.ndarray:
        """Forecast ``dates``; ``history`` holds observations covering at least those dates' inputs."""
        raise NotImplementedError


class NaiveSeasonal(Forecaster):
    """Same day last week."""

    def __init__(self, lag: int = 7, name: str = "naive_seasonal"):
        self.lag = lag
        self.name = name

    def fit(self, train):
        return self

    def predict(self, history, dates):
        y = history.column(CONSUMPTION)
        prior = pd.DatetimeIndex(dates) - pd.Timedelta(days=self.lag)
        vals = y.reindex(prior).to_numpy(dtype=float)
        if np.isnan(vals).any():
            raise ValueError(f"history lacks the {self.lag}-day-earlier values for some forecast dates")
        return vals


class AdditiveForecaster(Forecaster):
    def __init__(self, spec: additive.AdditiveSpec, name: str):
        self.spec = spec
        self.name = name
        self.model: additive.AdditiveFit | None = None

    def fit(self, train):
        reg = regressor_table(train, self.spec.regressors)
        keep = reg.notna().all(axis=1).to_numpy() & train.column(CONSUMPTION).notna().to_numpy()
        self.model = additive.fit(train.index[keep], train.column(CONSUMPTION).to_numpy()[keep], self.spec,
                                  reg[keep] if self.spec.regressors else None)
        return self

    def predict(self, history, dates):
        reg = regressor_table(history, self.spec.regressors).reindex(pd.DatetimeIndex(dates))
        return additive.predict(self.model, dates, reg if self.spec.regressors else None)


@dataclass
class GbtSettings:
    hyperparams: gbt.GbtHyperParams
    search_draws: int = 0
    search_folds: int = 3
    search_space: dict | None = None
    validation_fraction: float = 0.1
    seed: int = 0


class GbtForecaster(Forecaster):
    """Boosted trees on the shared feature matrix.

    Early stopping (when enabled) watches a chronological tail of the
    training rows, never the evaluation window.
    """

    def __init__(self, settings: GbtSettings, name: str, features: FeatureSpec = FeatureSpec()):
        self.settings = settings
        self.name = name
        self.features = features
        self.model: gbt.GbtModel | None = None
        self.search: gbt.SearchResult | None = None

    def fit(self, train):
        m = assemble(train, self.features)
        s = self.settings
        hp = s.hyperparams
        if s.search_draws > 0:
            self.search = gbt.randomized_search(m.X, m.y, s.search_space, k=s.search_folds, n_draws=s.search_draws,
                                                seed=s.seed, base=hp)
            hp = self.search.best
        validation = None
        n_val = int(len(m) * s.validation_fraction) if hp.early_stopping_rounds else 0
        X, y = m.X, m.y
        if n_val:
            validation = (X[-n_val:], y[-n_val:])
            X, y = X[:-n_val], y[:-n_val]
        self.model = gbt.boost(X, y, hp, validation, feature_names=m.columns)
        return self

    def predict(self, history, dates):
        table = feature_frame(history, self.features).drop(columns="__target__")
        X = table.reindex(pd.DatetimeIndex(dates))[self.model.feature_names]
        gaps = X.isna().any(axis=0)
        if gaps.any():
            raise ValueError(f"inputs {list(X.columns[gaps])} unavailable for some forecast dates")
        return gbt.predict(self.model, X.to_numpy(dtype=float))


class StackingForecaster(Forecaster):
    """Members refit on all training rows, blended with weights fit on a held-out tail."""

    def __init__(self, members: list[Forecaster], name: str = "stacking", blend_fraction: float = 0.2,
                 loss: str = "squared"):
        if len(members) < 2:
            raise ValueError("stacking needs at least two members")
        self.members = members
        self.name = name
        self.blend_fraction = blend_fraction
        self.loss = loss
        self.weights: np.ndarray | None = None

    def fit(self, train):
        n_blend = max(1, int(len(train) * self.blend_fraction))
        head = _rows(train, train.index[:-n_blend])
        window = train.index[-n_blend:]
        preds = np.column_stack([m.fit(head).predict(train, window) for m in self.members])
        self.weights = gbt.stack_weights(preds, train.column(CONSUMPTION).loc[window].to_numpy(), self.loss)
        for m in self.members:
            m.fit(train)
        return self

    def member_predictions(self, history, dates) -> np.ndarray:
        return np.column_stack([m.predict(history, dates) for m in self.members])

    def predict(self, history, dates):
        return self.member_predictions(history, dates) @ self.weights


def lstm_matrix(frame: TimeSeriesFrame) -> FeatureMatrix:
    """Row ``s`` holds ``consumption[s]`` and the inputs known for day ``s+1``.

    Those are ``tmax[s+1]`` and a sin/cos encoding of the weekday of
    ``s+1``, so a window ending at ``t-1`` sees same-day temperature and
    calendar for the forecast day ``t``.
    """
    data = frame.data
    full = pd.date_range(data.index[0], data.index[-1], freq="D")
    data = data.reindex(full)
    dow = (full + pd.Timedelta(days=1)).dayofweek.to_numpy()
    table = pd.DataFrame({
        CONSUMPTION: data[CONSUMPTION],
        "tmax_lead1": data["tmax"].shift(-1),
        "dow_sin_lead1": np.sin(2 * np.pi * dow / 7),
        "dow_cos_lead1": np.cos(2 * np.pi * dow / 7),
    }, index=full)
    return FeatureMatrix(table.to_numpy(dtype=float), data[CONSUMPTION].to_numpy(dtype=float),
                         list(table.columns), pd.DatetimeIndex(full))


class LstmForecaster(Forecaster):
    def __init__(self, config: lstm.TrainConfig = lstm.TrainConfig(), name: str = "lstm"):
        self.config = config
        self.name = name
        self.model: lstm.LstmModel | None = None

    def fit(self, train):
        m = lstm_matrix(train)
        keep = ~np.isnan(m.X).any(axis=1) & ~np.isnan(m.y)
        good = np.flatnonzero(keep)
        if good.size == 0:
            raise ValueError("no complete rows to train the LSTM on")
        # the last row lacks next-day tmax; train on the trailing gap-free block
        m, keep = m.rows(slice(0, good[-1] + 1)), keep[:good[-1] + 1]
        bad = np.flatnonzero(~keep)
        if bad.size:
            m = m.rows(slice(bad[-1] + 1, None))
        self.model = lstm.train(m, self.config)
        return self

    def predict(self, history, dates):
        m = lstm_matrix(history)
        L = self.config.sequence_length
        pos = m.dates.get_indexer(pd.DatetimeIndex(dates))
        if (pos < L).any():
            raise ValueError(f"need {L} days of history before every forecast date")
        windows = m.X[pos[:, None] - L + np.arange(L)[None, :]]
        if np.isnan(windows).any():
            raise ValueError("history has gaps inside an LSTM input window")
        return np.atleast_1d(lstm.predict(self.model, windows))


MODEL_NAMES = (
    "naive_seasonal",
    "additive_basic",
    "additive_with_seasonality",
    "additive_advanced",
    "additive_advanced_feature_engineering",
    "gbt_xgboost",
    "gbt_lightgbm",
    "stacking",
    "lstm",
)

DISPLAY_NAMES = {
    "naive_seasonal": "Naive Seasonal (lag 7)",
    "additive_basic": "Additive Basic",
    "additive_with_seasonality": "Additive + Seasonality",
    "additive_advanced": "Advanced Additive",
    "additive_advanced_feature_engineering": "Additive Adv. Engineering",
    "gbt_xgboost": "GBT Depth-wise",
    "gbt_lightgbm": "GBT Leaf-wise",
    "stacking": "Stacking Depth-wise + Leaf-wise",
    "lstm": "LSTM",
}


def build(name: str, options: dict | None = None) -> Forecaster:
    """Instantiate a model by registry name; ``options`` carries per-family settings."""
    o = options or {}
    gbt_common = dict(o.get("gbt", {}))
    search = dict(o.get("gbt_search", {}))

    def gbt_member(style, label):
        maker = gbt.lightgbm_style if style == "lightgbm" else gbt.xgboost_style
        hp = maker(**{**gbt_common, **o.get(f"gbt_{style}", {})})
        settings = GbtSettings(hp, search_draws=int(search.get("n_draws", 0)), search_folds=int(search.get("k", 3)),
                               search_space=search.get("space"), seed=int(o.get("seed", 0)))
        return GbtForecaster(settings, label, FeatureSpec.from_dict(o["features"]) if "features" in o else FeatureSpec())

    if name == "naive_seasonal":
        return NaiveSeasonal()
    if name.startswith("additive_"):
        key = name[len("additive_"):]
        specs = additive.variants()
        if key not in specs:
            raise KeyError(f"unknown model {name!r}")
        return AdditiveForecaster(specs[key], name)
    if name == "gbt_lightgbm":
        return gbt_member("lightgbm", name)
    if name == "gbt_xgboost":
        return gbt_member("xgboost", name)
    if name == "stacking":
        return StackingForecaster([gbt_member("xgboost", "gbt_xgboost"), gbt_member("lightgbm", "gbt_lightgbm")],
                                  loss=o.get("stacking_loss", "squared"))
    if name == "lstm":
        cfg = lstm.TrainConfig(**{"seed": int(o.get("seed", 42)), **o.get("lstm", {})})
        return LstmForecaster(cfg)
    raise KeyError(f"unknown model {name!r} (known: {', '.join(MODEL_NAMES)})")
