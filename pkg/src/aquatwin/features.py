"""Lag, trailing rolling-mean and calendar features for the tree and additive models."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .data import CONSUMPTION, TimeSeriesFrame, ZScoreParams, zscore_scale

TEMPORAL = ("day_of_week", "is_weekend")


@dataclass(frozen=True)
class FeatureSpec:
    """Which engineered columns to build.

    ``lag_columns`` and ``rolling_columns`` name the source series that get
    lagged copies and trailing means. ``regressors`` are copied through at
    their same-day value. The rolling window includes the current day, as in
    the usual trailing-mean definition; note that for the target column this
    exposes ``y[t]`` to the predictor row of day ``t``.
    """

    target: str = CONSUMPTION
    lags: tuple[int, ...] = (1, 7)
    lag_columns: tuple[str, ...] = (CONSUMPTION, "tmax")
    rolling_window: int = 7
    rolling_columns: tuple[str, ...] = (CONSUMPTION, "tmax")
    temporal: tuple[str, ...] = TEMPORAL
    regressors: tuple[str, ...] = ("tmax",)

    def __post_init__(self):
        if any(k < 1 for k in self.lags):
            raise ValueError(f"lags must be >= 1, got {self.lags}")
        if self.rolling_window < 1:
            raise ValueError("rolling window must be >= 1")
        unknown = set(self.temporal) - set(TEMPORAL)
        if unknown:
            raise ValueError(f"unknown temporal indicators {sorted(unknown)}")

    @property
    def warmup(self) -> int:
        lag = max(self.lags) if self.lags and self.lag_columns else 0
        roll = self.rolling_window - 1 if self.rolling_columns else 0
        return max(lag, roll)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    dates: pd.DatetimeIndex
    scaling: dict[str, ZScoreParams] = field(default_factory=dict)

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0] or self.X.shape[0] != len(self.dates):
            raise ValueError("X, y and dates disagree on row count")
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns):
            raise ValueError("X columns disagree with column names")

    def __len__(self) -> int:
        return self.X.shape[0]

    def rows(self, sl) -> "FeatureMatrix":
        return FeatureMatrix(self.X[sl], self.y[sl], list(self.columns), self.dates[sl], dict(self.scaling))

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, index=self.dates, columns=self.columns)
        df["target"] = self.y
        return df


def lag(series: pd.Series, k: int) -> pd.Series:
    """``out[t] = series[t - k]``; the first ``k`` entries are missing."""
    if k < 1:
        raise ValueError("lag must be >= 1")
    return series.shift(k)


def rolling_mean(series: pd.Series, w: int) -> pd.Series:
    """Trailing mean over ``series[t-w+1..t]``; the first ``w-1`` entries are missing."""
    if w < 1:
        raise ValueError("window must be >= 1")
    return series.rolling(window=w, min_periods=w).mean()


def temporal_indicators(dates) -> pd.DataFrame:
    """Day of week with Monday = 0, and a weekend flag for Saturday/Sunday."""
    idx = pd.DatetimeIndex(dates)
    dow = idx.dayofweek.to_numpy()
    return pd.DataFrame({"day_of_week": dow, "is_weekend": (dow >= 5).astype(int)}, index=idx)


def feature_frame(frame: TimeSeriesFrame, spec: FeatureSpec) -> pd.DataFrame:
    """All spec features as a date-indexed frame, warm-up rows still present.

    The input is reindexed onto a contiguous daily calendar first so that a
    lag of ``k`` always means ``k`` calendar days.
    """
    data = frame.data
    if frame.freq == "daily" and len(data):
        full = pd.date_range(data.index[0], data.index[-1], freq="D", name=data.index.name)
        data = data.reindex(full)
    needed = {spec.target, *spec.lag_columns, *spec.rolling_columns, *spec.regressors}
    missing = sorted(c for c in needed if c not in data.columns)
    if missing:
        raise KeyError(f"frame lacks column(s) {missing}")

    cols: dict[str, pd.Series] = {}
    for name in spec.lag_columns:
        for k in spec.lags:
            cols[f"{name}_lag{k}"] = lag(data[name], k)
    for name in spec.rolling_columns:
        cols[f"{name}_roll{spec.rolling_window}"] = rolling_mean(data[name], spec.rolling_window)
    if spec.temporal:
        cal = temporal_indicators(data.index)
        for name in spec.temporal:
            cols[name] = cal[name].astype(float)
    for name in spec.regressors:
        cols[name] = data[name]
    out = pd.DataFrame(cols, index=data.index)
    out["__target__"] = data[spec.target]
    return out


def assemble(frame: TimeSeriesFrame, spec: FeatureSpec) -> FeatureMatrix:
    """Materialize the spec's features and drop every row with a gap.

    Column order is lags, rolling means, calendar indicators, regressors.
    """
    table = feature_frame(frame, spec).dropna()
    if table.empty:
        raise ValueError("no complete rows left after feature construction")
    y = table.pop("__target__").to_numpy(dtype=float)
    return FeatureMatrix(table.to_numpy(dtype=float), y, list(table.columns), pd.DatetimeIndex(table.index))


def standardize(matrix: FeatureMatrix, params: dict[str, ZScoreParams] | None = None,
                skip: tuple[str, ...] = TEMPORAL) -> FeatureMatrix:
    """Z-score every predictor column except ``skip``.

    Without ``params`` the statistics are estimated from ``matrix`` (fit on
    training rows, then pass the returned ``scaling`` for test rows).
    """
    X = matrix.X.copy()
    fitted = {}
    for j, name in enumerate(matrix.columns):
        if name in skip:
            continue
        if params is None:
            X[:, j], fitted[name] = zscore_scale(X[:, j])
        else:
            fitted[name] = params[name]
            X[:, j] = params[name].transform(X[:, j])
    return FeatureMatrix(X, matrix.y.copy(), list(matrix.columns), matrix.dates, fitted)
