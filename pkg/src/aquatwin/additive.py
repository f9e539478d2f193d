"""Additive trend + Fourier seasonality + holiday + regressor model.

The fit is penalized least squares on an explicit design matrix, which is
the Gaussian-error maximum-likelihood estimate of the coefficients.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

# Fixed-date national holidays in Spain (movable feasts such as Good Friday omitted).
SPANISH_HOLIDAYS = {
    "new_year": (1, 1),
    "epiphany": (1, 6),
    "labour_day": (5, 1),
    "assumption": (8, 15),
    "national_day": (10, 12),
    "all_saints": (11, 1),
    "constitution_day": (12, 6),
    "immaculate_conception": (12, 8),
    "christmas": (12, 25),
}

WEEKLY = ("weekly", 7.0, 3)
YEARLY = ("yearly", 365.25, 10)
MONTHLY = ("monthly", 30.44, 5)


class CollinearDesign(ValueError):
    pass


def holiday_dates(calendar: str, years) -> dict[str, list[dt.date]]:
    if calendar.upper() != "ES":
        raise ValueError(f"unknown holiday calendar {calendar!r}")
    return {name: [dt.date(y, m, d) for y in years] for name, (m, d) in SPANISH_HOLIDAYS.items()}


@dataclass(frozen=True)
class AdditiveSpec:
    growth: str = "linear"
    n_changepoints: int = 10
    changepoint_range: float = 0.8
    seasonalities: tuple[tuple[str, float, int], ...] = (YEARLY, WEEKLY)
    holidays: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    holiday_calendar: str | None = None
    regressors: tuple[str, ...] = ("tmax",)
    multiplicative: bool = False
    ridge: float = 1e-8
    # Gaussian shrinkage scale for slope changes, with time scaled to [0, 1]
    # and the target scaled by its largest magnitude. None disables it.
    changepoint_prior_scale: float | None = None

    def __post_init__(self):
        if self.growth != "linear":
            raise ValueError("only linear growth is supported")
        if self.n_changepoints < 0:
            raise ValueError("n_changepoints must be >= 0")
        if not 0.0 < self.changepoint_range <= 1.0:
            raise ValueError("changepoint_range must lie in (0, 1]")
        if self.changepoint_prior_scale is not None and self.changepoint_prior_scale <= 0:
            raise ValueError("changepoint_prior_scale must be positive")
        for name, period, order in self.seasonalities:
            if order < 1 or period <= 0:
                raise ValueError(f"seasonality {name!r} needs period > 0 and order >= 1")

    def to_dict(self) -> dict:
        return {
            "growth": self.growth,
            "n_changepoints": self.n_changepoints,
            "changepoint_range": self.changepoint_range,
            "seasonalities": [list(s) for s in self.seasonalities],
            "holidays": {k: list(v) for k, v in self.holidays.items()},
            "holiday_calendar": self.holiday_calendar,
            "regressors": list(self.regressors),
            "multiplicative": self.multiplicative,
            "ridge": self.ridge,
            "changepoint_prior_scale": self.changepoint_prior_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdditiveSpec":
        d = dict(d)
        if "seasonalities" in d:
            d["seasonalities"] = tuple((str(n), float(p), int(o)) for n, p, o in d["seasonalities"])
        if "holidays" in d:
            d["holidays"] = {k: tuple(v) for k, v in d["holidays"].items()}
        if "regressors" in d:
            d["regressors"] = tuple(d["regressors"])
        return cls(**d)


def variants() -> dict[str, AdditiveSpec]:
    """The four pre-canned configurations, from plain to feature-engineered.

    All four shrink changepoint slopes; unpenalized hinges extrapolate badly
    over long horizons.
    """
    basic = AdditiveSpec(changepoint_prior_scale=0.05)
    with_seasonality = replace(basic, seasonalities=(YEARLY, WEEKLY, MONTHLY))
    advanced = replace(with_seasonality, holiday_calendar="ES")
    advanced_fe = replace(advanced, regressors=basic.regressors + (
        "consumption_lag1", "consumption_lag7", "consumption_roll7"))
    return {
        "basic": basic,
        "with_seasonality": with_seasonality,
        "advanced": advanced,
        "advanced_feature_engineering": advanced_fe,
    }


@dataclass(frozen=True)
class TimeAxis:
    """Origin and scale that map dates to model time; fixed at fit time."""

    origin: pd.Timestamp
    span_days: float
    changepoints: tuple[float, ...]

    def days(self, dates) -> np.ndarray:
        idx = pd.DatetimeIndex(dates)
        return ((idx - self.origin) / pd.Timedelta(days=1)).to_numpy(dtype=float)

    @classmethod
    def from_training(cls, dates, spec: AdditiveSpec) -> "TimeAxis":
        idx = pd.DatetimeIndex(dates)
        origin = idx.min()
        span = max(float((idx.max() - origin) / pd.Timedelta(days=1)), 1.0)
        cps = np.linspace(0.0, spec.changepoint_range * span, spec.n_changepoints + 1)[1:]
        return cls(origin, span, tuple(float(c) for c in cps))


def _holiday_table(spec: AdditiveSpec, dates: pd.DatetimeIndex) -> dict[str, set]:
    table = {name: {pd.Timestamp(d) for d in days} for name, days in spec.holidays.items()}
    if spec.holiday_calendar:
        years = range(dates.min().year, dates.max().year + 1) if len(dates) else []
        for name, days in holiday_dates(spec.holiday_calendar, years).items():
            table.setdefault(name, set()).update(pd.Timestamp(d) for d in days)
    return table


def design_blocks(dates, spec: AdditiveSpec, regressors: pd.DataFrame | Mapping | None,
                  axis: TimeAxis) -> dict[str, tuple[np.ndarray, list[str]]]:
    """Design columns grouped into trend, seasonal, holiday and regressor blocks."""
    idx = pd.DatetimeIndex(dates)
    n = len(idx)
    t_days = axis.days(idx)

    trend = [np.ones(n), t_days] + [np.maximum(0.0, t_days - c) for c in axis.changepoints]
    trend_names = ["intercept", "trend"] + [f"changepoint_{j}" for j in range(len(axis.changepoints))]

    seas, seas_names = [], []
    for name, period, order in spec.seasonalities:
        for k in range(1, order + 1):
            arg = 2.0 * math.pi * k * t_days / period
            seas += [np.sin(arg), np.cos(arg)]
            seas_names += [f"{name}_sin{k}", f"{name}_cos{k}"]

    hol, hol_names = [], []
    for name, days in sorted(_holiday_table(spec, idx).items()):
        hol.append(np.array([1.0 if d in days else 0.0 for d in idx]))
        hol_names.append(f"holiday_{name}")

    reg, reg_names = [], []
    if spec.regressors:
        if regressors is None:
            raise ValueError(f"regressor values required for {list(spec.regressors)}")
        table = pd.DataFrame(regressors)
        for name in spec.regressors:
            if name not in table:
                raise ValueError(f"regressor {name!r} not supplied")
            values = np.asarray(table[name], dtype=float)
            if values.shape != (n,):
                raise ValueError(f"regressor {name!r} has {values.size} values for {n} dates")
            if np.isnan(values).any():
                bad = idx[np.isnan(values)][0].date()
                raise ValueError(f"regressor {name!r} missing on {bad} (future values must be supplied)")
            reg.append(values)
            reg_names.append(name)

    def block(cols, names):
        return (np.column_stack(cols) if cols else np.empty((n, 0)), names)

    return {
        "trend": block(trend, trend_names),
        "seasonal": block(seas, seas_names),
        "holiday": block(hol, hol_names),
        "regressor": block(reg, reg_names),
    }


def design_matrix(dates, spec: AdditiveSpec, regressors=None,
                  axis: TimeAxis | None = None) -> tuple[np.ndarray, list[str]]:
    """Full additive design ``[1, t, hinges, sin/cos pairs, holidays, regressors]``.

    Without ``axis`` the time origin is the first of ``dates``.
    """
    axis = axis or TimeAxis.from_training(dates, spec)
    blocks = design_blocks(dates, spec, regressors, axis)
    mats = [b[0] for b in blocks.values()]
    names = [nm for b in blocks.values() for nm in b[1]]
    return np.hstack(mats), names


def _ridge_solve(X: np.ndarray, y: np.ndarray, ridge: float, free: int = 1,
                 names: list[str] | None = None, extra: np.ndarray | None = None) -> np.ndarray:
    """argmin ||y - X b||^2 + ridge * ||b[free:]||^2 + sum(extra * b^2).

    The penalty acts on the coefficients as given; the linear system is
    solved in a column-rescaled basis to keep it well conditioned.
    """
    n, p = X.shape
    if n < p:
        raise CollinearDesign(f"{n} rows cannot identify {p} coefficients")
    scale = np.abs(X).max(axis=0)
    scale[scale == 0.0] = 1.0
    Xs = X / scale
    A = Xs.T @ Xs
    penalty = np.full(p, ridge)
    penalty[:free] = 0.0
    if extra is not None:
        penalty = penalty + extra
    A[np.diag_indices(p)] += penalty / scale ** 2
    w, V = np.linalg.eigh(A)
    if w[0] <= max(w[-1], 1.0) * 1e-14:
        loadings = np.abs(V[:, 0])
        involved = [(names or [str(j) for j in range(p)])[j] for j in np.flatnonzero(loadings > 0.1)]
        raise CollinearDesign(f"design is rank-deficient; collinear columns: {involved}")
    b = np.linalg.solve(A, Xs.T @ y)
    return b / scale


@dataclass
class AdditiveFit:
    spec: AdditiveSpec
    axis: TimeAxis
    coefficients: np.ndarray
    names: list[str]
    residual_variance: float
    blocks: dict[str, slice] = field(default_factory=dict)

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"column": self.names, "coefficient": self.coefficients})

    def export_csv(self, path) -> None:
        Path(path).write_text(self.to_frame().to_csv(index=False, float_format="%.12g"), encoding="utf-8")


def _combine(fit_blocks, coef: np.ndarray, slices: dict[str, slice], multiplicative: bool) -> np.ndarray:
    parts = {k: fit_blocks[k][0] @ coef[slices[k]] for k in slices}
    if multiplicative:
        return parts["trend"] * (1.0 + parts["seasonal"]) + parts["holiday"] + parts["regressor"]
    return parts["trend"] + parts["seasonal"] + parts["holiday"] + parts["regressor"]


def _slices(blocks) -> dict[str, slice]:
    out, pos = {}, 0
    for k, (mat, _) in blocks.items():
        out[k] = slice(pos, pos + mat.shape[1])
        pos += mat.shape[1]
    return out


def fit(dates, y, spec: AdditiveSpec = AdditiveSpec(), regressors=None,
        max_iter: int = 50) -> AdditiveFit:
    """Least-squares fit; rows whose target is missing are ignored.

    In multiplicative mode the trend and seasonal blocks are estimated by
    alternating least squares starting from the additive solution.
    """
    idx = pd.DatetimeIndex(dates)
    y = np.asarray(y, dtype=float)
    if y.shape != (len(idx),):
        raise ValueError("dates and target disagree on length")
    keep = ~np.isnan(y)
    if not keep.any():
        raise ValueError("no observed target values")
    reg = None
    if regressors is not None:
        reg = pd.DataFrame(regressors).reset_index(drop=True)[keep]
    idx, y = idx[keep], y[keep]
    axis = TimeAxis.from_training(idx, spec)
    blocks = design_blocks(idx, spec, reg, axis)
    slices = _slices(blocks)
    X = np.hstack([b[0] for b in blocks.values()])
    names = [nm for b in blocks.values() for nm in b[1]]

    extra = np.zeros(X.shape[1])
    hinge = [j for j, nm in enumerate(names) if nm.startswith("changepoint_")]
    if hinge and spec.changepoint_prior_scale is not None:
        # MAP weight sigma^2 / tau^2 on scaled slope changes; sigma^2 starts
        # at var(y) (strong shrinkage) and is refined once from the residuals.
        to_scaled = (axis.span_days / max(float(np.max(np.abs(y))), 1e-12)) ** 2
        sigma2 = float(np.var(y))
        for _ in range(2):
            extra[hinge] = max(sigma2, 1e-12) / spec.changepoint_prior_scale ** 2 * to_scaled
            coef = _ridge_solve(X, y, spec.ridge, names=names, extra=extra)
            sigma2 = float(np.mean((y - X @ coef) ** 2))
    else:
        coef = _ridge_solve(X, y, spec.ridge, names=names)
    if spec.multiplicative and blocks["seasonal"][0].shape[1]:
        T, S = blocks["trend"][0], blocks["seasonal"][0]
        HR = np.hstack([blocks["holiday"][0], blocks["regressor"][0]])
        hr = slice(slices["holiday"].start, slices["regressor"].stop)
        # Additive start: read seasonal terms as relative to the mean level.
        level = T @ coef[slices["trend"]]
        coef[slices["seasonal"]] /= max(abs(float(np.mean(level))), 1e-12)
        for _ in range(max_iter):
            s = S @ coef[slices["seasonal"]]
            b = _ridge_solve(np.hstack([T * (1.0 + s)[:, None], HR]), y, spec.ridge,
                             extra=np.concatenate([extra[slices["trend"]], extra[hr]]))
            coef[slices["trend"]] = b[:T.shape[1]]
            coef[hr] = b[T.shape[1]:]
            g = T @ coef[slices["trend"]]
            b = _ridge_solve(np.hstack([S * g[:, None], HR]), y - g, spec.ridge, free=0)
            step = np.max(np.abs(b[:S.shape[1]] - coef[slices["seasonal"]]))
            coef[slices["seasonal"]] = b[:S.shape[1]]
            coef[hr] = b[S.shape[1]:]
            if step < 1e-10:
                break

    fitted = _combine(blocks, coef, slices, spec.multiplicative)
    resid = y - fitted
    return AdditiveFit(spec, axis, coef, names, float(np.mean(resid ** 2)), slices)


def predict(fit: AdditiveFit, dates, regressors=None) -> np.ndarray:
    """Forecast for ``dates``; regressor values must cover every date."""
    blocks = design_blocks(pd.DatetimeIndex(dates), fit.spec, regressors, fit.axis)
    return _combine(blocks, fit.coefficients, _slices(blocks), fit.spec.multiplicative)
