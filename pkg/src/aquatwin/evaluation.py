"""Forecast accuracy metrics and multi-model, multi-horizon comparison reports."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from .data import CONSUMPTION, TimeSeriesFrame

MAPE_EPS = 1e-9
DEFAULT_HORIZONS = {"6 Months": 183, "18 Months": 548}
REPORT_COLUMNS = ("model", "horizon", "mae", "rmse", "mape_pct", "n")


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.size} actuals vs {y_hat.size} predictions")
    if y.size == 0:
        raise ValueError("metrics of an empty series are undefined")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    e = np.abs(y - y_hat)
    # scale by the largest error so squares neither underflow nor overflow
    top = float(e.max())
    if top == 0.0 or not math.isfinite(top):
        return top
    return top * float(np.sqrt(np.mean((e / top) ** 2)))


def mape_detail(y, y_hat, eps: float = MAPE_EPS) -> tuple[float, int]:
    """MAPE in percent over rows with ``|y| > eps`` and the number of rows excluded."""
    y, y_hat = _pair(y, y_hat)
    keep = np.abs(y) > eps
    if not keep.any():
        raise ValueError("every actual is zero; MAPE is undefined")
    return float(100.0 * np.mean(np.abs(y[keep] - y_hat[keep]) / np.abs(y[keep]))), int(np.sum(~keep))


def mape(y, y_hat, eps: float = MAPE_EPS) -> float:
    return mape_detail(y, y_hat, eps)[0]


@dataclass(frozen=True)
class MetricReport:
    model: str
    horizon: str
    mae: float
    rmse: float
    mape_pct: float
    n: int
    mape_excluded: int = 0

    @classmethod
    def from_series(cls, model: str, horizon: str, y, y_hat) -> "MetricReport":
        m, excluded = mape_detail(y, y_hat)
        return cls(model, horizon, mae(y, y_hat), rmse(y, y_hat), m, len(np.asarray(y)), excluded)


@dataclass
class Comparison:
    reports: list[MetricReport]
    predictions: dict[tuple[str, str], pd.DataFrame]

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([{c: getattr(r, c) for c in REPORT_COLUMNS} for r in self.reports],
                            columns=list(REPORT_COLUMNS))

    def get(self, model: str, horizon: str) -> MetricReport:
        for r in self.reports:
            if r.model == model and r.horizon == horizon:
                return r
        raise KeyError((model, horizon))


def compare(models: Sequence[Callable[[], object]] | Mapping[str, Callable[[], object]], frame: TimeSeriesFrame,
            horizons: Mapping[str, int] = DEFAULT_HORIZONS) -> Comparison:
    """Fit every model on the data before each horizon's hold-out and score it there.

    A horizon of ``h`` days holds out the final ``h`` calendar days. Models
    are given as factories (name -> zero-argument constructor) so every
    horizon starts from an unfitted model; each forecast is one step ahead
    with the actual history available.
    """
    factories = dict(models) if isinstance(models, Mapping) else {f().name: f for f in models}
    last = frame.index[-1]
    reports, preds = [], {}
    for label, h in horizons.items():
        if h < 1:
            raise ValueError(f"horizon {label!r} must be at least one day")
        cut = last - pd.Timedelta(days=h - 1)
        if cut <= frame.index[0]:
            raise ValueError(f"horizon {label!r} ({h} days) exceeds the {len(frame)}-day data range")
        train = TimeSeriesFrame(frame.data[frame.index < cut], frame.freq)
        test_dates = frame.index[frame.index >= cut]
        actual = frame.column(CONSUMPTION).loc[test_dates].to_numpy(dtype=float)
        for name, make in factories.items():
            model = make()
            model.fit(train)
            y_hat = np.asarray(model.predict(frame, test_dates), dtype=float)
            reports.append(MetricReport.from_series(name, label, actual, y_hat))
            preds[(name, label)] = pd.DataFrame({"date": test_dates, "actual": actual, "predicted": y_hat})
    return Comparison(reports, preds)


def best_flags(reports: Sequence[MetricReport]) -> set[tuple[str, str, str]]:
    """(model, horizon, metric) triples holding the lowest value of their column."""
    flags = set()
    for horizon in dict.fromkeys(r.horizon for r in reports):
        rows = [r for r in reports if r.horizon == horizon]
        for metric in ("mae", "rmse", "mape_pct"):
            best = min(getattr(r, metric) for r in rows)
            flags.update((r.model, horizon, metric) for r in rows if getattr(r, metric) == best)
    return flags


def report_csv(reports: Sequence[MetricReport]) -> str:
    buf = io.StringIO()
    buf.write(",".join(REPORT_COLUMNS) + "\n")
    for r in reports:
        buf.write(f"{r.model},{r.horizon},{r.mae:.6f},{r.rmse:.6f},{r.mape_pct:.6f},{r.n}\n")
    return buf.getvalue()


def report_text(reports: Sequence[MetricReport], labels: Mapping[str, str] | None = None) -> str:
    """Wide aligned table: one row per model, MAE/RMSE/MAPE under each horizon; ``*`` marks column bests."""
    labels = labels or {}
    horizons = list(dict.fromkeys(r.horizon for r in reports))
    models = list(dict.fromkeys(r.model for r in reports))
    flags = best_flags(reports)
    by_key = {(r.model, r.horizon): r for r in reports}
    head1 = ["", *[h for h in horizons for _ in range(3)]]
    head2 = ["Model", *["MAE", "RMSE", "MAPE"] * len(horizons)]
    rows = []
    for m in models:
        cells = [labels.get(m, m)]
        for h in horizons:
            r = by_key.get((m, h))
            for metric, fmt in (("mae", "{:.2f}"), ("rmse", "{:.2f}"), ("mape_pct", "{:.2f}%")):
                if r is None:
                    cells.append("-")
                    continue
                mark = "*" if (m, h, metric) in flags else ""
                cells.append(fmt.format(getattr(r, metric)) + mark)
        rows.append(cells)
    table = [head1, head2, *rows]
    widths = [max(len(row[c]) for row in table) for c in range(len(head2))]
    lines = []
    for k, row in enumerate(table):
        first = row[0].ljust(widths[0])
        rest = [row[c].rjust(widths[c]) for c in range(1, len(row))]
        lines.append("  ".join([first, *rest]).rstrip())
        if k == 1:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n* best value in its column\n"


def plot_csv(pred: pd.DataFrame) -> str:
    buf = io.StringIO()
    buf.write("date,actual,predicted\n")
    for d, a, p in zip(pd.DatetimeIndex(pred["date"]).strftime("%Y-%m-%d"), pred["actual"], pred["predicted"]):
        buf.write(f"{d},{a:.6f},{p:.6f}\n")
    return buf.getvalue()
