"""Ingestion, cleaning, aggregation and correlation screening of daily series.

Consumption files carry ``date,consumption_m3``; meteorological files follow
the AEMET daily-observation schema (``fecha,tmed,prec,tmin,horatmin,...``).
Everything here is a pure function over :class:`TimeSeriesFrame` values.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

FREQUENCIES = ("daily", "weekly", "monthly")
_RANK = {name: rank for rank, name in enumerate(FREQUENCIES)}
_PANDAS_RULE = {"weekly": "W-SUN", "monthly": "MS"}

CONSUMPTION = "consumption"

# AEMET daily-observation columns, in export order.
AEMET_NUMERIC = ("tmed", "prec", "tmin", "tmax", "dir", "velmedia", "racha", "sol", "presMax", "presMin")
AEMET_TEXT = ("horatmin", "horatmax", "horaracha", "horaPresMax", "horaPresMin")
AEMET_COLUMNS = (
    "fecha", "tmed", "prec", "tmin", "horatmin", "tmax", "horatmax", "dir", "velmedia",
    "racha", "horaracha", "sol", "presMax", "horaPresMax", "presMin", "horaPresMin",
)
_MANDATORY_METEO = ("fecha", "tmax")

DEFAULT_AGGREGATION = {
    CONSUMPTION: "sum",
    "tmax": "max",
    "tmin": "min",
    "prec": "sum",
}

SIGNIFICANCE_THRESHOLD = 0.4


class IngestError(ValueError):
    """Raised when an input file cannot be turned into a valid frame.

    ``problems`` holds one human-readable line per offending row.
    """

    def __init__(self, message: str, problems: Sequence[str] = ()):
        self.problems = list(problems)
        detail = "".join(f"\n  {p}" for p in self.problems)
        super().__init__(message + detail)


@dataclass
class TimeSeriesFrame:
    """Date-indexed numeric columns plus optional text metadata.

    Missing values are ``NaN``. ``text`` keeps non-numeric columns such as the
    hh:mm time-of-extreme fields from AEMET exports.
    """

    data: pd.DataFrame
    freq: str = "daily"
    text: pd.DataFrame | None = None
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.freq not in FREQUENCIES:
            raise ValueError(f"unknown frequency {self.freq!r}")
        if not isinstance(self.data.index, pd.DatetimeIndex):
            raise TypeError("TimeSeriesFrame needs a DatetimeIndex")
        if not self.data.index.is_monotonic_increasing or self.data.index.has_duplicates:
            raise ValueError("index must be strictly increasing")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def index(self) -> pd.DatetimeIndex:
        return self.data.index

    @property
    def columns(self) -> list[str]:
        return list(self.data.columns)

    def column(self, name: str) -> pd.Series:
        if name not in self.data.columns:
            raise KeyError(f"column {name!r} not in frame (have {self.columns})")
        return self.data[name]

    def replace(self, data: pd.DataFrame, **kw) -> "TimeSeriesFrame":
        kw.setdefault("freq", self.freq)
        kw.setdefault("text", self.text)
        return TimeSeriesFrame(data, **kw)


def _parse_number(raw: str) -> float:
    raw = raw.strip()
    if raw == "":
        return math.nan
    # AEMET marks precipitation below 0.1 mm as "Ip" (inapreciable).
    if raw.lower() == "ip":
        return 0.0
    return float(raw.replace(",", "."))


def _parse_date(raw: str) -> dt.date:
    return dt.date.fromisoformat(raw.strip())


def _data_lines(path: Path) -> list[tuple[int, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    return [(n, line) for n, line in enumerate(text.splitlines(), start=1)
            if line.strip() and not line.lstrip().startswith("#")]


def _sniff_delimiter(header: str) -> str:
    return ";" if header.count(";") > header.count(",") else ","


def parse_consumption_csv(path, *, strict: bool = True) -> TimeSeriesFrame:
    """Read a ``date,consumption_m3`` file into a daily frame.

    Rows are sorted by date. Unparsable dates, non-numeric or negative
    volumes are rejected with a line-numbered diagnostic; with ``strict``
    (the default) any rejection raises :class:`IngestError`, otherwise the
    rows are dropped and the diagnostics kept on the frame. Duplicate dates
    always raise. Empty volume cells become ``NaN``.
    """
    lines = _data_lines(Path(path))
    if not lines:
        raise IngestError(f"{path}: empty file")
    header_no, header = lines[0]
    delim = _sniff_delimiter(header)
    names = [h.strip().lower() for h in next(csv.reader([header], delimiter=delim))]
    if "date" not in names:
        raise IngestError(f"{path}:{header_no}: header lacks a 'date' column")
    value_col = next((n for n in ("consumption_m3", "consumption") if n in names), None)
    if value_col is None:
        raise IngestError(f"{path}:{header_no}: header lacks a 'consumption_m3' column")
    i_date, i_val = names.index("date"), names.index(value_col)

    problems: list[str] = []
    rows: dict[dt.date, tuple[int, float]] = {}
    duplicates: list[str] = []
    for line_no, line in lines[1:]:
        cells = next(csv.reader([line], delimiter=delim))
        if len(cells) <= max(i_date, i_val):
            problems.append(f"line {line_no}: expected {len(names)} fields, got {len(cells)}")
            continue
        try:
            day = _parse_date(cells[i_date])
        except ValueError:
            problems.append(f"line {line_no}: unparsable date {cells[i_date]!r}")
            continue
        try:
            value = _parse_number(cells[i_val])
        except ValueError:
            problems.append(f"line {line_no}: non-numeric consumption {cells[i_val]!r}")
            continue
        if value < 0:
            problems.append(f"line {line_no}: negative consumption {value}")
            continue
        if day in rows:
            duplicates.append(f"duplicate date {day.isoformat()} on lines {rows[day][0]} and {line_no}")
            continue
        rows[day] = (line_no, value)

    if duplicates:
        raise IngestError(f"{path}: duplicate dates", duplicates)
    if problems and strict:
        raise IngestError(f"{path}: {len(problems)} malformed row(s)", problems)
    if not rows:
        raise IngestError(f"{path}: no valid rows", problems)

    days = sorted(rows)
    data = pd.DataFrame(
        {CONSUMPTION: [rows[d][1] for d in days]},
        index=pd.DatetimeIndex(pd.to_datetime(days), name="date"),
    )
    return TimeSeriesFrame(data, "daily", diagnostics=problems)


def _canonical_meteo_name(name: str) -> str | None:
    lookup = {c.lower(): c for c in AEMET_COLUMNS}
    return lookup.get(name.strip().lower())


def _meteo_frame(records: Iterable[tuple[str, Mapping[str, str]]], source: str) -> TimeSeriesFrame:
    """Build a frame from (location, {column: raw text}) records."""
    numeric: dict[dt.date, dict[str, float]] = {}
    text: dict[dt.date, dict[str, str]] = {}
    problems = []
    for where, rec in records:
        try:
            day = _parse_date(rec["fecha"])
        except (ValueError, KeyError):
            problems.append(f"{where}: unparsable date {rec.get('fecha')!r}")
            continue
        if day in numeric:
            problems.append(f"{where}: duplicate date {day.isoformat()}")
            continue
        values = {}
        for col in AEMET_NUMERIC:
            if col not in rec:
                continue
            try:
                values[col] = _parse_number(rec[col])
            except ValueError:
                problems.append(f"{where}: non-numeric {col}={rec[col]!r}")
                values[col] = math.nan
        numeric[day] = values
        text[day] = {col: rec[col].strip() for col in AEMET_TEXT if col in rec}
    if problems:
        raise IngestError(f"{source}: {len(problems)} malformed row(s)", problems)
    if not numeric:
        raise IngestError(f"{source}: no rows")
    days = sorted(numeric)
    index = pd.DatetimeIndex(pd.to_datetime(days), name="date")
    present = [c for c in AEMET_NUMERIC if any(c in numeric[d] for d in days)]
    data = pd.DataFrame({c: [numeric[d].get(c, math.nan) for d in days] for c in present}, index=index)
    text_cols = [c for c in AEMET_TEXT if any(c in text[d] for d in days)]
    text_df = pd.DataFrame({c: [text[d].get(c, "") for d in days] for c in text_cols}, index=index)
    return TimeSeriesFrame(data, "daily", text=text_df)


def parse_meteo_csv(path) -> TimeSeriesFrame:
    """Read an AEMET-schema CSV (case-insensitive header, ``,``/``.`` decimals).

    Semicolon-delimited exports are detected from the header. Hour-of-extreme
    columns are kept verbatim in ``frame.text``. Empty cells are ``NaN``.
    """
    lines = _data_lines(Path(path))
    if not lines:
        raise IngestError(f"{path}: empty file")
    header_no, header = lines[0]
    delim = _sniff_delimiter(header)
    raw_names = next(csv.reader([header], delimiter=delim))
    names = [_canonical_meteo_name(n) for n in raw_names]
    missing = [m for m in _MANDATORY_METEO if m not in names]
    if missing:
        raise IngestError(f"{path}:{header_no}: missing mandatory column(s) {missing}")

    def records():
        for line_no, line in lines[1:]:
            cells = next(csv.reader([line], delimiter=delim))
            rec = {n: c for n, c in zip(names, cells) if n is not None}
            yield f"line {line_no}", rec

    return _meteo_frame(records(), str(path))


def parse_aemet_json(path) -> TimeSeriesFrame:
    """Parse a saved AEMET OpenData ``valores climatologicos`` response body.

    The body is a JSON list of objects whose values are strings with decimal
    commas; extra keys (``indicativo``, ``nombre``...) are ignored.
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if isinstance(payload, dict) and "datos" in payload and isinstance(payload["datos"], list):
        payload = payload["datos"]
    if not isinstance(payload, list):
        raise IngestError(f"{path}: expected a JSON list of daily records")

    def records():
        for n, item in enumerate(payload):
            rec = {}
            for key, value in item.items():
                canon = _canonical_meteo_name(key)
                if canon is not None:
                    rec[canon] = "" if value is None else str(value)
            yield f"record {n}", rec

    keys = set()
    for item in payload:
        keys.update(_canonical_meteo_name(k) for k in item)
    missing = [m for m in _MANDATORY_METEO if m not in keys]
    if missing:
        raise IngestError(f"{path}: missing mandatory field(s) {missing}")
    return _meteo_frame(records(), str(path))


def join(consumption: TimeSeriesFrame, meteo: TimeSeriesFrame, *, fill_meteo: bool = True) -> TimeSeriesFrame:
    """Inner-join consumption and meteorological frames on date.

    Rows with missing consumption are dropped; meteorological gaps are
    forward-filled unless ``fill_meteo`` is false.
    """
    if consumption.freq != meteo.freq:
        raise ValueError(f"frequency mismatch: {consumption.freq} vs {meteo.freq}")
    data = consumption.data.join(meteo.data, how="inner")
    text = meteo.text.reindex(data.index) if meteo.text is not None else None
    frame = TimeSeriesFrame(data, consumption.freq, text=text)
    if fill_meteo:
        for col in meteo.columns:
            frame = forward_fill(frame, col)
    kept = frame.data[CONSUMPTION].notna()
    text = frame.text[kept] if frame.text is not None else None
    return TimeSeriesFrame(frame.data[kept], frame.freq, text=text)


def aggregate(frame: TimeSeriesFrame, freq: str, policy: Mapping[str, str] | None = None) -> TimeSeriesFrame:
    """Resample to a coarser frequency using a per-column reduction policy.

    Columns absent from ``policy`` are averaged. Weeks end on Sunday and
    months are labelled by their first day. A period whose values are all
    missing stays missing.
    """
    if freq not in FREQUENCIES:
        raise ValueError(f"unknown frequency {freq!r}")
    if _RANK[freq] < _RANK[frame.freq]:
        raise ValueError(f"cannot aggregate {frame.freq} data to finer {freq} data")
    if freq == frame.freq:
        return frame
    rules = dict(DEFAULT_AGGREGATION)
    rules.update(policy or {})
    resampler = frame.data.resample(_PANDAS_RULE[freq])
    out = {}
    for col in frame.columns:
        how = rules.get(col, "mean")
        if how == "sum":
            out[col] = resampler[col].sum(min_count=1)
        elif how in ("mean", "max", "min"):
            out[col] = getattr(resampler[col], how)()
        else:
            raise ValueError(f"unknown aggregation {how!r} for column {col!r}")
    data = pd.DataFrame(out)
    data.index.name = frame.index.name
    return TimeSeriesFrame(data, freq)


def forward_fill(frame: TimeSeriesFrame, column: str) -> TimeSeriesFrame:
    """Replace gaps in ``column`` with the last prior observation.

    Leading gaps have no prior value and remain missing.
    """
    data = frame.data.copy()
    data[column] = frame.column(column).ffill()
    return frame.replace(data, diagnostics=list(frame.diagnostics))


@dataclass(frozen=True)
class MinMaxParams:
    x_min: float
    x_max: float

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.x_min) / (self.x_max - self.x_min)

    def inverse(self, z):
        return np.asarray(z, dtype=float) * (self.x_max - self.x_min) + self.x_min


@dataclass(frozen=True)
class ZScoreParams:
    mean: float
    std: float

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean


def minmax_scale(x) -> tuple[np.ndarray, MinMaxParams]:
    """Scale to [0, 1]; the minimum maps to 0 and the maximum to 1 exactly."""
    x = np.asarray(x, dtype=float)
    finite = x[~np.isnan(x)]
    if finite.size < 2 or finite.min() == finite.max():
        raise ValueError("min-max scaling needs at least two distinct values")
    params = MinMaxParams(float(finite.min()), float(finite.max()))
    return params.transform(x), params


def zscore_scale(x) -> tuple[np.ndarray, ZScoreParams]:
    """Standardize with the population standard deviation (ddof=0)."""
    x = np.asarray(x, dtype=float)
    finite = x[~np.isnan(x)]
    if finite.size == 0:
        raise ValueError("z-score scaling of an empty series")
    mu = float(finite.mean())
    sigma = float(finite.std(ddof=0))
    if sigma == 0.0:
        raise ValueError("z-score scaling of a constant series (sigma = 0)")
    params = ZScoreParams(mu, sigma)
    return params.transform(x), params


def _complete_pairs(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson_r needs two equal-length 1-D series, got {x.shape} and {y.shape}")
    keep = ~(np.isnan(x) | np.isnan(y))
    return x[keep], y[keep]


def pearson_r(x, y) -> float:
    """Pearson's correlation coefficient over pairwise-complete observations.

    Evaluated in centred form, which is algebraically the raw-sums formula
    but does not cancel catastrophically for series far from zero.
    """
    x, y = _complete_pairs(x, y)
    if x.size < 2:
        raise ValueError("pearson_r needs at least two complete pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("pearson_r undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass
class CorrelationMatrix:
    labels: list[str]
    values: np.ndarray
    failures: dict[tuple[str, str], str] = field(default_factory=dict)

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.labels, columns=self.labels)

    def significant(self, target: str, threshold: float = SIGNIFICANCE_THRESHOLD) -> list[str]:
        """Columns whose |R| against ``target`` exceeds ``threshold``."""
        row = self.labels.index(target)
        return [lab for j, lab in enumerate(self.labels)
                if lab != target and not np.isnan(self.values[row, j])
                and abs(self.values[row, j]) > threshold]


def correlation_matrix(frame: TimeSeriesFrame, columns: Sequence[str] | None = None) -> CorrelationMatrix:
    columns = list(columns) if columns is not None else frame.columns
    if len(columns) < 2:
        raise ValueError("correlation matrix needs at least two columns")
    k = len(columns)
    values = np.full((k, k), np.nan)
    failures = {}
    for a in range(k):
        values[a, a] = 1.0
        for b in range(a + 1, k):
            try:
                r = pearson_r(frame.column(columns[a]).to_numpy(), frame.column(columns[b]).to_numpy())
            except ValueError as exc:
                failures[(columns[a], columns[b])] = str(exc)
                continue
            values[a, b] = values[b, a] = r
    return CorrelationMatrix(columns, values, failures)


def train_test_split(frame: TimeSeriesFrame, *, fraction: float | None = None,
                     split_date=None) -> tuple[TimeSeriesFrame, TimeSeriesFrame]:
    """Chronological split, either by training fraction or by a date.

    With ``split_date`` the training part is every row strictly before it.
    """
    if (fraction is None) == (split_date is None):
        raise ValueError("give exactly one of fraction or split_date")
    n = len(frame)
    if n == 0:
        raise ValueError("cannot split an empty frame")
    if fraction is not None:
        if not 0.0 < fraction < 1.0:
            raise ValueError("fraction must lie in (0, 1)")
        n_train = int(math.floor(n * fraction + 1e-9))
    else:
        cut = pd.Timestamp(split_date)
        if cut < frame.index[0] or cut > frame.index[-1]:
            raise ValueError(f"split date {cut.date()} outside {frame.index[0].date()}..{frame.index[-1].date()}")
        n_train = int(frame.index.searchsorted(cut, side="left"))
    if n_train == 0 or n_train == n:
        raise ValueError(f"split leaves an empty partition ({n_train} train of {n})")

    def part(sl):
        text = frame.text.iloc[sl] if frame.text is not None else None
        return TimeSeriesFrame(frame.data.iloc[sl], frame.freq, text=text)

    return part(slice(0, n_train)), part(slice(n_train, n))
