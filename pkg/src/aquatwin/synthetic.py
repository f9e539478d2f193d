"""Seeded synthetic consumption and temperature series with a known generating formula."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .additive import holiday_dates


@dataclass(frozen=True)
class SyntheticSpec:
    n_days: int = 1460
    start: str = "2019-01-01"
    base_level: float = 100.0
    trend_slope: float = 0.01  # m3 per day
    weekly_amplitude: float = 8.0
    yearly_amplitude: float = 15.0
    beta_true: float = 1.5  # m3 per degree C of tmax
    noise_sigma: float = 3.0
    holiday_uplift: float = 12.0
    tmax_mean: float = 20.0
    tmax_amplitude: float = 8.0
    tmax_noise: float = 3.0
    seed: int = 42

    def __post_init__(self):
        if self.n_days < 1:
            raise ValueError("n_days must be positive")
        if self.noise_sigma < 0 or self.tmax_noise < 0:
            raise ValueError("noise levels must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


FORMULA = (
    "tmax[t] = tmax_mean - tmax_amplitude*cos(2*pi*(t+10)/365.25) + N(0, tmax_noise^2); "
    "consumption[t] = max(0, base_level + trend_slope*t + weekly_amplitude*sin(2*pi*t/7) "
    "+ yearly_amplitude*sin(2*pi*t/365.25) + beta_true*tmax[t] + holiday_uplift*holiday[t] "
    "+ N(0, noise_sigma^2)); t = days since start; holiday = Spanish national holidays"
)


def generate(spec: SyntheticSpec = SyntheticSpec()) -> pd.DataFrame:
    """Daily frame with ``consumption`` and ``tmax`` columns (index ``date``)."""
    # separate streams so a longer series extends a shorter one draw for draw
    rng_t = np.random.default_rng([spec.seed, 0])
    rng_y = np.random.default_rng([spec.seed, 1])
    dates = pd.date_range(spec.start, periods=spec.n_days, freq="D", name="date")
    t = np.arange(spec.n_days, dtype=float)
    tmax = (spec.tmax_mean - spec.tmax_amplitude * np.cos(2 * math.pi * (t + 10) / 365.25)
            + rng_t.normal(0.0, 1.0, spec.n_days) * spec.tmax_noise)
    hol_days = {pd.Timestamp(d) for days in holiday_dates("ES", range(dates[0].year, dates[-1].year + 1)).values()
                for d in days}
    holiday = np.array([1.0 if d in hol_days else 0.0 for d in dates])
    y = (spec.base_level + spec.trend_slope * t
         + spec.weekly_amplitude * np.sin(2 * math.pi * t / 7)
         + spec.yearly_amplitude * np.sin(2 * math.pi * t / 365.25)
         + spec.beta_true * tmax + spec.holiday_uplift * holiday
         + rng_y.normal(0.0, 1.0, spec.n_days) * spec.noise_sigma)
    return pd.DataFrame({"consumption": np.maximum(y, 0.0), "tmax": tmax}, index=dates)


def _header(spec: SyntheticSpec) -> str:
    params = ", ".join(f"{k}={v}" for k, v in spec.to_dict().items())
    return f"# synthetic series: {FORMULA}\n# parameters: {params}\n"


def write_csvs(spec: SyntheticSpec, consumption_path, meteo_path, meteo_lead_days: int = 0) -> pd.DataFrame:
    """Write a ``date,consumption_m3`` file and an AEMET-style ``fecha,tmax`` file.

    The temperature file runs ``meteo_lead_days`` past the last consumption
    day, standing in for a weather forecast.
    """
    df = generate(replace(spec, n_days=spec.n_days + meteo_lead_days))
    dates = df.index.strftime("%Y-%m-%d")
    lines = [_header(spec), "date,consumption_m3\n"]
    lines += [f"{d},{v:.4f}\n" for d, v in zip(dates[:spec.n_days], df["consumption"].iloc[:spec.n_days])]
    Path(consumption_path).write_text("".join(lines), encoding="utf-8")
    lines = [_header(spec), "fecha,tmax\n"]
    lines += [f"{d},{v:.2f}\n" for d, v in zip(dates, df["tmax"])]
    Path(meteo_path).write_text("".join(lines), encoding="utf-8")
    return df
