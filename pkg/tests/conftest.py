import numpy as np
import pandas as pd
import pytest

from aquatwin.data import TimeSeriesFrame


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def daily_frame(values: dict, start="2024-01-01") -> TimeSeriesFrame:
    n = len(next(iter(values.values())))
    idx = pd.date_range(start, periods=n, freq="D", name="date")
    return TimeSeriesFrame(pd.DataFrame(values, index=idx))
