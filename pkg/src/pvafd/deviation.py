"""Deviation metrics (absolute, relative, performance ratio), daily aggregation, grouping.

Deviations keep their sign: underperformance is negative and the analysis
depends on that. Relative deviations with a too-small expected energy are
marked filtered rather than computed, to keep denominators sane.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import MisuseError
from .ingestion import SLOT_HOURS, MeasurementSeries


class DeviationKind(str, enum.Enum):
    ABSOLUTE = "absolute"
    RELATIVE = "relative"
    PR = "pr"


class GroupingScheme(str, enum.Enum):
    FIVE_MIN_SINGLE = "five_min_single"
    THIRTY_MIN_GROUP = "thirty_min_group"
    DAILY_GROUP = "daily_group"
    DAILY_SINGLE = "daily_single"


#: daily groups below this sample count are dropped (daylight days are larger)
DAILY_GROUP_MIN_SAMPLES = 26


@dataclass(frozen=True)
class DeviationPoint:
    timestamp: pd.Timestamp
    value: float
    kind: DeviationKind


@dataclass
class DeviationSeries:
    """Deviation values over time; filtered rows are kept but excluded from use."""

    kind: DeviationKind
    data: pd.DataFrame  # index: timestamp; columns: value (float), filtered (bool)

    def __post_init__(self):
        if len(self.data) > 1 and not self.data.index.is_monotonic_increasing:
            raise ValueError("deviation points must be sorted by time")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def usable(self) -> pd.DataFrame:
        d = self.data
        mask = ~d["filtered"].to_numpy() & np.isfinite(d["value"].to_numpy())
        return d[mask]

    def points(self) -> list[DeviationPoint]:
        usable = self.usable
        return [
            DeviationPoint(ts, float(v), self.kind)
            for ts, v in zip(usable.index, usable["value"].to_numpy())
        ]

    @classmethod
    def from_values(cls, kind, timestamps, values, filtered=None) -> "DeviationSeries":
        idx = pd.DatetimeIndex(timestamps, name="timestamp")
        values = np.asarray(values, dtype=np.float64)
        if filtered is None:
            filtered = np.zeros(len(values), dtype=bool)
        frame = pd.DataFrame(
            {"value": values, "filtered": np.asarray(filtered, dtype=bool)}, index=idx
        )
        return cls(kind, frame)

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("timestamp,kind,value,filtered\n")
            for ts, v, flt in zip(
                self.data.index, self.data["value"].to_numpy(), self.data["filtered"].to_numpy()
            ):
                value_text = "" if not np.isfinite(v) else repr(float(v))
                fh.write(f"{ts.isoformat()},{self.kind.value},{value_text},{int(flt)}\n")


def absolute_deviation(e_meas: float, e_exp: float, p_nom: float) -> float:
    """(measured - expected) energy over an interval, normalized by nominal power."""
    if p_nom <= 0:
        raise ValueError("p_nom must be positive")
    return (e_meas - e_exp) / p_nom


def relative_deviation(e_meas: float, e_exp: float, floor: float) -> float | None:
    """measured/expected - 1, or None (filtered) when expected is below the floor."""
    if e_exp < floor or e_exp <= 0.0:
        return None
    return e_meas / e_exp - 1.0


def performance_ratio(e: float, p_nom: float, h_poa: float) -> float | None:
    """IEC-style performance ratio; None when there is no in-plane irradiation."""
    if p_nom <= 0:
        raise ValueError("p_nom must be positive")
    if h_poa <= 0:
        return None
    return (e / p_nom) / h_poa


def aggregate_daily(series: MeasurementSeries) -> pd.DataFrame:
    """Per-day energy, in-plane irradiation, and valid (daylight) sample count.

    Each valid 5-minute record contributes power * 1/12 kWh and
    irradiance * 1/12 / 1000 kWh/m2. Days with no valid records are absent.
    """
    valid = series.valid
    if valid.empty:
        return pd.DataFrame(
            columns=["e_meas_kwh", "h_poa_kwhm2", "daylight_samples"],
            index=pd.Index([], name="date"),
        )
    days = valid.index.date
    grouped = valid.groupby(days)
    out = pd.DataFrame(
        {
            "e_meas_kwh": grouped["ac_power"].sum() * SLOT_HOURS,
            "h_poa_kwhm2": grouped["irradiance"].sum() * SLOT_HOURS / 1000.0,
            "daylight_samples": grouped.size(),
        }
    )
    out.index.name = "date"
    return out


@dataclass(frozen=True)
class SampleGroup:
    """A rational subgroup of deviation values monitored as one chart sample."""

    day: dt.date
    window_start: pd.Timestamp
    values: np.ndarray
    n: int
    mean: float
    range: float
    stddev: float

    @classmethod
    def from_values(cls, window_start: pd.Timestamp, values) -> "SampleGroup":
        values = np.asarray(values, dtype=np.float64)
        n = len(values)
        if n < 1:
            raise ValueError("a sample group needs at least one value")
        mean = float(values.mean())
        spread = float(values.max() - values.min()) if n > 1 else 0.0
        stddev = float(values.std(ddof=1)) if n > 1 else 0.0
        window_start = pd.Timestamp(window_start)
        return cls(window_start.date(), window_start, values, n, mean, spread, stddev)


def group_samples(points: DeviationSeries, scheme: GroupingScheme) -> list[SampleGroup]:
    """Bundle usable deviation points into chart samples for the given scheme.

    thirty_min_group windows align to :00/:30 clock boundaries and need n >= 2;
    daily_group days need n > 25; daily_single requires pre-aggregated daily
    points (at most one per calendar day).
    """
    usable = points.usable
    idx = usable.index
    values = usable["value"].to_numpy()

    if scheme is GroupingScheme.FIVE_MIN_SINGLE:
        return [SampleGroup.from_values(ts, [v]) for ts, v in zip(idx, values)]

    if scheme is GroupingScheme.DAILY_SINGLE:
        days = idx.normalize()
        if len(np.unique(days.to_numpy())) != len(days):
            raise MisuseError("daily_single needs daily-aggregated points, got sub-daily ones")
        return [SampleGroup.from_values(ts, [v]) for ts, v in zip(days, values)]

    if scheme is GroupingScheme.THIRTY_MIN_GROUP:
        keys = idx.floor("30min")
        min_n = 2
    elif scheme is GroupingScheme.DAILY_GROUP:
        keys = idx.normalize()
        min_n = DAILY_GROUP_MIN_SAMPLES
    else:
        raise MisuseError(f"unknown grouping scheme {scheme!r}")

    groups = []
    frame = pd.DataFrame({"value": values}, index=keys)
    for window_start, chunk in frame.groupby(level=0, sort=True):
        if len(chunk) < min_n:
            continue
        groups.append(SampleGroup.from_values(window_start, chunk["value"].to_numpy()))
    return groups


def singleton_groups(timestamps, values) -> list[SampleGroup]:
    """Convenience for building n=1 groups straight from arrays."""
    return [
        SampleGroup.from_values(ts, [v])
        for ts, v in zip(pd.DatetimeIndex(timestamps), np.asarray(values, dtype=np.float64))
    ]
