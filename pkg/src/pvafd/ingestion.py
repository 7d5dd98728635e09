"""Measurement and ticket ingestion: CSV parsing, quality filtering, train/eval split.

Measurement files are UTF-8 CSV with the header ``timestamp,irradiance_wm2,ac_power_kw``
and ISO-8601 timestamps on a 5-minute grid (UTC, no offset). Ticket files carry
``plant_id,date`` rows with ISO dates. Plant configuration lives in a flat
``key: value`` text document, one per plant.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from .errors import (
    EmptyInputError,
    InsufficientDataError,
    MisuseError,
    SchemaError,
    TicketParseError,
)

MEASUREMENT_COLUMNS = ("timestamp", "irradiance_wm2", "ac_power_kw")
TICKET_COLUMNS = ("plant_id", "date")

SLOT_MINUTES = 5
SLOT_HOURS = SLOT_MINUTES / 60.0
SLOTS_PER_DAY = 24 * 60 // SLOT_MINUTES


class Quality(enum.IntEnum):
    """Per-record quality flag; only VALID records feed the analysis."""

    VALID = 0
    OUT_OF_PHYSICAL_RANGE = 1
    NIGHT = 2
    LOW_IRRADIANCE = 3
    MISSING = 4


@dataclass(frozen=True)
class PhysicalLimits:
    """Feasible measurement bounds; values outside are flagged, not clipped."""

    irradiance_min: float = 0.0
    irradiance_max: float = 1600.0
    power_min: float = 0.0
    power_max: float | None = None  # None means 1.2 x nominal power

    def power_ceiling(self, p_nom: float) -> float:
        return 1.2 * p_nom if self.power_max is None else self.power_max


@dataclass(frozen=True)
class PlantConfig:
    plant_id: str
    p_nom: float
    g_stc: float = 1000.0
    low_irradiance_cutoff: float = 50.0
    relative_denominator_floor: float = 0.05
    training_days: int = 365
    limits: PhysicalLimits = field(default_factory=PhysicalLimits)

    def __post_init__(self):
        if self.p_nom <= 0:
            raise ValueError(f"p_nom must be positive, got {self.p_nom}")
        if self.g_stc != 1000.0:
            raise ValueError("g_stc is fixed at 1000 W/m2")
        if not 0.0 < self.relative_denominator_floor < 1.0:
            raise ValueError("relative_denominator_floor must lie in (0, 1)")
        if self.training_days < 1:
            raise ValueError("training_days must be at least 1")


@dataclass(frozen=True)
class MeasurementRecord:
    timestamp: pd.Timestamp
    irradiance: float
    ac_power: float
    quality: Quality


@dataclass
class IngestCounters:
    """Row-level anomalies observed while parsing; informational only."""

    bad_rows: int = 0
    duplicates_dropped: int = 0


@dataclass
class MeasurementSeries:
    """Timestamped 5-minute records for one plant.

    ``data`` is indexed by a strictly increasing naive-UTC DatetimeIndex and
    holds ``irradiance`` (W/m2), ``ac_power`` (kW) and ``quality`` (int8
    Quality codes).
    """

    plant_id: str
    data: pd.DataFrame
    ingest: IngestCounters = field(default_factory=IngestCounters)

    def __post_init__(self):
        idx = self.data.index
        if len(idx) > 1 and not idx.is_monotonic_increasing:
            raise ValueError("timestamps must be increasing")
        if len(idx) > 1 and idx.has_duplicates:
            raise ValueError("timestamps must be strictly increasing (duplicates found)")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def valid(self) -> pd.DataFrame:
        """Rows with quality == VALID; the only rows analysis may use."""
        return self.data[self.data["quality"].to_numpy() == int(Quality.VALID)]

    def records(self) -> Iterator[MeasurementRecord]:
        for ts, g, p, q in zip(
            self.data.index,
            self.data["irradiance"].to_numpy(),
            self.data["ac_power"].to_numpy(),
            self.data["quality"].to_numpy(),
        ):
            yield MeasurementRecord(ts, float(g), float(p), Quality(int(q)))

    @classmethod
    def from_arrays(
        cls,
        plant_id: str,
        timestamps,
        irradiance,
        ac_power,
        quality=None,
        ingest: IngestCounters | None = None,
    ) -> "MeasurementSeries":
        idx = pd.DatetimeIndex(timestamps, name="timestamp")
        n = len(idx)
        if quality is None:
            quality = np.full(n, int(Quality.VALID), dtype=np.int8)
        frame = pd.DataFrame(
            {
                "irradiance": np.asarray(irradiance, dtype=np.float64),
                "ac_power": np.asarray(ac_power, dtype=np.float64),
                "quality": np.asarray(quality, dtype=np.int8),
            },
            index=idx,
        )
        return cls(plant_id, frame, ingest or IngestCounters())

    @classmethod
    def from_records(cls, plant_id: str, records) -> "MeasurementSeries":
        records = list(records)
        return cls.from_arrays(
            plant_id,
            [r.timestamp for r in records],
            [r.irradiance for r in records],
            [r.ac_power for r in records],
            [int(r.quality) for r in records],
        )


@dataclass(frozen=True)
class TicketCalendar:
    """Set of calendar days with an open maintenance ticket for one plant."""

    plant_id: str
    ticketed_days: frozenset[dt.date]

    def __contains__(self, day: dt.date) -> bool:
        return day in self.ticketed_days

    def __iter__(self) -> Iterator[dt.date]:
        return iter(sorted(self.ticketed_days))

    def __len__(self) -> int:
        return len(self.ticketed_days)


def _exact_numeric(text: pd.Series) -> np.ndarray:
    """Parse decimal strings to float64 with correct rounding.

    pd.to_numeric's fast path is off by one ulp on some 17-digit inputs, which
    would break the generator/parser round trip; it is used here only to find
    unparseable entries, the clean ones go through the libc converter.
    """
    approx = pd.to_numeric(text, errors="coerce").to_numpy(dtype=np.float64)
    ok = np.isfinite(approx)
    if ok.any():
        approx[ok] = text.to_numpy(dtype=object)[ok].astype(np.float64)
    return approx


def parse_measurements(path, config: PlantConfig) -> MeasurementSeries:
    """Read a measurement CSV into a MeasurementSeries.

    Rows whose timestamp cannot be parsed are dropped and counted; rows with
    non-numeric or non-finite values keep their timestamp with quality MISSING.
    Duplicate timestamps keep the first occurrence (counted). The result is
    sorted by timestamp.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header_line = fh.readline()
    if not header_line.strip():
        raise EmptyInputError(f"{path}: file is empty")
    header = tuple(h.strip() for h in header_line.strip().split(","))
    if header != MEASUREMENT_COLUMNS:
        raise SchemaError(
            f"{path}: expected header {','.join(MEASUREMENT_COLUMNS)}, found {','.join(header)}"
        )

    raw = pd.read_csv(
        path,
        skiprows=1,
        names=list(MEASUREMENT_COLUMNS),
        dtype=str,
        keep_default_na=False,
        skip_blank_lines=True,
    )
    if raw.empty:
        raise EmptyInputError(f"{path}: no data rows")

    ts = pd.to_datetime(raw["timestamp"], errors="coerce", format="ISO8601")
    g = _exact_numeric(raw["irradiance_wm2"])
    p = _exact_numeric(raw["ac_power_kw"])

    bad = ts.isna().to_numpy()
    counters = IngestCounters(bad_rows=int(bad.sum()))
    ts = ts[~bad]
    g = g[~bad]
    p = p[~bad]
    if len(ts) == 0:
        raise EmptyInputError(f"{path}: no parseable data rows")

    quality = np.where(
        np.isfinite(g) & np.isfinite(p), int(Quality.VALID), int(Quality.MISSING)
    ).astype(np.int8)

    # Stable sort keeps file order within equal timestamps, so "first wins".
    order = np.argsort(ts.to_numpy(), kind="stable")
    idx = pd.DatetimeIndex(ts.to_numpy()[order], name="timestamp")
    g, p, quality = g[order], p[order], quality[order]
    dup = idx.duplicated(keep="first")
    if dup.any():
        counters.duplicates_dropped = int(dup.sum())
        keep = ~dup
        idx, g, p, quality = idx[keep], g[keep], p[keep], quality[keep]

    frame = pd.DataFrame(
        {"irradiance": g, "ac_power": p, "quality": quality}, index=idx
    )
    return MeasurementSeries(config.plant_id, frame, counters)


def apply_quality_filter(series: MeasurementSeries, config: PlantConfig) -> MeasurementSeries:
    """Recompute quality flags from raw values; idempotent by construction.

    Precedence: missing > out_of_physical_range > night > low_irradiance.
    """
    d = series.data
    g = d["irradiance"].to_numpy()
    p = d["ac_power"].to_numpy()
    lim = config.limits

    quality = np.full(len(d), int(Quality.VALID), dtype=np.int8)
    quality[g < config.low_irradiance_cutoff] = int(Quality.LOW_IRRADIANCE)
    quality[g <= 0.0] = int(Quality.NIGHT)
    out_of_range = (
        (g < lim.irradiance_min)
        | (g > lim.irradiance_max)
        | (p < lim.power_min)
        | (p > lim.power_ceiling(config.p_nom))
    )
    quality[out_of_range] = int(Quality.OUT_OF_PHYSICAL_RANGE)
    quality[~(np.isfinite(g) & np.isfinite(p))] = int(Quality.MISSING)

    frame = d.copy()
    frame["quality"] = quality
    return MeasurementSeries(series.plant_id, frame, series.ingest)


def split_train_eval(
    series: MeasurementSeries, config: PlantConfig
) -> tuple[MeasurementSeries, MeasurementSeries]:
    """Split into the first ``training_days`` calendar days and the remainder."""
    if len(series) == 0:
        raise InsufficientDataError(f"{series.plant_id}: series is empty")
    first_day = series.data.index[0].normalize()
    cutoff = first_day + pd.Timedelta(days=config.training_days)
    train = series.data[series.data.index < cutoff]
    evaldata = series.data[series.data.index >= cutoff]
    if evaldata.empty:
        raise InsufficientDataError(
            f"{series.plant_id}: series must span more than {config.training_days} "
            f"calendar days to leave evaluation data"
        )
    return (
        MeasurementSeries(series.plant_id, train, series.ingest),
        MeasurementSeries(series.plant_id, evaldata, series.ingest),
    )


def _read_ticket_rows(path: Path):
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [part.strip() for part in line.split(",")]
            if line_no == 1 and tuple(parts) == TICKET_COLUMNS:
                continue
            if len(parts) != 2:
                raise TicketParseError(f"expected 'plant_id,date', got {line!r}", line_no)
            plant_id, date_text = parts
            try:
                day = dt.date.fromisoformat(date_text)
            except ValueError:
                raise TicketParseError(f"unparseable date {date_text!r}", line_no) from None
            yield plant_id, day


def parse_ticket_book(path) -> dict[str, TicketCalendar]:
    """Parse a ticket CSV covering any number of plants."""
    path = Path(path)
    days: dict[str, set[dt.date]] = {}
    if path.exists() and path.stat().st_size > 0:
        for plant_id, day in _read_ticket_rows(path):
            days.setdefault(plant_id, set()).add(day)
    return {
        plant_id: TicketCalendar(plant_id, frozenset(dates))
        for plant_id, dates in sorted(days.items())
    }


def parse_tickets(path, plant_id: str | None = None) -> TicketCalendar:
    """Parse a ticket CSV into one plant's calendar.

    With ``plant_id=None`` the file must reference at most one plant; pass it
    explicitly to select from a multi-plant file (missing plant yields an
    empty calendar).
    """
    book = parse_ticket_book(path)
    if plant_id is not None:
        return book.get(plant_id, TicketCalendar(plant_id, frozenset()))
    if not book:
        return TicketCalendar("", frozenset())
    if len(book) > 1:
        raise MisuseError(
            f"ticket file references multiple plants ({', '.join(book)}); pass plant_id"
        )
    return next(iter(book.values()))


def write_tickets(calendars, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TICKET_COLUMNS) + "\n")
        for calendar in calendars:
            for day in calendar:
                fh.write(f"{calendar.plant_id},{day.isoformat()}\n")


_CONFIG_FLOAT_KEYS = {
    "p_nom",
    "g_stc",
    "low_irradiance_cutoff",
    "relative_denominator_floor",
    "irradiance_min",
    "irradiance_max",
    "power_min",
    "power_max",
}


def write_plant_config(config: PlantConfig, path) -> None:
    lim = config.limits
    lines = [
        f"plant_id: {config.plant_id}",
        f"p_nom: {config.p_nom!r}",
        f"g_stc: {config.g_stc!r}",
        f"low_irradiance_cutoff: {config.low_irradiance_cutoff!r}",
        f"relative_denominator_floor: {config.relative_denominator_floor!r}",
        f"training_days: {config.training_days}",
        f"irradiance_min: {lim.irradiance_min!r}",
        f"irradiance_max: {lim.irradiance_max!r}",
        f"power_min: {lim.power_min!r}",
        f"power_max: {'' if lim.power_max is None else repr(lim.power_max)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_plant_config(path) -> PlantConfig:
    path = Path(path)
    values: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise SchemaError(f"{path}: line {line_no}: expected 'key: value'")
        key, _, value = line.partition(":")
        values[key.strip()] = value.strip()
    try:
        kwargs = {
            "plant_id": values["plant_id"],
            "p_nom": float(values["p_nom"]),
        }
    except KeyError as exc:
        raise SchemaError(f"{path}: missing required key {exc}") from None
    for key in ("g_stc", "low_irradiance_cutoff", "relative_denominator_floor"):
        if values.get(key):
            kwargs[key] = float(values[key])
    if values.get("training_days"):
        kwargs["training_days"] = int(values["training_days"])
    limit_kwargs = {}
    for key in ("irradiance_min", "irradiance_max", "power_min", "power_max"):
        if values.get(key):
            limit_kwargs[key] = float(values[key])
    kwargs["limits"] = PhysicalLimits(**limit_kwargs)
    return PlantConfig(**kwargs)
