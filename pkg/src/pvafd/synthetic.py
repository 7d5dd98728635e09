"""Synthetic plant portfolios: seasonal weather, plant response, fault injection.

Everything is driven by numpy's seeded Generator, so a fixed seed reproduces a
portfolio byte for byte. Fault injection rewrites power on episode days only
and returns the matching ticket calendar.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import FaultPlanError
from .ingestion import (
    MEASUREMENT_COLUMNS,
    SLOTS_PER_DAY,
    IngestCounters,
    MeasurementSeries,
    PlantConfig,
    Quality,
    TicketCalendar,
)

MAX_IRRADIANCE = 1400.0


@dataclass(frozen=True)
class WeatherModel:
    """Seasonal clear-sky envelope plus an AR(1) cloud process."""

    seed: int = 0
    day_length_mean_h: float = 12.0
    day_length_amp_h: float = 4.0
    peak_irradiance_mean: float = 800.0
    peak_irradiance_amp: float = 350.0
    clear_day_fraction: float = 0.45
    cloud_noise_sigma: float = 0.5
    cloud_noise_phi: float = 0.95


@dataclass(frozen=True)
class PlantResponse:
    """Plant-side power response: efficiency roll-off, seasonal thermal derate, noise."""

    eta_max: float = 0.93
    eta_rolloff: float = 0.06
    temp_amp: float = 0.03
    noise_sigma: float = 0.02
    noise_phi: float = 0.85
    day_noise_sigma: float = 0.012


class FaultType(str, enum.Enum):
    OUTAGE = "outage"
    PARTIAL_DERATE = "partial_derate"
    DRIFT = "drift"


@dataclass(frozen=True)
class FaultEpisode:
    start: dt.date
    duration_days: int
    type: FaultType
    magnitude: float

    def __post_init__(self):
        if self.duration_days < 1:
            raise FaultPlanError(f"episode at {self.start}: duration must be >= 1 day")
        if not 0.0 < self.magnitude <= 1.0:
            raise FaultPlanError(
                f"episode at {self.start}: magnitude must lie in (0, 1], got {self.magnitude}"
            )

    def days(self) -> list[dt.date]:
        return [self.start + dt.timedelta(days=i) for i in range(self.duration_days)]


@dataclass(frozen=True)
class FaultPlan:
    episodes: tuple[FaultEpisode, ...]

    def __post_init__(self):
        seen: set[dt.date] = set()
        for ep in self.episodes:
            days = set(ep.days())
            if days & seen:
                raise FaultPlanError("episodes overlap")
            seen |= days

    def all_days(self) -> frozenset[dt.date]:
        return frozenset(day for ep in self.episodes for day in ep.days())


def _season(doy: np.ndarray) -> np.ndarray:
    """0 around the winter solstice, 1 around midsummer (northern hemisphere)."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * (doy - 10.0) / 365.0))


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    """Stationary AR(1) noise with marginal standard deviation sigma."""
    if sigma == 0.0 or n == 0:
        return np.zeros(n)
    innovations = rng.normal(0.0, sigma * np.sqrt(1.0 - phi * phi), size=n)
    out = np.empty(n)
    state = rng.normal(0.0, sigma)
    for i in range(n):
        state = phi * state + innovations[i]
        out[i] = state
    return out


def generate_plant(
    config: PlantConfig,
    weather: WeatherModel,
    days: int,
    start: dt.date = dt.date(2021, 1, 1),
    response: PlantResponse = PlantResponse(),
) -> MeasurementSeries:
    """Generate a raw 5-minute measurement series (all records marked valid).

    Power follows p_nom * G/1000 * (eta_max - eta_rolloff * G/1000), modulated
    by a seasonal temperature proxy and multiplicative AR(1) plus day-level
    noise, so none of the fitted model families matches it exactly.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = np.random.default_rng(weather.seed)
    n = days * SLOTS_PER_DAY
    index = pd.date_range(pd.Timestamp(start), periods=n, freq="5min")

    doy = index.dayofyear.to_numpy(dtype=np.float64)
    hour = (
        index.hour.to_numpy(dtype=np.float64)
        + index.minute.to_numpy(dtype=np.float64) / 60.0
    )
    season = _season(doy)

    day_length = weather.day_length_mean_h + weather.day_length_amp_h * (2.0 * season - 1.0)
    sunrise = 12.0 - day_length / 2.0
    phase = (hour - sunrise) / day_length
    elevation = np.where((phase > 0.0) & (phase < 1.0), np.sin(np.pi * np.clip(phase, 0.0, 1.0)), 0.0)
    g_peak = weather.peak_irradiance_mean + weather.peak_irradiance_amp * (2.0 * season - 1.0)

    # day-level clearness: clear days sit near 1, the rest spread over overcast levels
    clear = rng.random(days) < weather.clear_day_fraction
    kappa_day = np.where(clear, 0.78 + 0.22 * rng.random(days), 0.12 + 0.60 * rng.random(days))
    kappa = np.repeat(kappa_day, SLOTS_PER_DAY)
    cloud = _ar1(rng, n, weather.cloud_noise_phi, weather.cloud_noise_sigma)
    cloud_factor = np.clip(kappa * (1.0 + (1.0 - kappa) * cloud), 0.02, 1.1)

    irradiance = np.clip(g_peak * elevation * cloud_factor, 0.0, MAX_IRRADIANCE)

    g_rel = irradiance / 1000.0
    efficiency = response.eta_max - response.eta_rolloff * g_rel
    temp_factor = 1.0 - response.temp_amp * season
    noise = _ar1(rng, n, response.noise_phi, response.noise_sigma)
    day_noise = np.repeat(rng.normal(0.0, response.day_noise_sigma, size=days), SLOTS_PER_DAY)
    power = config.p_nom * g_rel * efficiency * temp_factor * (1.0 + noise) * (1.0 + day_noise)
    power = np.maximum(power, 0.0)

    quality = np.full(n, int(Quality.VALID), dtype=np.int8)
    return MeasurementSeries.from_arrays(config.plant_id, index, irradiance, power, quality)


def inject_faults(
    series: MeasurementSeries,
    plan: FaultPlan,
    ticket_dropout: float = 0.0,
    seed: int = 0,
) -> tuple[MeasurementSeries, TicketCalendar]:
    """Apply fault episodes to the power signal and emit the ticket calendar.

    outage zeroes power, partial_derate scales it by (1 - magnitude), drift
    ramps the derate linearly to the magnitude by the episode's last day.
    ``ticket_dropout`` omits a seeded random fraction of ticket days to mimic
    imperfect maintenance records; the injected power is unaffected.
    """
    frame = series.data.copy()
    power = frame["ac_power"].to_numpy().copy()
    slot_days = frame.index.date

    for ep in plan.episodes:
        for k, day in enumerate(ep.days(), start=1):
            mask = slot_days == day
            if not mask.any():
                continue
            if ep.type is FaultType.OUTAGE:
                power[mask] = 0.0
            elif ep.type is FaultType.PARTIAL_DERATE:
                power[mask] *= 1.0 - ep.magnitude
            else:
                power[mask] *= 1.0 - ep.magnitude * k / ep.duration_days

    frame["ac_power"] = power
    ticket_days = plan.all_days()
    if ticket_dropout > 0.0:
        rng = np.random.default_rng(seed)
        kept = [d for d in sorted(ticket_days) if rng.random() >= ticket_dropout]
        ticket_days = frozenset(kept)
    faulted = MeasurementSeries(series.plant_id, frame, IngestCounters())
    return faulted, TicketCalendar(series.plant_id, ticket_days)


def write_measurements_csv(series: MeasurementSeries, path) -> None:
    """Write the measurement CSV format that parse_measurements reads back exactly."""
    path = Path(path)
    stamps = np.datetime_as_string(series.data.index.values.astype("datetime64[s]"), unit="s")
    frame = pd.DataFrame(
        {
            "timestamp": stamps,
            "irradiance_wm2": series.data["irradiance"].to_numpy(),
            "ac_power_kw": series.data["ac_power"].to_numpy(),
        }
    )
    frame.to_csv(path, index=False, float_format="%.17g", columns=list(MEASUREMENT_COLUMNS))
