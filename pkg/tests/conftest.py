"""Shared fixtures: small measurement series and a reusable faulted portfolio."""

from __future__ import annotations

import datetime as dt

import numpy as np
import pandas as pd
import pytest

from pvafd import (
    FaultEpisode,
    FaultPlan,
    FaultType,
    MeasurementSeries,
    PlantConfig,
    TicketCalendar,
    WeatherModel,
    generate_plant,
    inject_faults,
)
from pvafd.pipeline import PlantInputs


def make_series(plant_id="p01", start="2021-01-01", hours=6.0, power=50.0, irradiance=500.0):
    """A flat daytime series on the 5-minute grid, all records valid."""
    n = int(hours * 12)
    ts = pd.date_range(start, periods=n, freq="5min")
    return MeasurementSeries.from_arrays(
        plant_id, ts, np.full(n, float(irradiance)), np.full(n, float(power))
    )


@pytest.fixture
def config():
    return PlantConfig(plant_id="p01", p_nom=100.0)


def standard_episodes(eval_start: dt.date):
    """Two outages and three strong derates, spaced inside the evaluation year."""
    offsets = (20, 80, 150, 220, 290)
    episodes = []
    for i, off in enumerate(offsets):
        day = eval_start + dt.timedelta(days=off)
        if i % 2 == 0:
            episodes.append(FaultEpisode(day, 3 + i % 3, FaultType.OUTAGE, 1.0))
        else:
            episodes.append(
                FaultEpisode(day, 4 + i % 4, FaultType.PARTIAL_DERATE, 0.3 + 0.05 * i)
            )
    return tuple(episodes)


def build_portfolio(n_plants=10, days=730, seed_base=1000):
    """Faulted two-year portfolio; every plant carries five eval-window episodes."""
    eval_start = dt.date(2022, 1, 1)
    plants = []
    rng = np.random.default_rng(seed_base)
    for i in range(n_plants):
        plant_id = f"plant{i:02d}"
        cfg = PlantConfig(plant_id=plant_id, p_nom=float(rng.uniform(80.0, 400.0)))
        series = generate_plant(cfg, WeatherModel(seed=seed_base + i), days=days)
        faulted, tickets = inject_faults(series, FaultPlan(standard_episodes(eval_start)))
        plants.append(PlantInputs(cfg, faulted, tickets))
    return plants


@pytest.fixture(scope="session")
def portfolio():
    return build_portfolio()


@pytest.fixture(scope="session")
def clean_plant():
    cfg = PlantConfig(plant_id="clean01", p_nom=150.0)
    series = generate_plant(cfg, WeatherModel(seed=424242), days=730)
    return PlantInputs(cfg, series, TicketCalendar("clean01", frozenset()))
