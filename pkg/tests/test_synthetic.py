import datetime as dt

import numpy as np
import pytest

from pvafd import (
    FaultEpisode,
    FaultPlan,
    FaultPlanError,
    FaultType,
    PlantConfig,
    Quality,
    TicketCalendar,
    WeatherModel,
    aggregate_daily,
    apply_quality_filter,
    generate_plant,
    inject_faults,
    parse_measurements,
)
from pvafd.synthetic import PlantResponse, write_measurements_csv


@pytest.fixture
def config():
    return PlantConfig(plant_id="gen01", p_nom=200.0)


class TestGeneratePlant:
    def test_deterministic_given_seed(self, config):
        one = generate_plant(config, WeatherModel(seed=5), days=10)
        two = generate_plant(config, WeatherModel(seed=5), days=10)
        assert one.data.equals(two.data)
        other = generate_plant(config, WeatherModel(seed=6), days=10)
        assert not one.data.equals(other.data)

    def test_grid_shape_and_flags(self, config):
        series = generate_plant(config, WeatherModel(seed=1), days=7)
        assert len(series) == 7 * 288
        assert (series.data["quality"] == int(Quality.VALID)).all()
        step = np.diff(series.data.index.values).astype("timedelta64[s]")
        assert (step == np.timedelta64(300, "s")).all()

    def test_irradiance_within_bounds(self, config):
        series = generate_plant(config, WeatherModel(seed=2), days=120)
        g = series.data["irradiance"].to_numpy()
        assert g.min() >= 0.0
        assert g.max() <= 1400.0

    def test_zero_noise_flat_efficiency_is_proportional(self, config):
        response = PlantResponse(
            eta_max=0.9, eta_rolloff=0.0, temp_amp=0.0, noise_sigma=0.0, day_noise_sigma=0.0
        )
        series = generate_plant(config, WeatherModel(seed=3), days=5, response=response)
        g = series.data["irradiance"].to_numpy()
        p = series.data["ac_power"].to_numpy()
        assert p == pytest.approx(config.p_nom * g / 1000.0 * 0.9, rel=1e-12)

    def test_daily_pr_between_06_and_10(self, config):
        series = generate_plant(config, WeatherModel(seed=4), days=365)
        daily = aggregate_daily(apply_quality_filter(series, config))
        pr = (daily["e_meas_kwh"] / config.p_nom) / daily["h_poa_kwhm2"]
        assert pr.min() > 0.6
        assert pr.max() < 1.0


class TestInjectFaults:
    @staticmethod
    def plant(config, days=40):
        return generate_plant(config, WeatherModel(seed=9), days=days)

    def test_outage_zeroes_power_on_episode_days(self, config):
        series = self.plant(config)
        plan = FaultPlan((FaultEpisode(dt.date(2021, 1, 10), 3, FaultType.OUTAGE, 1.0),))
        faulted, tickets = inject_faults(series, plan)
        assert sorted(tickets) == [dt.date(2021, 1, 10) + dt.timedelta(days=i) for i in range(3)]
        on_days = faulted.data.index.normalize().isin(
            [np.datetime64(d) for d in tickets]
        )
        assert (faulted.data["ac_power"].to_numpy()[on_days] == 0.0).all()

    def test_derate_halves_power(self, config):
        series = self.plant(config)
        plan = FaultPlan((FaultEpisode(dt.date(2021, 1, 5), 2, FaultType.PARTIAL_DERATE, 0.5),))
        faulted, _ = inject_faults(series, plan)
        mask = series.data.index.date == dt.date(2021, 1, 5)
        assert faulted.data["ac_power"].to_numpy()[mask] == pytest.approx(
            0.5 * series.data["ac_power"].to_numpy()[mask]
        )

    def test_drift_interpolates_linearly(self, config):
        series = self.plant(config)
        plan = FaultPlan((FaultEpisode(dt.date(2021, 1, 2), 30, FaultType.DRIFT, 0.2),))
        faulted, _ = inject_faults(series, plan)

        def derate_on(day):
            mask = (series.data.index.date == day) & (series.data["ac_power"].to_numpy() > 0)
            return (
                faulted.data["ac_power"].to_numpy()[mask]
                / series.data["ac_power"].to_numpy()[mask]
            )

        day15 = dt.date(2021, 1, 2) + dt.timedelta(days=14)  # 15th episode day
        assert derate_on(day15) == pytest.approx(1.0 - 0.2 * 15 / 30)
        last = dt.date(2021, 1, 2) + dt.timedelta(days=29)
        assert derate_on(last) == pytest.approx(0.8)

    def test_records_outside_episodes_untouched(self, config):
        series = self.plant(config)
        plan = FaultPlan((FaultEpisode(dt.date(2021, 1, 10), 3, FaultType.OUTAGE, 1.0),))
        faulted, tickets = inject_faults(series, plan)
        outside = ~np.isin(series.data.index.date, sorted(tickets))
        assert np.array_equal(
            faulted.data["ac_power"].to_numpy()[outside],
            series.data["ac_power"].to_numpy()[outside],
        )
        assert np.array_equal(
            faulted.data["irradiance"].to_numpy(), series.data["irradiance"].to_numpy()
        )

    def test_tickets_equal_episode_days(self, config):
        series = self.plant(config)
        plan = FaultPlan(
            (
                FaultEpisode(dt.date(2021, 1, 5), 2, FaultType.PARTIAL_DERATE, 0.5),
                FaultEpisode(dt.date(2021, 1, 20), 4, FaultType.DRIFT, 0.3),
            )
        )
        _, tickets = inject_faults(series, plan)
        assert tickets.ticketed_days == plan.all_days()

    def test_ticket_dropout_is_seeded_and_partial(self, config):
        series = self.plant(config)
        plan = FaultPlan((FaultEpisode(dt.date(2021, 1, 5), 20, FaultType.PARTIAL_DERATE, 0.5),))
        _, full = inject_faults(series, plan)
        _, dropped1 = inject_faults(series, plan, ticket_dropout=0.4, seed=3)
        _, dropped2 = inject_faults(series, plan, ticket_dropout=0.4, seed=3)
        assert dropped1.ticketed_days == dropped2.ticketed_days
        assert dropped1.ticketed_days < full.ticketed_days

    def test_overlapping_episodes_rejected(self):
        with pytest.raises(FaultPlanError):
            FaultPlan(
                (
                    FaultEpisode(dt.date(2021, 1, 5), 5, FaultType.OUTAGE, 1.0),
                    FaultEpisode(dt.date(2021, 1, 8), 2, FaultType.DRIFT, 0.5),
                )
            )

    def test_magnitude_validation(self):
        with pytest.raises(FaultPlanError):
            FaultEpisode(dt.date(2021, 1, 5), 5, FaultType.PARTIAL_DERATE, 0.0)
        with pytest.raises(FaultPlanError):
            FaultEpisode(dt.date(2021, 1, 5), 5, FaultType.PARTIAL_DERATE, 1.5)


class TestRoundTrip:
    def test_csv_round_trip_is_field_exact(self, tmp_path, config):
        series = generate_plant(config, WeatherModel(seed=31), days=30)
        plan = FaultPlan((FaultEpisode(dt.date(2021, 1, 12), 2, FaultType.PARTIAL_DERATE, 0.4),))
        faulted, _ = inject_faults(series, plan)
        path = tmp_path / "gen01.csv"
        write_measurements_csv(faulted, path)
        back = parse_measurements(path, config)
        assert back.plant_id == faulted.plant_id
        assert (back.data.index == faulted.data.index).all()
        for column in ("irradiance", "ac_power", "quality"):
            assert np.array_equal(
                back.data[column].to_numpy(), faulted.data[column].to_numpy()
            ), column
