import datetime as dt

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvafd import (
    ArxModel,
    DegenerateFitError,
    EmpiricalModel,
    InsufficientDataError,
    MeasurementSeries,
    PlantConfig,
    PolyRegModel,
    TicketCalendar,
    aggregate_daily,
    fit_arx,
    fit_empirical,
    fit_polyreg,
    load_model,
    mapd,
    predict_arx,
    predict_empirical,
    predict_polyreg,
    save_model,
)
from pvafd.models import deserialize_model, serialize_model, predict_arx_series


def series_from(g, p, start="2021-06-01 08:00", plant_id="p01"):
    ts = pd.date_range(start, periods=len(g), freq="5min")
    return MeasurementSeries.from_arrays(plant_id, ts, g, p)


def normal_equations(design, target):
    """Independent least-squares oracle: solve X'X beta = X'y directly."""
    return np.linalg.solve(design.T @ design, design.T @ target)


class TestPolyReg:
    def test_exact_recovery_noiseless(self):
        g = np.linspace(50, 1000, 200)
        p = 0.0 + 0.1 * g + 0.0 * g * g
        model = fit_polyreg(series_from(g, p))
        assert model.a0 == pytest.approx(0.0, abs=1e-9)
        assert model.a1 == pytest.approx(0.1, abs=1e-9)
        assert model.a2 == pytest.approx(0.0, abs=1e-9)

    def test_constant_irradiance_degenerate(self):
        g = np.full(50, 500.0)
        with pytest.raises(DegenerateFitError):
            fit_polyreg(series_from(g, 0.1 * g))

    def test_too_few_points(self):
        g = np.array([100.0, 200.0])
        with pytest.raises(InsufficientDataError):
            fit_polyreg(series_from(g, 0.1 * g))

    def test_noisy_recovery_matches_oracle(self):
        rng = np.random.default_rng(7)
        g = rng.uniform(50, 1200, 10_000)
        truth = (2.0, 0.09, -2.0e-5)
        p = truth[0] + truth[1] * g + truth[2] * g * g + rng.normal(0, 0.8, g.size)
        model = fit_polyreg(series_from(g, p))
        assert model.a1 == pytest.approx(truth[1], rel=0.01)
        assert model.a2 == pytest.approx(truth[2], rel=0.01)
        oracle = normal_equations(np.column_stack([np.ones_like(g), g, g * g]), p)
        assert model.a0 == pytest.approx(oracle[0], rel=1e-6)
        assert model.a1 == pytest.approx(oracle[1], rel=1e-6)
        assert model.a2 == pytest.approx(oracle[2], rel=1e-6)

    def test_fit_is_bitwise_deterministic(self):
        rng = np.random.default_rng(3)
        g = rng.uniform(50, 1200, 500)
        p = 0.1 * g + rng.normal(0, 1, 500)
        one = fit_polyreg(series_from(g, p))
        two = fit_polyreg(series_from(g, p))
        assert (one.a0, one.a1, one.a2) == (two.a0, two.a1, two.a2)

    def test_least_squares_optimality_under_perturbation(self):
        rng = np.random.default_rng(5)
        g = rng.uniform(50, 1200, 2000)
        p = 1.0 + 0.08 * g - 1e-5 * g * g + rng.normal(0, 0.5, 2000)
        model = fit_polyreg(series_from(g, p))

        def ssr(a0, a1, a2):
            return np.sum((p - (a0 + a1 * g + a2 * g * g)) ** 2)

        best = ssr(model.a0, model.a1, model.a2)
        for i in range(3):
            for delta in (-1e-3, 1e-3):
                coeffs = [model.a0, model.a1, model.a2]
                coeffs[i] += delta
                assert ssr(*coeffs) >= best

    def test_ticketed_days_excluded(self):
        g = np.tile(np.linspace(100, 900, 288), 2)
        p = 0.1 * g
        ts = pd.date_range("2021-06-01 00:00", periods=g.size, freq="5min")
        p = p.copy()
        p[ts.date == dt.date(2021, 6, 2)] = 0.0  # faulty second day
        series = MeasurementSeries.from_arrays("p01", ts, g, p)
        tickets = TicketCalendar("p01", frozenset({dt.date(2021, 6, 2)}))
        model = fit_polyreg(series, tickets)
        assert model.a1 == pytest.approx(0.1, abs=1e-9)

    def test_predict(self):
        model = PolyRegModel(0.0, 0.1, 0.0)
        assert predict_polyreg(model, 500.0) == pytest.approx(50.0)
        assert predict_polyreg(PolyRegModel(-5.0, 0.1, 0.0), 0.0) == 0.0  # clamped a0
        noiseless = fit_polyreg(series_from(np.linspace(50, 1000, 200), 0.1 * np.linspace(50, 1000, 200)))
        assert predict_polyreg(noiseless, 1000.0) == pytest.approx(100.0, rel=1e-9)


class TestArx:
    @staticmethod
    def simulate(n, a1, a2, b0, b1, seed=0, noise=0.0):
        rng = np.random.default_rng(seed)
        g = rng.uniform(100, 1000, n)
        p = np.zeros(n)
        for t in range(2, n):
            p[t] = a1 * p[t - 1] + a2 * p[t - 2] + b0 * g[t] + b1 * g[t - 1]
            if noise:
                p[t] += rng.normal(0, noise)
        return g, p

    def test_exact_recovery(self):
        g, p = self.simulate(500, 0.5, 0.0, 0.001, 0.0)
        model = fit_arx(series_from(g, p))
        assert model.a1 == pytest.approx(0.5, abs=1e-6)
        assert model.a2 == pytest.approx(0.0, abs=1e-6)
        assert model.b0 == pytest.approx(0.001, abs=1e-6)
        assert model.b1 == pytest.approx(0.0, abs=1e-6)

    def test_alternating_gaps_insufficient(self):
        g, p = self.simulate(100, 0.5, 0.0, 0.001, 0.0)
        ts = pd.date_range("2021-06-01 08:00", periods=100, freq="5min")
        series = MeasurementSeries.from_arrays("p01", ts[::2], g[::2], p[::2])
        with pytest.raises(InsufficientDataError):
            fit_arx(series)

    def test_noisy_recovery_matches_oracle(self):
        truth = (0.4, 0.2, 0.0009, 0.0004)
        g, p = self.simulate(10_000, *truth, seed=1, noise=0.05)
        model = fit_arx(series_from(g, p))
        assert model.a1 == pytest.approx(truth[0], rel=0.02)
        assert model.a2 == pytest.approx(truth[1], rel=0.02)
        assert model.b0 == pytest.approx(truth[2], rel=0.02)
        assert model.b1 == pytest.approx(truth[3], rel=0.02)
        design = np.column_stack([p[1:-1], p[:-2], g[2:], g[1:-1]])
        oracle = normal_equations(design, p[2:])
        assert np.allclose([model.a1, model.a2, model.b0, model.b1], oracle, rtol=1e-6)

    def test_rank_deficiency(self):
        # zero power forever with constant irradiance leaves no information
        g = np.full(50, 500.0)
        p = np.zeros(50)
        with pytest.raises(DegenerateFitError):
            fit_arx(series_from(g, p))

    def test_predict(self):
        assert predict_arx(ArxModel(0.0, 0.0, 1.0, 0.0), 5.0, 4.0, 0.2, 0.1) == pytest.approx(0.2)
        assert predict_arx(ArxModel(0.5, 0.2, 0.001, 0.0), 0.0, 0.0, 0.0, 0.0) == 0.0
        assert predict_arx(ArxModel(-1.0, 0.0, 0.0, 0.0), 5.0, 0.0, 0.0, 0.0) == 0.0  # clamp

    def test_steady_state_constant_segment(self):
        # on constant power and irradiance, the fitted recursion reproduces the constant
        g, p = self.simulate(3000, 0.3, 0.1, 0.0006, 0.0003, seed=2, noise=0.01)
        model = fit_arx(series_from(g, p))
        p_const, g_const = 50.0, 700.0
        pred = predict_arx(model, p_const, p_const, g_const, g_const)
        expected = model.a1 * p_const + model.a2 * p_const + (model.b0 + model.b1) * g_const
        assert pred == pytest.approx(expected)

    def test_predict_series_skips_gap_slots(self):
        g, p = self.simulate(20, 0.5, 0.0, 0.001, 0.0)
        ts = pd.date_range("2021-06-01 08:00", periods=20, freq="5min")
        keep = np.ones(20, dtype=bool)
        keep[10] = False  # hole in the grid
        series = MeasurementSeries.from_arrays("p01", ts[keep], g[keep], p[keep])
        model = fit_arx(series)
        pred = predict_arx_series(model, series)
        # slots 11 and 12 lack contiguous valid lags, first two slots as well
        missing = {ts[0], ts[1], ts[10], ts[11], ts[12]}
        assert missing.isdisjoint(pred.index)
        assert len(pred) == 20 - len(missing)


def daily_frame(h, ratios, p_nom=100.0, start="2021-01-01"):
    days = pd.date_range(start, periods=len(h), freq="1D").date
    h = np.asarray(h, dtype=float)
    e_meas = np.asarray(ratios) * p_nom * h
    return pd.DataFrame(
        {"e_meas_kwh": e_meas, "h_poa_kwhm2": h, "daylight_samples": 100},
        index=pd.Index(days, name="date"),
    )


class TestEmpirical:
    def test_exact_recovery(self, config):
        h = np.linspace(2.5, 7.5, 40)
        ratios = 0.95 - 0.01 * h
        model = fit_empirical(daily_frame(h, ratios), None, config)
        assert model.a == pytest.approx(-0.01, abs=1e-12)
        assert model.b == pytest.approx(0.95, abs=1e-12)
        assert model.sigma == pytest.approx(0.0, abs=1e-9)

    def test_low_irradiation_days_excluded(self, config):
        h = np.concatenate([np.linspace(2.5, 7.5, 40), [1.9]])
        ratios = np.concatenate([0.95 - 0.01 * h[:40], [0.2]])  # junk on the low-H day
        model = fit_empirical(daily_frame(h, ratios), None, config)
        assert model.a == pytest.approx(-0.01, abs=1e-12)
        assert model.b == pytest.approx(0.95, abs=1e-12)

    def test_ticketed_days_do_not_move_fit(self, config):
        rng = np.random.default_rng(9)
        h = rng.uniform(2.5, 7.5, 60)
        ratios = 0.95 - 0.01 * h + rng.normal(0, 0.004, 60)
        # paired fixtures: the clean one simply lacks the five faulty days,
        # the dirty one carries them at half power but ticketed
        clean = fit_empirical(daily_frame(h[5:], ratios[5:]), None, config)
        dirty_ratios = ratios.copy()
        dirty_ratios[:5] *= 0.5
        frame = daily_frame(h, dirty_ratios)
        tickets = TicketCalendar("p01", frozenset(frame.index[:5]))
        dirty = fit_empirical(frame, tickets, config)
        assert dirty.a == pytest.approx(clean.a, abs=1e-12)
        assert dirty.b == pytest.approx(clean.b, abs=1e-12)

    def test_outlier_pass_drops_extreme_day(self, config):
        rng = np.random.default_rng(21)
        h = rng.uniform(2.5, 7.5, 60)
        ratios = 0.95 - 0.01 * h + rng.normal(0, 0.003, 60)
        ratios[7] = 0.2  # unticketed crash day
        model = fit_empirical(daily_frame(h, ratios), None, config)
        assert model.a == pytest.approx(-0.01, abs=5e-3)
        assert model.b == pytest.approx(0.95, abs=2e-2)

    def test_insufficient_days(self, config):
        h = np.linspace(2.5, 7.5, 10)
        with pytest.raises(InsufficientDataError):
            fit_empirical(daily_frame(h, 0.95 - 0.01 * h), None, config)

    def test_sigma_matches_direct_formula(self, config):
        rng = np.random.default_rng(33)
        h = rng.uniform(2.5, 7.5, 50)
        ratios = 0.95 - 0.01 * h + rng.normal(0, 0.01, 50)
        frame = daily_frame(h, ratios)
        model = fit_empirical(frame, None, config)
        e_exp = np.maximum(config.p_nom * h * (model.a * h + model.b), 0.0)
        sigma = np.sqrt(np.mean((e_exp - frame["e_meas_kwh"].to_numpy()) ** 2))
        assert model.sigma == pytest.approx(sigma, rel=1e-9)

    def test_predict(self):
        assert predict_empirical(EmpiricalModel(0.0, 1.0, 0.0), 5.0, 100.0) == pytest.approx(500.0)
        assert predict_empirical(EmpiricalModel(-0.01, 0.95, 0.0), 0.0, 100.0) == 0.0
        assert predict_empirical(EmpiricalModel(-0.01, 0.95, 0.0), 5.0, 100.0) == pytest.approx(450.0)


class TestMapd:
    def test_hand_value(self):
        report = mapd([100.0, 200.0], [110.0, 180.0])
        assert report.mapd == pytest.approx(10.0)
        assert report.n_points == 2

    def test_identity_zero(self):
        assert mapd([50.0, 75.0], [50.0, 75.0]).mapd == 0.0

    def test_single_pair(self):
        assert mapd([50.0], [100.0]).mapd == pytest.approx(100.0)

    def test_floor_exclusion_counted(self):
        report = mapd([100.0, 1.0], [110.0, 5.0], min_measured=5.0)
        assert report.n_points == 1
        assert report.n_excluded == 1
        assert report.mapd == pytest.approx(10.0)

    def test_all_excluded(self):
        with pytest.raises(InsufficientDataError):
            mapd([0.0, 0.0], [1.0, 1.0])

    @given(
        scale=st.floats(0.01, 1e4),
        seed=st.integers(0, 500),
    )
    @settings(max_examples=50)
    def test_scale_invariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        measured = rng.uniform(1, 100, 20)
        predicted = measured * rng.uniform(0.5, 1.5, 20)
        base = mapd(measured, predicted).mapd
        scaled = mapd(measured * scale, predicted * scale).mapd
        assert scaled == pytest.approx(base, rel=1e-9)


class TestSerialization:
    def test_round_trip_all_models(self, tmp_path):
        models = [
            PolyRegModel(1.25, 0.09123456789012345, -2e-05),
            ArxModel(0.5, 0.25, 0.0009, 0.0001),
            EmpiricalModel(-0.01, 0.95, 12.5),
        ]
        for i, model in enumerate(models):
            path = tmp_path / f"model{i}.txt"
            save_model(model, path, plant_id="p01")
            assert load_model(path) == model

    def test_serialize_text_shape(self):
        text = serialize_model(PolyRegModel(1.0, 2.0, 3.0))
        assert text.splitlines()[0] == "model: polyreg"
        assert deserialize_model(text) == PolyRegModel(1.0, 2.0, 3.0)
