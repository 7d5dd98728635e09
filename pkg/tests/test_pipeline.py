import datetime as dt

import numpy as np
import pytest

from pvafd import DeviationKind, GroupingScheme, ManifestError, TicketCalendar
from pvafd.pipeline import (
    Analysis,
    DetectorConfig,
    ModelKind,
    PlantInputs,
    PlantWorkspace,
    run_detectors,
)
from conftest import build_portfolio


def detector(analysis="shewhart", model="none", grouping="daily_single", deviation="pr"):
    return DetectorConfig(
        Analysis(analysis), ModelKind(model), GroupingScheme(grouping), DeviationKind(deviation)
    )


class TestDetectorConfig:
    def test_pr_requires_no_model(self):
        with pytest.raises(ManifestError):
            detector(model="arx", deviation="pr")
        with pytest.raises(ManifestError):
            detector(model="none", deviation="absolute")

    def test_label(self):
        det = detector("kmeans", "polyreg", "daily_single", "relative")
        assert det.label == "kmeans_polyreg_daily_single_relative"


@pytest.fixture(scope="module")
def workspace(portfolio):
    return PlantWorkspace(portfolio[0])


class TestWorkspace:

    def test_training_window_boundary(self, workspace):
        assert workspace.train.data.index.max() < workspace.eval.data.index.min()
        assert workspace.eval_days[0] == dt.date(2022, 1, 1)

    def test_daily_deviation_excludes_ticketed_training_days(self, workspace, portfolio):
        det = detector("shewhart", "none", "daily_single", "pr")
        train_dev = workspace.deviations(det, "train")
        ticketed = portfolio[0].tickets.ticketed_days
        assert not any(d in ticketed for d in train_dev.data.index.date)

    def test_eval_deviation_keeps_ticketed_days(self, workspace, portfolio):
        det = detector("shewhart", "none", "daily_single", "pr")
        eval_dev = workspace.deviations(det, "eval")
        covered = set(eval_dev.data.index.date)
        assert any(d in covered for d in portfolio[0].tickets.ticketed_days)

    def test_arx_predictions_skip_morning_lags(self, workspace):
        pred = workspace.predictions(ModelKind.ARX, "eval")
        valid = workspace.eval.valid
        # every predicted slot has two valid 5-minute predecessors
        index = set(valid.index)
        for ts in pred.index[:200]:
            assert ts - np.timedelta64(5, "m") in index
            assert ts - np.timedelta64(10, "m") in index
        assert len(pred) < len(valid)

    def test_relative_floor_filters_low_expected_energy(self, workspace):
        det = detector("kmeans", "polyreg", "five_min_single", "relative")
        dev = workspace.sample_deviations(det, "eval")
        filtered = dev.data["filtered"]
        assert filtered.sum() >= 0
        usable = dev.usable
        assert np.isfinite(usable["value"].to_numpy()).all()


class TestRunDetectors:
    def test_daily_detectors_report(self, portfolio):
        reports = run_detectors(
            portfolio[:3],
            [
                detector("shewhart", "none", "daily_single", "pr"),
                detector("kmeans", "polyreg", "daily_single", "relative"),
            ],
        )
        for report in reports:
            assert report.error is None
            assert not report.plant_errors
            assert report.counts.total > 0
            assert report.threshold is None
            assert 0.0 <= report.sensitivity <= 1.0
            assert 0.0 <= report.specificity <= 1.0
            assert set(report.per_plant) == {p.config.plant_id for p in portfolio[:3]}

    def test_sub_daily_detector_sets_threshold_and_auc(self, portfolio):
        report = run_detectors(
            portfolio[:2], [detector("ewma", "arx", "five_min_single", "absolute")]
        )[0]
        assert report.error is None
        assert report.threshold is not None
        assert report.auc is not None and report.auc > 0.5

    def test_micro_average_consistency(self, portfolio):
        report = run_detectors(portfolio[:3], [detector()])[0]
        total = sum((s.counts for s in report.per_plant.values()), start=type(report.counts)())
        assert total == report.counts

    def test_plant_failures_are_isolated(self, portfolio):
        # a plant whose series is too short for the training window fails alone
        short = build_portfolio(n_plants=1, days=200, seed_base=50)[0]
        reports = run_detectors([short, portfolio[0]], [detector()])
        report = reports[0]
        assert report.error is None
        assert set(report.plant_errors) == {short.config.plant_id}
        assert set(report.per_plant) == {portfolio[0].config.plant_id}

    def test_workers_do_not_change_results(self, portfolio):
        dets = [detector(), detector("kmeans", "polyreg", "daily_single", "relative")]
        serial = run_detectors(portfolio[:3], dets, workers=1)
        parallel = run_detectors(portfolio[:3], dets, workers=4)
        for a, b in zip(serial, parallel):
            assert a.to_dict() == b.to_dict()

    def test_undefined_days_reported(self, clean_plant, portfolio):
        report = run_detectors([portfolio[0]], [detector(grouping="daily_group", deviation="pr")])[0]
        # daily groups need > 25 daylight samples; winter days drop out as undefined
        assert report.undefined_days >= 0
        assert report.counts.total + report.undefined_days == len(
            PlantWorkspace(portfolio[0]).eval_days
        )
