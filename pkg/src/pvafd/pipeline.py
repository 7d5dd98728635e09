"""Detector orchestration: deviations per model/grouping, alerts, portfolio reports.

A detector configuration is the cross of a statistical analysis (shewhart,
ewma, kmeans), a performance model (arx, polyreg, empirical, or none for PR),
a grouping scheme, and a deviation kind. Training uses the first calendar
window; ticketed days are excluded from every training step. Sub-daily
detectors produce per-day out-of-control fractions that are thresholded at the
Youden-optimal point of the pooled ROC; daily detectors alert directly.

Portfolio rates are micro-averaged: confusion counts are summed across plants
before dividing. Per-plant macro averages ride along in the report.
"""

from __future__ import annotations

import datetime as dt
import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .clustering import cluster_detect
from .deviation import (
    DeviationKind,
    DeviationSeries,
    GroupingScheme,
    aggregate_daily,
    group_samples,
)
from .energy_loss import daily_loss
from .errors import InsufficientDataError, ManifestError, PvafdError
from .evaluation import (
    ConfusionCounts,
    DailyAlerts,
    alerts_from_verdicts,
    confusion,
    rates,
    roc,
    weighted_sensitivity,
    youden_optimal,
)
from .ingestion import (
    SLOT_HOURS,
    MeasurementSeries,
    PlantConfig,
    TicketCalendar,
    apply_quality_filter,
    split_train_eval,
)
from .models import (
    fit_arx,
    fit_empirical,
    fit_polyreg,
    predict_arx_series,
    predict_polyreg,
)
from .spc import (
    DEFAULT_EWMA_LAMBDA,
    DEFAULT_LIMIT_WIDTH,
    ChartKind,
    ChartSpec,
    estimate_stats,
    ewma_classify,
    shewhart_classify,
    daily_out_fraction,
)


class Analysis(str, enum.Enum):
    SHEWHART = "shewhart"
    EWMA = "ewma"
    KMEANS = "kmeans"


class ModelKind(str, enum.Enum):
    ARX = "arx"
    POLYREG = "polyreg"
    EMPIRICAL = "empirical"
    NONE = "none"


_SUB_DAILY = (GroupingScheme.FIVE_MIN_SINGLE, GroupingScheme.THIRTY_MIN_GROUP)


@dataclass(frozen=True)
class DetectorConfig:
    analysis: Analysis
    model: ModelKind
    grouping: GroupingScheme
    deviation: DeviationKind

    def __post_init__(self):
        if (self.deviation is DeviationKind.PR) != (self.model is ModelKind.NONE):
            raise ManifestError(
                "deviation 'pr' pairs with model 'none' and vice versa", field="detectors"
            )

    @property
    def label(self) -> str:
        return f"{self.analysis.value}_{self.model.value}_{self.grouping.value}_{self.deviation.value}"

    @property
    def is_sub_daily(self) -> bool:
        return self.grouping in _SUB_DAILY


@dataclass
class PlantInputs:
    config: PlantConfig
    series: MeasurementSeries
    tickets: TicketCalendar


class PlantWorkspace:
    """Per-plant prepared data with lazy, cached models and deviation series."""

    def __init__(self, inputs: PlantInputs):
        self.config = inputs.config
        self.tickets = inputs.tickets
        filtered = apply_quality_filter(inputs.series, inputs.config)
        self.train, self.eval = split_train_eval(filtered, inputs.config)
        self.train_daily = aggregate_daily(self.train)
        self.eval_daily = aggregate_daily(self.eval)
        first_day = filtered.data.index[0].normalize()
        cutoff = (first_day + pd.Timedelta(days=inputs.config.training_days)).date()
        last = self.eval.data.index[-1].date()
        self.eval_days = [
            cutoff + dt.timedelta(days=i) for i in range((last - cutoff).days + 1)
        ]
        self._models: dict[ModelKind, object] = {}
        self._predictions: dict[tuple[ModelKind, str], pd.Series] = {}
        self._deviations: dict[tuple, DeviationSeries] = {}
        self._losses: dict[dt.date, float] | None = None

    @property
    def plant_id(self) -> str:
        return self.config.plant_id

    def model(self, kind: ModelKind):
        if kind not in self._models:
            if kind is ModelKind.POLYREG:
                self._models[kind] = fit_polyreg(self.train, self.tickets)
            elif kind is ModelKind.ARX:
                self._models[kind] = fit_arx(self.train, self.tickets)
            elif kind is ModelKind.EMPIRICAL:
                self._models[kind] = fit_empirical(self.train_daily, self.tickets, self.config)
            else:
                raise InsufficientDataError("PR detectors use no model")
        return self._models[kind]

    def losses(self) -> dict[dt.date, float]:
        """Specific energy loss per evaluation day, for ticket-relevance weighting."""
        if self._losses is None:
            try:
                model = self.model(ModelKind.EMPIRICAL)
                entries = daily_loss(self.eval_daily, model, self.config.p_nom)
                self._losses = {entry.day: entry.se_loss for entry in entries}
            except PvafdError:
                self._losses = {}
        return self._losses

    def _window(self, window: str) -> MeasurementSeries:
        return self.train if window == "train" else self.eval

    def _daily(self, window: str) -> pd.DataFrame:
        return self.train_daily if window == "train" else self.eval_daily

    def predictions(self, kind: ModelKind, window: str) -> pd.Series:
        """Expected power per valid slot; slots with undefined predictions are absent."""
        key = (kind, window)
        if key not in self._predictions:
            series = self._window(window)
            valid = series.valid
            if kind is ModelKind.POLYREG:
                model = self.model(kind)
                pred = pd.Series(
                    predict_polyreg(model, valid["irradiance"].to_numpy()), index=valid.index
                )
            elif kind is ModelKind.ARX:
                pred = predict_arx_series(self.model(kind), series)
            elif kind is ModelKind.EMPIRICAL:
                model = self.model(kind)
                daily = self._daily(window)
                phi = model.a * daily["h_poa_kwhm2"] + model.b
                phi_per_slot = phi.reindex(pd.Index(valid.index.date)).to_numpy()
                raw = (
                    self.config.p_nom * valid["irradiance"].to_numpy() / 1000.0 * phi_per_slot
                )
                pred = pd.Series(np.maximum(raw, 0.0), index=valid.index)
            else:
                raise InsufficientDataError("PR detectors use no model")
            self._predictions[key] = pred
        return self._predictions[key]

    def _drop_ticketed(self, frame: pd.DataFrame) -> pd.DataFrame:
        if not self.tickets.ticketed_days:
            return frame
        keep = [day not in self.tickets for day in frame.index.date]
        return frame[np.array(keep, dtype=bool)]

    def sample_deviations(self, detector: DetectorConfig, window: str) -> DeviationSeries:
        """5-minute deviation points (used by all sub-daily and daily_group schemes)."""
        key = ("sample", detector.model, detector.deviation, window)
        if key in self._deviations:
            return self._deviations[key]
        series = self._window(window)
        valid = series.valid
        p_nom = self.config.p_nom

        if detector.deviation is DeviationKind.PR:
            frame = pd.DataFrame(
                {
                    "value": (valid["ac_power"].to_numpy() / p_nom)
                    * 1000.0
                    / valid["irradiance"].to_numpy(),
                    "filtered": False,
                },
                index=valid.index,
            )
        else:
            pred = self.predictions(detector.model, window)
            measured = valid["ac_power"].loc[pred.index].to_numpy()
            e_meas = measured * SLOT_HOURS
            e_exp = pred.to_numpy() * SLOT_HOURS
            if detector.deviation is DeviationKind.ABSOLUTE:
                frame = pd.DataFrame(
                    {"value": (e_meas - e_exp) / p_nom, "filtered": False}, index=pred.index
                )
            else:
                floor = self.config.relative_denominator_floor * p_nom * SLOT_HOURS
                filtered = (e_exp < floor) | (e_exp <= 0.0)
                with np.errstate(divide="ignore", invalid="ignore"):
                    value = np.where(filtered, np.nan, e_meas / np.where(e_exp > 0, e_exp, 1.0) - 1.0)
                frame = pd.DataFrame({"value": value, "filtered": filtered}, index=pred.index)

        if window == "train":
            frame = self._drop_ticketed(frame)
        result = DeviationSeries(detector.deviation, frame)
        self._deviations[key] = result
        return result

    def daily_deviations(self, detector: DetectorConfig, window: str) -> DeviationSeries:
        """One deviation value per day, from matched daily energies."""
        key = ("daily", detector.model, detector.deviation, window)
        if key in self._deviations:
            return self._deviations[key]
        daily = self._daily(window)
        p_nom = self.config.p_nom

        if detector.deviation is DeviationKind.PR:
            days = daily.index
            value = (daily["e_meas_kwh"].to_numpy() / p_nom) / daily["h_poa_kwhm2"].to_numpy()
            filtered = np.zeros(len(days), dtype=bool)
        elif detector.model is ModelKind.EMPIRICAL:
            model = self.model(ModelKind.EMPIRICAL)
            days = daily.index
            h = daily["h_poa_kwhm2"].to_numpy()
            e_exp = np.maximum(p_nom * h * (model.a * h + model.b), 0.0)
            e_meas = daily["e_meas_kwh"].to_numpy()
            hours = daily["daylight_samples"].to_numpy() * SLOT_HOURS
            value, filtered = self._daily_value(detector.deviation, e_meas, e_exp, hours)
        else:
            pred = self.predictions(detector.model, window)
            valid = self._window(window).valid
            measured = valid["ac_power"].loc[pred.index]
            by_day = pd.DataFrame(
                {"e_exp": pred.to_numpy() * SLOT_HOURS, "e_meas": measured.to_numpy() * SLOT_HOURS},
                index=pd.Index(pred.index.date, name="date"),
            ).groupby(level=0)
            sums = by_day.sum()
            counts = by_day.size()
            days = sums.index
            hours = counts.to_numpy() * SLOT_HOURS
            value, filtered = self._daily_value(
                detector.deviation, sums["e_meas"].to_numpy(), sums["e_exp"].to_numpy(), hours
            )

        frame = pd.DataFrame(
            {"value": value, "filtered": filtered},
            index=pd.DatetimeIndex([pd.Timestamp(d) for d in days], name="timestamp"),
        )
        if window == "train":
            frame = self._drop_ticketed(frame)
        result = DeviationSeries(detector.deviation, frame)
        self._deviations[key] = result
        return result

    def _daily_value(self, kind: DeviationKind, e_meas, e_exp, covered_hours):
        """Daily absolute/relative deviation; the relative floor scales with coverage."""
        if kind is DeviationKind.ABSOLUTE:
            return (e_meas - e_exp) / self.config.p_nom, np.zeros(len(e_meas), dtype=bool)
        floor = self.config.relative_denominator_floor * self.config.p_nom * covered_hours
        filtered = (e_exp < floor) | (e_exp <= 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = np.where(filtered, np.nan, e_meas / np.where(e_exp > 0, e_exp, 1.0) - 1.0)
        return value, filtered

    def deviations(self, detector: DetectorConfig, window: str) -> DeviationSeries:
        if detector.grouping is GroupingScheme.DAILY_SINGLE:
            return self.daily_deviations(detector, window)
        return self.sample_deviations(detector, window)


@dataclass
class PlantDetection:
    """One plant's raw detector output before portfolio-level thresholding."""

    plant_id: str
    eval_days: list[dt.date]
    ticketed: frozenset[dt.date]
    losses: dict[dt.date, float]
    fractions: dict[dt.date, float] | None = None
    alerts: dict[dt.date, bool] | None = None


def _detect_plant(
    ws: PlantWorkspace, detector: DetectorConfig, lam: float, limit_width: float
) -> PlantDetection:
    scheme = detector.grouping
    train_groups = group_samples(ws.deviations(detector, "train"), scheme)
    stats = estimate_stats(train_groups, scheme)
    eval_groups = group_samples(ws.deviations(detector, "eval"), scheme)
    if not eval_groups:
        raise InsufficientDataError("no evaluation groups")

    detection = PlantDetection(
        ws.plant_id,
        eval_days=ws.eval_days,
        ticketed=ws.tickets.ticketed_days,
        losses=ws.losses(),
    )

    if detector.analysis is Analysis.KMEANS:
        values = np.array([g.mean for g in eval_groups])
        result = cluster_detect(values, stats)
        faulty = result.faulty_mask
        if detector.is_sub_daily:
            totals: dict[dt.date, int] = {}
            bad: dict[dt.date, int] = {}
            for g, is_bad in zip(eval_groups, faulty):
                totals[g.day] = totals.get(g.day, 0) + 1
                if is_bad:
                    bad[g.day] = bad.get(g.day, 0) + 1
            detection.fractions = {d: bad.get(d, 0) / n for d, n in totals.items()}
        else:
            detection.alerts = {g.day: bool(b) for g, b in zip(eval_groups, faulty)}
        return detection

    kind = ChartKind.SHEWHART if detector.analysis is Analysis.SHEWHART else ChartKind.EWMA
    spec = ChartSpec(
        kind,
        stats,
        l=limit_width,
        lam=lam if kind is ChartKind.EWMA else None,
        n=max(1, int(round(stats.n_ref))),
    )
    classify = shewhart_classify if kind is ChartKind.SHEWHART else ewma_classify
    verdicts = classify(eval_groups, spec)
    if detector.is_sub_daily:
        daylight = {
            day: int(n)
            for day, n in ws.eval_daily["daylight_samples"].items()
        }
        detection.fractions = daily_out_fraction(verdicts, daylight)
    else:
        detection.alerts = dict(alerts_from_verdicts(verdicts, detector.label).alerts)
    return detection


@dataclass
class PlantSummary:
    counts: ConfusionCounts
    sensitivity: float | None
    specificity: float | None
    undefined_days: int


@dataclass
class DetectionReport:
    detector: DetectorConfig
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)
    sensitivity: float | None = None
    specificity: float | None = None
    weighted_sensitivity: float | None = None
    macro_sensitivity: float | None = None
    macro_specificity: float | None = None
    threshold: float | None = None
    auc: float | None = None
    undefined_days: int = 0
    per_plant: dict[str, PlantSummary] = field(default_factory=dict)
    plant_errors: dict[str, str] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "detector": {
                "analysis": self.detector.analysis.value,
                "model": self.detector.model.value,
                "grouping": self.detector.grouping.value,
                "deviation": self.detector.deviation.value,
            },
            "confusion": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "weighted_sensitivity": self.weighted_sensitivity,
            "macro_sensitivity": self.macro_sensitivity,
            "macro_specificity": self.macro_specificity,
            "threshold": self.threshold,
            "auc": self.auc,
            "undefined_days": self.undefined_days,
            "per_plant": {
                plant: {
                    "tp": s.counts.tp,
                    "fp": s.counts.fp,
                    "tn": s.counts.tn,
                    "fn": s.counts.fn,
                    "sensitivity": s.sensitivity,
                    "specificity": s.specificity,
                    "undefined_days": s.undefined_days,
                }
                for plant, s in sorted(self.per_plant.items())
            },
            "plant_errors": dict(sorted(self.plant_errors.items())),
            "error": self.error,
        }


def _mean_or_none(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def run_detector(
    detector: DetectorConfig,
    workspaces: dict[str, PlantWorkspace],
    lam: float = DEFAULT_EWMA_LAMBDA,
    limit_width: float = DEFAULT_LIMIT_WIDTH,
    workers: int = 1,
    prep_errors: dict[str, str] | None = None,
) -> DetectionReport:
    """Run one detector across the portfolio and micro-average the outcome."""
    report = DetectionReport(detector)
    if prep_errors:
        report.plant_errors.update(prep_errors)

    detections: dict[str, PlantDetection] = {}

    def detect(plant_id: str):
        return plant_id, _detect_plant(workspaces[plant_id], detector, lam, limit_width)

    plant_ids = sorted(workspaces)
    if workers > 1 and len(plant_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda pid: _safe_detect(detect, pid), plant_ids))
    else:
        results = [_safe_detect(detect, pid) for pid in plant_ids]
    for plant_id, outcome in results:
        if isinstance(outcome, str):
            report.plant_errors[plant_id] = outcome
        else:
            detections[plant_id] = outcome

    if not detections:
        report.error = "no plant produced detector output"
        return report

    # pooled Youden threshold for fraction-based detectors
    if detector.is_sub_daily:
        pooled_fractions = {}
        pooled_tickets = set()
        pooled_losses = {}
        for plant_id, det in sorted(detections.items()):
            for day, frac in det.fractions.items():
                pooled_fractions[(plant_id, day)] = frac
            pooled_tickets.update((plant_id, d) for d in det.ticketed)
            pooled_losses.update(((plant_id, d), w) for d, w in det.losses.items())
        try:
            curve = roc(pooled_fractions, pooled_tickets, pooled_losses)
        except PvafdError as exc:
            report.error = f"threshold sweep failed: {exc}"
            return report
        report.threshold = youden_optimal(curve)
        report.auc = curve.auc
        for det in detections.values():
            det.alerts = {d: f > report.threshold for d, f in det.fractions.items()}

    total = ConfusionCounts()
    pooled_alerts = DailyAlerts(detector.label)
    pooled_tickets = set()
    pooled_losses = {}
    macro_sens: list[float] = []
    macro_spec: list[float] = []
    for plant_id, det in sorted(detections.items()):
        alerts = DailyAlerts(detector.label, det.alerts)
        counts = confusion(alerts, det.ticketed, det.eval_days)
        sens, spec = rates(counts)
        undefined = len(det.eval_days) - counts.total
        report.per_plant[plant_id] = PlantSummary(counts, sens, spec, undefined)
        report.undefined_days += undefined
        total = total + counts
        if sens is not None:
            macro_sens.append(sens)
        if spec is not None:
            macro_spec.append(spec)
        eval_set = set(det.eval_days)
        for day, alerted in det.alerts.items():
            if day in eval_set:
                pooled_alerts.alerts[(plant_id, day)] = alerted
        pooled_tickets.update((plant_id, d) for d in det.ticketed)
        pooled_losses.update(((plant_id, d), w) for d, w in det.losses.items())

    report.counts = total
    report.sensitivity, report.specificity = rates(total)
    report.weighted_sensitivity = weighted_sensitivity(pooled_alerts, pooled_tickets, pooled_losses)
    report.macro_sensitivity = _mean_or_none(macro_sens)
    report.macro_specificity = _mean_or_none(macro_spec)
    return report


def _safe_detect(detect, plant_id):
    try:
        return detect(plant_id)
    except PvafdError as exc:
        return plant_id, f"{type(exc).__name__}: {exc}"


def build_workspaces(
    plants: list[PlantInputs], workers: int = 1
) -> tuple[dict[str, PlantWorkspace], dict[str, str]]:
    """Prepare per-plant workspaces; failures are isolated and reported."""
    workspaces: dict[str, PlantWorkspace] = {}
    errors: dict[str, str] = {}

    def prepare(inputs: PlantInputs):
        try:
            return inputs.config.plant_id, PlantWorkspace(inputs)
        except PvafdError as exc:
            return inputs.config.plant_id, f"{type(exc).__name__}: {exc}"

    if workers > 1 and len(plants) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(prepare, plants))
    else:
        results = [prepare(p) for p in plants]
    for plant_id, outcome in results:
        if isinstance(outcome, str):
            errors[plant_id] = outcome
        else:
            workspaces[plant_id] = outcome
    return workspaces, errors


def run_detectors(
    plants: list[PlantInputs],
    detectors: list[DetectorConfig],
    lam: float = DEFAULT_EWMA_LAMBDA,
    limit_width: float = DEFAULT_LIMIT_WIDTH,
    workers: int = 1,
) -> list[DetectionReport]:
    """Run every detector configuration over the portfolio, in manifest order."""
    workspaces, prep_errors = build_workspaces(plants, workers=workers)
    return [
        run_detector(
            detector,
            workspaces,
            lam=lam,
            limit_width=limit_width,
            workers=workers,
            prep_errors=prep_errors,
        )
        for detector in detectors
    ]
