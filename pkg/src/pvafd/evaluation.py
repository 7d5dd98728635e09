"""Alert scoring: daily Boolean alerts, confusion counts, ROC sweep, Youden threshold.

Days are whatever hashable key the caller uses (a date, or a (plant, date)
pair when pooling a portfolio); everything here only compares keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

import numpy as np

from .errors import DegenerateRocError, MisuseError
from .spc import ChartVerdict


@dataclass
class DailyAlerts:
    """Per-day Boolean alerts from one detector."""

    source: str
    alerts: dict[Hashable, bool] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.alerts)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    tpr: float
    weighted_tpr: float | None = None


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]
    auc: float


def _ticket_days(tickets) -> frozenset:
    days = getattr(tickets, "ticketed_days", tickets)
    return frozenset(days)


def alerts_from_fractions(
    fractions: Mapping[Hashable, float], threshold: float, source: str = ""
) -> DailyAlerts:
    """A day alerts when its out-of-control fraction strictly exceeds the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return DailyAlerts(source, {day: frac > threshold for day, frac in fractions.items()})


def alerts_from_verdicts(verdicts: Iterable[ChartVerdict], source: str = "") -> DailyAlerts:
    """One chart verdict per day becomes one alert per day."""
    alerts: dict[Hashable, bool] = {}
    for v in verdicts:
        day = v.timestamp.date()
        if day in alerts:
            raise MisuseError(f"multiple verdicts for {day}; daily schemes expected")
        alerts[day] = v.out_of_control
    return DailyAlerts(source, alerts)


def alerts_from_labels(days: Iterable[Hashable], faulty: Iterable[bool], source: str = "") -> DailyAlerts:
    """Daily clustering labels become alerts directly."""
    alerts: dict[Hashable, bool] = {}
    for day, bad in zip(days, faulty):
        if day in alerts:
            raise MisuseError(f"multiple labels for {day}")
        alerts[day] = bool(bad)
    return DailyAlerts(source, alerts)


def confusion(alerts: DailyAlerts, tickets, eval_days: Iterable[Hashable]) -> ConfusionCounts:
    """Count TP/FP/TN/FN over evaluation days that have a defined alert value.

    Days without detector output are skipped here; callers report them
    separately.
    """
    ticketed = _ticket_days(tickets)
    tp = fp = tn = fn = 0
    for day in eval_days:
        if day not in alerts.alerts:
            continue
        alerted = alerts.alerts[day]
        if day in ticketed:
            if alerted:
                tp += 1
            else:
                fn += 1
        else:
            if alerted:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def rates(counts: ConfusionCounts) -> tuple[float | None, float | None]:
    """(sensitivity, specificity); None where the denominator is empty."""
    sensitivity = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    specificity = counts.tn / (counts.tn + counts.fp) if counts.tn + counts.fp else None
    return sensitivity, specificity


def weighted_sensitivity(
    alerts: DailyAlerts, tickets, losses: Mapping[Hashable, float]
) -> float | None:
    """Sensitivity with each ticketed day weighted by its specific energy loss."""
    ticketed = _ticket_days(tickets)
    tp_rel = fn_rel = 0.0
    for day, alerted in alerts.alerts.items():
        if day not in ticketed:
            continue
        weight = losses.get(day, 0.0)
        if alerted:
            tp_rel += weight
        else:
            fn_rel += weight
    if tp_rel + fn_rel == 0.0:
        return None
    return tp_rel / (tp_rel + fn_rel)


def roc(
    fractions: Mapping[Hashable, float],
    tickets,
    losses: Mapping[Hashable, float] | None = None,
) -> RocCurve:
    """ROC over thresholds at every distinct observed fraction plus {0, 1}.

    Alerts use the strict ``fraction > threshold`` rule, matching
    alerts_from_fractions. A final alert-everything point (threshold -inf)
    closes the curve at (1, 1); AUC is the trapezoid integral.
    """
    ticketed = _ticket_days(tickets)
    days = list(fractions)
    values = np.array([fractions[d] for d in days], dtype=np.float64)
    labels = np.array([d in ticketed for d in days], dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(days) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateRocError(
            f"roc needs ticketed and clean days, got {n_pos} ticketed / {n_neg} clean"
        )

    pos_sorted = np.sort(values[labels])
    neg_sorted = np.sort(values[~labels])
    thresholds = np.array(sorted(set(values.tolist()) | {0.0, 1.0}, reverse=True))
    # strict ">" rule: a threshold covers every value <= it
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="right")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="right")

    weighted = [None] * len(thresholds)
    weighted_all = None
    if losses is not None:
        weights = np.array([losses.get(d, 0.0) for d in days], dtype=np.float64)
        order = np.argsort(values[labels], kind="stable")
        pos_weight_cum = np.concatenate([[0.0], np.cumsum(weights[labels][order])])
        total_weight = float(pos_weight_cum[-1])
        if total_weight > 0.0:
            covered = np.searchsorted(pos_sorted, thresholds, side="right")
            weighted = ((total_weight - pos_weight_cum[covered]) / total_weight).tolist()
            weighted_all = 1.0

    points = [
        RocPoint(float(thr), fp_i / n_neg, tp_i / n_pos, w)
        for thr, tp_i, fp_i, w in zip(thresholds, tp, fp, weighted)
    ]
    points.append(RocPoint(float("-inf"), 1.0, 1.0, weighted_all))

    points.sort(key=lambda p: (p.fpr, p.tpr))
    auc = 0.0
    for prev, cur in zip(points, points[1:]):
        auc += 0.5 * (prev.tpr + cur.tpr) * (cur.fpr - prev.fpr)
    return RocCurve(tuple(points), auc)


def youden_optimal(curve: RocCurve) -> float:
    """Threshold maximizing J = TPR - FPR; ties resolve to the larger threshold."""
    best = max(curve.points, key=lambda p: (p.tpr - p.fpr, p.threshold))
    return best.threshold
