"""Statistical process control: mean/sigma estimation, Shewhart and EWMA charts.

The process mean is the grand average of the training samples' means. The
standard deviation estimator follows the grouping scheme:

* singles (5-minute or daily)   -> mean absolute adjacent difference / 1.128
* 30-minute rational subgroups  -> mean sample range / d(n)
* daily groups (n > 25)         -> mean sample standard deviation / c(n)

where d comes from the classic range table and c(n) = 4(n-1)/(4n-3).
"""

from __future__ import annotations

import datetime as dt
import enum
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .deviation import GroupingScheme, SampleGroup
from .errors import InsufficientDataError, MisuseError

#: unbiasing constants for range-based sigma estimation, by sample size
D_VALUES = {2: 1.128, 3: 1.693, 4: 2.059, 5: 2.326, 6: 2.534}
#: adjacent-range constant for individual measurements (n = 1 charts)
ADJACENT_D = 1.128
#: minimum number of training samples for a trustworthy estimate
MIN_TRAINING_GROUPS = 20

DEFAULT_LIMIT_WIDTH = 3.5
DEFAULT_EWMA_LAMBDA = 0.2


class SigmaEstimator(str, enum.Enum):
    SBAR_OVER_C = "sbar_over_c"
    RBAR_OVER_D = "rbar_over_d"
    ADJACENT_RANGE = "adjacent_range"


def c_correction(n: float) -> float:
    """Large-sample unbiasing constant for the sample standard deviation."""
    return 4.0 * (n - 1.0) / (4.0 * n - 3.0)


@dataclass(frozen=True)
class ProcessStats:
    """Estimated mean and standard deviation of the monitored process."""

    mu: float
    sigma: float
    estimator: SigmaEstimator
    n_ref: float
    n_groups: int

    @property
    def is_degenerate(self) -> bool:
        return self.sigma == 0.0


def estimate_stats(groups: Sequence[SampleGroup], scheme: GroupingScheme) -> ProcessStats:
    """Estimate process mean and sigma from training samples of one grouping scheme."""
    if len(groups) < MIN_TRAINING_GROUPS:
        raise InsufficientDataError(
            f"need >= {MIN_TRAINING_GROUPS} training groups, got {len(groups)}"
        )
    means = np.array([g.mean for g in groups], dtype=np.float64)
    mu = float(means.mean())

    if scheme in (GroupingScheme.FIVE_MIN_SINGLE, GroupingScheme.DAILY_SINGLE):
        sigma = float(np.mean(np.abs(np.diff(means)))) / ADJACENT_D
        estimator = SigmaEstimator.ADJACENT_RANGE
        n_ref = 1.0
    elif scheme is GroupingScheme.THIRTY_MIN_GROUP:
        n_ref = float(np.mean([g.n for g in groups]))
        d = D_VALUES[min(max(int(round(n_ref)), 2), 6)]
        sigma = float(np.mean([g.range for g in groups])) / d
        estimator = SigmaEstimator.RBAR_OVER_D
    elif scheme is GroupingScheme.DAILY_GROUP:
        n_ref = float(np.mean([g.n for g in groups]))
        sigma = float(np.mean([g.stddev for g in groups])) / c_correction(n_ref)
        estimator = SigmaEstimator.SBAR_OVER_C
    else:
        raise MisuseError(f"unknown grouping scheme {scheme!r}")

    if sigma == 0.0:
        warnings.warn(
            "training data has zero estimated sigma; the chart will alarm on any "
            "deviation from the mean",
            RuntimeWarning,
            stacklevel=2,
        )
    return ProcessStats(mu, sigma, estimator, n_ref, len(groups))


class ChartKind(str, enum.Enum):
    SHEWHART = "shewhart"
    EWMA = "ewma"


@dataclass(frozen=True)
class ChartSpec:
    """Control chart parameters: limit width l in sigma units, EWMA smoothing lam."""

    kind: ChartKind
    stats: ProcessStats
    l: float = DEFAULT_LIMIT_WIDTH
    lam: float | None = None
    n: int = 1

    def __post_init__(self):
        if self.l <= 0:
            raise ValueError("limit width must be positive")
        if self.kind is ChartKind.EWMA:
            if self.lam is None or not 0.0 < self.lam <= 1.0:
                raise ValueError("ewma smoothing factor must lie in (0, 1]")
        if self.n < 1:
            raise ValueError("sample size must be at least 1")


def _sigma_for_n(stats: ProcessStats, n: int) -> float:
    """Chart sigma for a sample of size n.

    s-bar based estimates re-evaluate the c correction at the group's own size,
    so daily groups get slightly different sigma along with the 1/sqrt(n) term.
    """
    if stats.estimator is SigmaEstimator.SBAR_OVER_C and n != stats.n_ref:
        return stats.sigma * c_correction(stats.n_ref) / c_correction(n)
    return stats.sigma


def shewhart_limits(spec: ChartSpec) -> tuple[float, float, float]:
    """(UCL, center line, LCL) = mu +- l * sigma / sqrt(n)."""
    sigma = _sigma_for_n(spec.stats, spec.n)
    half = spec.l * sigma / math.sqrt(spec.n)
    return spec.stats.mu + half, spec.stats.mu, spec.stats.mu - half


@dataclass(frozen=True)
class ChartVerdict:
    timestamp: pd.Timestamp
    monitored_value: float
    ucl: float
    lcl: float
    out_of_control: bool


def shewhart_classify(groups: Iterable[SampleGroup], spec: ChartSpec) -> list[ChartVerdict]:
    """Classify each sample mean against limits computed with that sample's n."""
    if spec.kind is not ChartKind.SHEWHART:
        raise MisuseError("shewhart_classify needs a shewhart chart spec")
    mu = spec.stats.mu
    verdicts = []
    for g in groups:
        sigma = _sigma_for_n(spec.stats, g.n)
        half = spec.l * sigma / math.sqrt(g.n)
        ucl, lcl = mu + half, mu - half
        value = g.mean
        verdicts.append(
            ChartVerdict(g.window_start, value, ucl, lcl, value > ucl or value < lcl)
        )
    return verdicts


def ewma_classify(groups: Iterable[SampleGroup], spec: ChartSpec) -> list[ChartVerdict]:
    """Run the EWMA recursion over sample means with time-varying limits.

    The recursion starts at z_0 = mu once per call (one evaluation run); it does
    not reset daily. sigma_t grows toward its steady state
    sigma_0 * sqrt(lam / (2 - lam)).
    """
    if spec.kind is not ChartKind.EWMA:
        raise MisuseError("ewma_classify needs an ewma chart spec")
    lam = spec.lam
    mu = spec.stats.mu
    z = mu
    verdicts = []
    for t, g in enumerate(groups, start=1):
        z = lam * g.mean + (1.0 - lam) * z
        sigma0 = _sigma_for_n(spec.stats, g.n) / math.sqrt(g.n)
        sigma_t = sigma0 * math.sqrt(lam / (2.0 - lam) * (1.0 - (1.0 - lam) ** (2 * t)))
        ucl, lcl = mu + spec.l * sigma_t, mu - spec.l * sigma_t
        verdicts.append(ChartVerdict(g.window_start, z, ucl, lcl, z > ucl or z < lcl))
    return verdicts


def daily_out_fraction(
    verdicts: Iterable[ChartVerdict], daylight_counts: Mapping[dt.date, int]
) -> dict[dt.date, float]:
    """Fraction of a day's daylight samples flagged out of control.

    Days with zero daylight samples are absent from the result.
    """
    outs: dict[dt.date, int] = {}
    for v in verdicts:
        if v.out_of_control:
            day = v.timestamp.date()
            outs[day] = outs.get(day, 0) + 1
    return {
        day: outs.get(day, 0) / count
        for day, count in daylight_counts.items()
        if count > 0
    }


def write_verdicts_csv(verdicts: Iterable[ChartVerdict], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("timestamp,value,ucl,lcl,out\n")
        for v in verdicts:
            fh.write(
                f"{v.timestamp.isoformat()},{v.monitored_value!r},{v.ucl!r},{v.lcl!r},"
                f"{int(v.out_of_control)}\n"
            )
