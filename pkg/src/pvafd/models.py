"""Performance models: ARX, second-order polynomial regression, empirical daily correction.

All fits are ordinary least squares solved with a deterministic orthogonal
decomposition (numpy lstsq), so identical inputs give bitwise-identical
coefficients. Power predictions are clamped at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DegenerateFitError, InsufficientDataError, MisuseError
from .ingestion import SLOT_MINUTES, MeasurementSeries, PlantConfig, TicketCalendar

#: low-irradiation days excluded from the empirical daily fit, kWh/m2
EMPIRICAL_MIN_H_POA = 2.0
#: minimum admissible days for the empirical daily fit
EMPIRICAL_MIN_DAYS = 20


@dataclass(frozen=True)
class PolyRegModel:
    """Power as a second-order polynomial in irradiance."""

    a0: float
    a1: float
    a2: float


@dataclass(frozen=True)
class ArxModel:
    """Power from two power lags and two irradiance lags on the 5-minute grid."""

    a1: float
    a2: float
    b0: float
    b1: float


@dataclass(frozen=True)
class EmpiricalModel:
    """Daily energy correction: measured/nominal ratio is linear in daily irradiation.

    ``sigma`` is the residual standard deviation of daily energy (kWh) over the
    days used in the fit.
    """

    a: float
    b: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class AccuracyReport:
    mapd: float
    n_points: int
    n_excluded: int = 0


def _ticket_day_mask(index: pd.DatetimeIndex, tickets: TicketCalendar | None) -> np.ndarray:
    """Boolean mask of rows that fall on a ticketed day."""
    if tickets is None or len(tickets) == 0:
        return np.zeros(len(index), dtype=bool)
    ticketed = np.array(sorted(tickets.ticketed_days), dtype="datetime64[D]")
    days = index.values.astype("datetime64[D]")
    pos = np.searchsorted(ticketed, days)
    pos = np.clip(pos, 0, len(ticketed) - 1)
    return ticketed[pos] == days


def fit_polyreg(train: MeasurementSeries, tickets: TicketCalendar | None = None) -> PolyRegModel:
    """Least-squares fit of power against [1, G, G^2] on valid, non-ticketed rows."""
    valid = train.valid
    keep = ~_ticket_day_mask(valid.index, tickets)
    g = valid["irradiance"].to_numpy()[keep]
    p = valid["ac_power"].to_numpy()[keep]
    if len(g) < 3:
        raise InsufficientDataError(f"polyreg needs >= 3 training points, got {len(g)}")
    design = np.column_stack([np.ones_like(g), g, g * g])
    coef, _, rank, _ = np.linalg.lstsq(design, p, rcond=None)
    if rank < 3:
        raise DegenerateFitError("polyreg design is rank deficient (constant irradiance?)")
    return PolyRegModel(float(coef[0]), float(coef[1]), float(coef[2]))


def predict_polyreg(model: PolyRegModel, g):
    """Predicted power at irradiance g, clamped at zero. Accepts scalars or arrays."""
    value = model.a0 + model.a1 * np.asarray(g, dtype=np.float64) + model.a2 * np.square(
        np.asarray(g, dtype=np.float64)
    )
    clamped = np.maximum(value, 0.0)
    return float(clamped) if np.isscalar(g) else clamped


def _arx_design(valid: pd.DataFrame) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Design rows for every slot whose two predecessors are valid and contiguous.

    Returns (target row positions, design matrix, target vector).
    """
    ts = valid.index.values.astype("datetime64[s]").astype(np.int64)
    step = SLOT_MINUTES * 60
    pos1 = np.searchsorted(ts, ts - step)
    pos2 = np.searchsorted(ts, ts - 2 * step)
    ok1 = (pos1 < len(ts)) & (ts[np.minimum(pos1, len(ts) - 1)] == ts - step)
    ok2 = (pos2 < len(ts)) & (ts[np.minimum(pos2, len(ts) - 1)] == ts - 2 * step)
    rows = np.flatnonzero(ok1 & ok2)
    if rows.size == 0:
        return rows, np.empty((0, 4)), np.empty(0)
    p = valid["ac_power"].to_numpy()
    g = valid["irradiance"].to_numpy()
    design = np.column_stack([p[pos1[rows]], p[pos2[rows]], g[rows], g[pos1[rows]]])
    return rows, design, p[rows]


def fit_arx(train: MeasurementSeries, tickets: TicketCalendar | None = None) -> ArxModel:
    """Least-squares ARX fit over rows with two valid consecutive predecessors."""
    valid = train.valid
    keep = ~_ticket_day_mask(valid.index, tickets)
    valid = valid[keep]
    rows, design, target = _arx_design(valid)
    if len(rows) < 4:
        raise InsufficientDataError(
            f"arx needs >= 4 rows with contiguous valid lags, got {len(rows)}"
        )
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 4:
        raise DegenerateFitError("arx design is rank deficient")
    return ArxModel(float(coef[0]), float(coef[1]), float(coef[2]), float(coef[3]))


def predict_arx(model: ArxModel, p_lag1: float, p_lag2: float, g: float, g_lag1: float) -> float:
    """One-step-ahead ARX prediction from measured lags, clamped at zero."""
    value = model.a1 * p_lag1 + model.a2 * p_lag2 + model.b0 * g + model.b1 * g_lag1
    return max(value, 0.0)


def predict_arx_series(model: ArxModel, series: MeasurementSeries) -> pd.Series:
    """Predicted power for every valid slot whose lags are valid and contiguous.

    Slots without usable lags are absent: their prediction is undefined and
    they drop out of any downstream deviation.
    """
    valid = series.valid
    rows, design, _ = _arx_design(valid)
    raw = design @ np.array([model.a1, model.a2, model.b0, model.b1])
    return pd.Series(np.maximum(raw, 0.0), index=valid.index[rows], name="p_exp")


def fit_empirical(
    train_daily: pd.DataFrame, tickets: TicketCalendar | None, config: PlantConfig
) -> EmpiricalModel:
    """Fit the daily correction ratio = a * H_POA + b on admissible days.

    Admissible days exclude ticketed days and days with H_POA below 2 kWh/m2.
    Outliers are removed with one deterministic pass: fit, drop days whose
    absolute residual exceeds 3x the residual standard deviation, refit.
    """
    if train_daily.empty:
        raise InsufficientDataError("no daily aggregates to fit on")
    days = train_daily.index
    h = train_daily["h_poa_kwhm2"].to_numpy(dtype=np.float64)
    e_meas = train_daily["e_meas_kwh"].to_numpy(dtype=np.float64)

    ticketed = tickets.ticketed_days if tickets is not None else frozenset()
    admissible = np.array(
        [(day not in ticketed) and h_i >= EMPIRICAL_MIN_H_POA for day, h_i in zip(days, h)]
    )
    if admissible.sum() < EMPIRICAL_MIN_DAYS:
        raise InsufficientDataError(
            f"empirical fit needs >= {EMPIRICAL_MIN_DAYS} admissible days, "
            f"got {int(admissible.sum())}"
        )
    h_fit = h[admissible]
    e_nom = config.p_nom * h_fit  # G_STC is 1 kW/m2, so nominal energy is p_nom * H
    ratio = e_meas[admissible] / e_nom

    def solve(x, y):
        design = np.column_stack([x, np.ones_like(x)])
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < 2:
            raise DegenerateFitError("empirical design is rank deficient (constant H_POA?)")
        return coef

    coef = solve(h_fit, ratio)
    resid = ratio - (coef[0] * h_fit + coef[1])
    spread = float(resid.std())
    keep = np.abs(resid) <= 3.0 * spread if spread > 0 else np.ones(len(resid), dtype=bool)
    if keep.sum() < EMPIRICAL_MIN_DAYS:
        raise InsufficientDataError("too few admissible days after outlier removal")
    h_kept = h_fit[keep]
    ratio_kept = ratio[keep]
    coef = solve(h_kept, ratio_kept)
    a, b = float(coef[0]), float(coef[1])

    e_exp = np.maximum(config.p_nom * h_kept * (a * h_kept + b), 0.0)
    sigma = float(np.sqrt(np.mean((e_exp - e_meas[admissible][keep]) ** 2)))
    return EmpiricalModel(a, b, sigma)


def predict_empirical(model: EmpiricalModel, h_poa: float, p_nom: float) -> float:
    """Expected daily energy: nominal energy times the linear correction, clamped at zero."""
    if h_poa < 0:
        raise ValueError("h_poa must be non-negative")
    return max(p_nom * h_poa * (model.a * h_poa + model.b), 0.0)


def mapd(measured, predicted, min_measured: float = 0.0) -> AccuracyReport:
    """Mean absolute percentage deviation over pairs with a usable denominator.

    Pairs with |measured| below ``min_measured`` (or exactly zero) are excluded
    and counted in the report.
    """
    measured = np.asarray(measured, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if measured.shape != predicted.shape:
        raise MisuseError("measured and predicted series must have equal length")
    include = (np.abs(measured) >= min_measured) & (measured != 0.0)
    n = int(include.sum())
    if n == 0:
        raise InsufficientDataError("no pairs with usable measured values")
    m = measured[include]
    p = predicted[include]
    value = 100.0 / n * float(np.sum(np.abs(m - p) / np.abs(m)))
    return AccuracyReport(value, n, int(len(measured) - n))


_MODEL_FIELDS = {
    "polyreg": (PolyRegModel, ("a0", "a1", "a2")),
    "arx": (ArxModel, ("a1", "a2", "b0", "b1")),
    "empirical": (EmpiricalModel, ("a", "b", "sigma")),
}


def serialize_model(model, **metadata) -> str:
    """Render a fitted model as a key-value text document."""
    for name, (cls, fields) in _MODEL_FIELDS.items():
        if isinstance(model, cls):
            lines = [f"model: {name}"]
            lines += [f"{f}: {getattr(model, f)!r}" for f in fields]
            lines += [f"{k}: {v}" for k, v in sorted(metadata.items())]
            return "\n".join(lines) + "\n"
    raise MisuseError(f"unknown model type {type(model).__name__}")


def deserialize_model(text: str):
    values = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition(":")
        values[key.strip()] = value.strip()
    name = values.get("model")
    if name not in _MODEL_FIELDS:
        raise MisuseError(f"unknown model type {name!r}")
    cls, fields = _MODEL_FIELDS[name]
    return cls(**{f: float(values[f]) for f in fields})


def save_model(model, path, **metadata) -> None:
    Path(path).write_text(serialize_model(model, **metadata), encoding="utf-8")


def load_model(path):
    return deserialize_model(Path(path).read_text(encoding="utf-8"))
