"""Daily energy-loss estimation used to weight ticket relevance.

The expected energy is discounted by two standard deviations before being
compared with the measurement, so small shortfalls inside the model's
uncertainty band count as zero loss.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from .models import EmpiricalModel, predict_empirical


@dataclass(frozen=True)
class DailyLoss:
    day: dt.date
    e_nom: float
    e_exp: float
    e_loss: float
    se_loss: float
    pl: float


def daily_loss(daily: pd.DataFrame, model: EmpiricalModel, p_nom: float) -> list[DailyLoss]:
    """Per-day loss figures from daily aggregates (e_meas_kwh, h_poa_kwhm2).

    e_loss = max(0, e_exp - 2 sigma - e_meas); se_loss divides by installed
    capacity; pl relates the loss to the expected energy, clamped to [0, 1].
    Days absent from the aggregates get no entry.
    """
    losses = []
    for day, row in daily.iterrows():
        h = float(row["h_poa_kwhm2"])
        e_meas = float(row["e_meas_kwh"])
        e_nom = p_nom * h
        e_exp = predict_empirical(model, h, p_nom)
        e_loss = max(0.0, e_exp - 2.0 * model.sigma - e_meas)
        pl = min(1.0, e_loss / e_exp) if e_exp > 0 else 0.0
        losses.append(DailyLoss(day, e_nom, e_exp, e_loss, e_loss / p_nom, pl))
    return losses


def write_losses_csv(losses, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("date,e_nom,e_exp,e_loss,se_loss,pl\n")
        for entry in losses:
            fh.write(
                f"{entry.day.isoformat()},{entry.e_nom!r},{entry.e_exp!r},"
                f"{entry.e_loss!r},{entry.se_loss!r},{entry.pl!r}\n"
            )
