"""Manifest loading for portfolio generation and detector runs.

Manifests are JSON documents. Detector configurations are listed explicitly,
one entry per configuration, so a run is auditable from its manifest alone.
Relative paths resolve against the manifest's own directory.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .deviation import DeviationKind, GroupingScheme
from .errors import ManifestError
from .ingestion import (
    PlantConfig,
    parse_measurements,
    parse_plant_config,
    parse_ticket_book,
    write_plant_config,
    write_tickets,
    TicketCalendar,
)
from .pipeline import Analysis, DetectorConfig, ModelKind, PlantInputs
from .spc import DEFAULT_EWMA_LAMBDA, DEFAULT_LIMIT_WIDTH
from .synthetic import (
    FaultEpisode,
    FaultPlan,
    FaultType,
    PlantResponse,
    WeatherModel,
    generate_plant,
    inject_faults,
    write_measurements_csv,
)


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ManifestError("missing required key", field=f"{path}.{key}" if path else key)
    return mapping[key]


def _enum_value(enum_cls, raw, path: str):
    try:
        return enum_cls(raw)
    except ValueError:
        options = ", ".join(e.value for e in enum_cls)
        raise ManifestError(f"expected one of [{options}], got {raw!r}", field=path) from None


def _load_json(path: Path) -> dict:
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ManifestError("manifest must be a JSON object")
    return document


def parse_detector(entry: dict, path: str) -> DetectorConfig:
    if not isinstance(entry, dict):
        raise ManifestError("detector entry must be an object", field=path)
    analysis = _enum_value(Analysis, _require(entry, "analysis", path), f"{path}.analysis")
    raw_model = entry.get("model", "none")
    if raw_model in ("-", None, ""):
        raw_model = "none"
    model = _enum_value(ModelKind, raw_model, f"{path}.model")
    grouping = _enum_value(GroupingScheme, _require(entry, "grouping", path), f"{path}.grouping")
    deviation = _enum_value(DeviationKind, _require(entry, "deviation", path), f"{path}.deviation")
    try:
        return DetectorConfig(analysis, model, grouping, deviation)
    except ManifestError as exc:
        raise ManifestError(str(exc).split(": ", 1)[-1], field=path) from None


@dataclass
class RunManifest:
    plants: list[PlantInputs]
    detectors: list[DetectorConfig]
    ewma_lambda: float = DEFAULT_EWMA_LAMBDA
    limit_width: float = DEFAULT_LIMIT_WIDTH


def load_run_manifest(path) -> RunManifest:
    path = Path(path)
    doc = _load_json(path)
    base = path.parent

    plant_entries = _require(doc, "plants", "")
    if not isinstance(plant_entries, list) or not plant_entries:
        raise ManifestError("must be a non-empty list", field="plants")
    detector_entries = _require(doc, "detectors", "")
    if not isinstance(detector_entries, list) or not detector_entries:
        raise ManifestError("must be a non-empty list", field="detectors")

    tickets_path = doc.get("tickets")
    book = parse_ticket_book(base / tickets_path) if tickets_path else {}

    plants = []
    for i, entry in enumerate(plant_entries):
        where = f"plants[{i}]"
        plant_id = _require(entry, "id", where)
        config_path = _require(entry, "config", where)
        measurements_path = _require(entry, "measurements", where)
        config = parse_plant_config(base / config_path)
        if config.plant_id != plant_id:
            raise ManifestError(
                f"config file is for plant {config.plant_id!r}", field=f"{where}.config"
            )
        series = parse_measurements(base / measurements_path, config)
        tickets = book.get(plant_id, TicketCalendar(plant_id, frozenset()))
        plants.append(PlantInputs(config, series, tickets))

    detectors = [
        parse_detector(entry, f"detectors[{i}]") for i, entry in enumerate(detector_entries)
    ]
    return RunManifest(
        plants,
        detectors,
        ewma_lambda=float(doc.get("ewma_lambda", DEFAULT_EWMA_LAMBDA)),
        limit_width=float(doc.get("limit_width", DEFAULT_LIMIT_WIDTH)),
    )


@dataclass
class PortfolioPlant:
    config: PlantConfig
    seed: int
    plan: FaultPlan
    ticket_dropout: float = 0.0


@dataclass
class PortfolioManifest:
    plants: list[PortfolioPlant]
    days: int
    start: dt.date
    weather: WeatherModel
    response: PlantResponse
    seed: int


def _dataclass_overrides(cls, raw: dict, path: str, defaults):
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ManifestError(f"unknown key {key!r}", field=path)
    return replace(defaults, **raw)


def load_portfolio_manifest(path) -> PortfolioManifest:
    path = Path(path)
    doc = _load_json(path)
    days = int(_require(doc, "days", ""))
    if days < 2:
        raise ManifestError("must be at least 2", field="days")
    seed = int(doc.get("seed", 0))
    try:
        start = dt.date.fromisoformat(doc.get("start_date", "2021-01-01"))
    except ValueError as exc:
        raise ManifestError(str(exc), field="start_date") from None

    weather = _dataclass_overrides(WeatherModel, doc.get("weather", {}), "weather", WeatherModel())
    response = _dataclass_overrides(
        PlantResponse, doc.get("response", {}), "response", PlantResponse()
    )

    entries = _require(doc, "plants", "")
    if not isinstance(entries, list) or not entries:
        raise ManifestError("must be a non-empty list", field="plants")

    plants = []
    for i, entry in enumerate(entries):
        where = f"plants[{i}]"
        plant_id = str(_require(entry, "id", where))
        p_nom = float(_require(entry, "p_nom_kw", where))
        if p_nom <= 0:
            raise ManifestError("must be positive", field=f"{where}.p_nom_kw")
        episodes = []
        for j, fault in enumerate(entry.get("faults", [])):
            fwhere = f"{where}.faults[{j}]"
            try:
                episodes.append(
                    FaultEpisode(
                        start=dt.date.fromisoformat(_require(fault, "start", fwhere)),
                        duration_days=int(_require(fault, "days", fwhere)),
                        type=_enum_value(FaultType, _require(fault, "type", fwhere), f"{fwhere}.type"),
                        magnitude=float(fault.get("magnitude", 1.0)),
                    )
                )
            except (ValueError, TypeError) as exc:
                raise ManifestError(str(exc), field=fwhere) from None
        try:
            plan = FaultPlan(tuple(episodes))
        except Exception as exc:
            raise ManifestError(str(exc), field=f"{where}.faults") from None
        plants.append(
            PortfolioPlant(
                config=PlantConfig(plant_id=plant_id, p_nom=p_nom),
                seed=int(entry.get("seed", seed + i + 1)),
                plan=plan,
                ticket_dropout=float(entry.get("ticket_dropout", 0.0)),
            )
        )
    return PortfolioManifest(plants, days, start, weather, response, seed)


def generate_portfolio(manifest: PortfolioManifest, out_dir) -> list[Path]:
    """Generate measurement CSVs, plant configs, and one ticket file.

    Returns the written paths; everything is deterministic for a fixed
    manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    calendars = []
    for plant in manifest.plants:
        weather = replace(manifest.weather, seed=plant.seed)
        series = generate_plant(
            plant.config, weather, manifest.days, start=manifest.start, response=manifest.response
        )
        series, calendar = inject_faults(
            series, plant.plan, ticket_dropout=plant.ticket_dropout, seed=plant.seed
        )
        measurements = out_dir / f"{plant.config.plant_id}.csv"
        config_path = out_dir / f"{plant.config.plant_id}.config"
        write_measurements_csv(series, measurements)
        write_plant_config(plant.config, config_path)
        written += [measurements, config_path]
        calendars.append(calendar)
    tickets_path = out_dir / "tickets.csv"
    write_tickets(calendars, tickets_path)
    written.append(tickets_path)
    return written
