"""Automatic fault detection for PV plant portfolios.

Performance models (ARX, polynomial regression, empirical daily correction),
deviation metrics, control charts and 1-D k-means classification, alert
scoring against maintenance tickets, and a synthetic portfolio generator for
desk-scale experiments.
"""

from .clustering import ClusterPolicy, ClusterResult, cluster_detect, kmeans_1d
from .deviation import (
    DeviationKind,
    DeviationPoint,
    DeviationSeries,
    GroupingScheme,
    SampleGroup,
    absolute_deviation,
    aggregate_daily,
    group_samples,
    performance_ratio,
    relative_deviation,
)
from .energy_loss import DailyLoss, daily_loss
from .errors import (
    DegenerateFitError,
    DegenerateRocError,
    EmptyInputError,
    FaultPlanError,
    InsufficientDataError,
    ManifestError,
    MisuseError,
    PvafdError,
    SchemaError,
    TicketParseError,
)
from .evaluation import (
    ConfusionCounts,
    DailyAlerts,
    RocCurve,
    RocPoint,
    alerts_from_fractions,
    alerts_from_verdicts,
    confusion,
    rates,
    roc,
    weighted_sensitivity,
    youden_optimal,
)
from .ingestion import (
    MeasurementRecord,
    MeasurementSeries,
    PhysicalLimits,
    PlantConfig,
    Quality,
    TicketCalendar,
    apply_quality_filter,
    parse_measurements,
    parse_plant_config,
    parse_ticket_book,
    parse_tickets,
    split_train_eval,
    write_plant_config,
    write_tickets,
)
from .models import (
    AccuracyReport,
    ArxModel,
    EmpiricalModel,
    PolyRegModel,
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
from .pipeline import (
    Analysis,
    DetectionReport,
    DetectorConfig,
    ModelKind,
    PlantInputs,
    run_detectors,
)
from .spc import (
    ChartKind,
    ChartSpec,
    ChartVerdict,
    ProcessStats,
    SigmaEstimator,
    daily_out_fraction,
    estimate_stats,
    ewma_classify,
    shewhart_classify,
    shewhart_limits,
)
from .synthetic import (
    FaultEpisode,
    FaultPlan,
    FaultType,
    PlantResponse,
    WeatherModel,
    generate_plant,
    inject_faults,
)

__version__ = "0.1.0"
