"""Met-ocean calibration and offshore access metrics.

Fuses buoy observations with numerical model output through a lagged
harmonic regression, then scores approachability, accessibility and
route serviceability for offshore operations.
"""

from .timeseries import (
    ALL_YEAR,
    SUMMER,
    WINTER,
    HourlyTimeSeries,
    RawSampleBatch,
    SeasonFilter,
    SiteDataset,
    VariableKind,
    align,
    missing_report,
    pool_series,
    quality_filter,
    resample_to_hourly,
    seasonal_subset,
)
from .ingest import (
    GridPointSeries,
    Triangulation,
    delaunay,
    extract_numerical_series,
    fetch_historical,
    interpolate_to_point,
    parse_grid_file,
    parse_observation_file,
)
from .tsr import (
    EvaluationMetrics,
    FourierConfig,
    TsrModel,
    build_design,
    evaluate,
    fit,
    fourier_features,
    predict,
    select_k,
)
from .metrics import (
    MetricReport,
    MissionWindow,
    OperationalProfile,
    PositionMatrix,
    Route,
    SafetyLimits,
    accessibility,
    approachability,
    build_position_matrix,
    route_accessibility_profile,
    serviceability,
    sweep,
)

__version__ = "0.1.0"
