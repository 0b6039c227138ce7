"""Seasonal ESD anomaly detection for time-series metrics."""

from .decompose import (
    Decomposition,
    StlConfig,
    Variant,
    bisquare,
    classical_decompose,
    loess_smooth,
    median_residual,
    stl_decompose,
)
from .detectors import (
    Algorithm,
    AnomalyReport,
    DetectorConfig,
    Direction,
    ThresholdMode,
    apply_threshold,
    detect,
    esd,
    esd_critical,
    generalized_esd,
    grubbs,
    grubbs_critical,
    s_esd,
    s_h_esd,
    three_sigma,
)
from .errors import (
    AnomalyError,
    ConfigError,
    DecompError,
    EvalError,
    IngestError,
    MathError,
    PeriodError,
    StatError,
)
from .evaluation import (
    EvalMetrics,
    InjectionSpec,
    bspline_smooth,
    generate_seasonal,
    inject,
    run_corpus,
    score,
)
from .robust import SummaryStats, ewma, mad, mean_std, median, pewma, sma, summarize
from .series import LabeledSeries, TimeSeries, infer_period, load_csv, write_csv
from .tdist import t_quantile

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
