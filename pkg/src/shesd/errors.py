"""Exception hierarchy shared by every module."""


class AnomalyError(Exception):
    """Base class for all package errors."""


class IngestError(AnomalyError):
    """Malformed, irregular or non-finite input data."""


class PeriodError(AnomalyError):
    """Seasonal period cannot be inferred from the cadence."""


class StatError(AnomalyError):
    """Invalid input to a summary statistic or smoother."""


class MathError(AnomalyError):
    """Argument outside the domain of a special function."""


class DecompError(AnomalyError):
    """Series or configuration unsuitable for decomposition."""


class ConfigError(AnomalyError):
    """Inconsistent detector configuration."""


class EvalError(AnomalyError):
    """Infeasible evaluation or injection request."""
