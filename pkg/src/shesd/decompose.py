"""Seasonal decomposition: LOESS, classical moving-average decomposition, a
robust STL-style iteration and the median-residual variant.

The STL loop here is deliberately the simple form: a centred moving-average
trend, LOESS smoothing of each sub-cycle series for the seasonal component,
and optional bisquare robustness weights. There is no low-pass filter stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import DecompError
from .series import TimeSeries


class Variant(str, Enum):
    CLASSIC = "classic_residual"
    MEDIAN = "median_residual"


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Additive components of a series.

    ``residual`` is ``X - T - S`` for the classic variant and
    ``X - S - median(X)`` for the median variant. ``weights`` holds the final
    robustness weights when an outer loop ran, else ``None``.
    """

    seasonal: np.ndarray
    trend: np.ndarray
    residual: np.ndarray
    series_median: float
    variant: Variant = Variant.CLASSIC
    weights: np.ndarray | None = None

    def __len__(self):
        return len(self.residual)


@dataclass(frozen=True)
class StlConfig:
    """Settings for :func:`stl_decompose`.

    ``trend_window`` defaults to the span of the classical centred moving
    average: ``period`` points for an odd period, ``period + 1`` (half weights
    on the two ends) for an even one.

    ``seasonal_degree`` 0 makes each sub-cycle fit a locally weighted mean.
    A local line can extrapolate wildly once robustness weights empty one
    side of a neighbourhood; the mean cannot.
    """

    period: int
    inner_iterations: int = 2
    outer_iterations: int = 1
    seasonal_loess_span: float = 0.75
    seasonal_degree: int = 0
    trend_window: int | None = None
    convergence_epsilon: float = 1e-6

    def __post_init__(self):
        if self.period < 1:
            raise DecompError("period must be positive")
        if self.inner_iterations < 1 or self.outer_iterations < 0:
            raise DecompError("inner_iterations >= 1 and outer_iterations >= 0 required")
        if not 0.0 < self.seasonal_loess_span <= 1.0:
            raise DecompError("seasonal_loess_span must lie in (0, 1]")
        if self.seasonal_degree not in (0, 1):
            raise DecompError("seasonal_degree must be 0 or 1")
        if self.trend_window is None:
            window = self.period if self.period % 2 else self.period + 1
            object.__setattr__(self, "trend_window", window)
        if self.trend_window < 1 or self.trend_window % 2 == 0:
            raise DecompError("trend_window must be a positive odd integer")


def bisquare(u):
    """Bisquare weight: (1 - u^2)^2 on [0, 1), zero from 1 upwards."""
    u = np.abs(np.asarray(u, dtype=float))
    return np.where(u < 1.0, (1.0 - u * u) ** 2, 0.0)


def _tricube(d):
    return np.where(d < 1.0, (1.0 - d ** 3) ** 3, 0.0)


def _neighbourhoods(x: np.ndarray, q: int):
    """Indices of the q nearest neighbours of each x_i and their tricube weights.

    The bandwidth is the distance to the q-th neighbour, widened by 0.1% so
    the farthest selected point keeps a small positive weight.
    """
    n = len(x)
    dist = np.abs(x[:, None] - x[None, :])
    nbr = np.argsort(dist, axis=1, kind="stable")[:, :q]
    d = np.take_along_axis(dist, nbr, axis=1)
    h = d[:, -1:] * 1.001
    h[h == 0] = 1.0
    return nbr, _tricube(d / h)


def _loess_rows(x, Y, R, span, degree, fallback="mean"):
    """LOESS of each row of Y against shared positions x.

    R holds per-point robustness weights with the same shape as Y. A
    neighbourhood whose weights are all zero gets the plain ``fallback``
    ("mean" or "median") of its values.
    """
    n = len(x)
    q = math.ceil(span * n)
    if q < degree + 1:
        raise DecompError(f"span {span} leaves {q} neighbours; need {degree + 1}")
    q = min(q, n)
    nbr, kern = _neighbourhoods(x, q)
    plain = np.median if fallback == "median" else np.mean
    out = np.empty_like(Y)
    for i in range(n):
        idx = nbr[i]
        xs = x[idx]
        ys = Y[:, idx]
        w = R[:, idx] * kern[i]
        sw = w.sum(axis=1)
        ok = sw > 0
        safe = np.where(ok, sw, 1.0)
        ybar = (w * ys).sum(axis=1) / safe
        fit = ybar
        if degree == 1:
            xbar = (w * xs).sum(axis=1) / safe
            dx = xs[None, :] - xbar[:, None]
            sxx = (w * dx * dx).sum(axis=1)
            span_x = xs.max() - xs.min()
            lin = sxx > 1e-10 * safe * max(span_x, 1.0) ** 2
            slope = np.where(lin, (w * dx * ys).sum(axis=1) / np.where(lin, sxx, 1.0), 0.0)
            fit = ybar + slope * (x[i] - xbar)
        out[:, i] = fit if ok.all() else np.where(ok, fit, plain(ys, axis=1))
    return out


def loess_smooth(x, y, span: float, degree: int = 1, weights=None) -> np.ndarray:
    """Locally weighted regression of y on x evaluated at every x_i.

    Each fit uses the ``ceil(span * n)`` nearest neighbours with tricube
    distance weights, multiplied by the optional robustness ``weights``.
    Degree 1 fits a line, degree 0 a weighted mean. A neighbourhood whose
    weights are all zero falls back to the unweighted mean of its y values.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.shape != x.shape:
        raise DecompError("x and y must be 1-d and equal length")
    if len(x) > 1 and np.any(np.diff(x) <= 0):
        raise DecompError("x must be strictly increasing")
    if degree not in (0, 1):
        raise DecompError("degree must be 0 or 1")
    if not 0.0 < span <= 1.0:
        raise DecompError("span must lie in (0, 1]")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape or np.any(w < 0):
        raise DecompError("weights must be non-negative and match y")
    return _loess_rows(x, y[None, :], w[None, :], span, degree)[0]


def _ma_kernel(window: int, period: int) -> np.ndarray:
    k = np.ones(window)
    if window == period + 1:
        # 2 x period moving average for even periods
        k[0] = k[-1] = 0.5
    return k / k.sum()


def moving_average_trend(y, window: int, period: int, weights=None):
    """Centred moving average with the ends filled from the nearest interior value.

    With robustness ``weights`` each window is a weighted average; a window
    whose weights are all zero falls back to the plain average.

    Returns
    -------
    trend : ndarray
    interior : slice
        Positions where the filter was fully defined.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    half = window // 2
    if n < window:
        raise DecompError(f"series of length {n} shorter than trend window {window}")
    k = _ma_kernel(window, period)
    plain = np.convolve(y, k[::-1], mode="valid")
    if weights is None:
        core = plain
    else:
        w = np.asarray(weights, dtype=float)
        num = np.convolve(w * y, k[::-1], mode="valid")
        den = np.convolve(w, k[::-1], mode="valid")
        ok = den > 1e-12
        core = np.where(ok, num / np.where(ok, den, 1.0), plain)
    trend = np.empty(n)
    trend[half:n - half] = core
    trend[:half] = core[0]
    trend[n - half:] = core[-1]
    return trend, slice(half, n - half)


def _check_length(n: int, period: int) -> None:
    if period < 2:
        raise DecompError(f"period must be at least 2, got {period}")
    if n < 2 * period:
        raise DecompError(f"need at least two full cycles ({2 * period}), got {n}")


def _center_per_cycle(seasonal: np.ndarray, period: int) -> np.ndarray:
    """Subtract each full cycle's mean; a trailing partial cycle uses the last one's."""
    n = len(seasonal)
    full = n // period
    means = seasonal[: full * period].reshape(full, period).mean(axis=1)
    offset = np.repeat(means, period)
    if n > full * period:
        offset = np.concatenate([offset, np.full(n - full * period, means[-1])])
    return seasonal - offset


def classical_decompose(series: TimeSeries, period: int) -> Decomposition:
    """Moving-average trend plus per-position seasonal means.

    Seasonal means use only the positions where the moving average is fully
    defined, so the filled trend ends do not leak into the seasonal estimate.
    """
    x = series.values
    n = len(x)
    _check_length(n, period)
    window = period if period % 2 else period + 1
    trend, interior = moving_average_trend(x, window, period)
    detrended = x - trend
    pos = np.arange(n) % period
    mask = np.zeros(n, dtype=bool)
    mask[interior] = True
    sums = np.bincount(pos[mask], weights=detrended[mask], minlength=period)
    counts = np.bincount(pos[mask], minlength=period)
    pattern = sums / counts
    pattern -= pattern.mean()
    seasonal = pattern[pos]
    residual = x - trend - seasonal
    return Decomposition(seasonal, trend, residual, float(np.median(x)))


def robustness_weights(residual) -> np.ndarray:
    """Bisquare weights of |r| / (6 * median|r|); all ones for a perfect fit."""
    r = np.abs(np.asarray(residual, dtype=float))
    h = 6.0 * np.median(r)
    if h == 0:
        return np.ones_like(r)
    return bisquare(r / h)


def _seasonal_loess(detrended, period, weights, span, degree):
    n = len(detrended)
    full = n // period
    extra = n - full * period
    out = np.empty(n)
    # sub-cycle series sharing a length share x positions; smooth them together
    groups = [(np.arange(extra), full + 1), (np.arange(extra, period), full)]
    for positions, length in groups:
        if len(positions) == 0:
            continue
        idx = positions[:, None] + period * np.arange(length)[None, :]
        # a sub-cycle rejected wholesale by the robustness weights usually
        # means one huge outlier poisoned the previous pass; a mean would
        # pull it straight back in
        fitted = _loess_rows(
            np.arange(length, dtype=float), detrended[idx], weights[idx], span, degree,
            fallback="median",
        )
        out[idx] = fitted
    return out


def stl_decompose(series: TimeSeries, config: StlConfig) -> Decomposition:
    """Iterative seasonal-trend decomposition with optional robustness weights.

    Inner loop: moving-average trend of the deseasonalised series, LOESS of
    each sub-cycle series of the detrended data, per-cycle centring. The loop
    runs ``inner_iterations`` times or until no component moves by more than
    ``convergence_epsilon`` times the data range.

    Outer loop: after each inner pass, bisquare weights of
    ``|R| / (6 median|R|)`` are computed and fed to the next pass, both into
    the LOESS fits and into the trend average.
    """
    x = series.values
    n = len(x)
    period = config.period
    _check_length(n, period)
    if config.trend_window > n:
        raise DecompError("trend_window longer than series")
    tol = config.convergence_epsilon * float(np.ptp(x))
    seasonal = np.zeros(n)
    trend = np.zeros(n)
    weights = np.ones(n)
    robust = None
    for outer in range(config.outer_iterations + 1):
        for _ in range(config.inner_iterations):
            new_trend, _ = moving_average_trend(
                x - seasonal, config.trend_window, period, robust
            )
            smoothed = _seasonal_loess(
                x - new_trend, period, weights,
                config.seasonal_loess_span, config.seasonal_degree,
            )
            new_seasonal = _center_per_cycle(smoothed, period)
            change = max(
                np.max(np.abs(new_seasonal - seasonal)), np.max(np.abs(new_trend - trend))
            )
            seasonal, trend = new_seasonal, new_trend
            if change <= tol:
                break
        if outer < config.outer_iterations:
            weights = robustness_weights(x - trend - seasonal)
            robust = weights
    residual = x - trend - seasonal
    return Decomposition(
        seasonal, trend, residual, float(np.median(x)), Variant.CLASSIC, robust
    )


def median_residual(series: TimeSeries, decomposition: Decomposition) -> Decomposition:
    """Swap the trend for the series median when forming the residual."""
    x = series.values
    if len(decomposition) != len(x):
        raise DecompError("decomposition does not match series length")
    med = float(np.median(x))
    return replace(
        decomposition,
        residual=x - decomposition.seasonal - med,
        series_median=med,
        variant=Variant.MEDIAN,
    )
