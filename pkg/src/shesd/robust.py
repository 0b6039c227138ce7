"""Classical and robust summary statistics, plus moving-average smoothers.

The smoothers (SMA, EWMA, PEWMA) exist as baselines; none of them is used by
the seasonal detectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import StatError

MAD_NORMAL_SCALE = 1.4826
SIGMA_FLOOR = 1e-9


def _as_array(values, min_len: int) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise StatError("expected a 1-d sequence")
    if len(x) < min_len:
        raise StatError(f"need at least {min_len} value(s), got {len(x)}")
    return x


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    sample_std: float
    median: float
    mad: float
    mad_consistency_scale: float = MAD_NORMAL_SCALE

    @property
    def scaled_mad(self) -> float:
        return self.mad_consistency_scale * self.mad


def summarize(values, mad_scale: float = MAD_NORMAL_SCALE) -> SummaryStats:
    m, s = mean_std(values)
    return SummaryStats(m, s, median(values), mad(values), mad_scale)


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 denominator)."""
    x = _as_array(values, 2)
    m = float(x.mean())
    return m, float(np.sqrt(np.sum((x - m) ** 2) / (len(x) - 1)))


def median(values) -> float:
    x = _as_array(values, 1)
    return float(np.median(x))


def mad(values) -> float:
    """Median absolute deviation from the median, without consistency scaling."""
    x = _as_array(values, 1)
    return float(np.median(np.abs(x - np.median(x))))


def sma(values, window: int) -> np.ndarray:
    """Trailing simple moving average.

    Element ``i`` of the result is the mean of ``values[i:i + window]``, i.e.
    the average of the window that ends at input index ``i + window - 1``.
    """
    x = _as_array(values, 1)
    if window < 1 or window > len(x):
        raise StatError(f"window must be in [1, {len(x)}], got {window}")
    if window == 1:
        return x.copy()
    return sliding_window_view(x, window).mean(axis=1)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise StatError(f"alpha must lie in (0, 1], got {alpha}")


def ewma(values, alpha: float) -> np.ndarray:
    """Exponentially weighted moving average seeded with the first sample."""
    _check_alpha(alpha)
    x = _as_array(values, 1)
    out = np.empty_like(x)
    y = out[0] = x[0]
    for t in range(1, len(x)):
        y = alpha * x[t] + (1.0 - alpha) * y
        out[t] = y
    return out


def pewma(values, alpha: float, beta: float) -> np.ndarray:
    """Probabilistic EWMA.

    The weight on each new sample is ``alpha * (1 - beta * p)`` where ``p`` is
    the Gaussian probability mass lying closer to the running mean than the
    sample does (``erf(|z| / sqrt(2))``). Ordinary points keep the full EWMA
    weight while improbable ones are discounted, down to ``alpha * (1 - beta)``.
    The running standard deviation is floored at ``SIGMA_FLOOR``.

    Returns the sequence of running means.
    """
    _check_alpha(alpha)
    if not 0.0 <= beta <= 1.0:
        raise StatError(f"beta must lie in [0, 1], got {beta}")
    x = _as_array(values, 1)
    out = np.empty_like(x)
    mu = out[0] = x[0]
    var = 0.0
    for t in range(1, len(x)):
        sigma = max(math.sqrt(var), SIGMA_FLOOR)
        z = (x[t] - mu) / sigma
        p = math.erf(abs(z) / math.sqrt(2.0))
        a = alpha * (1.0 - beta * p)
        diff = x[t] - mu
        mu = a * x[t] + (1.0 - a) * mu
        var = (1.0 - a) * (var + a * diff * diff)
        out[t] = mu
    return out
