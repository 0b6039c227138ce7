"""Anomaly tests: three-sigma, Grubbs, generalized ESD (classical and hybrid)
and the seasonal pipelines S-ESD / S-H-ESD built on them.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .decompose import StlConfig, median_residual, stl_decompose
from .errors import ConfigError, StatError
from .robust import MAD_NORMAL_SCALE, mean_std
from .series import TimeSeries, infer_period
from .tdist import t_quantile


class Algorithm(str, Enum):
    THREE_SIGMA = "three_sigma"
    GRUBBS = "grubbs"
    ESD = "esd"
    S_ESD = "s_esd"
    S_H_ESD = "s_h_esd"


class Direction(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    BOTH = "both"

    def keeps(self, sign: int) -> bool:
        if self is Direction.BOTH:
            return True
        return (sign > 0) == (self is Direction.POSITIVE)


class ThresholdMode(str, Enum):
    ABOVE_VALUE = "above_value"
    ABOVE_DEVIATION = "above_deviation"


MAX_ANOMS_CAP = 0.49
RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class DetectorConfig:
    algorithm: Algorithm = Algorithm.S_H_ESD
    alpha: float = 0.05
    max_anoms: float = 0.10
    direction: Direction = Direction.BOTH
    period: int | None = None
    threshold: float | None = None
    threshold_mode: ThresholdMode = ThresholdMode.ABOVE_VALUE
    mad_scale: float = MAD_NORMAL_SCALE

    def __post_init__(self):
        for name, enum in (
            ("algorithm", Algorithm),
            ("direction", Direction),
            ("threshold_mode", ThresholdMode),
        ):
            val = getattr(self, name)
            if not isinstance(val, enum):
                try:
                    object.__setattr__(self, name, enum(str(val).replace("-", "_")))
                except ValueError:
                    raise ConfigError(f"unknown {name} {val!r}") from None
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.max_anoms <= MAX_ANOMS_CAP:
            raise ConfigError(f"max_anoms must lie in (0, {MAX_ANOMS_CAP}], got {self.max_anoms}")
        if self.period is not None and self.period < 1:
            raise ConfigError("period must be a positive integer")
        if self.threshold is not None and not math.isfinite(self.threshold):
            raise ConfigError("threshold must be finite")
        if not self.mad_scale > 0:
            raise ConfigError("mad_scale must be positive")

    def k_max(self, n: int) -> int:
        return math.ceil(self.max_anoms * n)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("algorithm", "direction", "threshold_mode"):
            d[key] = d[key].value
        return d


@dataclass(frozen=True, eq=False)
class AnomalyReport:
    """Detected anomalies in index order.

    ``scores`` are the test statistics at the time each point was flagged,
    ``deviations`` the signed distance from the location estimate then in use
    (for the seasonal detectors, measured on the residual).
    """

    indices: np.ndarray
    timestamps: np.ndarray
    values: np.ndarray
    scores: np.ndarray
    directions: np.ndarray
    deviations: np.ndarray
    n: int
    config: DetectorConfig = field(default_factory=DetectorConfig)

    def __len__(self):
        return len(self.indices)

    @property
    def percent_anomalous(self) -> float:
        return 100.0 * len(self.indices) / self.n if self.n else 0.0

    def flags(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        out[self.indices] = True
        return out

    def score_array(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.indices] = self.scores
        return out

    def subset(self, keep) -> "AnomalyReport":
        keep = np.asarray(keep, dtype=bool)
        return AnomalyReport(
            self.indices[keep], self.timestamps[keep], self.values[keep],
            self.scores[keep], self.directions[keep], self.deviations[keep],
            self.n, self.config,
        )


def _report(series: TimeSeries, config: DetectorConfig, idx, scores, signs, devs):
    idx = np.asarray(idx, dtype=np.int64)
    order = np.argsort(idx, kind="stable")
    idx = idx[order]
    return AnomalyReport(
        idx,
        series.timestamps[idx],
        series.values[idx],
        np.asarray(scores, dtype=float)[order],
        np.asarray(signs, dtype=np.int8)[order],
        np.asarray(devs, dtype=float)[order],
        len(series),
        config,
    )


def esd_critical(n: int, j: int, alpha: float) -> float:
    """Critical value lambda_j for the j-th removal out of n observations."""
    m = n - j
    tp = t_quantile(1.0 - alpha / (2.0 * (m + 1)), m - 1)
    return m * tp / math.sqrt((m - 1 + tp * tp) * (m + 1))


def grubbs_critical(n: int, alpha: float) -> float:
    t = t_quantile(1.0 - alpha / (2.0 * n), n - 2)
    return (n - 1) / math.sqrt(n) * math.sqrt(t * t / (n - 2 + t * t))


@dataclass(frozen=True)
class EsdResult:
    """Outcome of a generalized ESD run.

    ``removed``/``statistics``/``signs``/``deviations`` describe every step
    that ran, in removal order; the first ``count`` of them are anomalies.
    """

    removed: np.ndarray
    statistics: np.ndarray
    signs: np.ndarray
    deviations: np.ndarray
    count: int
    n: int

    def anomalies(self, direction: Direction = Direction.BOTH) -> np.ndarray:
        """Positions of the anomalies in removal order, filtered by sign."""
        keep = [
            i for i in range(self.count) if direction.keeps(int(self.signs[i]))
        ]
        return np.asarray(keep, dtype=np.int64)


def _pick_in_run(order, vals, lo, hi, at_low):
    """Move the lowest original index among values tied at a window end to that end."""
    if at_low:
        end = lo
        stop = lo + int(np.searchsorted(vals[lo:hi], vals[lo], side="right"))
        run = slice(lo, stop)
    else:
        end = hi - 1
        start = lo + int(np.searchsorted(vals[lo:hi], vals[hi - 1], side="left"))
        run = slice(start, hi)
    if run.stop - run.start > 1:
        best = run.start + int(np.argmin(order[run]))
        order[[end, best]] = order[[best, end]]
    return end


def _sorted_mad(vals, lo: int, hi: int, loc: float) -> float:
    """MAD of the sorted slice vals[lo:hi] about ``loc`` in O(log n).

    Deviations below ``loc`` read backwards and those above it read forwards
    are two sorted sequences; their k-th smallest element is found by
    bisecting on how many come from the lower side.
    """
    split = bisect_left(vals, loc, lo, hi)
    na, nb = split - lo, hi - split

    def below(i):
        return loc - vals[split - 1 - i]

    def above(i):
        return vals[split + i] - loc

    def kth(k):
        take = k + 1
        a, b = max(0, take - nb), min(take, na)
        while a < b:
            i = (a + b) // 2
            if below(i) < above(take - i - 1):
                a = i + 1
            else:
                b = i
        best = -math.inf
        if a > 0:
            best = below(a - 1)
        if take - a > 0:
            best = max(best, above(take - a - 1))
        return best

    m = hi - lo
    if m % 2:
        return kth(m // 2)
    return 0.5 * (kth(m // 2 - 1) + kth(m // 2))


def esd_steps(values, k_max: int, alpha: float, hybrid: bool = False,
              mad_scale: float = MAD_NORMAL_SCALE, min_spread: float = 0.0) -> EsdResult:
    """Generalized ESD: remove up to ``k_max`` extreme points one at a time.

    At step j the statistic is ``max |x - loc| / scale`` over the points still
    present, where (loc, scale) is (mean, sample std) or, when ``hybrid``,
    (median, ``mad_scale`` * MAD). The number of anomalies is the largest j
    whose statistic exceeds ``esd_critical(n, j, alpha)``. The run stops early
    once the scale is at or below ``min_spread``.

    The farthest point from any location is always the current minimum or
    maximum, so the data are sorted once and consumed from both ends. Ties in
    the statistic go to the lowest original index.
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    if k_max < 1:
        raise ConfigError("k_max must be at least 1")
    if k_max >= n - 2:
        raise ConfigError(f"k_max={k_max} must be below n - 2 = {n - 2}")
    order = np.argsort(x, kind="stable")
    vals = x[order]
    vlist = vals.tolist()
    lo, hi = 0, n
    if not hybrid:
        # running moments about a fixed centre to limit cancellation
        centre = vals[n // 2]
        dev = vals - centre
        mean = float(dev.mean())
        m2 = float(np.sum((dev - mean) ** 2))
    removed, stats, signs, devs = [], [], [], []
    for j in range(1, k_max + 1):
        m = hi - lo
        if hybrid:
            half = lo + m // 2
            loc = vlist[half] if m % 2 else 0.5 * (vlist[half - 1] + vlist[half])
            spread = mad_scale * _sorted_mad(vlist, lo, hi, loc)
        else:
            loc = centre + mean
            spread = math.sqrt(max(m2, 0.0) / (m - 1))
        if spread <= min_spread:
            break
        d_low = loc - vals[lo]
        d_high = vals[hi - 1] - loc
        if d_high > d_low:
            pos = _pick_in_run(order, vals, lo, hi, False)
        elif d_low > d_high:
            pos = _pick_in_run(order, vals, lo, hi, True)
        else:
            p_lo = _pick_in_run(order, vals, lo, hi, True)
            p_hi = _pick_in_run(order, vals, lo, hi, False)
            pos = p_lo if order[p_lo] < order[p_hi] else p_hi
        at_low = pos == lo
        dist = d_low if at_low else d_high
        removed.append(int(order[pos]))
        stats.append(dist / spread)
        signs.append(-1 if at_low else 1)
        devs.append(-dist if at_low else dist)
        if not hybrid:
            xr = vals[pos] - centre
            new_mean = (m * mean - xr) / (m - 1)
            m2 -= (xr - mean) * (xr - new_mean)
            mean = new_mean
        if at_low:
            lo += 1
        else:
            hi -= 1
    stats_arr = np.asarray(stats)
    count = _significant_count(stats_arr, n, alpha)
    return EsdResult(
        np.asarray(removed, dtype=np.int64), stats_arr,
        np.asarray(signs, dtype=np.int8), np.asarray(devs), count, n,
    )


def _significant_count(stats: np.ndarray, n: int, alpha: float) -> int:
    """Largest j with stats[j-1] > lambda_j, 0 if none.

    lambda_j decreases in j, so a statistic not above the last critical value
    cannot beat its own; only the remaining candidates need a quantile.
    """
    k = len(stats)
    if k == 0:
        return 0
    floor = esd_critical(n, k, alpha)
    for j in range(k, 0, -1):
        c = stats[j - 1]
        if c <= floor:
            continue
        if j == k or c > esd_critical(n, j, alpha):
            return j
    return 0


def esd(values, alpha: float = 0.05, k_max: int = 1, hybrid: bool = False,
        mad_scale: float = MAD_NORMAL_SCALE, direction=Direction.BOTH):
    """Generalized ESD anomaly indices and their statistics.

    Returns ``(indices, scores)``: positions into ``values`` in removal order
    and the statistic each had when removed.
    """
    res = esd_steps(values, k_max, alpha, hybrid, mad_scale)
    keep = res.anomalies(Direction(direction))
    return res.removed[keep], res.statistics[keep]


def _cap(idx, scores, signs, devs, k):
    if len(idx) <= k:
        return idx, scores, signs, devs
    top = np.argsort(-scores, kind="stable")[:k]
    return idx[top], scores[top], signs[top], devs[top]


def three_sigma(series: TimeSeries, config: DetectorConfig | None = None) -> AnomalyReport:
    """Flag points more than three sample standard deviations from the mean."""
    config = config or DetectorConfig(Algorithm.THREE_SIGMA)
    x = series.values
    if len(x) < 2:
        raise StatError("three_sigma needs at least two points")
    m, s = mean_std(x)
    empty = _report(series, config, [], [], [], [])
    if s == 0:
        return empty
    dev = x - m
    z = np.abs(dev) / s
    hit = z > 3.0
    signs = np.sign(dev).astype(np.int8)
    hit &= np.array([config.direction.keeps(int(g)) for g in signs], dtype=bool)
    idx = np.flatnonzero(hit)
    idx, sc, sg, dv = _cap(idx, z[idx], signs[idx], dev[idx], config.k_max(len(x)))
    return _finish(series, config, idx, sc, sg, dv)


def grubbs(series: TimeSeries, alpha: float = 0.05,
           config: DetectorConfig | None = None) -> AnomalyReport:
    """Two-sided Grubbs test for a single outlier."""
    config = config or DetectorConfig(Algorithm.GRUBBS, alpha=alpha)
    x = series.values
    n = len(x)
    if n < 3:
        raise StatError("grubbs needs at least three points")
    m, s = mean_std(x)
    if s == 0:
        return _report(series, config, [], [], [], [])
    dev = x - m
    i = int(np.argmax(np.abs(dev)))
    g = abs(dev[i]) / s
    sign = 1 if dev[i] > 0 else -1
    if g > grubbs_critical(n, config.alpha) and config.direction.keeps(sign):
        return _finish(series, config, [i], [g], [sign], [dev[i]])
    return _report(series, config, [], [], [], [])


def _run_esd(series, config, data, hybrid, min_spread=0.0):
    n = len(data)
    k = config.k_max(n)
    res = esd_steps(data, k, config.alpha, hybrid, config.mad_scale, min_spread)
    keep = res.anomalies(config.direction)
    return _finish(
        series, config, res.removed[keep], res.statistics[keep],
        res.signs[keep], res.deviations[keep],
    )


def _finish(series, config, idx, scores, signs, devs):
    report = _report(series, config, idx, scores, signs, devs)
    if config.threshold is not None:
        report = apply_threshold(report, config.threshold, config.threshold_mode)
    return report


def generalized_esd(series: TimeSeries, config: DetectorConfig) -> AnomalyReport:
    """Classical generalized ESD on the raw values (no decomposition)."""
    return _run_esd(series, config, series.values, hybrid=False)


def _seasonal_residual(series: TimeSeries, config: DetectorConfig) -> np.ndarray:
    period = config.period or series.period or infer_period(series)
    n = len(series)
    if period < 2 or n < 2 * period:
        raise ConfigError(
            f"seasonal detection needs period >= 2 and at least 2 cycles "
            f"(period={period}, n={n})"
        )
    decomp = stl_decompose(series, StlConfig(period=period))
    return median_residual(series, decomp).residual


def _rounding_floor(series: TimeSeries) -> float:
    # residual spread this small relative to the data is rounding error
    return RESIDUAL_RTOL * float(np.abs(series.values).max())


def s_esd(series: TimeSeries, config: DetectorConfig | None = None) -> AnomalyReport:
    """Seasonal ESD: classical generalized ESD on the median-variant residual."""
    config = config or DetectorConfig(Algorithm.S_ESD)
    return _run_esd(series, config, _seasonal_residual(series, config), False,
                    _rounding_floor(series))


def s_h_esd(series: TimeSeries, config: DetectorConfig | None = None) -> AnomalyReport:
    """Seasonal hybrid ESD: median and scaled MAD replace mean and std."""
    config = config or DetectorConfig(Algorithm.S_H_ESD)
    return _run_esd(series, config, _seasonal_residual(series, config), True,
                    _rounding_floor(series))


def apply_threshold(report: AnomalyReport, threshold: float,
                    mode=ThresholdMode.ABOVE_VALUE) -> AnomalyReport:
    """Keep anomalies whose value (or |deviation|) is strictly above ``threshold``."""
    mode = ThresholdMode(mode)
    if mode is ThresholdMode.ABOVE_VALUE:
        keep = report.values > threshold
    else:
        keep = np.abs(report.deviations) > threshold
    return report.subset(keep)


_DISPATCH = {
    Algorithm.THREE_SIGMA: three_sigma,
    Algorithm.GRUBBS: lambda s, c: grubbs(s, c.alpha, c),
    Algorithm.ESD: generalized_esd,
    Algorithm.S_ESD: s_esd,
    Algorithm.S_H_ESD: s_h_esd,
}


def detect(series: TimeSeries, config: DetectorConfig) -> AnomalyReport:
    """Run the detector named by ``config.algorithm``."""
    return _DISPATCH[config.algorithm](series, config)
