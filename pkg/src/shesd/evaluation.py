"""Supervised evaluation: scoring, B-spline baselines, anomaly injection,
synthetic seasonal series and corpus runs.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import make_lsq_spline

from .detectors import DetectorConfig, detect
from .errors import EvalError
from .series import LabeledSeries, TimeSeries, fmt_float

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["series", "detector", "tp", "fp", "fn", "precision", "recall", "f_beta"]


@dataclass(frozen=True)
class EvalMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f_beta: float
    beta: float = 1.0


def f_beta(precision: float, recall: float, beta: float = 1.0) -> float:
    """Weighted harmonic mean of precision and recall; beta=0 gives precision."""
    if beta < 0:
        raise EvalError("beta must be non-negative")
    if beta == 0:
        return precision
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1 + b2) * precision * recall / denom


def match(detected, truth, tolerance: int = 0) -> list[tuple[int, int]]:
    """Greedy one-to-one matching of detections to truth within ``tolerance``.

    Closest pairs are matched first; ties go to the lower truth index, then
    the lower detected index.
    """
    det = sorted(set(int(i) for i in detected))
    tru = sorted(set(int(i) for i in truth))
    tru_arr = np.asarray(tru, dtype=np.int64)
    pairs = []
    for d in det:
        lo = np.searchsorted(tru_arr, d - tolerance, side="left")
        hi = np.searchsorted(tru_arr, d + tolerance, side="right")
        for g in tru[lo:hi]:
            pairs.append((abs(d - g), g, d))
    pairs.sort()
    used_d, used_g, out = set(), set(), []
    for _, g, d in pairs:
        if d in used_d or g in used_g:
            continue
        used_d.add(d)
        used_g.add(g)
        out.append((d, g))
    return out


def score(detected, truth, n: int, beta: float = 1.0, tolerance: int = 0) -> EvalMetrics:
    """Precision, recall and F-beta of detected indices against ground truth.

    Empty denominators: precision is 1 when nothing was detected and nothing
    was there to find (0 otherwise); recall is 1 when the truth is empty.
    """
    det = set(int(i) for i in detected)
    tru = set(int(i) for i in truth)
    if any(i < 0 or i >= n for i in det | tru):
        raise EvalError(f"indices must lie in [0, {n})")
    if tolerance < 0:
        raise EvalError("tolerance must be non-negative")
    tp = len(match(det, tru, tolerance))
    fp = len(det) - tp
    fn = len(tru) - tp
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 1.0 if not tru else 0.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return EvalMetrics(tp, fp, fn, precision, recall, f_beta(precision, recall, beta), beta)


def bspline_smooth(series: TimeSeries, knot_spacing: int) -> TimeSeries:
    """Least-squares cubic B-spline with a knot every ``knot_spacing`` samples.

    The mean is removed before fitting and added back, so a constant input
    comes back unchanged.
    """
    n = len(series)
    if knot_spacing < 1:
        raise EvalError("knot_spacing must be positive")
    if n < 4 * knot_spacing or n < 4:
        raise EvalError(f"need at least {4 * knot_spacing} points, got {n}")
    x = np.arange(n, dtype=float)
    interior = np.arange(knot_spacing, n - 1, knot_spacing, dtype=float)
    knots = np.concatenate([[0.0] * 4, interior, [n - 1.0] * 4])
    y = series.values
    centre = float(y.mean())
    spline = make_lsq_spline(x, y - centre, knots, k=3)
    return series.with_values(spline(x) + centre)


@dataclass(frozen=True)
class InjectionSpec:
    """How many anomalies to add and how to draw them.

    Magnitudes are in units of the residual standard deviation; widths in
    samples. ``direction_mix`` is the probability of an upward anomaly.
    """

    count: int
    magnitude_range: tuple[float, float] = (8.0, 12.0)
    width_range: tuple[int, int] = (1, 1)
    direction_mix: float = 0.5
    seed: int = 0
    min_gap: int = 1

    def __post_init__(self):
        lo, hi = self.magnitude_range
        wlo, whi = self.width_range
        if self.count < 0:
            raise EvalError("count must be non-negative")
        if not 0 < lo <= hi:
            raise EvalError("magnitude_range must be a positive interval")
        if not 1 <= wlo <= whi:
            raise EvalError("width_range must be an interval of integers >= 1")
        if not 0.0 <= self.direction_mix <= 1.0:
            raise EvalError("direction_mix must lie in [0, 1]")
        if self.min_gap < 0:
            raise EvalError("min_gap must be non-negative")

    def with_seed(self, seed: int) -> "InjectionSpec":
        return InjectionSpec(
            self.count, self.magnitude_range, self.width_range,
            self.direction_mix, seed, self.min_gap,
        )


@dataclass(frozen=True, eq=False)
class Injection:
    start: int
    width: int
    magnitude: float  # signed, in series units


@dataclass(frozen=True, eq=False)
class InjectedSeries(LabeledSeries):
    injections: tuple = field(default=())
    sigma: float = 0.0


def inject(baseline: TimeSeries, spec: InjectionSpec, raw: TimeSeries | None = None,
           sigma: float | None = None) -> InjectedSeries:
    """Add ``spec.count`` rectangular anomalies to ``baseline``.

    The unit magnitude is ``sigma`` if given, else the sample std of
    ``raw - baseline``. Widths, magnitudes and signs are drawn first, then the
    free slack is split at uniform random points so intervals never overlap
    and stay ``min_gap`` apart.
    """
    n = len(baseline)
    if sigma is None:
        if raw is None:
            raise EvalError("inject needs the raw series or an explicit sigma")
        if len(raw) != n:
            raise EvalError("raw and baseline lengths differ")
        sigma = float(np.std(raw.values - baseline.values, ddof=1))
    if spec.count and spec.count * (spec.width_range[1] + spec.min_gap) >= n:
        raise EvalError("injection spec does not fit in the series")
    rng = np.random.default_rng(spec.seed)
    values = baseline.values.copy()
    labels = np.zeros(n, dtype=bool)
    if spec.count == 0:
        return InjectedSeries(baseline, labels, (), sigma)
    widths = rng.integers(spec.width_range[0], spec.width_range[1] + 1, spec.count)
    mags = rng.uniform(*spec.magnitude_range, spec.count) * sigma
    signs = np.where(rng.random(spec.count) < spec.direction_mix, 1.0, -1.0)
    slack = n - int(widths.sum()) - (spec.count - 1) * spec.min_gap
    offsets = np.sort(rng.integers(0, slack + 1, spec.count))
    injections = []
    cursor = 0
    for w, m, s, off in zip(widths, mags, signs, offsets):
        start = cursor + int(off)
        values[start:start + w] += s * m
        labels[start:start + w] = True
        injections.append(Injection(start, int(w), float(s * m)))
        cursor += int(w) + spec.min_gap
    return InjectedSeries(baseline.with_values(values), labels, tuple(injections), sigma)


def generate_seasonal(period: int, cycles: int, amplitude: float = 10.0,
                      trend_slope: float = 0.0, noise_sigma: float = 1.0,
                      modes: int = 1, seed: int = 0, cadence: int = 3600,
                      start: int = 0) -> TimeSeries:
    """Sum of ``modes`` harmonics (amplitude/k each) plus a linear trend and noise."""
    if cycles < 2:
        raise EvalError("need at least two cycles")
    if modes < 1:
        raise EvalError("modes must be positive")
    rng = np.random.default_rng(seed)
    n = period * cycles
    t = np.arange(n, dtype=float)
    phases = rng.uniform(0.0, 2.0 * math.pi, modes)
    x = np.zeros(n)
    for k in range(1, modes + 1):
        x += amplitude / k * np.sin(2.0 * math.pi * k * t / period + phases[k - 1])
    x += trend_slope * t
    if noise_sigma > 0:
        x += rng.normal(0.0, noise_sigma, n)
    return TimeSeries.from_values(x, cadence=cadence, start=start, period=period)


def local_spike_fixture(seed: int, spike: float = 8.0, day: int = 6) -> LabeledSeries:
    """Two weeks of an hourly sinusoid (amplitude 10, noise 0.1) with ``spike``
    added at the trough of ``day``. The spike stays inside the global range.
    """
    base = generate_seasonal(24, 14, 10.0, 0.0, 0.1, 1, seed)
    x = base.values.copy()
    lo = 24 * day
    pos = lo + int(np.argmin(x[lo:lo + 24]))
    x[pos] += spike
    labels = np.zeros(len(x), dtype=bool)
    labels[pos] = True
    return LabeledSeries(base.with_values(x), labels)


def contamination_fixture(seed: int, fraction: float = 0.3,
                          shift: float = 10.0) -> LabeledSeries:
    """Two weeks of an hourly sinusoid (amplitude 10, unit noise) with one
    contiguous block of ``round(fraction * n)`` points raised by ``shift``
    noise sigmas at a seeded position.
    """
    base = generate_seasonal(24, 14, 10.0, 0.0, 1.0, 1, seed)
    n = len(base)
    width = int(round(fraction * n))
    if not 0 < width < n:
        raise EvalError("fraction must leave a non-empty, proper block")
    start = int(np.random.default_rng(seed + 10_000).integers(0, n - width + 1))
    x = base.values.copy()
    x[start:start + width] += shift
    labels = np.zeros(n, dtype=bool)
    labels[start:start + width] = True
    return LabeledSeries(base.with_values(x), labels)


def synthetic_corpus(count: int = 20, period: int = 24, cycles: int = 16,
                     seed: int = 123, series_seed: int = 1000,
                     cadence: int = 3600) -> list[tuple[str, TimeSeries]]:
    """Named seasonal series with randomized shape for corpus runs.

    Per series: amplitude U(5, 20), noise sigma amplitude * U(0.02, 0.1),
    1 to 3 harmonics, no trend. Shape parameters come from ``seed``; series
    ``i`` draws its phases and noise from ``series_seed + i``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        amp = rng.uniform(5.0, 20.0)
        noise = amp * rng.uniform(0.02, 0.1)
        modes = int(rng.integers(1, 4))
        ts = generate_seasonal(period, cycles, amp, 0.0, noise, modes,
                               series_seed + i, cadence)
        out.append((f"synthetic_{i:02d}", ts))
    return out


@dataclass
class CorpusResult:
    rows: list[dict]
    beta: float

    def aggregate(self) -> dict[str, dict]:
        """Mean tp/fp/fn and metrics per detector, in first-seen order."""
        out: dict[str, dict] = {}
        for name in dict.fromkeys(r["detector"] for r in self.rows):
            sel = [r for r in self.rows if r["detector"] == name]
            out[name] = {
                k: float(np.mean([r[k] for r in sel]))
                for k in ("tp", "fp", "fn", "precision", "recall", "f_beta")
            }
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            write_results(fh, self.rows, self.aggregate())


def write_results(fh, rows, aggregate=None) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow(_result_cells(r))
    for name, agg in (aggregate or {}).items():
        w.writerow(_result_cells({"series": "__mean__", "detector": name, **agg}))


def _result_cells(r) -> list[str]:
    cells = [r["series"], r["detector"]]
    for k in ("tp", "fp", "fn"):
        v = r[k]
        cells.append(str(int(v)) if float(v).is_integer() else fmt_float(v))
    cells += [fmt_float(r[k]) for k in ("precision", "recall", "f_beta")]
    return cells


def _corpus_cell(args):
    name, raw, configs, spec, beta, tolerance, knot_spacing, trim = args
    baseline = bspline_smooth(raw, knot_spacing)
    if trim:
        # the spline's end coefficients rest on a handful of samples
        stop = len(raw) - trim
        raw, baseline = raw.window(trim, stop), baseline.window(trim, stop)
    labeled = inject(baseline, spec, raw=raw)
    rows = []
    for det_name, cfg in configs.items():
        report = detect(labeled.series, cfg)
        m = score(report.indices, labeled.truth, len(raw), beta, tolerance)
        rows.append({
            "series": name, "detector": det_name, "tp": m.tp, "fp": m.fp,
            "fn": m.fn, "precision": m.precision, "recall": m.recall,
            "f_beta": m.f_beta,
        })
    return rows


def run_corpus(series_set: Sequence[tuple[str, TimeSeries]],
               configs: Mapping[str, DetectorConfig], spec: InjectionSpec,
               beta: float = 1.0, tolerance: int = 0,
               knot_spacing: int | None = None, jobs: int = 1,
               trim: int = 0) -> CorpusResult:
    """Smooth, inject, detect and score every series with every detector.

    Series ``i`` is injected with seed ``spec.seed + i``; ``knot_spacing``
    defaults to an eighth of each series' period. ``trim`` samples are cut
    from both ends of the smoothed baseline (and of the raw series used for
    the noise scale) before injection, discarding the poorly constrained
    spline ends.
    """
    if not series_set or not configs:
        raise EvalError("run_corpus needs at least one series and one detector")
    if trim < 0:
        raise EvalError("trim must be non-negative")
    tasks = []
    for i, (name, raw) in enumerate(series_set):
        ks = knot_spacing
        if ks is None:
            if raw.period is None:
                raise EvalError(f"series {name!r} has no period; pass knot_spacing")
            ks = max(1, raw.period // 8)
        if len(raw) - 2 * trim < 4 * ks:
            raise EvalError(f"series {name!r} too short for trim={trim}")
        tasks.append((name, raw, dict(configs), spec.with_seed(spec.seed + i),
                      beta, tolerance, ks, trim))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_corpus_cell, tasks))
    else:
        chunks = [_corpus_cell(t) for t in tasks]
    return CorpusResult([r for chunk in chunks for r in chunk], beta)


def write_labels(labeled: LabeledSeries, path) -> None:
    """``timestamp,label`` CSV for a labeled series."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "label"])
        for t, lab in zip(labeled.series.timestamps, labeled.labels):
            w.writerow([int(t), int(lab)])
