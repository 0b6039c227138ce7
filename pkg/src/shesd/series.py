"""Time-series container, CSV ingestion/emission and period inference."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IngestError, PeriodError

log = logging.getLogger(__name__)

# Samples per daily cycle keyed by cadence in seconds.
PERIOD_BY_CADENCE = {60: 1440, 3600: 24}

MAX_REPAIR_GAP = 10
DAY_SECONDS = 86400


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Regularly sampled univariate series.

    Parameters
    ----------
    timestamps : array of int
        Epoch seconds, strictly increasing with constant spacing.
    values : array of float
        Finite observations.
    cadence : int
        Spacing between consecutive timestamps in seconds.
    period : int or None
        Samples per seasonal cycle, when known.
    """

    timestamps: np.ndarray
    values: np.ndarray
    cadence: int
    period: int | None = None

    def __post_init__(self):
        ts = _frozen(self.timestamps, np.int64)
        vals = _frozen(self.values, np.float64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        if ts.ndim != 1 or vals.shape != ts.shape:
            raise IngestError("timestamps and values must be 1-d and equal length")
        if not np.all(np.isfinite(vals)):
            raise IngestError("values must be finite")
        if self.cadence <= 0:
            raise IngestError("cadence must be positive")
        if len(ts) > 1 and not np.all(np.diff(ts) == self.cadence):
            raise IngestError("timestamps are not evenly spaced at the cadence")
        if self.period is not None and self.period < 1:
            raise IngestError("period must be a positive integer")

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.cadence == other.cadence
            and self.period == other.period
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @classmethod
    def from_values(cls, values, cadence: int = 3600, start: int = 0, period=None):
        """Build a series on a synthetic clock starting at ``start``."""
        values = np.asarray(values, dtype=float)
        ts = start + cadence * np.arange(len(values), dtype=np.int64)
        return cls(ts, values, cadence, period)

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.timestamps, values, self.cadence, self.period)

    def with_period(self, period: int | None) -> "TimeSeries":
        return TimeSeries(self.timestamps, self.values, self.cadence, period)

    def tail(self, count: int) -> "TimeSeries":
        """Last ``count`` samples (the whole series when shorter)."""
        start = max(0, len(self) - count)
        return TimeSeries(
            self.timestamps[start:], self.values[start:], self.cadence, self.period
        )

    def window(self, start: int, stop: int) -> "TimeSeries":
        """Samples ``start`` to ``stop`` (exclusive) as a new series."""
        return TimeSeries(
            self.timestamps[start:stop], self.values[start:stop], self.cadence, self.period
        )

    def samples_per_day(self) -> int:
        if DAY_SECONDS % self.cadence:
            raise PeriodError(f"cadence {self.cadence}s does not divide a day")
        return DAY_SECONDS // self.cadence


@dataclass(frozen=True, eq=False)
class LabeledSeries:
    """A series with per-sample ground-truth anomaly labels."""

    series: TimeSeries
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = _frozen(self.labels, bool)
        if labels.shape != self.series.values.shape:
            raise IngestError("labels length must equal series length")
        object.__setattr__(self, "labels", labels)

    @property
    def truth(self) -> np.ndarray:
        return np.flatnonzero(self.labels)


def parse_timestamp(text: str) -> int:
    """Epoch seconds from an integer string or an ISO-8601 instant.

    Naive ISO times are taken as UTC.
    """
    text = text.strip()
    try:
        num = float(text)
    except ValueError:
        pass
    else:
        if not math.isfinite(num) or num != int(num):
            raise IngestError(f"timestamp {text!r} is not whole seconds")
        return int(num)
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError as exc:
        raise IngestError(f"unparsable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    # timedelta arithmetic keeps whole seconds exact
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    if delta.microseconds:
        raise IngestError(f"timestamp {text!r} is not whole seconds")
    return delta.days * DAY_SECONDS + delta.seconds


def _read_rows(path, columns: Sequence[str]) -> list[list[str]]:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: missing header")
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise IngestError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            cells = [rec[c] for c in columns]
            if any(c is None or not c.strip() for c in cells):
                raise IngestError(f"{path}:{lineno}: empty cell")
            rows.append(cells)
    return rows


def _parse_value(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise IngestError(f"{where}: unparsable value {text!r}") from exc
    if not math.isfinite(v):
        raise IngestError(f"{where}: non-finite value {text!r}")
    return v


def _repair(ts: np.ndarray, vals: np.ndarray, cadence: int):
    """Fill whole-cadence gaps of up to MAX_REPAIR_GAP samples linearly."""
    gaps = np.diff(ts) // cadence
    missing = gaps - 1
    if missing.max(initial=0) > MAX_REPAIR_GAP:
        raise IngestError(
            f"gap of {int(missing.max())} samples exceeds repair limit {MAX_REPAIR_GAP}"
        )
    full_ts = np.arange(ts[0], ts[-1] + cadence, cadence, dtype=np.int64)
    full_vals = np.interp(full_ts.astype(float), ts.astype(float), vals)
    # keep observed samples bit-exact
    full_vals[(ts - ts[0]) // cadence] = vals
    log.info("repaired %d missing samples", int(missing.sum()))
    return full_ts, full_vals


def load_csv(
    path,
    timestamp_col: str = "timestamp",
    value_col: str = "value",
    repair: bool = False,
    period: int | None = None,
) -> TimeSeries:
    """Read a two-column CSV into a :class:`TimeSeries`.

    Rows may appear in any order. The cadence is the smallest spacing between
    consecutive timestamps; every other spacing must equal it unless
    ``repair`` is set, in which case whole multiples of the cadence (at most
    ``MAX_REPAIR_GAP`` missing samples) are filled by linear interpolation.
    """
    rows = _read_rows(path, [timestamp_col, value_col])
    if len(rows) < 2:
        raise IngestError(f"{path}: need at least two rows")
    ts = np.array([parse_timestamp(r[0]) for r in rows], dtype=np.int64)
    vals = np.array(
        [_parse_value(r[1], f"{path}:{i + 2}") for i, r in enumerate(rows)]
    )
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    diffs = np.diff(ts)
    if np.any(diffs == 0):
        dup = ts[1:][diffs == 0][0]
        raise IngestError(f"{path}: duplicate timestamp {dup}")
    cadence = int(diffs.min())
    if np.any(diffs != cadence):
        if not repair:
            raise IngestError(f"{path}: irregular cadence (expected {cadence}s)")
        if np.any(diffs % cadence):
            raise IngestError(f"{path}: gap not a multiple of cadence {cadence}s")
        ts, vals = _repair(ts, vals, cadence)
    return TimeSeries(ts, vals, cadence, period)


def load_flags(path, column: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read ``timestamp`` plus a 0/1 column (``label`` or ``anomaly``).

    Returns timestamps and a boolean array, both sorted by timestamp.
    """
    if column is None:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
        for cand in ("label", "anomaly"):
            if cand in header:
                column = cand
                break
        else:
            raise IngestError(f"{path}: no label or anomaly column")
    rows = _read_rows(path, ["timestamp", column])
    ts = np.array([parse_timestamp(r[0]) for r in rows], dtype=np.int64)
    flags = []
    for i, r in enumerate(rows):
        if r[1].strip() not in ("0", "1"):
            raise IngestError(f"{path}:{i + 2}: {column} must be 0 or 1")
        flags.append(r[1].strip() == "1")
    order = np.argsort(ts, kind="stable")
    return ts[order], np.array(flags, dtype=bool)[order]


def infer_period(series: TimeSeries, hint: int | None = None) -> int:
    """Samples per seasonal cycle: ``hint`` if given, else the daily cycle.

    Only minute and hour cadences are recognised.
    """
    if hint is not None:
        if int(hint) != hint or hint < 1:
            raise PeriodError(f"period hint must be a positive integer, got {hint}")
        return int(hint)
    try:
        return PERIOD_BY_CADENCE[series.cadence]
    except KeyError:
        raise PeriodError(
            f"cannot infer period for cadence {series.cadence}s; supply one"
        ) from None


def fmt_float(v: float) -> str:
    # 17 significant digits round-trip every double exactly
    return format(float(v), ".17g")


def write_csv(series: TimeSeries, path, flags=None, scores=None) -> None:
    """Write ``timestamp,value`` and optionally ``anomaly,score`` columns."""
    n = len(series)
    if flags is not None:
        flags = np.asarray(flags, dtype=bool)
        if flags.shape != (n,):
            raise IngestError("flags must match series length")
        scores = np.zeros(n) if scores is None else np.asarray(scores, dtype=float)
        if scores.shape != (n,):
            raise IngestError("scores must match series length")
    try:
        fh = Path(path).open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        if flags is None:
            w.writerow(["timestamp", "value"])
            for t, v in zip(series.timestamps, series.values):
                w.writerow([int(t), fmt_float(v)])
        else:
            w.writerow(["timestamp", "value", "anomaly", "score"])
            for t, v, f, s in zip(series.timestamps, series.values, flags, scores):
                w.writerow([int(t), fmt_float(v), int(f), fmt_float(s) if f else "0"])
