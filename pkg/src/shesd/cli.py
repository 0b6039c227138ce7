"""Command-line front end.

Subcommands: ``detect``, ``decompose``, ``inject``, ``evaluate`` and
``report``. Exit codes: 0 clean, 1 error, 2 anomalies found with
``--fail-on-anomaly``, 3 report generated.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .decompose import StlConfig, Variant, median_residual, stl_decompose
from .detectors import (
    Algorithm,
    AnomalyReport,
    DetectorConfig,
    Direction,
    ThresholdMode,
    detect,
)
from .errors import AnomalyError, EvalError
from .evaluation import (
    InjectionSpec,
    bspline_smooth,
    inject,
    run_corpus,
    score,
    synthetic_corpus,
    write_labels,
    write_results,
)
from .series import (
    DAY_SECONDS,
    PERIOD_BY_CADENCE,
    TimeSeries,
    fmt_float,
    infer_period,
    load_csv,
    load_flags,
    write_csv,
)

log = logging.getLogger("shesd")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ANOMALY = 2
EXIT_REPORT = 3

SCHEMA_VERSION = 1
REPORT_DAYS = 14

_EXIT_MEANING = {
    EXIT_OK: "clean",
    EXIT_ERROR: "error",
    EXIT_ANOMALY: "anomalies found",
    EXIT_REPORT: "report generated",
}


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with every other error; 2 is reserved
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _choice(enum):
    return [m.value.replace("_", "-") for m in enum]


def _add_detector_flags(p: argparse.ArgumentParser, algo: bool = True) -> None:
    if algo:
        p.add_argument("--algo", default="s-h-esd", choices=_choice(Algorithm))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-anoms", type=float, default=0.10)
    p.add_argument("--direction", default="both", choices=_choice(Direction))
    p.add_argument("--period", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--threshold-mode", default="above-value", choices=_choice(ThresholdMode))


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="CSV with timestamp,value columns")
    p.add_argument("--timestamp-col", default="timestamp")
    p.add_argument("--value-col", default="value")
    p.add_argument("--repair", action="store_true",
                   help="fill short whole-cadence gaps by linear interpolation")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="shesd", description="Seasonal ESD anomaly detection for time series."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="flag anomalies in a series")
    _add_input_flags(p)
    _add_detector_flags(p)
    p.add_argument("--window-days", type=int,
                   help="analyse only the trailing D days (default: whole series)")
    p.add_argument("--out", help="output prefix for <out>.csv and <out>.json")
    p.add_argument("--fail-on-anomaly", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("decompose", help="write seasonal, trend and residual columns")
    _add_input_flags(p)
    p.add_argument("--period", type=int)
    p.add_argument("--variant", default="median", choices=["median", "classic"])
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("inject", help="smooth a series and inject labeled anomalies")
    _add_input_flags(p)
    p.add_argument("--period", type=int)
    p.add_argument("--seed", type=int, required=True)
    _add_injection_flags(p)
    p.add_argument("--out", required=True,
                   help="output prefix for <out>.csv and <out>_labels.csv")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("evaluate", help="score detections or run an injection corpus")
    p.add_argument("--detections", help="CSV with timestamp and anomaly columns")
    p.add_argument("--labels", help="CSV with timestamp,label columns")
    p.add_argument("--inject", nargs="*", metavar="CSV",
                   help="run the injection corpus on these series "
                        "(a synthetic corpus when none are given)")
    p.add_argument("--algo", action="append", choices=_choice(Algorithm),
                   help="detector to evaluate; repeatable (default: s-esd and s-h-esd)")
    _add_detector_flags(p, algo=False)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--tolerance", type=int, default=0)
    p.add_argument("--seed", type=int, help="injection seed (required with --inject)")
    _add_injection_flags(p)
    p.add_argument("--trim", type=int,
                   help="samples cut from each end of the smoothed baseline "
                        "(default: one period)")
    p.add_argument("--corpus-size", type=int, default=20)
    p.add_argument("--corpus-seed", type=int, default=123)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="results table CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="daily report over the trailing 14 days")
    _add_input_flags(p)
    _add_detector_flags(p, algo=False)
    p.add_argument("--out", required=True,
                   help="output prefix for <out>.md and <out>.csv")
    p.set_defaults(func=cmd_report)
    return parser


def _add_injection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--magnitude", type=float, nargs=2, default=(8.0, 12.0),
                   metavar=("LO", "HI"), help="range in residual sigmas")
    p.add_argument("--width", type=int, nargs=2, default=(1, 1), metavar=("LO", "HI"))
    p.add_argument("--direction-mix", type=float, default=0.5)
    p.add_argument("--min-gap", type=int, default=1)
    p.add_argument("--knot-spacing", type=int,
                   help="samples per spline knot (default: period / 8)")


def _detector_config(args, algo: str) -> DetectorConfig:
    return DetectorConfig(
        algorithm=algo,
        alpha=args.alpha,
        max_anoms=args.max_anoms,
        direction=args.direction,
        period=args.period,
        threshold=args.threshold,
        threshold_mode=args.threshold_mode,
    )


def _load(args) -> TimeSeries:
    series = load_csv(args.input, args.timestamp_col, args.value_col, repair=args.repair)
    period = getattr(args, "period", None)
    if period is not None or series.cadence in PERIOD_BY_CADENCE:
        series = series.with_period(infer_period(series, period))
    return series


def _injection_spec(args) -> InjectionSpec:
    return InjectionSpec(
        count=args.count,
        magnitude_range=tuple(args.magnitude),
        width_range=tuple(args.width),
        direction_mix=args.direction_mix,
        seed=args.seed,
        min_gap=args.min_gap,
    )


def run_summary(report: AnomalyReport, series: TimeSeries, source: str,
                window_days: int | None, exit_code: int) -> dict:
    """JSON-ready description of one detection run."""
    return {
        "schema_version": SCHEMA_VERSION,
        "input": source,
        "config": report.config.to_dict(),
        "series": {
            "length": len(series),
            "period": series.period,
            "cadence": series.cadence,
            "start": int(series.timestamps[0]),
            "end": int(series.timestamps[-1]),
            "window_days": window_days,
        },
        "anomaly_count": len(report),
        "percent_anomalous": report.percent_anomalous,
        "anomalies": [
            {
                "timestamp": int(t),
                "value": float(v),
                "score": float(s),
                "direction": "positive" if d > 0 else "negative",
            }
            for t, v, s, d in zip(
                report.timestamps, report.values, report.scores, report.directions
            )
        ],
        "exit_status": {"code": exit_code, "meaning": _EXIT_MEANING[exit_code]},
    }


def _write_json(obj, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _default_prefix(path: str, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


def cmd_detect(args) -> int:
    series = _load(args)
    if args.window_days is not None:
        if args.window_days < 1:
            raise EvalError("--window-days must be positive")
        count = args.window_days * series.samples_per_day()
        if count > len(series):
            log.warning("series shorter than %d days; analysing all of it", args.window_days)
        series = series.tail(count)
    config = _detector_config(args, args.algo)
    report = detect(series, config)
    code = EXIT_ANOMALY if args.fail_on_anomaly and len(report) else EXIT_OK
    prefix = args.out or _default_prefix(args.input, "_anomalies")
    write_csv(series, prefix + ".csv", report.flags(), report.score_array())
    _write_json(run_summary(report, series, args.input, args.window_days, code),
                prefix + ".json")
    log.info("%d anomalies (%.3f%%) in %d points", len(report),
             report.percent_anomalous, len(series))
    return code


def cmd_decompose(args) -> int:
    series = _load(args)
    period = infer_period(series, args.period)
    decomp = stl_decompose(series, StlConfig(period))
    if args.variant == "median":
        decomp = median_residual(series, decomp)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value", "seasonal", "trend", "residual"])
        for row in zip(series.timestamps, series.values, decomp.seasonal,
                       decomp.trend, decomp.residual):
            w.writerow([int(row[0])] + [fmt_float(v) for v in row[1:]])
    finally:
        if args.out:
            fh.close()
    log.info("decomposed %d points (period %d, %s)", len(series), period,
             Variant.MEDIAN.value if args.variant == "median" else Variant.CLASSIC.value)
    return EXIT_OK


def cmd_inject(args) -> int:
    raw = _load(args)
    period = infer_period(raw, args.period)
    ks = args.knot_spacing or max(1, period // 8)
    baseline = bspline_smooth(raw, ks)
    labeled = inject(baseline, _injection_spec(args), raw=raw)
    write_csv(labeled.series, args.out + ".csv")
    write_labels(labeled, args.out + "_labels.csv")
    log.info("injected %d anomalies (%d points), sigma %s", len(labeled.injections),
             int(labeled.labels.sum()), fmt_float(labeled.sigma))
    return EXIT_OK


def _print_aggregate(aggregate: dict) -> None:
    write_results(sys.stdout, [], aggregate)


def cmd_evaluate(args) -> int:
    if args.inject is not None:
        return _evaluate_corpus(args)
    if not (args.detections and args.labels):
        raise EvalError("evaluate needs --detections and --labels, or --inject")
    det_ts, det = load_flags(args.detections)
    lab_ts, lab = load_flags(args.labels, "label")
    if not np.array_equal(det_ts, lab_ts):
        raise EvalError("detections and labels cover different timestamps")
    m = score(np.flatnonzero(det), np.flatnonzero(lab), len(det), args.beta, args.tolerance)
    name = Path(args.detections).stem
    row = {"series": name, "detector": "file", "tp": m.tp, "fp": m.fp, "fn": m.fn,
           "precision": m.precision, "recall": m.recall, "f_beta": m.f_beta}
    agg = {"file": {k: float(row[k]) for k in
                    ("tp", "fp", "fn", "precision", "recall", "f_beta")}}
    if args.out:
        with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
            write_results(fh, [row], agg)
    _print_aggregate(agg)
    return EXIT_OK


def _evaluate_corpus(args) -> int:
    if args.seed is None:
        raise EvalError("--inject requires --seed")
    if args.inject:
        corpus = []
        for path in args.inject:
            s = load_csv(path, repair=True)
            corpus.append((Path(path).stem, s.with_period(infer_period(s, args.period))))
    else:
        corpus = synthetic_corpus(args.corpus_size, seed=args.corpus_seed)
    algos = args.algo or ["s-esd", "s-h-esd"]
    configs = {a: _detector_config(args, a) for a in dict.fromkeys(algos)}
    trim = args.trim
    if trim is None:
        trim = min(s.period for _, s in corpus)
    result = run_corpus(corpus, configs, _injection_spec(args), args.beta,
                        args.tolerance, args.knot_spacing, args.jobs, trim)
    if args.out:
        result.write_csv(args.out)
    _print_aggregate(result.aggregate())
    return EXIT_OK


def _report_markdown(report: AnomalyReport, series: TimeSeries, source: str,
                     recent: np.ndarray) -> str:
    lines = [
        f"# Anomaly report: {source}",
        "",
        f"Window: {int(series.timestamps[0])} to {int(series.timestamps[-1])} "
        f"({len(series)} points, period {series.period})",
        f"Detector: {report.config.algorithm.value}, alpha {report.config.alpha}, "
        f"max_anoms {report.config.max_anoms}",
        f"Anomalies in window: {len(report)} ({report.percent_anomalous:.3f}%)",
        f"Anomalies in the last 24 hours: {int(recent.sum())}",
        "",
        "| timestamp | value | score | direction |",
        "|---|---|---|---|",
    ]
    for t, v, s, d, r in zip(report.timestamps, report.values, report.scores,
                             report.directions, recent):
        if r:
            lines.append(f"| {int(t)} | {fmt_float(v)} | {fmt_float(s)} | "
                         f"{'positive' if d > 0 else 'negative'} |")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    series = _load(args)
    per_day = series.samples_per_day()
    need = REPORT_DAYS * per_day
    if len(series) < need:
        raise EvalError(f"report needs {REPORT_DAYS} days ({need} points), got {len(series)}")
    window = series.tail(need)
    report = detect(window, _detector_config(args, Algorithm.S_H_ESD.value))
    # the previous day is the trailing 24 hours ending at the last sample
    cutoff = int(window.timestamps[-1]) - DAY_SECONDS
    recent = report.timestamps > cutoff
    if not recent.any():
        log.info("no anomalies in the last 24 hours; no report written")
        return EXIT_OK
    Path(args.out + ".md").write_text(
        _report_markdown(report, window, args.input, recent), encoding="utf-8"
    )
    write_csv(window, args.out + ".csv", report.flags(), report.score_array())
    log.info("report written to %s.md", args.out)
    return EXIT_REPORT


def _configure_logging() -> None:
    level = os.environ.get("ANOMALY_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AnomalyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
