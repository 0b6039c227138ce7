import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_esd, esd_lambda, grubbs_lambda
from shesd.detectors import (
    Algorithm,
    AnomalyReport,
    DetectorConfig,
    Direction,
    ThresholdMode,
    apply_threshold,
    detect,
    esd,
    esd_critical,
    esd_steps,
    grubbs,
    grubbs_critical,
    s_esd,
    s_h_esd,
    three_sigma,
)
from shesd.errors import ConfigError, StatError
from shesd.evaluation import (
    InjectionSpec,
    contamination_fixture,
    generate_seasonal,
    inject,
    local_spike_fixture,
)
from shesd.series import TimeSeries


def _ts(values, period=None):
    return TimeSeries.from_values(values, period=period)


# critical values

# two-sided Grubbs table, alpha = 0.05
GRUBBS_TABLE = {5: 1.715, 10: 2.290, 20: 2.709, 50: 3.128}

# generalized ESD critical values for n = 54, alpha = 0.05, j = 1..10
ESD_TABLE_54 = [3.159, 3.151, 3.144, 3.136, 3.128, 3.120, 3.112, 3.103, 3.094, 3.085]


@pytest.mark.parametrize("n, expected", sorted(GRUBBS_TABLE.items()))
def test_grubbs_critical_matches_table(n, expected):
    assert grubbs_critical(n, 0.05) == pytest.approx(expected, abs=1e-3)
    assert grubbs_critical(n, 0.05) == pytest.approx(grubbs_lambda(n, 0.05), abs=1e-9)


@pytest.mark.parametrize("j", range(1, 11))
def test_esd_critical_n54(j):
    assert esd_critical(54, j, 0.05) == pytest.approx(esd_lambda(54, j, 0.05), abs=1e-6)
    assert esd_critical(54, j, 0.05) == pytest.approx(ESD_TABLE_54[j - 1], abs=1e-3)


def test_esd_critical_decreasing_in_alpha():
    for j in (1, 5, 20):
        assert esd_critical(100, j, 0.01) > esd_critical(100, j, 0.05) > esd_critical(100, j, 0.1)


# config

@pytest.mark.parametrize(
    "kw",
    [
        {"alpha": 0.0},
        {"alpha": 1.0},
        {"max_anoms": 0.0},
        {"max_anoms": 0.5},
        {"period": 0},
        {"threshold": math.inf},
        {"mad_scale": 0.0},
        {"algorithm": "nope"},
        {"direction": "sideways"},
    ],
)
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        DetectorConfig(**kw)


def test_config_accepts_dashed_names():
    cfg = DetectorConfig(algorithm="s-h-esd", direction="positive")
    assert cfg.algorithm is Algorithm.S_H_ESD
    assert cfg.direction is Direction.POSITIVE
    assert cfg.k_max(336) == 34


# three sigma

def test_three_sigma_single_outlier():
    r = three_sigma(_ts([0.0] * 99 + [100.0]))
    assert r.indices.tolist() == [99]


def test_three_sigma_constant():
    assert len(three_sigma(_ts(np.full(20, 3.0)))) == 0


def test_three_sigma_misses_seasonal_dip():
    s = generate_seasonal(24, 14, amplitude=10.0, noise_sigma=0.1, seed=0)
    x = s.values.copy()
    sd = np.std(x, ddof=1)
    peak = 24 * 6 + int(np.argmax(x[144:168]))
    x[peak] -= 2.0 * sd
    assert peak not in three_sigma(s.with_values(x)).indices


def test_three_sigma_direction():
    x = [0.0] * 98 + [100.0, -100.0]
    assert three_sigma(_ts(x), DetectorConfig("three_sigma", direction="negative")).indices.tolist() == [99]


# grubbs

def test_grubbs_flags_single_outlier():
    r = grubbs(_ts([0.0] * 9 + [50.0]))
    assert r.indices.tolist() == [9]
    # G = 45 / sqrt(250) by hand
    assert r.scores[0] == pytest.approx(45.0 / math.sqrt(250.0))
    assert r.scores[0] > GRUBBS_TABLE[10]


def test_grubbs_constant_and_short():
    assert len(grubbs(_ts(np.ones(10)))) == 0
    with pytest.raises(StatError):
        grubbs(_ts([1.0, 2.0]))


def test_grubbs_clean_normal_sample():
    x = np.random.default_rng(0).normal(size=30)
    assert len(grubbs(_ts(x))) == 0


# generalized ESD

def test_esd_three_big_points_both_flavours():
    rng = np.random.default_rng(11)
    x = rng.normal(size=100)
    planted = [17, 48, 83]
    x[planted] = 20.0
    for hybrid in (False, True):
        idx, _ = esd(x, 0.05, 10, hybrid)
        assert sorted(idx.tolist()) == planted
        assert sorted(brute_esd(x, 10, 0.05, hybrid)) == planted


def test_esd_k_max_bounds():
    with pytest.raises(ConfigError):
        esd(np.arange(10.0), k_max=8)
    with pytest.raises(ConfigError):
        esd(np.arange(10.0), k_max=0)


def test_esd_stops_when_spread_collapses():
    x = np.zeros(20)
    x[3] = 5.0
    res = esd_steps(x, 5, 0.05)
    # after removing the 5 the rest is constant
    assert res.removed.tolist() == [3]
    assert res.count == 1


def test_esd_largest_j_rule():
    # a masked pair: the first statistic is below its critical value, the
    # second above, so both count
    x = np.concatenate([np.random.default_rng(3).normal(size=30), [5.0, 5.0]])
    res = esd_steps(x, 5, 0.05)
    assert res.statistics[0] <= esd_critical(32, 1, 0.05)
    assert res.count >= 2
    assert set(res.removed[:2].tolist()) == {30, 31}


def test_esd_ties_go_to_lowest_index():
    x = np.array([0.0, 1.0, -1.0, 0.5, -0.5, 8.0, 0.0, -8.0, 0.2, 0.1, -0.2, -0.1])
    res = esd_steps(x, 3, 0.05)
    assert res.removed[0] == 5


floats = st.floats(-1e3, 1e3, allow_nan=False)


@given(
    st.lists(floats, min_size=8, max_size=60),
    st.booleans(),
    st.floats(0.001, 0.2),
)
def test_esd_matches_brute_force(values, hybrid, alpha):
    x = np.round(np.asarray(values), 2)  # rounding manufactures ties
    k = max(1, len(x) // 4)
    idx, _ = esd(x, alpha, k, hybrid)
    assert idx.tolist() == brute_esd(x, k, alpha, hybrid)


@given(st.integers(0, 10 ** 6), st.booleans())
def test_esd_alpha_monotone(seed, hybrid):
    rng = np.random.default_rng(seed)
    x = rng.standard_t(3, size=80)
    small, _ = esd(x, 0.01, 20, hybrid)
    large, _ = esd(x, 0.05, 20, hybrid)
    assert set(small.tolist()) <= set(large.tolist())


def test_esd_direction_filter():
    x = np.concatenate([np.random.default_rng(5).normal(size=60), [15.0, -15.0]])
    pos, _ = esd(x, k_max=5, direction="positive")
    neg, _ = esd(x, k_max=5, direction="negative")
    both, _ = esd(x, k_max=5)
    assert pos.tolist() == [60]
    assert neg.tolist() == [61]
    assert sorted(both.tolist()) == [60, 61]


@pytest.mark.xfail(
    strict=True,
    reason="under the largest-j rule classical ESD also recovers the whole "
    "block once k_max exceeds it; see the decisions ledger",
)
def test_esd_classical_breaks_under_heavy_contamination():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    idx = rng.choice(200, 60, replace=False)
    x[idx] = 50.0 + rng.normal(size=60)
    k = math.ceil(0.35 * 200)
    hyb, _ = esd(x, 0.05, k, True)
    cls, _ = esd(x, 0.05, k, False)
    assert np.isin(idx, hyb).mean() >= 0.9
    assert np.isin(idx, cls).mean() < 0.5


def test_esd_hybrid_recovers_heavy_contamination():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    idx = rng.choice(200, 60, replace=False)
    x[idx] = 50.0 + rng.normal(size=60)
    hyb, _ = esd(x, 0.05, math.ceil(0.35 * 200), True)
    assert np.isin(idx, hyb).mean() >= 0.9


def _regime_replica(seed):
    """Contamination that inflates the std well past the scaled MAD while the
    mean stays near the median, plus one genuine anomaly at index 3."""
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(5.45, 1.2, 88), rng.uniform(10.0, 15.0, 12)])
    x[3] = 16.0 + rng.uniform(0.0, 3.0)
    return x


@pytest.mark.parametrize("seed", range(20))
def test_hybrid_detects_superset_in_contaminated_regime(seed):
    x = _regime_replica(seed)
    assert np.std(x, ddof=1) > 2 * np.median(np.abs(x - np.median(x)))
    med = np.median(x)
    hyb_stat = abs(x[3] - med) / (1.4826 * np.median(np.abs(x - med)))
    cls_stat = abs(x[3] - x.mean()) / np.std(x, ddof=1)
    assert hyb_stat > cls_stat
    cls, _ = esd(x, 0.05, 10, False)
    hyb, _ = esd(x, 0.05, 10, True)
    assert set(cls.tolist()) <= set(hyb.tolist())
    assert 3 in hyb


# seasonal detectors

def test_s_esd_local_spike_three_sigma_misses():
    fx = local_spike_fixture(0)
    spike = int(fx.truth[0])
    assert fx.series.values[spike] < fx.series.values.max()
    assert spike in s_esd(fx.series, DetectorConfig("s_esd", period=24)).indices
    assert spike not in three_sigma(fx.series).indices


def test_s_esd_global_spike():
    s = generate_seasonal(24, 14, amplitude=10.0, noise_sigma=0.1, seed=1)
    x = s.values.copy()
    x[200] = 3 * x.max()
    assert 200 in s_esd(s.with_values(x), DetectorConfig("s_esd", period=24)).indices


@pytest.mark.parametrize("fn", [s_esd, s_h_esd])
def test_seasonal_clean_series_is_empty(fn):
    s = generate_seasonal(24, 10, amplitude=10.0, noise_sigma=0.0, seed=2)
    assert len(fn(s, DetectorConfig(period=24))) == 0


def test_seasonal_needs_two_cycles():
    s = generate_seasonal(24, 2, noise_sigma=1.0, seed=3).tail(40)
    with pytest.raises(ConfigError):
        s_esd(s, DetectorConfig(period=24))


def test_s_h_esd_outnumbers_s_esd_in_contaminated_region():
    for seed in range(5):
        fx = contamination_fixture(seed)
        a = np.intersect1d(s_esd(fx.series, DetectorConfig("s_esd", period=24)).indices, fx.truth)
        b = np.intersect1d(s_h_esd(fx.series, DetectorConfig("s_h_esd", period=24)).indices, fx.truth)
        assert len(b) >= 3 * len(a)
        assert len(b) > 0


def _low_contamination_pair(seed):
    base = generate_seasonal(24, 14, amplitude=10.0, noise_sigma=1.0, modes=2, seed=seed)
    lab = inject(base, InjectionSpec(5, seed=seed), sigma=1.0)
    a = set(s_esd(lab.series, DetectorConfig("s_esd")).indices.tolist())
    b = set(s_h_esd(lab.series, DetectorConfig("s_h_esd")).indices.tolist())
    return len(a ^ b) / max(1, len(a | b))


def test_hybrid_agrees_at_low_contamination_on_average():
    dist = [_low_contamination_pair(s) for s in range(30)]
    assert np.mean(dist) <= 0.2
    assert sum(d <= 0.2 for d in dist) >= 29


@pytest.mark.xfail(
    strict=True,
    reason="with five true anomalies, two extra hybrid detections on one "
    "series already exceed 0.2; see the decisions ledger",
)
def test_hybrid_agrees_at_low_contamination_on_every_series():
    assert all(_low_contamination_pair(s) <= 0.2 for s in range(30))


# threshold

def _report_with_values(values):
    s = _ts(np.arange(60.0))
    idx = np.array([10, 40])
    vals = np.asarray(values, dtype=float)
    return AnomalyReport(idx, s.timestamps[idx], vals, np.ones(2), np.ones(2, np.int8),
                         vals, len(s), DetectorConfig("esd"))


def test_threshold_examples():
    r = _report_with_values([5.0, 50.0])
    assert r.indices.tolist() == [10, 40]
    assert apply_threshold(r, 10.0).indices.tolist() == [40]
    assert apply_threshold(r, -1e300).indices.tolist() == [10, 40]
    assert len(apply_threshold(r, 1e300)) == 0


def test_threshold_on_deviation():
    r = _report_with_values([5.0, 50.0])
    kept = apply_threshold(r, 10.0, ThresholdMode.ABOVE_DEVIATION)
    assert kept.indices.tolist() == [40]


def test_config_threshold_applies_in_detect():
    x = np.zeros(60)
    x[[10, 40]] = [-50.0, 50.0]
    r = detect(_ts(x), DetectorConfig("three_sigma", threshold=10.0))
    assert r.indices.tolist() == [40]


# report invariants and properties

ALGOS = ["three_sigma", "grubbs", "esd", "s_esd", "s_h_esd"]


def _random_series(seed):
    rng = np.random.default_rng(seed)
    s = generate_seasonal(24, 8, amplitude=rng.uniform(2, 20), noise_sigma=1.0,
                          modes=int(rng.integers(1, 4)), seed=seed)
    x = s.values.copy()
    hits = rng.choice(len(x), 4, replace=False)
    x[hits] += rng.choice([-1, 1], 4) * rng.uniform(6, 12, 4)
    return s.with_values(x)


@given(st.integers(0, 10 ** 6), st.sampled_from(ALGOS), st.floats(0.01, 0.49))
def test_report_invariants(seed, algo, max_anoms):
    s = _random_series(seed)
    r = detect(s, DetectorConfig(algo, max_anoms=max_anoms))
    n = len(s)
    assert len(r) <= math.ceil(max_anoms * n)
    assert np.all(np.diff(r.indices) > 0)
    assert r.indices.min(initial=0) >= 0 and r.indices.max(initial=0) < n
    assert r.percent_anomalous == pytest.approx(100.0 * len(r) / n)
    assert np.array_equal(r.values, s.values[r.indices])


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("algo", ALGOS)
def test_shift_scale_equivariance(seed, algo):
    s = _random_series(seed)
    rng = np.random.default_rng(seed + 99)
    a, b = rng.uniform(0.1, 50.0), rng.uniform(-1e3, 1e3)
    cfg = DetectorConfig(algo)
    base = detect(s, cfg).indices
    moved = detect(s.with_values(a * s.values + b), cfg).indices
    assert np.array_equal(base, moved)


@given(st.integers(0, 10 ** 6), st.sampled_from(["esd", "s_esd", "s_h_esd"]))
def test_alpha_monotone_detectors(seed, algo):
    s = _random_series(seed)
    small = set(detect(s, DetectorConfig(algo, alpha=0.01)).indices.tolist())
    large = set(detect(s, DetectorConfig(algo, alpha=0.05)).indices.tolist())
    assert small <= large


@pytest.mark.parametrize("algo", ALGOS)
def test_determinism(algo):
    s = _random_series(4)
    a = detect(s, DetectorConfig(algo))
    b = detect(s, DetectorConfig(algo))
    for f in ("indices", "scores", "directions", "deviations"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
