import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localsignal import AnalysisConfig, InputError, NuisanceModel, Sigma2Spec, SignalShape, TimeSeries
from localsignal.segmentation import (
    ms_detect,
    ms_threshold,
    pair_threshold,
    segment,
    seq_detect,
    seq_threshold,
    topdown_pair_detect,
)
from localsignal.simulate import Scenario, generate

CFG = AnalysisConfig()
THREE = Scenario(260, changes=[(70, 0.2), (130, -0.4), (190, 0.3)], seed=8)


def _check_invariants(res, m, cfg):
    locs = res.locations
    assert locs == sorted(locs)
    for d in res.detections:
        lo, hi = d.detected_at
        assert lo <= d.t_hat <= hi <= m
        assert abs(d.z_value) >= res.threshold - 1e-9
        assert 0 <= d.p_value <= 1


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_seq_invariants(rep):
    ts = generate(THREE, rep)
    res = seq_detect(ts, CFG)
    _check_invariants(res, ts.m, CFG)
    for d in res.detections:
        lo, hi = d.detected_at
        assert d.t_hat - lo >= CFG.m0 and hi - d.t_hat >= CFG.n0


def test_seq_finds_strong_changes():
    res = seq_detect(generate(THREE, 0), CFG)
    assert len(res.detections) == 3
    for f, t in zip(res.locations, (70, 130, 190)):
        assert abs(f - t) <= 15
    assert [d.direction for d in res.detections] == [1, -1, 1]


def test_seq_stopping_time_monotone_in_threshold():
    ts = generate(THREE, 1)
    ends = [seq_detect(ts, CFG, b=b, max_detections=1).detections[0].detected_at[1]
            for b in (3.0, 3.5, 4.0, 4.5)]
    assert ends == sorted(ends)


@pytest.mark.parametrize("rule", ["argmax", "smallest_t", "largest_t"])
def test_seq_tie_rules_run(rule):
    res = seq_detect(generate(THREE, 2), CFG, tie_rule=rule)
    assert len(res.detections) >= 2


def test_seq_bad_tie_rule():
    with pytest.raises(InputError):
        seq_detect(generate(THREE, 0), CFG, tie_rule="middle")


def test_seq_is_reproducible():
    a = seq_detect(generate(THREE, 4), CFG).as_dict()
    b = seq_detect(generate(THREE, 4), CFG).as_dict()
    assert a == b


def test_seq_null_mostly_quiet():
    sc = Scenario(150, seed=9)
    b = seq_threshold(149, CFG)
    hits = sum(bool(seq_detect(generate(sc, k), CFG, b=b).detections) for k in range(40))
    assert hits <= 8


def test_ms_detects_and_respects_threshold():
    ts = generate(Scenario(150, changes=[(50, 0.3), (100, -0.5)], seed=3))
    res = ms_detect(ts, CFG)
    _check_invariants(res, ts.m, CFG)
    assert any(abs(f - 50) <= 10 for f in res.locations)
    assert any(abs(f - 100) <= 10 for f in res.locations)
    assert res.threshold == pytest.approx(ms_threshold(150, CFG))


def test_ms_random_windows_reproducible():
    ts = generate(Scenario(120, changes=[(60, 0.4)], seed=1))
    a = ms_detect(ts, CFG, interval_sampling=("random", 400, 5)).locations
    b = ms_detect(ts, CFG, interval_sampling=("random", 400, 5)).locations
    assert a == b


def test_pair_detect_two_changes():
    sc = Scenario(260, changes=[(60, 0.1), (180, -0.2)], seed=22)
    res = topdown_pair_detect(generate(sc, 0), CFG)
    _check_invariants_pair = [d.t_hat for d in res.detections]
    assert any(abs(f - 60) <= 15 for f in _check_invariants_pair)
    assert any(abs(f - 180) <= 15 for f in _check_invariants_pair)
    assert res.threshold == pytest.approx(pair_threshold(260, CFG))
    assert res.locations == sorted(res.locations)


def test_segment_dispatch():
    ts = generate(THREE, 0)
    assert segment(ts, CFG, "seq").method.value == "seq"
    with pytest.raises(ValueError):
        segment(ts, CFG, "bottom-up")


def test_jump_segmentation():
    u = np.arange(1, 201)
    y = 2.0 * (u > 100) + np.random.default_rng(0).standard_normal(200)
    cfg = AnalysisConfig(shape=SignalShape.jump())
    res = seq_detect(TimeSeries(y), cfg)
    assert any(abs(f - 100) <= 5 for f in res.locations)


def test_scale_range_rejected():
    cfg = AnalysisConfig(shape=SignalShape.bump("triangular", (3, 8)))
    with pytest.raises(InputError):
        seq_detect(generate(THREE, 0), cfg)


@pytest.mark.slow
def test_ms_random_subset_agrees_with_full_scan():
    sc = Scenario(150, changes=[(50, 0.3), (100, -0.5)], seed=13)
    b = ms_threshold(150, CFG)
    same = 0
    for k in range(30):
        ts = generate(sc, k)
        full = ms_detect(ts, CFG, b=b).locations
        sub = ms_detect(ts, CFG, b=b, interval_sampling=("random", 500, k)).locations
        same += len(full) == len(sub) and all(abs(x - y) <= 5 for x, y in zip(full, sub))
    assert same / 30 >= 0.85


def test_pair_statistic_null_chi2():
    from scipy.stats import chi2, kstest
    from localsignal.score import score_process
    from localsignal._scan import pair_field

    known = AnalysisConfig(nuisance=NuisanceModel(sigma2=Sigma2Spec.fixed(1.0)))
    rng = np.random.default_rng(6)
    vals = []
    for _ in range(500):
        zp = score_process(TimeSeries(rng.standard_normal(80)), config=known, keep_kernels=True)
        I, J, U = pair_field(zp.z, zp.kernels, zp.grid, 5)
        sel = (zp.grid[I] == 25) & (zp.grid[J] == 55)
        vals.append(U[sel][0])
    assert kstest(vals, chi2(2).cdf).pvalue > 0.01
