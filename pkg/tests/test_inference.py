import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localsignal import AnalysisConfig, InputError, SignalShape, TimeSeries, UnsupportedShapeError
from localsignal.inference import (
    conf_region_joint,
    conf_region_location,
    conf_region_pair,
    detect_single,
    linear_refit,
)
from localsignal.score import score_process
from localsignal.simulate import Scenario, generate

CFG = AnalysisConfig()
SINGLE = Scenario(150, changes=[(100, 0.1)], seed=31)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 5000))
def test_location_region_contains_estimate(rep):
    zp = score_process(generate(SINGLE, rep))
    reg = conf_region_location(zp, 0.05)
    assert reg.contains(zp.t_hat)
    joint = conf_region_joint(zp, 0.05)
    assert joint.contains(*joint.estimate)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 5000))
def test_regions_nested_in_level(rep):
    zp = score_process(generate(SINGLE, rep))
    sizes = [len(conf_region_location(zp, a)) for a in (0.01, 0.05, 0.2, 0.5)]
    assert sizes == sorted(sizes, reverse=True)
    small = set(conf_region_location(zp, 0.2).members)
    assert small <= set(conf_region_location(zp, 0.01).members)


def test_alpha_one_gives_singleton():
    zp = score_process(generate(SINGLE, 0))
    reg = conf_region_location(zp, 1.0)
    assert list(reg.members) == [zp.t_hat]


def test_joint_profile_contains_location_region():
    # the joint region at level 1 - a projected on t is at least the location region
    zp = score_process(generate(SINGLE, 3))
    loc = set(conf_region_location(zp, 0.05).members)
    joint_t = set(conf_region_joint(zp, 0.05).xi_intervals)
    assert loc <= joint_t


def test_joint_xi_slice_symmetric():
    zp = score_process(generate(SINGLE, 4))
    joint = conf_region_joint(zp, 0.05)
    sd = zp.signal_sd()
    for k, t in enumerate(zp.grid):
        iv = joint.xi_intervals.get(float(t))
        if iv is not None:
            centre = zp.z[k] / sd[k]
            assert (iv[0] + iv[1]) / 2 == pytest.approx(centre)


def test_regions_need_continuous_shape():
    ts = generate(Scenario(80, seed=1))
    zp = score_process(ts, SignalShape.jump(), AnalysisConfig(shape=SignalShape.jump()), keep_kernels=True)
    with pytest.raises(UnsupportedShapeError):
        conf_region_location(zp, 0.05)


def test_pair_region_size():
    sc = Scenario(260, changes=[(65, 0.1), (195, -0.2)], seed=12)
    reg = conf_region_pair(generate(sc, 0), CFG, 0.10)
    assert 20 <= len(reg) <= 10_000
    s, t = reg.estimate
    assert abs(s - 65) <= 15 and abs(t - 195) <= 15
    d = reg.as_dict()
    assert d["kind"] == "pair-locations" and d["size"] == len(reg)


def test_pair_region_rejects_close_pair():
    ts = generate(Scenario(100, seed=2))
    with pytest.raises(InputError):
        conf_region_pair(ts, CFG, 0.1, pair=(40, 43))


def test_detect_single():
    res = detect_single(generate(SINGLE, 1), CFG)
    assert res.approximation == "rice"
    assert res.threshold == pytest.approx(2.83, abs=0.05)
    assert res.p_value < 0.01 and abs(res.t_hat - 100) <= 10


def test_detect_single_null_p_value_is_uniformish():
    sc = Scenario(100, seed=5)
    p = np.array([detect_single(generate(sc, k), CFG).p_value for k in range(200)])
    assert 0.02 <= np.mean(p <= 0.05) <= 0.12


def test_refit_recovers_slopes():
    sc = Scenario(200, alpha=1.0, beta=0.02, changes=[(60, 0.1), (140, -0.15)], seed=3)
    rep = linear_refit(generate(sc, 0), [60, 140])
    assert rep.xi == pytest.approx([0.1, -0.15], abs=0.02)
    assert rep.coefficients[1].name == "beta"
    assert rep.fitted.shape == (200,)


def test_refit_r_squared_non_decreasing():
    ts = generate(Scenario(200, changes=[(60, 0.1), (140, -0.15)], seed=3))
    r = [linear_refit(ts, cps).r_squared for cps in ([], [60], [60, 140], [60, 100, 140])]
    assert all(b >= a - 1e-12 for a, b in zip(r, r[1:]))


def test_refit_input_checks():
    ts = generate(Scenario(50, seed=0))
    with pytest.raises(InputError):
        linear_refit(ts, [30, 20])
    with pytest.raises(InputError):
        linear_refit(ts, [60])
