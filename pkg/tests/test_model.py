import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localsignal import (
    AnalysisConfig,
    InputError,
    Regression,
    RhoSpec,
    Sigma2Spec,
    SignalShape,
    TimeSeries,
)


def test_time_series_rejects_short_and_nan():
    with pytest.raises(InputError):
        TimeSeries([1.0, 2.0])
    with pytest.raises(InputError):
        TimeSeries([1.0, np.nan, 2.0, 3.0])


def test_time_series_is_read_only():
    ts = TimeSeries(np.arange(5.0))
    with pytest.raises(ValueError):
        ts.values[0] = 3.0


def test_labels_map_one_based_positions():
    ts = TimeSeries(np.arange(4.0), labels=np.array([1821, 1822, 1823, 1824]))
    assert ts.label_of(1) == 1821
    assert ts.label_of(4) == 1824
    assert TimeSeries(np.arange(4.0)).label_of(3) == 3


def test_shape_defaults():
    assert SignalShape.broken_line().default_regression() is Regression.LINEAR
    assert SignalShape.jump().default_regression() is Regression.CONSTANT
    assert SignalShape.broken_line().continuous
    assert not SignalShape.jump().continuous
    assert not SignalShape.bump("uniform", 5.0).continuous
    assert SignalShape.bump("triangular", (3, 9)).has_scale_range


@pytest.mark.parametrize("kw", [
    dict(kind="bump"),
    dict(kind="jump", profile="triangular"),
    dict(kind="bump", profile="triangular", scale=(5, 2)),
    dict(kind="bump", profile="triangular", scale=-1.0),
])
def test_shape_validation(kw):
    with pytest.raises(InputError):
        SignalShape(**kw)


def test_spec_validation():
    with pytest.raises(InputError):
        RhoSpec.fixed(1.0)
    with pytest.raises(InputError):
        RhoSpec("subset", subset=(5, 2))
    with pytest.raises(InputError):
        Sigma2Spec("median")
    with pytest.raises(InputError):
        Sigma2Spec.fixed(0.0)
    with pytest.raises(InputError):
        AnalysisConfig(alpha=1.5)
    with pytest.raises(InputError):
        AnalysisConfig(m0=2)


def test_describe_round_trips_through_strings():
    assert RhoSpec.fixed(0.3).describe() == "fixed:0.3"
    assert RhoSpec.on_subset(10, 40).describe() == "subset:10..40"
    cfg = AnalysisConfig()
    d = cfg.describe()
    assert d["nuisance"]["regression"] == "linear"
    assert d["shape"] == {"kind": "broken-line"}


@given(st.floats(-50, 50), st.floats(0.5, 20))
def test_broken_line_values(x, tau):
    f = SignalShape.broken_line()
    assert f(np.array([x]))[0] == pytest.approx(max(x, 0.0))
    assert f.derivative(np.array([x]))[0] == (1.0 if x > 0 else 0.0)


@settings(max_examples=50)
@given(st.sampled_from(["sqrt-normal-density", "triangular", "double-exponential"]),
       st.floats(-3, 3), st.floats(1, 10))
def test_bump_derivative_matches_difference(profile, x, tau):
    f = SignalShape.bump(profile, tau)
    h = 1e-6
    if profile != "sqrt-normal-density" and min(abs(x), abs(abs(x) - tau)) < 1e-3:
        return
    num = (f(np.array([x + h]), tau) - f(np.array([x - h]), tau)) / (2 * h)
    assert f.derivative(np.array([x]), tau)[0] == pytest.approx(num[0], abs=1e-5)
