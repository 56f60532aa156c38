import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localsignal import DegenerateInputError, InputError, Regression, RhoSpec, Sigma2Spec, TimeSeries
from localsignal.nuisance import resolve_rho, rho_estimate, sigma2_estimate
from localsignal.simulate import Scenario, generate


def test_difference_estimators_on_exact_line():
    y = 2.0 + 0.7 * np.arange(1, 51)
    assert sigma2_estimate(y, "diff2", check=False) == pytest.approx(0.0, abs=1e-20)
    # first differences of a line are all equal to the slope: sum b^2 / 2n
    assert sigma2_estimate(y, "diff1") == pytest.approx(49 * 0.7**2 / (2 * 50))
    with pytest.raises(DegenerateInputError):
        sigma2_estimate(y, "mse")


def test_fixed_spec_short_circuits():
    assert sigma2_estimate(np.zeros(10), Sigma2Spec.fixed(2.5)) == 2.5


@pytest.mark.parametrize("method", ["mse", "diff1", "diff2"])
def test_variance_estimators_consistent(method):
    y = generate(Scenario(4000, sigma=1.5, beta=0.01, seed=3)).values
    assert sigma2_estimate(y, method) == pytest.approx(2.25, rel=0.08)


def test_rho_estimate_ar1():
    est = [rho_estimate(generate(Scenario(600, rho=0.5, seed=5), k)) for k in range(20)]
    assert np.mean(est) == pytest.approx(0.5, abs=0.03)


def test_rho_subset_uses_only_that_range():
    rng = np.random.default_rng(1)
    y = rng.standard_normal(200)
    y[150:] = np.cumsum(rng.standard_normal(50))
    full = rho_estimate(y, "mle", Regression.CONSTANT)
    sub = rho_estimate(y, RhoSpec.on_subset(1, 140), Regression.CONSTANT)
    assert abs(sub) < 0.2 < full
    with pytest.raises(InputError):
        rho_estimate(y, RhoSpec.on_subset(190, 260))


def test_rho_clamped_with_warning():
    u = np.arange(1, 80, dtype=float)
    y = 1.08**u
    with pytest.warns(RuntimeWarning, match="clamped"):
        r = rho_estimate(y, "mle", Regression.CONSTANT)
    assert abs(r) < 1


def test_resolve_rho_fixed():
    assert resolve_rho(np.zeros(20), RhoSpec.fixed(0.25), Regression.LINEAR) == 0.25


def test_short_series_rejected():
    with pytest.raises(InputError):
        rho_estimate(np.arange(5.0))
    with pytest.raises(InputError):
        sigma2_estimate(np.arange(3.0), "diff1")


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-0.5, 0.5), st.integers(0, 10_000))
def test_variance_invariant_to_trend(a, b, seed):
    e = np.random.default_rng(seed).standard_normal(60)
    u = np.arange(1, 61)
    for method in ("mse", "diff2"):
        assert sigma2_estimate(e + a + b * u, method) == pytest.approx(sigma2_estimate(e, method), rel=1e-7)
