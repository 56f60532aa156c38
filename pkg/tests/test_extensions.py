import numpy as np
import pytest
from scipy.stats import kstest

from localsignal import InputError, Regression, SignalShape, TimeSeries
from localsignal.extensions import glm_null_fit, glm_score_process, tar_covariance, tar_score_test
from localsignal._linalg import design
from localsignal.io import load_lynx
from localsignal.score import score_process
from localsignal import AnalysisConfig, NuisanceModel, RhoSpec, Sigma2Spec
from localsignal.simulate import Scenario, generate


def test_identity_link_matches_gaussian_score():
    y = generate(Scenario(120, changes=[(70, 0.05)], seed=2)).values
    a = glm_score_process(TimeSeries(y), link="identity_quasi", dispersion=1.0)
    cfg = AnalysisConfig(nuisance=NuisanceModel(Regression.LINEAR, RhoSpec.fixed(0.0), Sigma2Spec.fixed(1.0)))
    b = score_process(TimeSeries(y), config=cfg)
    common = np.intersect1d(a.grid, b.grid)
    za = a.z[np.isin(a.grid, common)]
    zb = b.z[np.isin(b.grid, common)]
    assert np.allclose(za, zb, atol=1e-9)


def test_poisson_rejects_negative_counts():
    with pytest.raises(InputError):
        glm_score_process(TimeSeries([1.0, 2.0, -1.0, 4.0, 3.0, 2.0]))
    with pytest.raises(InputError):
        glm_score_process(TimeSeries([1.5, 2.0, 1.0, 4.0, 3.0, 2.0]), dispersion=1.0)


def test_negbin_dispersion_estimate():
    sc = Scenario(400, alpha=np.log(50.0), noise="negbin", dispersion=20.0, seed=4)
    est = []
    for k in range(10):
        y = generate(sc, k).values
        est.append(glm_null_fit(y, design(0, y.size, Regression.LINEAR), "poisson_log").dispersion)
    assert 10 <= np.mean(est) <= 35


def test_poisson_null_z_near_standard_normal():
    sc = Scenario(100, alpha=np.log(20.0), noise="poisson", seed=6)
    z = [glm_score_process(generate(sc, k), dispersion=1.0).z[49] for k in range(600)]
    assert kstest(z, "norm").pvalue > 0.01


@pytest.mark.parametrize("t0", [34, 72])
def test_poisson_change_localised(t0):
    sc = Scenario(100, alpha=np.log(10.0), changes=[(t0, 0.06)], noise="poisson", seed=7)
    zp = glm_score_process(generate(sc, 0))
    assert abs(zp.t_hat - t0) <= 8
    assert zp.max_abs_z > 4


def test_tar_lynx_anchor():
    res = tar_score_test(load_lynx(), order=1)
    assert res.max_stat == pytest.approx(3.89, abs=0.1)
    assert res.p_value == pytest.approx(0.004, abs=0.002)
    d = res.as_dict()
    assert d["order"] == 1 and d["n_thresholds"] > 50


def test_tar_order2_runs_on_lynx():
    res = tar_score_test(load_lynx(), order=2)
    assert 0 < res.p_value < 0.01
    assert len(res.xi_hat) == 2


def test_tar_fixed_threshold_z_is_normal():
    sc = Scenario(300, rho=0.5, seed=9)
    z = []
    for k in range(300):
        res = tar_score_test(generate(sc, k))
        z.append(res.process.z[res.process.z.size // 2])
    assert kstest(z, "norm").pvalue > 0.01


def test_tar_moments_monotone():
    res = tar_score_test(load_lynx())
    mom = res.moments
    assert np.all(np.diff(mom.g) >= -1e-12)
    assert tar_covariance(mom, 5, 5) == pytest.approx(1.0)
    c = tar_covariance(mom, 5, 40)
    assert -1 <= c <= 1


def test_tar_input_checks():
    with pytest.raises(InputError):
        tar_score_test(np.arange(20.0))
    with pytest.raises(InputError):
        tar_score_test(load_lynx(), order=3)
