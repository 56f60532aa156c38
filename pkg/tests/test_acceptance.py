"""Acceptance checks, one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in
the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
The Monte Carlo criteria are marked slow; together they take a few minutes
on one core.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy.stats import chi2, kstest

from localsignal import AnalysisConfig, NuisanceModel, Regression, RhoSpec, Sigma2Spec, SignalShape, TimeSeries
from localsignal._linalg import design, orthonormal_basis, project_out
from localsignal.crossing import rice_bound, seq_prob, solve_threshold, SeqApprox
from localsignal.extensions import tar_score_test
from localsignal.inference import (
    conf_region_joint,
    conf_region_location,
    conf_region_pair,
    detect_single,
)
from localsignal.io import load_lynx
from localsignal.moments import bl_sigma2, bl_vdot2, g1, g2, shape_dmatrix, shape_matrix
from localsignal.score import score_process
from localsignal.segmentation import pair_threshold, seq_detect, seq_threshold, topdown_pair_detect
from localsignal.simulate import Scenario, generate, mc_validate, rho_bias_experiment

RESULTS: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _recovered(found, truth, tol=15) -> bool:
    return all(any(abs(f - t) <= tol for f in found) for t in truth)


# ---------------------------------------------------------------------------


def test_criterion_1_thresholds():
    rows = [
        ("seq V1 m=250 m0=n0=3", lambda: SeqApprox(250, 3, 3, "V1"), 4.08),
        ("seq V2 m=250 m0=n0=3", lambda: SeqApprox(250, 3, 3, "V2"), 3.97),
        ("seq V2 m=250 m0=n0=5", lambda: SeqApprox(250, 5, 5, "V2"), 3.89),
        ("seq V2 m=500 m0=n0=5", lambda: SeqApprox(500, 5, 5, "V2"), 4.09),
    ]
    parts, ok = [], True
    for name, make, target in rows:
        t0 = time.perf_counter()
        b = solve_threshold(0.05, make())
        dt = time.perf_counter() - t0
        ok &= abs(b - target) <= 0.05 and dt < 60
        parts.append(f"{name}: {b:.4f} (target {target}, {dt:.1f}s)")
    zp = score_process(TimeSeries(np.random.default_rng(0).standard_normal(150)))
    b = solve_threshold(0.05, lambda x: rice_bound(x, zp.lam, zp.grid, raw=True))
    ok &= abs(b - 2.83) <= 0.05
    parts.append(f"rice m=150: {b:.4f} (target 2.83)")
    report(1, ok, "; ".join(parts))


def test_criterion_2_p_value_anchor():
    p = seq_prob(4.49, 70, 5, 5, "V2")
    report(2, abs(p - 0.001) <= 0.0005, f"seq V2 p(m=70, b=4.49) = {p:.6f} (target 0.001 +/- 0.0005)")


@pytest.mark.slow
def test_criterion_3_null_calibration():
    reps = 10_000
    runs = [
        ("rice", Scenario(150, seed=11), None),
        ("scale-space", Scenario(260, seed=11), AnalysisConfig(
            shape=SignalShape.bump("sqrt-normal-density", (5.0, 30.0)),
            nuisance=NuisanceModel(Regression.CONSTANT, RhoSpec.fixed(0.0), Sigma2Spec.fixed(1.0)))),
        ("seq", Scenario(250, seed=11), None),
        ("ms", Scenario(150, seed=11), None),
        ("two-locus", Scenario(260, seed=11), None),
        ("tar1", Scenario(113, rho=0.7, seed=11), None),
    ]
    parts, ok = [], True
    for method, sc, cfg in runs:
        t0 = time.perf_counter()
        res = mc_validate(method, sc, reps=reps, config=cfg)
        dt = time.perf_counter() - t0
        ok &= 0.03 <= res.empirical <= 0.07
        parts.append(f"{method} m={sc.m}: {res.empirical:.4f} at b={res.b:.3f} ({dt:.0f}s)")
    report(3, ok, "; ".join(parts) + " (target [0.03, 0.07])")


TABLE1 = [
    # rho, table rho_hat, table max Z with rho_hat, table max Z with true rho
    (0.0, 0.30, 4.04, 5.51),
    (0.4, 0.60, 3.86, None),
    (0.6, 0.75, 3.34, 5.06),
]


@pytest.mark.slow
def test_criterion_4_rho_bias():
    parts, ok = [], True
    for k, (rho, rho_tab, z_hat_tab, z_true_tab) in enumerate(TABLE1):
        sc = Scenario(150, rho=rho, changes=[(100, 0.05)], seed=40 + k)
        r = rho_bias_experiment(sc, reps=500)
        bias_ok = r.rho_hat_mean >= rho + 0.1
        order_ok = r.max_z_hat_mean < r.max_z_true_mean
        near = abs(r.rho_hat_mean - rho_tab) <= 0.07 and abs(r.max_z_hat_mean - z_hat_tab) <= 0.07
        if z_true_tab is not None:
            near &= abs(r.max_z_true_mean - z_true_tab) <= 0.07
        ok &= bias_ok and order_ok and near
        parts.append(
            f"rho={rho}: mean rho_hat {r.rho_hat_mean:.3f} (table {rho_tab}), "
            f"max|Z| {r.max_z_hat_mean:.2f} vs {r.max_z_true_mean:.2f} "
            f"(table {z_hat_tab} vs {z_true_tab}) bias={'ok' if bias_ok else 'no'} "
            f"order={'ok' if order_ok else 'no'} within0.07={'yes' if near else 'no'}")
    report(4, ok, "; ".join(parts))


def test_criterion_5_closed_forms():
    T = 1000
    shape = SignalShape.broken_line()
    u = np.arange(1, T + 1, dtype=float)
    t = np.arange(1, T, dtype=float)
    Q = orthonormal_basis(design(0, T, Regression.LINEAR))
    s2 = (project_out(shape_matrix(shape, u, t), Q) ** 2).sum(1)
    vd = (project_out(shape_dmatrix(shape, u, t), Q) ** 2).sum(1)
    # sample u stands for the cell (u - 1, u]; its midpoint is u - 1/2
    x = (t - 0.5) / T
    keep = (x >= 0.02) & (x <= 0.98)
    e1 = np.max(np.abs(s2[keep] / (T**3 * bl_sigma2(x[keep])) - 1))
    xv = t / T
    e2 = np.max(np.abs(vd[keep] / (T * bl_vdot2(xv[keep])) - 1))
    # the closed forms written out by hand at t = T/2
    tt, TT = 500.0, 1000.0
    direct1 = (TT - tt) ** 2 / (2 * TT**2)
    direct2 = ((TT - tt) ** 3 / 12 - tt * (TT - tt) ** 2 / 4) / TT**3
    d1 = abs(float(g1(tt, TT)) - 0.125)
    d2 = abs(float(g2(tt, TT)) - (-0.02083))
    ok = e1 < 0.01 and e2 < 0.01 and d1 <= 1e-6 and abs(float(g2(tt, TT)) - direct2) <= 1e-6
    ok &= abs(float(g1(tt, TT)) - direct1) <= 1e-6 and d2 <= 1e-5
    report(5, ok, f"max rel err sigma^2 {e1:.2e}, E Vdot^2 {e2:.2e}; g1(T/2)={float(g1(tt, TT)):.6f} "
                  f"g2(T/2)={float(g2(tt, TT)):.6f}")


@pytest.mark.slow
def test_criterion_6_coverage():
    reps = 2000
    m = 150
    cfg = AnalysisConfig(nuisance=NuisanceModel(sigma2=Sigma2Spec("diff2")))
    u = np.arange(1, m + 1, dtype=float)
    rng = np.random.default_rng(7)
    t1, pa, pb = m // 2, m // 4, 3 * m // 4
    xi, xi2 = 0.3, 0.4
    c = np.zeros(3)
    for _ in range(reps):
        y = xi * np.maximum(u - t1, 0) + rng.standard_normal(m)
        zp = score_process(TimeSeries(y), config=cfg)
        c[0] += conf_region_location(zp, 0.05).contains(t1)
        c[1] += conf_region_joint(zp, 0.05).contains(t1, xi)
        y = xi2 * np.maximum(u - pa, 0) - 2 * xi2 * np.maximum(u - pb, 0) + rng.standard_normal(m)
        c[2] += conf_region_pair(TimeSeries(y), cfg, 0.10).contains(pa, pb)
    cov = c / reps
    ok = abs(cov[0] - 0.95) <= 0.025 and abs(cov[1] - 0.95) <= 0.025 and abs(cov[2] - 0.90) <= 0.025

    # Kac-Slepian increment: far from the ends and at a strong signal the
    # increment max_s Z_s^2 - Z_t^2 is chi-square(1)
    M, t0, xik = 3000, 1500, 0.004
    kcfg = AnalysisConfig(nuisance=NuisanceModel(Regression.LINEAR, RhoSpec.fixed(0.0), Sigma2Spec.fixed(1.0)))
    uu = np.arange(1, M + 1, dtype=float)
    proc = score_process(TimeSeries(np.random.default_rng(0).standard_normal(M)), config=kcfg,
                         keep_kernels=True)
    G, grid = proc.kernels, proc.grid
    k = int(np.nonzero(grid == t0)[0][0])
    rng = np.random.default_rng(3)
    Z = G @ (xik * np.maximum(uu - t0, 0)[:, None] + rng.standard_normal((M, reps)))
    Z2 = Z**2
    inc = Z2.max(axis=0) - Z2[k]
    p_ks = kstest(inc, chi2(1).cdf).pvalue
    ok &= p_ks > 0.01
    report(6, ok, f"coverage location {cov[0]:.4f} joint {cov[1]:.4f} (nominal 0.95), pair {cov[2]:.4f} "
                  f"(nominal 0.90), {reps} reps; Kac-Slepian KS p = {p_ks:.3f}")


def test_criterion_7_tar_anchors():
    res = tar_score_test(load_lynx(), order=1)
    lynx_ok = abs(res.max_stat - 3.89) <= 0.1 and abs(res.p_value - 0.004) <= 0.002
    detail = (f"lynx {'ok' if lynx_ok else 'off'}: max Z {res.max_stat:.3f} (target 3.89 +/- 0.1), p {res.p_value:.4f} "
              f"(target 0.004 +/- 0.002); blowfly births: data not bundled, not checked")
    # the blowfly half cannot be checked without the data, so the criterion stays red
    report(7, lynx_ok and False, detail)


@pytest.mark.slow
def test_criterion_8_power():
    reps = 150
    cfg = AnalysisConfig()
    sc = Scenario(260, changes=[(70, 0.1), (130, -0.2), (190, 0.15)], seed=21)
    b = seq_threshold(260, cfg)
    seq_rate = np.mean([_recovered(seq_detect(generate(sc, k), cfg, b=b).locations, [70, 130, 190])
                        for k in range(reps)])
    sc2 = Scenario(260, changes=[(60, 0.05), (180, -0.10)], seed=22)
    b2 = pair_threshold(260, cfg)
    pair_rate = np.mean([_recovered(topdown_pair_detect(generate(sc2, k), cfg, b=b2).locations, [60, 180])
                         for k in range(reps)])
    sc3 = Scenario(150, changes=[(100, 0.05)], seed=23)
    single = np.mean([abs(detect_single(generate(sc3, k), cfg).t_hat - 100) <= 15 for k in range(reps)])
    ok = seq_rate >= 0.7 and pair_rate >= 0.7 and single >= 0.8
    report(8, ok, f"seq three changes {seq_rate:.3f} (>= 0.70), two-locus pair {pair_rate:.3f} (>= 0.70), "
                  f"single change {single:.3f} (>= 0.80), {reps} reps each")


def test_criterion_9_statement():
    report(9, True, "the real-data examples other than lynx are not bundled; no check depends on them")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion"):
            try:
                fn()
            except AssertionError:
                pass
