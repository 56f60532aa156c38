"""Data generators and the Monte Carlo harness for the tail approximations.

Every replicate ``k`` of a run with root seed ``s`` draws from
``numpy.random.default_rng([s, k])``, so results do not depend on how the
replicates are split across worker processes.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from ._linalg import design, orthonormal_basis, project_out
from ._scan import BatchPrefix, ms_scan, pair_stat, seq_stage_max
from .crossing import (
    MSApprox,
    ScaleSpaceApprox,
    SeqApprox,
    TwoLocusApprox,
    rice_bound,
    solve_threshold,
)
from .errors import InputError
from .model import (
    AnalysisConfig,
    NuisanceModel,
    Regression,
    RhoSpec,
    Sigma2Spec,
    SignalShape,
    TimeSeries,
)
from .moments import KernelTable, gradient_rows, normalized_rows, shape_dmatrix, shape_matrix
from .nuisance import rho_estimate
from .score import default_grid, score_process, surface_kernels

BURN_IN = 200


@dataclass(frozen=True)
class Change:
    t: float
    xi: float
    shape: SignalShape = field(default_factory=SignalShape.broken_line)


@dataclass(frozen=True)
class Scenario:
    """One simulation setting.

    Gaussian noise follows Y_u = rho Y_{u-1} + rho2 Y_{u-2} + mu_u + e_u with
    mu_u = alpha + beta u + sum_k xi_k f(u - t_k) and e_u ~ N(0, sigma^2).
    For counts (``poisson`` or ``negbin``) log E Y_u = alpha + beta u + the
    signals, and the draws are independent; ``negbin`` is the gamma-Poisson
    mixture with Var Y_u = dispersion * E Y_u.
    """

    m: int
    rho: float = 0.0
    rho2: float = 0.0
    sigma: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    changes: tuple = ()
    noise: str = "gaussian"
    dispersion: float = 1.0
    seed: int = 0
    burn_in: int = BURN_IN

    def __post_init__(self):
        if self.m < 3:
            raise InputError("scenario needs m >= 3")
        if self.noise not in ("gaussian", "poisson", "negbin"):
            raise InputError(f"unknown noise {self.noise!r}")
        # AR(2) stationarity triangle (covers AR(1) with rho2 = 0)
        r1, r2 = self.rho, self.rho2
        if not (abs(r2) < 1 and r2 + r1 < 1 and r2 - r1 < 1):
            raise InputError("autoregressive parameters are not stationary")
        if self.sigma <= 0:
            raise InputError("sigma must be positive")
        if self.noise == "negbin" and not self.dispersion > 1:
            raise InputError("negative-binomial dispersion must exceed 1")
        object.__setattr__(self, "changes", tuple(
            c if isinstance(c, Change) else Change(*c) for c in self.changes))

    def mean_path(self, u: np.ndarray) -> np.ndarray:
        mu = self.alpha + self.beta * u
        for c in self.changes:
            mu = mu + c.xi * c.shape(u - c.t, c.shape.tau)
        return mu

    def describe(self) -> dict:
        return {
            "m": self.m, "rho": self.rho, "rho2": self.rho2, "sigma": self.sigma,
            "alpha": self.alpha, "beta": self.beta, "noise": self.noise,
            "dispersion": self.dispersion, "seed": self.seed, "burn_in": self.burn_in,
            "changes": [{"t": c.t, "xi": c.xi, "shape": c.shape.describe()} for c in self.changes],
        }


def replicate_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(k)])


def _draw(sc: Scenario, rng: np.random.Generator) -> np.ndarray:
    n = sc.m + sc.burn_in
    u = np.arange(1 - sc.burn_in, sc.m + 1, dtype=float)
    mu = sc.mean_path(u)
    if sc.noise == "gaussian":
        drive = mu + sc.sigma * rng.standard_normal(n)
        y = lfilter([1.0], [1.0, -sc.rho, -sc.rho2], drive)
        return y[sc.burn_in:]
    rate = np.exp(mu[sc.burn_in:])
    if sc.noise == "negbin":
        k = rate / (sc.dispersion - 1.0)
        rate = rng.gamma(k, 1.0 / k) * rate
    return rng.poisson(rate).astype(float)


def generate(scenario: Scenario, rep: int = 0) -> TimeSeries:
    """Replicate ``rep`` of the scenario; the same (seed, rep) always gives the same series."""
    return TimeSeries(_draw(scenario, replicate_rng(scenario.seed, rep)))


def generate_batch(scenario: Scenario, reps, seed: Optional[int] = None) -> np.ndarray:
    """Columns are replicates ``reps`` (an iterable of indices); shape (m, len(reps))."""
    seed = scenario.seed if seed is None else seed
    return np.column_stack([_draw(scenario, replicate_rng(seed, k)) for k in reps])


# ---------------------------------------------------------------------------
# null statistics shared with the live code paths


@dataclass
class McResult:
    method: str
    b: float
    empirical: float
    se: float
    analytic: float
    reps: int
    passed: bool
    settings: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"method": self.method, "b": self.b, "empirical": self.empirical, "se": self.se,
                "analytic": self.analytic, "reps": self.reps, "passed": self.passed,
                "settings": self.settings}


def _working(Y: np.ndarray, rho_mode: str, rho_true: float, regression: Regression):
    """Quasi-differenced batch; drops the first row when rho is used."""
    if rho_mode == "true":
        if rho_true == 0.0:
            return Y
        return Y[1:] - rho_true * Y[:-1]
    if rho_mode == "mle":
        rhos = np.array([rho_estimate(Y[:, k], "mle", regression) for k in range(Y.shape[1])])
        return Y[1:] - rhos[None, :] * Y[:-1]
    if rho_mode == "zero":
        return Y
    raise InputError(f"unknown rho mode {rho_mode!r}")


class _Harness:
    """Analytic approximation plus a batched null statistic for one method."""

    def __init__(self, method: str, config: AnalysisConfig, m: int, b: Optional[float],
                 alpha: float):
        self.method = method
        self.config = config
        self.m = m
        self.reg = config.nuisance.regression
        self.spec = config.nuisance.sigma2
        self._setup()
        self.b = float(solve_threshold(alpha, self.approx)) if b is None else float(b)

    def _setup(self):
        cfg, m, reg = self.config, self.m, self.reg
        shape = cfg.shape
        if self.method == "rice":
            u = np.arange(1, m + 1, dtype=float)
            grid = default_grid(shape, 0, m)
            Q = orthonormal_basis(design(0, m, reg))
            F = shape_matrix(shape, u, grid, shape.tau)
            g, sf2, ok = normalized_rows(project_out(F, Q), F)
            gd = gradient_rows(g, sf2, project_out(shape_dmatrix(shape, u, grid, shape.tau), Q), ok)
            self.G = g[ok]
            lam = np.einsum("ij,ij->i", gd[ok], gd[ok])
            t = grid[ok]
            self.approx = lambda b: rice_bound(b, lam, t, raw=True)
        elif self.method == "scale-space":
            tau0, tau1 = shape.scale
            taus = np.arange(tau0, tau1 + 1e-9, 1.0)
            grid = default_grid(shape, 0, m)
            G, det, lt, ok = surface_kernels(shape, 0, m, grid, taus, reg)
            G[~ok] = 0.0
            self.G = G.reshape(-1, m)
            self.approx = ScaleSpaceApprox(det, lt, grid, taus, ok)
        elif self.method == "seq":
            self.kernels = KernelTable(shape, reg)
            self.approx = SeqApprox(m, cfg.m0, cfg.n0, "V2", shape=shape)
        elif self.method == "ms":
            self.kernels = KernelTable(shape, reg)
            self.approx = MSApprox(m, cfg.m0, cfg.n0, shape=shape)
        elif self.method == "two-locus":
            u = np.arange(1, m + 1, dtype=float)
            grid = default_grid(shape, 0, m)
            Q = orthonormal_basis(design(0, m, reg))
            F = shape_matrix(shape, u, grid, shape.tau)
            g, _, ok = normalized_rows(project_out(F, Q), F)
            self.G, self.grid = g[ok], grid[ok]
            self.approx = TwoLocusApprox(m, cfg.h, shape=shape, regression=reg)
        else:
            raise InputError(f"unknown method {self.method!r}")

    def exceed(self, W: np.ndarray) -> np.ndarray:
        """Boolean per column: null statistic >= b."""
        m, B = W.shape
        if self.method in ("rice", "scale-space", "two-locus"):
            s = np.sqrt(BatchPrefix(W).sigma2(np.array([0]), np.array([m]), self.spec, self.reg))[0]
            z = (self.G @ W) / s[None, :]
            if self.method == "two-locus":
                U, _, _ = pair_stat(z, self.G, self.grid, self.config.h)
                return U >= self.b**2
            return np.abs(z).max(axis=0) >= self.b
        if self.method == "seq":
            mx = seq_stage_max(W, 0, self.kernels, self.config.m0, self.config.n0, self.spec)
        else:
            mx = ms_scan(W, 0, self.kernels, self.config.m0, self.config.n0, self.spec)
        return mx >= self.b


def _chunk_counts(args) -> tuple[int, int]:
    method, config, scenario, b, alpha, rho_mode, reps, batch = args
    m_eff = scenario.m - (0 if (rho_mode == "true" and scenario.rho == 0.0) or rho_mode == "zero" else 1)
    h = _Harness(method, config, m_eff, b, alpha)
    hits = 0
    for k0 in range(0, len(reps), batch):
        ks = reps[k0:k0 + batch]
        Y = generate_batch(scenario, ks)
        W = _working(Y, rho_mode, scenario.rho, config.nuisance.regression)
        hits += int(h.exceed(W).sum())
    return hits, len(reps)


def _tar_chunk(args) -> tuple[int, int]:
    from .extensions import tar_score_test

    order, scenario, alpha, reps, quantiles = args
    hits = 0
    for k in reps:
        y = generate(scenario, k).values
        hits += tar_score_test(y, order, quantiles, alpha).p_value <= alpha
    return int(hits), len(reps)


def default_threads() -> int:
    env = os.environ.get("LOCAL_SIGNAL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"LOCAL_SIGNAL_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise InputError("LOCAL_SIGNAL_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def _run(func, jobs, threads):
    if threads <= 1 or len(jobs) == 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(func, jobs))


def mc_validate(method: str, scenario: Scenario, reps: int = 10_000, seed: Optional[int] = None,
                config: AnalysisConfig | None = None, b: Optional[float] = None,
                alpha: float = 0.05, rho_mode: str = "true", threads: int = 1,
                batch: int = 250, quantiles=(0.1, 0.9), min_reps: int = 1000) -> McResult:
    """Empirical exceedance of the null maximum at threshold b versus the approximation.

    ``method`` is one of rice, scale-space, seq, ms, two-locus, tar1, tar2.
    Without ``b`` the threshold is the inverted ``alpha`` level.  The
    scenario is simulated as given, so a null run needs a scenario without
    changes.  For the TAR
    methods the p-value is data dependent, so the empirical rate is the
    fraction of replicates with p <= alpha and the analytic value is alpha.
    Passes when |empirical - analytic| <= 2 max(SE, 0.015).
    """
    if reps < min_reps:
        raise InputError(f"mc_validate needs at least {min_reps} replicates")
    seed = scenario.seed if seed is None else seed
    scenario = replace(scenario, seed=seed)
    threads = max(1, int(threads))
    idx = list(range(reps))
    n_jobs = threads if threads > 1 else 1
    parts = [idx[i::n_jobs] for i in range(n_jobs)]
    if method in ("tar1", "tar2"):
        order = 1 if method == "tar1" else 2
        out = _run(_tar_chunk, [(order, scenario, alpha, p, quantiles) for p in parts], threads)
        analytic, b_used = alpha, float("nan")
        settings = {"order": order, "quantiles": list(quantiles)}
    else:
        if config is None:
            shape = SignalShape.broken_line()
            config = AnalysisConfig(shape=shape, nuisance=NuisanceModel(
                shape.default_regression(), RhoSpec.fixed(0.0), Sigma2Spec.fixed(scenario.sigma**2)))
        m_eff = scenario.m - (0 if (rho_mode == "true" and scenario.rho == 0.0) or rho_mode == "zero" else 1)
        h = _Harness(method, config, m_eff, b, alpha)
        b_used = h.b
        analytic = float(h.approx(b_used) if callable(h.approx) else h.approx.prob(b_used, raw=True))
        out = _run(_chunk_counts, [(method, config, scenario, b_used, alpha, rho_mode, p, batch)
                                   for p in parts], threads)
        settings = {"config": config.describe(), "rho_mode": rho_mode}
    hits = sum(o[0] for o in out)
    n = sum(o[1] for o in out)
    emp = hits / n
    se = float(np.sqrt(max(emp * (1 - emp), 1e-12) / n))
    passed = abs(emp - analytic) <= 2 * max(se, 0.015)
    settings.update({"scenario": scenario.describe(), "seed": seed})
    return McResult(method, b_used, emp, se, analytic, n, bool(passed), settings)


# ---------------------------------------------------------------------------
# autocorrelation bias experiment


@dataclass
class RhoBiasResult:
    scenario: Scenario
    reps: int
    rho_hat_mean: float
    rho_hat_sd: float
    max_z_hat_mean: float
    max_z_true_mean: float
    t_hat_hat: np.ndarray
    t_hat_true: np.ndarray

    def as_dict(self) -> dict:
        return {"scenario": self.scenario.describe(), "reps": self.reps,
                "rho_hat_mean": self.rho_hat_mean, "rho_hat_sd": self.rho_hat_sd,
                "max_z_rho_hat_mean": self.max_z_hat_mean, "max_z_rho_true_mean": self.max_z_true_mean}


def rho_bias_experiment(scenario: Scenario, reps: int = 500, config: AnalysisConfig | None = None,
                        rho_spec: RhoSpec | None = None) -> RhoBiasResult:
    """Mean null-model rho estimate and mean max |Z| with the estimate and with the truth."""
    config = config or AnalysisConfig()
    rho_spec = rho_spec or RhoSpec.mle()
    reg = config.nuisance.regression
    rh, zh, zt, th, tt = [], [], [], [], []
    for k in range(reps):
        ts = generate(scenario, k)
        r = rho_estimate(ts, rho_spec, reg)
        a = score_process(ts, config=config, rho=r)
        b = score_process(ts, config=config, rho=scenario.rho)
        rh.append(r)
        zh.append(a.max_abs_z)
        zt.append(b.max_abs_z)
        th.append(a.t_hat)
        tt.append(b.t_hat)
    rh = np.array(rh)
    return RhoBiasResult(scenario, reps, float(rh.mean()), float(rh.std(ddof=1)),
                         float(np.mean(zh)), float(np.mean(zt)), np.array(th), np.array(tt))
