"""Efficient score process V_t, its variance, the standardised Z_t and lambda_t.

The score for a signal at ``t`` with the nuisance regression projected out is
V_t = f_t' M W, where W is the quasi-differenced series on the window and M
the residual-maker of the background design.  Its null variance is
sigma^2 |M f_t|^2, which does not involve the regression coefficients or rho.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._linalg import (
    clip_window,
    design,
    ols,
    orthonormal_basis,
    project_out,
    trend_column,
    working_series,
)
from .errors import DegenerateInputError, InputError, UnsupportedShapeError
from .model import (
    AnalysisConfig,
    NuisanceModel,
    Regression,
    ShapeKind,
    SignalShape,
    TimeSeries,
)
from .moments import (
    bl_sigma2,
    bl_sigma2_prime,
    gradient_rows,
    normalized_rows,
    shape_dmatrix,
    shape_matrix,
)
from .nuisance import resolve_rho, sigma2_estimate


@dataclass
class NullFit:
    """Null (xi = 0) fit of the background regression on one window."""

    alpha_hat: float
    beta_hat: float
    rho: float
    sigma2: float
    residuals: np.ndarray
    info_matrix: np.ndarray
    window: tuple
    regression: Regression


@dataclass
class ScoreProcess:
    """Score process on a grid of candidate locations.

    ``sigma`` is the null standard deviation of ``v`` (so ``z = v / sigma``),
    ``sigma_f`` the same per unit noise standard deviation, and ``lam`` the
    variance of the derivative of Z in t (NaN for discontinuous shapes).
    """

    grid: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    interval: tuple
    sigma2: float
    rho: float
    shape: SignalShape
    null_fit: Optional[NullFit] = None
    kernels: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def sigma_f(self) -> np.ndarray:
        return self.sigma / np.sqrt(self.sigma2)

    @property
    def argmax(self) -> int:
        return int(np.argmax(np.abs(self.z)))

    @property
    def t_hat(self) -> float:
        return float(self.grid[self.argmax])

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    def signal_sd(self) -> np.ndarray:
        """E(Z_t) per unit amplitude at t, i.e. sigma_f(t)/sigma."""
        return self.sigma_f / np.sqrt(self.sigma2)

    def correlation(self) -> np.ndarray:
        """Null correlation matrix of Z over the grid."""
        if self.kernels is None:
            raise ValueError("process was built without kernels")
        return self.kernels @ self.kernels.T


# ---------------------------------------------------------------------------
# null fit


def _lagged(y: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Y_{u-1} for u in the window; Y_0 is taken equal to Y_1."""
    idx = np.arange(lo, hi) - 1
    idx[idx < 0] = 0
    return y[idx]


def fit_null(ts: TimeSeries, nuisance: NuisanceModel, window=None, rho: float | None = None) -> NullFit:
    """Least-squares null fit on the quasi-differenced window.

    ``info_matrix`` is sum_u z_u z_u' with z_u = (1, trend_u, Y_{u-1}) (or
    without the trend for a constant mean): the information for the
    nuisance parameters per unit noise variance.
    """
    y = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=float)
    reg = nuisance.regression
    if rho is None:
        rho = resolve_rho(y, nuisance.rho, reg)
    w, first = working_series(y, rho)
    lo, hi = clip_window(window, y.size, first)
    if hi - lo < max(3, reg.n_params + 1):
        raise InputError("window too short for the null fit")
    X = design(lo, hi, reg)
    coef, resid = ols(X, w[lo:hi])
    Zd = np.column_stack([X, _lagged(y, lo, hi)])
    info = Zd.T @ Zd
    ev = np.linalg.eigvalsh(info)
    if ev[0] <= 1e-10 * ev[-1]:
        raise DegenerateInputError("information matrix is singular (constant or collinear series)")
    sig = nuisance.sigma2
    if sig.method == "mse":
        s2 = float(resid @ resid) / (hi - lo - X.shape[1])
        scale = float(np.mean(w[lo:hi] ** 2)) + float(np.var(w[lo:hi]))
        if not s2 > 1e-14 * max(scale, 1e-300):
            raise DegenerateInputError("null residual variance is zero")
    else:
        s2 = sigma2_estimate(y, sig, rho=rho, window=(lo, hi), regression=reg)
    beta_hat = float(coef[1]) if reg is Regression.LINEAR else 0.0
    return NullFit(float(coef[0]), beta_hat, float(rho), s2, resid, info, (lo, hi), reg)


# ---------------------------------------------------------------------------
# score process


def default_grid(shape: SignalShape, lo: int, hi: int) -> np.ndarray:
    """Every integer location whose signal has support inside the window."""
    if shape.kind is ShapeKind.BUMP:
        return np.arange(lo + 1, hi + 1, dtype=float)
    if shape.kind is ShapeKind.PAIRED_JUMP:
        return np.arange(lo, hi, dtype=float)
    return np.arange(lo + 1, hi, dtype=float)


def _kernels(shape, lo, hi, grid, regression, tau, derivative=True):
    u = np.arange(lo + 1, hi + 1, dtype=float)
    Q = orthonormal_basis(design(lo, hi, regression))
    F = shape_matrix(shape, u, grid, tau)
    A = project_out(F, Q)
    g, sf2, ok = normalized_rows(A, F)
    gdot = None
    if derivative and shape.continuous:
        Ad = project_out(shape_dmatrix(shape, u, grid, tau), Q)
        gdot = gradient_rows(g, sf2, Ad, ok)
    return g, sf2, ok, gdot


def score_process(
    ts: TimeSeries,
    shape: SignalShape | None = None,
    config: AnalysisConfig | None = None,
    window=None,
    rho: float | None = None,
    keep_kernels: bool = False,
) -> ScoreProcess:
    """Standardised score process over the grid for one window.

    The grid defaults to every admissible integer location; points where the
    signal is (numerically) collinear with the background are dropped.
    """
    if config is None:
        config = AnalysisConfig(shape=shape or SignalShape.broken_line())
    shape = shape or config.shape
    if shape.has_scale_range:
        raise UnsupportedShapeError("use bump_score_surface for a scale range")
    fit = fit_null(ts, config.nuisance, window, rho)
    lo, hi = fit.window
    if hi - lo < config.m0 + config.n0:
        raise InputError(f"window of length {hi - lo} is shorter than m0 + n0")
    if config.grid is not None:
        grid = np.asarray(config.grid, dtype=float)
        grid = grid[(grid >= lo) & (grid <= hi)]
    else:
        grid = default_grid(shape, lo, hi)
    g, sf2, ok, gdot = _kernels(shape, lo, hi, grid, fit.regression, shape.tau)
    if not ok.any():
        raise DegenerateInputError("every grid point is degenerate")
    y = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, float)
    w, _ = working_series(y, fit.rho)
    g, sf2, grid = g[ok], sf2[ok], grid[ok]
    zraw = g @ w[lo:hi]
    s = np.sqrt(fit.sigma2)
    z = zraw / s
    sigma = s * np.sqrt(sf2)
    v = z * sigma
    if gdot is not None:
        gdot = gdot[ok]
        lam = np.einsum("ij,ij->i", gdot, gdot)
    else:
        lam = np.full(grid.size, np.nan)
    return ScoreProcess(
        grid=grid, v=v, sigma=sigma, z=z, lam=lam, interval=(lo, hi), sigma2=fit.sigma2,
        rho=fit.rho, shape=shape, null_fit=fit, kernels=g if keep_kernels else None,
    )


def _window_parts(shape, window, null_fit):
    lo, hi = null_fit.window if window is None else (int(window[0]), int(window[1]))
    u = np.arange(lo + 1, hi + 1, dtype=float)
    reg = null_fit.regression if null_fit is not None else shape.default_regression()
    Q = orthonormal_basis(design(lo, hi, reg))
    return lo, hi, u, Q, reg


def covariance(s, t, shape: SignalShape, window=None, null_fit: NullFit | None = None) -> float:
    """Null covariance of V_s and V_t: sigma^2 <M f_s, M f_t>.

    Without a null fit the result is per unit noise variance.
    """
    lo, hi, u, Q, _ = _window_parts(shape, window, null_fit)
    F = shape_matrix(shape, u, np.array([s, t], dtype=float), shape.tau)
    A = project_out(F, Q)
    s2 = 1.0 if null_fit is None else null_fit.sigma2
    return float(s2 * A[0] @ A[1])


def psi(t, shape: SignalShape, window, null_fit: NullFit) -> np.ndarray:
    """Covariance of the signal score with the nuisance scores, as exact sums.

    Coordinates: sum f_u, sum f_u x_u (linear trend only) and
    sum f_u E(Y_{u-1}), with x_u the centred scaled trend and E(Y_u) the
    stationary null mean.
    """
    lo, hi = null_fit.window if window is None else (int(window[0]), int(window[1]))
    u = np.arange(lo + 1, hi + 1, dtype=float)
    f = shape(u - float(t), shape.tau)
    L = hi - lo
    rho = null_fit.rho
    a, b = null_fit.alpha_hat, null_fit.beta_hat
    d = b / (1.0 - rho)
    c = (a + rho * b / ((1.0 - rho) * L)) / (1.0 - rho)
    x_prev = trend_column(lo, hi) - 1.0 / L
    out = [f.sum()]
    if null_fit.regression is Regression.LINEAR:
        out.append(f @ trend_column(lo, hi))
    out.append(f @ (c + d * x_prev))
    return np.array(out)


def lambda_(t, shape: SignalShape, window=None, null_fit: NullFit | None = None,
            method: str = "analytic") -> np.ndarray:
    """lambda_t = E(Zdot_t^2) at one or more locations.

    ``method="fd"`` uses central differences of the normalised kernel with a
    one-unit step instead of the analytic derivative.
    """
    if not shape.continuous:
        raise UnsupportedShapeError(f"lambda is undefined for the discontinuous {shape.kind.value}")
    lo, hi, u, Q, _ = _window_parts(shape, window, null_fit)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if method == "analytic":
        F = shape_matrix(shape, u, t, shape.tau)
        A = project_out(F, Q)
        g, sf2, ok = normalized_rows(A, F)
        Ad = project_out(shape_dmatrix(shape, u, t, shape.tau), Q)
        gd = gradient_rows(g, sf2, Ad, ok)
        lam = np.einsum("ij,ij->i", gd, gd)
        lam[~ok] = np.nan
        return lam
    if method == "fd":
        tt = np.concatenate([t - 1.0, t + 1.0])
        F = shape_matrix(shape, u, tt, shape.tau)
        A = project_out(F, Q)
        g, _, ok = normalized_rows(A, F)
        n = t.size
        d = (g[n:] - g[:n]) / 2.0
        lam = np.einsum("ij,ij->i", d, d)
        lam[~(ok[:n] & ok[n:])] = np.nan
        return lam
    raise InputError(f"unknown lambda method {method!r}")


def beta_growth(t, T, shape: SignalShape | None = None, T0: int = 0,
                regression: Regression | None = None, method: str = "closed") -> float:
    """Relative growth rate of sigma(t, T) as the window end T increases.

    beta = (d sigma^2/dT) / (2 sigma^2).  ``method="closed"`` uses the
    continuous-time broken-line form, ``"discrete"`` the unit step
    1 - sigma(t, T-1)/sigma(t, T), ``"halfstep"`` (sigma^2(T) - sigma^2(T-1)) / (2 sigma^2(T)).
    """
    shape = shape or SignalShape.broken_line()
    regression = Regression(regression or shape.default_regression())
    L = T - T0
    r = t - T0
    if method == "closed":
        if shape.kind is not ShapeKind.BROKEN_LINE or regression is not Regression.LINEAR:
            raise UnsupportedShapeError("closed-form beta is available for the broken line on a trend")
        x = r / L
        return float(0.5 * (3.0 / L - r * bl_sigma2_prime(x) / (L * L * bl_sigma2(x))))
    s_now = _sigma_f2(shape, regression, r, L)
    s_prev = _sigma_f2(shape, regression, r, L - 1)
    if method == "discrete":
        return float(1.0 - np.sqrt(s_prev / s_now))
    if method == "halfstep":
        return float(0.5 * (s_now - s_prev) / s_now)
    raise InputError(f"unknown beta method {method!r}")


def _sigma_f2(shape, regression, r, L):
    u = np.arange(1, L + 1, dtype=float)
    Q = orthonormal_basis(design(0, L, regression))
    a = project_out(shape_matrix(shape, u, np.array([float(r)]), shape.tau), Q)
    return float(a[0] @ a[0])


# ---------------------------------------------------------------------------
# bumps over a range of scales


@dataclass
class ScoreSurface:
    """Z over a (tau, t) product grid with the moments of its gradient."""

    grid: np.ndarray
    taus: np.ndarray
    z: np.ndarray
    sigma: np.ndarray
    lam_det: np.ndarray
    lam_t: np.ndarray
    interval: tuple
    sigma2: float
    rho: float
    shape: SignalShape
    ok: np.ndarray = field(repr=False, default=None)
    kernels: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def argmax(self) -> tuple[int, int]:
        zz = np.where(self.ok, np.abs(self.z), -np.inf)
        i, j = np.unravel_index(np.argmax(zz), zz.shape)
        return int(i), int(j)

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z[self.ok])))

    @property
    def t_hat(self) -> float:
        return float(self.grid[self.argmax[1]])

    @property
    def tau_hat(self) -> float:
        return float(self.taus[self.argmax[0]])


def surface_kernels(shape: SignalShape, lo: int, hi: int, grid, taus, regression):
    """Normalised kernels and gradient moments for every (tau, t) cell."""
    u = np.arange(lo + 1, hi + 1, dtype=float)
    Q = orthonormal_basis(design(lo, hi, regression))
    nt, ntau = len(grid), len(taus)
    G = np.zeros((ntau, nt, u.size))
    det = np.zeros((ntau, nt))
    lt = np.zeros((ntau, nt))
    okall = np.zeros((ntau, nt), dtype=bool)
    for i, tau in enumerate(taus):
        F = shape_matrix(shape, u, grid, tau)
        A = project_out(F, Q)
        g, sf2, ok = normalized_rows(A, F)
        gt = gradient_rows(g, sf2, project_out(shape_dmatrix(shape, u, grid, tau, "t"), Q), ok)
        gs = gradient_rows(g, sf2, project_out(shape_dmatrix(shape, u, grid, tau, "tau"), Q), ok)
        l11 = np.einsum("ij,ij->i", gt, gt)
        l22 = np.einsum("ij,ij->i", gs, gs)
        l12 = np.einsum("ij,ij->i", gt, gs)
        G[i] = g
        det[i] = np.maximum(l11 * l22 - l12 * l12, 0.0)
        lt[i] = l11
        okall[i] = ok
    return G, det, lt, okall


def bump_score_surface(ts: TimeSeries, shape: SignalShape, config: AnalysisConfig | None = None,
                       window=None, rho: float | None = None, tau_step: float = 1.0,
                       keep_kernels: bool = False) -> ScoreSurface:
    """Z_{t,tau} for a bump over a scale range, with det E(Zdot Zdot') per cell."""
    if shape.kind is not ShapeKind.BUMP or not shape.has_scale_range:
        raise UnsupportedShapeError("bump_score_surface needs a bump with a scale range")
    if not shape.continuous:
        raise UnsupportedShapeError("scale-space search needs a continuous bump profile")
    tau0, tau1 = shape.scale
    if tau0 < 2:
        raise InputError("smallest scale must be at least 2 grid units")
    taus = np.arange(tau0, tau1 + 1e-9, tau_step)
    if taus.size < 2:
        raise InputError("scale range collapses below the grid resolution")
    config = config or AnalysisConfig(shape=shape)
    fit = fit_null(ts, config.nuisance, window, rho)
    lo, hi = fit.window
    grid = default_grid(shape, lo, hi) if config.grid is None else np.asarray(config.grid, float)
    G, det, lt, ok = surface_kernels(shape, lo, hi, grid, taus, fit.regression)
    y = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, float)
    w, _ = working_series(y, fit.rho)
    s = np.sqrt(fit.sigma2)
    z = (G @ w[lo:hi]) / s
    z[~ok] = 0.0
    u = np.arange(lo + 1, hi + 1, dtype=float)
    sigma = np.zeros_like(z)
    for i, tau in enumerate(taus):
        F = shape_matrix(shape, u, grid, tau)
        A = project_out(F, orthonormal_basis(design(lo, hi, fit.regression)))
        sigma[i] = s * np.sqrt(np.einsum("ij,ij->i", A, A))
    return ScoreSurface(grid, taus, z, sigma, det, lt, (lo, hi), fit.sigma2, fit.rho, shape,
                        ok, G if keep_kernels else None)
