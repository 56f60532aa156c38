"""Non-Gaussian score processes: a quasi-likelihood GLM score and threshold
autoregression (TAR) score tests of order one and two."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from ._linalg import design, orthonormal_basis, project_out
from .crossing import Tar1Approx, Tar2Approx, solve_threshold
from .errors import DegenerateInputError, InputError, ThresholdError
from .model import Regression, SignalShape, TimeSeries
from .moments import gradient_rows, normalized_rows, shape_dmatrix, shape_matrix
from .score import ScoreProcess, default_grid


def _values(ts) -> np.ndarray:
    return ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=float)


# ---------------------------------------------------------------------------
# GLM score


@dataclass
class GlmFit:
    coef: np.ndarray
    mu: np.ndarray
    weights: np.ndarray
    dispersion: float
    iterations: int
    link: str


def _irls_poisson(y: np.ndarray, X: np.ndarray, tol: float = 1e-10, max_iter: int = 100):
    mu = np.maximum(y, 0.5)
    eta = np.log(mu)
    coef = np.linalg.lstsq(X, eta, rcond=None)[0]
    for it in range(1, max_iter + 1):
        eta = X @ coef
        mu = np.exp(eta)
        zwork = eta + (y - mu) / mu
        sw = np.sqrt(mu)
        new = np.linalg.lstsq(X * sw[:, None], zwork * sw, rcond=None)[0]
        if np.max(np.abs(new - coef)) < tol * (1 + np.max(np.abs(coef))):
            coef = new
            break
        coef = new
    mu = np.exp(X @ coef)
    return coef, mu, it


def glm_null_fit(y: np.ndarray, X: np.ndarray, link: str, dispersion="estimate") -> GlmFit:
    n, p = X.shape
    if link == "poisson_log":
        coef, mu, it = _irls_poisson(y, X)
        w = mu
    elif link == "identity_quasi":
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        mu, it = X @ coef, 1
        w = np.ones(n)
    else:
        raise InputError(f"unknown link {link!r}")
    if dispersion == "estimate":
        pearson = (y - mu) ** 2 / w
        phi = float(pearson.sum() / (n - p))
    else:
        phi = float(dispersion)
    if not phi > 0:
        raise DegenerateInputError("dispersion estimate is zero")
    return GlmFit(coef, mu, w, phi, it, link)


def glm_score_process(ts: TimeSeries, shape: SignalShape | None = None, link: str = "poisson_log",
                      dispersion="estimate", regression: Regression | None = None,
                      grid=None) -> ScoreProcess:
    """Efficient score for a local signal added to the natural parameter.

    With mean mu_u (log link for counts, identity otherwise) and working
    weights W = diag(var(mu_u)), the score at t is V_t = sum (Y_u - mu_u) f(u - t)
    with null variance phi [f'Wf - f'WX (X'WX)^{-1} X'Wf].  ``dispersion`` is
    ``"estimate"`` (Pearson chi-square over residual df) or a fixed number.
    """
    shape = shape or SignalShape.broken_line()
    if shape.has_scale_range:
        raise InputError("glm score needs a fixed signal scale")
    y = _values(ts)
    if link == "poisson_log":
        if np.any(y < 0):
            raise InputError("negative counts under the Poisson link")
        if dispersion != "estimate" and not np.allclose(y, np.round(y)):
            raise InputError("the Poisson link with fixed dispersion needs integer counts")
    reg = Regression(regression) if regression is not None else shape.default_regression()
    m = y.size
    X = design(0, m, reg)
    fit = glm_null_fit(y, X, link, dispersion)
    sw = np.sqrt(fit.weights)
    u = np.arange(1, m + 1, dtype=float)
    grid = default_grid(shape, 0, m) if grid is None else np.asarray(grid, dtype=float)
    Q = orthonormal_basis(X * sw[:, None])
    F = shape_matrix(shape, u, grid, shape.tau) * sw[None, :]
    A = project_out(F, Q)
    g, sf2, ok = normalized_rows(A, F)
    if not ok.any():
        raise DegenerateInputError("every grid point is degenerate")
    pearson = (y - fit.mu) / sw
    s = np.sqrt(fit.dispersion)
    z = (g @ pearson)[ok] / s
    sigma = s * np.sqrt(sf2[ok])
    if shape.continuous:
        Ad = project_out(shape_dmatrix(shape, u, grid, shape.tau) * sw[None, :], Q)
        gd = gradient_rows(g, sf2, Ad, ok)[ok]
        lam = np.einsum("ij,ij->i", gd, gd)
    else:
        lam = np.full(int(ok.sum()), np.nan)
    return ScoreProcess(grid=grid[ok], v=z * sigma, sigma=sigma, z=z, lam=lam, interval=(0, m),
                        sigma2=fit.dispersion, rho=0.0, shape=shape, null_fit=None,
                        kernels=g[ok])


# ---------------------------------------------------------------------------
# threshold autoregression


@dataclass
class TarMoments:
    """Empirical moments on the threshold grid (per observation, T = number of terms).

    Order 1: ``g`` = E(Y^2; Y <= t), ``psi1`` = E(Y; Y <= t) and ``sigma2`` the
    projected variance per unit noise variance.  Order 2: ``G``, ``Psi`` and
    ``Sigma`` hold the 2x2 (or 2x3) matrix versions.
    """

    grid: np.ndarray
    order: int
    T: int
    mean: float
    var: float
    g: Optional[np.ndarray] = None
    psi1: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    Psi: Optional[np.ndarray] = None
    Sigma: Optional[np.ndarray] = None


@dataclass
class TarResult:
    process: ScoreProcess
    max_stat: float
    t_hat: float
    p_value: float
    threshold: float
    xi_hat: np.ndarray
    moments: TarMoments
    p_value_gaussian: Optional[float] = None
    null_coef: Optional[np.ndarray] = None
    sigma: float = float("nan")

    def as_dict(self) -> dict:
        out = {
            "order": self.moments.order,
            "max_stat": self.max_stat,
            "t_hat": self.t_hat,
            "p_value": self.p_value,
            "threshold": self.threshold,
            "xi_hat": [float(x) for x in np.atleast_1d(self.xi_hat)],
            "null_mean": self.moments.mean,
            "null_sd": float(np.sqrt(self.moments.var)),
            "noise_sd": self.sigma,
            "null_coef": [float(c) for c in self.null_coef],
            "n_thresholds": int(self.moments.grid.size),
        }
        if self.p_value_gaussian is not None:
            out["p_value_gaussian"] = self.p_value_gaussian
        return out


def _tie_ends(sorted_vals: np.ndarray) -> np.ndarray:
    """Index of the last element of each run of equal values."""
    last = np.ones(sorted_vals.size, dtype=bool)
    last[:-1] = sorted_vals[1:] != sorted_vals[:-1]
    return np.nonzero(last)[0]


def _grid_indices(key_sorted: np.ndarray, key: np.ndarray, quantiles) -> np.ndarray:
    qlo, qhi = quantiles
    if not 0 <= qlo < qhi <= 1:
        raise InputError("threshold quantiles must satisfy 0 <= lo < hi <= 1")
    lo, hi = np.quantile(key, [qlo, qhi])
    ends = _tie_ends(key_sorted)
    v = key_sorted[ends]
    ends = ends[(v >= lo) & (v <= hi)]
    if ends.size < 2:
        raise DegenerateInputError("fewer than two distinct thresholds in the quantile range")
    return ends


def _null_ols(Y: np.ndarray, X: np.ndarray):
    XtX = X.T @ X
    ev = np.linalg.eigvalsh(XtX)
    if ev[0] <= 1e-10 * ev[-1]:
        raise DegenerateInputError("degenerate moments (constant or collinear series)")
    A = np.linalg.inv(XtX)
    coef = A @ X.T @ Y
    e = Y - X @ coef
    s2 = float(e @ e) / (Y.size - X.shape[1])
    if not s2 > 0:
        raise DegenerateInputError("null residual variance is zero")
    return coef, e, s2, A


def _gaussian_tar1_prob(b: float, mean: float, var: float, t_lo: float, t_hi: float,
                        n: int = 2001) -> float:
    """2 b phi(b) int Psi'A Psidot / sigma^2 dt under a normal stationary law."""
    sd = np.sqrt(var)
    t = np.linspace(t_lo, t_hi, n)
    x = (t - mean) / sd
    Phi, phi = norm.cdf(x), norm.pdf(x)
    p1 = mean * Phi - sd * phi
    p2 = (mean**2 + var) * Phi - sd * (mean + t) * phi
    dp1 = t * phi / sd
    dp2 = t * t * phi / sd
    A = np.linalg.inv(np.array([[1.0, mean], [mean, mean**2 + var]]))
    quad = A[0, 0] * p1 * p1 + 2 * A[0, 1] * p1 * p2 + A[1, 1] * p2 * p2
    s2 = p2 - quad
    num = A[0, 0] * p1 * dp1 + A[0, 1] * (p1 * dp2 + p2 * dp1) + A[1, 1] * p2 * dp2
    good = s2 > 1e-12 * (mean**2 + var)
    integrand = np.where(good, num / np.where(good, s2, 1.0), 0.0)
    return float(min(1.0, 2 * b * norm.pdf(b) * trapezoid(integrand, t)))


def _tar1(y: np.ndarray, quantiles, alpha: float) -> TarResult:
    Y, L = y[1:], y[:-1]
    T = Y.size
    X = np.column_stack([np.ones(T), L])
    coef, e, s2, A = _null_ols(Y, X)
    o = np.argsort(L, kind="stable")
    Ls, es = L[o], e[o]
    idx = _grid_indices(Ls, L, quantiles)
    c1 = np.cumsum(Ls)[idx]
    cxx = np.cumsum(Ls * Ls)[idx]
    cv = np.cumsum(Ls * es)[idx]
    xX = np.column_stack([c1, cxx])
    xx = cxx - np.einsum("ij,jk,ik->i", xX, A, xX)
    good = xx > 1e-10 * cxx
    idx, c1, cxx, cv, xx = idx[good], c1[good], cxx[good], cv[good], xx[good]
    if idx.size < 2:
        raise DegenerateInputError("degenerate moments on the threshold grid")
    z = cv / np.sqrt(s2 * xx)
    grid = Ls[idx]
    k2 = np.diff(cxx) / xx[1:]
    approx = Tar1Approx(k2)
    i = int(np.argmax(np.abs(z)))
    b = float(abs(z[i]))
    p = approx.prob(b)
    try:
        thr = solve_threshold(alpha, approx)
    except ThresholdError:
        thr = float("nan")
    mean, var = float(L.mean()), float(L.var())
    pg = _gaussian_tar1_prob(b, mean, var, grid[0], grid[-1])
    mom = TarMoments(grid=grid, order=1, T=T, mean=mean, var=var, g=cxx / T, psi1=c1 / T,
                     sigma2=xx / T)
    sigma = np.sqrt(s2 * xx)
    zp = ScoreProcess(grid=grid, v=z * sigma, sigma=sigma, z=z, lam=np.full(grid.size, np.nan),
                      interval=(1, y.size), sigma2=s2, rho=float(coef[1]), shape=None)
    xi = float(cv[i] / xx[i])
    return TarResult(zp, b, float(grid[i]), p, thr, np.array([xi]), mom, pg, coef, float(np.sqrt(s2)))


def _inv_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    return (V / np.sqrt(w)) @ V.T


def _tar2(y: np.ndarray, quantiles, alpha: float) -> TarResult:
    Y, L1, L2 = y[2:], y[1:-1], y[:-2]
    T = Y.size
    X = np.column_stack([np.ones(T), L1, L2])
    coef, e, s2, A = _null_ols(Y, X)
    o = np.argsort(L2, kind="stable")
    key = L2[o]
    R = np.column_stack([L1[o], L2[o]])  # signal regressors, active when L2 <= t
    Xs = X[o]
    idx = _grid_indices(key, L2, quantiles)
    cv = np.cumsum(R * e[o][:, None], axis=0)[idx]
    cG = np.cumsum(R[:, :, None] * R[:, None, :], axis=0)[idx]
    cP = np.cumsum(R[:, :, None] * Xs[:, None, :], axis=0)[idx]  # (n, 2, 3)
    S = cG - np.einsum("nij,jk,nlk->nil", cP, A, cP)
    ev = np.linalg.eigvalsh(S)
    good = ev[:, 0] > 1e-8 * ev[:, 1]
    idx, cv, cG, cP, S = idx[good], cv[good], cG[good], cP[good], S[good]
    if idx.size < 2:
        raise DegenerateInputError("degenerate moments on the threshold grid")
    Sinv_half = np.stack([_inv_sqrt(Si) for Si in S])
    Zvec = np.einsum("nij,nj->ni", Sinv_half, cv) / np.sqrt(s2)
    stat = np.sqrt(np.einsum("ni,ni->n", Zvec, Zvec))
    dG = np.diff(cG, axis=0)
    Sh = Sinv_half[1:]
    C = np.einsum("nij,njk,nkl->nil", Sh, dG, Sh)
    approx = Tar2Approx(C)
    i = int(np.argmax(stat))
    b = float(stat[i])
    p = approx.prob(b)
    try:
        thr = solve_threshold(alpha, approx)
    except ThresholdError:
        thr = float("nan")
    grid = key[idx]
    mom = TarMoments(grid=grid, order=2, T=T, mean=float(L2.mean()), var=float(L2.var()),
                     G=cG / T, Psi=cP / T, Sigma=S / T)
    xi = np.linalg.solve(S[i], cv[i])
    sigma = np.sqrt(s2) * np.ones(grid.size)
    zp = ScoreProcess(grid=grid, v=stat * sigma, sigma=sigma, z=stat,
                      lam=np.full(grid.size, np.nan), interval=(2, y.size), sigma2=s2,
                      rho=float(coef[1]), shape=None)
    return TarResult(zp, b, float(grid[i]), p, thr, xi, mom, None, coef, float(np.sqrt(s2)))


def tar_score_test(ts, order: int = 1, quantiles=(0.1, 0.9), alpha: float = 0.05) -> TarResult:
    """Score test for a threshold shift in the autoregressive coefficient.

    Order 1: Y_u = mu + rho Y_{u-1} + xi Y_{u-1} 1{Y_{u-1} <= t} + e_u, maximised
    over thresholds t at the distinct lagged values between the given
    quantiles.  Order 2 adds Y_{u-2}, with both lags shifting when
    Y_{u-2} <= t, and uses the norm of the standardised 2-vector score.
    """
    y = _values(ts)
    if y.size < 30:
        raise InputError("the TAR test needs at least 30 observations")
    if order == 1:
        return _tar1(y, quantiles, alpha)
    if order == 2:
        return _tar2(y, quantiles, alpha)
    raise InputError("TAR order must be 1 or 2")


def tar_covariance(moments: TarMoments, i: int, j: int) -> float:
    """Null correlation of Z at grid points i and j from the order-1 moments:
    [G(min) - Psi(s)'A Psi(t)] / (sigma(s) sigma(t)), all per observation."""
    if moments.order != 1:
        raise InputError("only available for order 1")
    m1 = moments.mean
    m2 = moments.var + m1 * m1
    A = np.linalg.inv(np.array([[1.0, m1], [m1, m2]]))
    ps = np.array([moments.psi1[i], moments.g[i]])
    pt = np.array([moments.psi1[j], moments.g[j]])
    k = min(i, j)
    return float((moments.g[k] - ps @ A @ pt) / np.sqrt(moments.sigma2[i] * moments.sigma2[j]))
