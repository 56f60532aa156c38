"""Estimators for the noise variance and the AR(1) coefficient."""

from __future__ import annotations

import logging
import warnings

import numpy as np

from ._linalg import PrefixSums, clip_window, design, ols, working_series
from .errors import DegenerateInputError, InputError
from .model import Regression, RhoSpec, Sigma2Spec, TimeSeries

log = logging.getLogger(__name__)

RHO_CLAMP = 0.99


def _values(ts) -> np.ndarray:
    if isinstance(ts, TimeSeries):
        return ts.values
    return np.asarray(ts, dtype=float)


def sigma2_estimate(
    ts,
    method="mse",
    rho: float = 0.0,
    window=None,
    regression: Regression = Regression.LINEAR,
    check: bool = True,
) -> float:
    """Estimate the innovation variance on the quasi-differenced series.

    ``method`` is ``"mse"`` (null-model residual mean square), ``"diff1"``
    (sum of squared first differences over 2n), ``"diff2"`` (squared second
    differences over 6n) or a :class:`Sigma2Spec`.
    """
    if isinstance(method, Sigma2Spec):
        if method.method == "fixed":
            return float(method.value)
        method = method.method
    y = _values(ts)
    if y.size < 4:
        raise InputError("variance estimation needs at least 4 observations")
    w, first = working_series(y, rho)
    lo, hi = clip_window(window, y.size, first)
    n = hi - lo
    ww = w[lo:hi]
    if method == "mse":
        X = design(lo, hi, Regression(regression))
        _, resid = ols(X, ww)
        val = float(resid @ resid) / (n - X.shape[1])
    elif method == "diff1":
        d = np.diff(ww)
        val = float(d @ d) / (2.0 * n)
    elif method == "diff2":
        d = np.diff(ww, 2)
        val = float(d @ d) / (6.0 * n)
    else:
        raise InputError(f"unknown variance estimator {method!r}")
    scale = float(np.mean((ww - ww.mean()) ** 2)) + float(np.mean(ww**2))
    if check and not val > 1e-14 * max(scale, 1e-300):
        raise DegenerateInputError(f"estimated variance is zero ({method})")
    return val


def window_sigma2(ps: PrefixSums, lo, hi, spec: Sigma2Spec, regression: Regression):
    """Vectorised per-window variance estimates (used when scanning many windows)."""
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    n = (hi - lo).astype(float)
    if spec.method == "fixed":
        return np.full(np.broadcast(lo, hi).shape, float(spec.value))
    if spec.method == "mse":
        return ps.rss(lo, hi, regression) / (n - regression.n_params)
    if spec.method == "diff1":
        return ps.diff_sum(lo, hi, 1) / (2.0 * n)
    return ps.diff_sum(lo, hi, 2) / (6.0 * n)


def _ar1_ols(y: np.ndarray, a: int, b: int, regression: Regression) -> float:
    """OLS of Y_u on [1, trend, Y_{u-1}] for positions a..b (1-based, a >= 2)."""
    u = np.arange(a, b + 1)
    lag = y[u - 2]
    X = design(a - 1, b, regression)
    X = np.column_stack([X, lag])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DegenerateInputError("lagged values are collinear with the regression")
    coef, _ = ols(X, y[u - 1])
    return float(coef[-1])


def rho_estimate(ts, method="mle", regression: Regression = Regression.LINEAR) -> float:
    """Null-model estimate of the AR(1) coefficient.

    The conditional (first observation held fixed) Gaussian likelihood under
    xi = 0 is maximised by the least-squares regression of Y_u on the
    background regression and Y_{u-1}; this is the fixed point of the usual
    alternation between the regression and the autocorrelation, reached
    directly.  ``method`` may be ``"mle"``, a :class:`RhoSpec`, or
    ``("subset", a, b)`` with 1-based inclusive positions.
    """
    y = _values(ts)
    m = y.size
    if isinstance(method, RhoSpec):
        if method.method == "fixed":
            return method.value
        sub = method.subset if method.method == "subset" else None
    elif isinstance(method, tuple) and method[0] == "subset":
        sub = (int(method[1]), int(method[2]))
    elif method == "mle":
        sub = None
    else:
        raise InputError(f"unknown rho method {method!r}")
    if sub is None:
        if m < 10:
            raise InputError("rho estimation needs at least 10 observations")
        a, b = 2, m
    else:
        a, b = sub
        if not (1 <= a < b <= m):
            raise InputError(f"subset {sub} lies outside the series (length {m})")
        a = max(a, 2)
        if b - a + 1 < 10:
            raise InputError("subset for rho estimation needs at least 10 observations")
    rho = _ar1_ols(y, a, b, Regression(regression))
    if not np.isfinite(rho):
        raise DegenerateInputError("rho estimate is not finite")
    if abs(rho) >= 1:
        warnings.warn(f"rho estimate {rho:.3f} clamped to +/-{RHO_CLAMP}", RuntimeWarning)
        rho = float(np.sign(rho) * RHO_CLAMP)
    return rho


def resolve_rho(ts, spec: RhoSpec, regression: Regression) -> float:
    if spec.method == "fixed":
        return float(spec.value)
    return rho_estimate(ts, spec, regression)
