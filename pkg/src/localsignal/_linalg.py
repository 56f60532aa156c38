"""Small linear-algebra helpers shared by the score engine and the estimators.

Positions are 1-based, as in the model: observation ``u`` lives at array
index ``u - 1``.  A window ``(T0, T1)`` holds the observations with
``T0 < u <= T1``.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, InputError
from .model import Regression


def working_series(y: np.ndarray, rho: float) -> tuple[np.ndarray, int]:
    """Quasi-differenced series W_u = Y_u - rho Y_{u-1}.

    Returns ``(W, first)`` where ``first`` is the smallest usable window
    start: with rho != 0 the first observation is conditioned on and dropped.
    ``W[0]`` is a placeholder in that case and must not be read.
    """
    y = np.asarray(y, dtype=float)
    if rho == 0.0:
        return y.copy(), 0
    w = np.empty_like(y)
    w[0] = 0.0
    w[1:] = y[1:] - rho * y[:-1]
    return w, 1


def clip_window(window, m: int, first: int) -> tuple[int, int]:
    if window is None:
        lo, hi = 0, m
    else:
        lo, hi = int(window[0]), int(window[1])
    if not (0 <= lo < hi <= m):
        raise InputError(f"window {window} does not fit a series of length {m}")
    return max(lo, first), hi


def trend_column(lo: int, hi: int) -> np.ndarray:
    """Centred, scaled trend (u - (T0 + T1 + 1)/2) / L over the window."""
    u = np.arange(lo + 1, hi + 1, dtype=float)
    L = hi - lo
    return (u - 0.5 * (lo + hi + 1)) / L


def design(lo: int, hi: int, regression: Regression) -> np.ndarray:
    cols = [np.ones(hi - lo)]
    if regression is Regression.LINEAR:
        cols.append(trend_column(lo, hi))
    return np.column_stack(cols)


def orthonormal_basis(X: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(X)
    d = np.abs(np.diag(r))
    if d.min() <= 1e-10 * max(d.max(), 1e-300):
        raise DegenerateInputError("design matrix is rank deficient")
    return q


def project_out(F: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Rows of F minus their projection onto span(Q) (Q has orthonormal columns)."""
    return F - (F @ Q) @ Q.T


def ols(X: np.ndarray, y: np.ndarray):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, resid


class PrefixSums:
    """Prefix sums for O(1) window regressions of W on [1, u].

    Used for the per-window variance estimates needed when scanning many
    windows.  The series is centred before summing (the intercept absorbs
    it), which keeps the residual sum of squares well conditioned.
    """

    def __init__(self, w: np.ndarray):
        w = np.asarray(w, dtype=float)
        m = w.size
        self.m = m
        shift = np.mean(w)
        wc = w - shift
        u = np.arange(1, m + 1, dtype=float)

        def cs(a):
            out = np.zeros(a.shape[0] + 1)
            np.cumsum(a, out=out[1:])
            return out

        self.c0 = np.arange(m + 1, dtype=float)
        self.cu = cs(u)
        self.cuu = cs(u * u)
        self.cw = cs(wc)
        self.cuw = cs(u * wc)
        self.cww = cs(wc * wc)
        d1 = np.zeros(m)
        d1[1:] = np.diff(wc)
        d2 = np.zeros(m)
        d2[2:] = wc[2:] - 2 * wc[1:-1] + wc[:-2]
        self.cd1 = cs(d1 * d1)
        self.cd2 = cs(d2 * d2)

    def rss(self, lo, hi, regression: Regression):
        """Residual sum of squares of W on the window design, vectorised over (lo, hi)."""
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        n = hi - lo
        s0 = self.cw[hi] - self.cw[lo]
        ss = self.cww[hi] - self.cww[lo]
        if regression is Regression.CONSTANT:
            out = ss - s0 * s0 / n
        else:
            # centre u within each window for numerical stability
            su = self.cu[hi] - self.cu[lo]
            suu = self.cuu[hi] - self.cuu[lo]
            suw = self.cuw[hi] - self.cuw[lo]
            ubar = su / n
            sxx = suu - n * ubar * ubar
            sxw = suw - ubar * s0
            out = ss - s0 * s0 / n - sxw * sxw / sxx
        return np.maximum(out, 0.0)

    def diff_sum(self, lo, hi, order: int):
        """Sum of squared differences of the given order lying inside each window."""
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        c = self.cd1 if order == 1 else self.cd2
        return c[hi] - c[lo + order]
