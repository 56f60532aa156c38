"""Batched window scans shared by live segmentation and the Monte Carlo harness.

All functions take the working (quasi-differenced) series as a 2-D array of
shape ``(m, B)``; live analyses use ``B = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import Regression, Sigma2Spec
from .moments import KernelTable


class BatchPrefix:
    """Prefix sums over axis 0 for per-window variance estimates of a batch."""

    def __init__(self, w: np.ndarray):
        w = np.asarray(w, dtype=float)
        m, B = w.shape
        wc = w - w.mean(axis=0, keepdims=True)
        u = np.arange(1, m + 1, dtype=float)[:, None]

        def cs(a):
            out = np.zeros((a.shape[0] + 1,) + a.shape[1:])
            np.cumsum(a, axis=0, out=out[1:])
            return out

        self.cu = cs(u)[:, 0]
        self.cuu = cs(u * u)[:, 0]
        self.cw = cs(wc)
        self.cuw = cs(u * wc)
        self.cww = cs(wc * wc)
        d1 = np.zeros_like(wc)
        d1[1:] = np.diff(wc, axis=0)
        d2 = np.zeros_like(wc)
        d2[2:] = wc[2:] - 2 * wc[1:-1] + wc[:-2]
        self.cd1 = cs(d1 * d1)
        self.cd2 = cs(d2 * d2)

    def sigma2(self, lo, hi, spec: Sigma2Spec, regression: Regression):
        """Variance estimate per window; ``lo``/``hi`` are 1-D index arrays -> (k, B)."""
        lo = np.atleast_1d(lo)
        hi = np.atleast_1d(hi)
        n = (hi - lo).astype(float)[:, None]
        B = self.cw.shape[1]
        if spec.method == "fixed":
            return np.full((lo.size, B), float(spec.value))
        if spec.method == "diff1":
            return (self.cd1[hi] - self.cd1[lo + 1]) / (2.0 * n)
        if spec.method == "diff2":
            return (self.cd2[hi] - self.cd2[lo + 2]) / (6.0 * n)
        s0 = self.cw[hi] - self.cw[lo]
        ss = self.cww[hi] - self.cww[lo]
        rss = ss - s0 * s0 / n
        if regression is Regression.LINEAR:
            su = (self.cu[hi] - self.cu[lo])[:, None]
            suu = (self.cuu[hi] - self.cuu[lo])[:, None]
            suw = self.cuw[hi] - self.cuw[lo]
            ubar = su / n
            sxx = suu - n * ubar * ubar
            sxw = suw - ubar * s0
            rss = rss - sxw * sxw / sxx
        rss = np.maximum(rss, 0.0)
        return rss / (n - regression.n_params)


def _rows(kern, r_lo: int, r_hi: int):
    r = np.arange(r_lo, r_hi + 1)
    r = r[kern.ok[r]]
    return r, kern.g[r]


def seq_stage(w, origin: int, kernels: KernelTable, m0: int, n0: int, spec: Sigma2Spec,
              prefix: BatchPrefix | None = None):
    """Z(t, T) for every window (origin, T]; yields (L, r, Z) with Z of shape (len(r), B)."""
    m = w.shape[0]
    prefix = prefix or BatchPrefix(w)
    for L in range(m0 + n0, m - origin + 1):
        kern = kernels.get(L)
        r, g = _rows(kern, m0, L - n0)
        if r.size == 0:
            continue
        s2 = prefix.sigma2(np.array([origin]), np.array([origin + L]), spec, kernels.regression)
        z = (g @ w[origin:origin + L]) / np.sqrt(s2)
        yield L, r, z


def seq_stage_max(w, origin, kernels, m0, n0, spec):
    """Largest |Z| over the whole first stage, per batch column."""
    best = np.zeros(w.shape[1])
    for _, _, z in seq_stage(w, origin, kernels, m0, n0, spec):
        np.maximum(best, np.abs(z).max(axis=0), out=best)
    return best


@dataclass
class MSWindows:
    """Per-window maxima: arrays over (T0, L) windows for a single series."""

    T0: np.ndarray
    T1: np.ndarray
    t: np.ndarray
    z: np.ndarray


def ms_scan(w, first: int, kernels: KernelTable, m0: int, n0: int, spec: Sigma2Spec,
            windows: dict | None = None, reduce: str = "max", chunk: int = 200):
    """Scan all windows (T0, T0 + L] with T0 >= first.

    ``windows`` optionally maps L to the allowed T0 values (random subsets).
    With ``reduce="max"`` returns the overall max |Z| per batch column; with
    ``reduce="windows"`` (B must be 1) returns :class:`MSWindows`.
    """
    m, B = w.shape
    prefix = BatchPrefix(w)
    best = np.zeros(B)
    out_T0, out_L, out_r, out_z = [], [], [], []
    for L in range(m0 + n0, m - first + 1):
        if windows is not None:
            T0s = windows.get(L)
            if T0s is None or len(T0s) == 0:
                continue
            T0s = np.asarray(T0s)
        else:
            T0s = np.arange(first, m - L + 1)
        kern = kernels.get(L)
        r, g = _rows(kern, m0, L - n0)
        if r.size == 0:
            continue
        s = np.sqrt(prefix.sigma2(T0s, T0s + L, spec, kernels.regression))  # (k, B)
        view = sliding_window_view(w, L, axis=0)  # (m - L + 1, B, L)
        for k in range(0, T0s.size, chunk):
            idx = T0s[k:k + chunk]
            seg = view[idx]  # (k, B, L)
            z = np.tensordot(seg, g, axes=([2], [1]))  # (k, B, nr)
            z /= s[k:k + chunk][:, :, None]
            if reduce == "max":
                np.maximum(best, np.abs(z).max(axis=(0, 2)), out=best)
            else:
                zz = z[:, 0, :]
                j = np.abs(zz).argmax(axis=1)
                out_T0.append(idx)
                out_L.append(np.full(idx.size, L))
                out_r.append(r[j])
                out_z.append(zz[np.arange(idx.size), j])
    if reduce == "max":
        return best
    if not out_T0:
        e = np.zeros(0)
        return MSWindows(e.astype(int), e.astype(int), e, e)
    T0 = np.concatenate(out_T0)
    L = np.concatenate(out_L)
    return MSWindows(T0, T0 + L, T0 + np.concatenate(out_r), np.concatenate(out_z))


def pair_stat(z: np.ndarray, G: np.ndarray, grid: np.ndarray, h: int, chunk: int = 20000):
    """Largest two-locus quadratic form per batch column.

    ``z`` is (n, B) standardised scores on ``grid`` with unit kernels ``G``.
    Returns (max U, i, j) where i, j index the maximising pair (per column).
    """
    C = G @ G.T
    I, J = np.nonzero((grid[None, :] - grid[:, None]) > h)
    den = 1.0 - C[I, J] ** 2
    good = den > 1e-10
    I, J, den, c = I[good], J[good], den[good], C[I[good], J[good]]
    B = z.shape[1]
    best = np.full(B, -np.inf)
    bi = np.zeros(B, dtype=int)
    bj = np.zeros(B, dtype=int)
    for k in range(0, I.size, chunk):
        i, j = I[k:k + chunk], J[k:k + chunk]
        zs, zt = z[i], z[j]
        U = (zs * zs - 2 * c[k:k + chunk, None] * zs * zt + zt * zt) / den[k:k + chunk, None]
        a = U.argmax(axis=0)
        val = U[a, np.arange(B)]
        upd = val > best
        best[upd] = val[upd]
        bi[upd] = i[a[upd]]
        bj[upd] = j[a[upd]]
    return best, bi, bj


def pair_field(z: np.ndarray, G: np.ndarray, grid: np.ndarray, h: int):
    """All admissible pairs with their U values for a single series (z is 1-D)."""
    C = G @ G.T
    I, J = np.nonzero((grid[None, :] - grid[:, None]) > h)
    den = 1.0 - C[I, J] ** 2
    good = den > 1e-10
    I, J, den = I[good], J[good], den[good]
    c = C[I, J]
    U = (z[I] ** 2 - 2 * c * z[I] * z[J] + z[J] ** 2) / den
    return I, J, U
