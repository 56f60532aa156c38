"""Window kernels and the null moments (lambda, beta) feeding the tail approximations.

Everything here depends on a window only through its length ``L`` and the
offset ``r = t - T0`` of the candidate location inside it (the background
regression is translation invariant).  Quantities are per unit noise
variance.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ._linalg import design, orthonormal_basis, project_out
from .errors import UnsupportedShapeError
from .model import Regression, ShapeKind, SignalShape

DEGENERACY_EPS = 1e-8


# ---------------------------------------------------------------------------
# continuous-time closed forms for the broken line on a unit window


def g1(t, T):
    """First coordinate of the broken-line Psi in continuous time: (T - t)^2 / 2T^2."""
    t = np.asarray(t, dtype=float)
    return (T - t) ** 2 / (2.0 * T**2)


def g2(t, T):
    """Second coordinate as printed: [(T - t)^3/12 - t (T - t)^2/4] / T^3."""
    t = np.asarray(t, dtype=float)
    return ((T - t) ** 3 / 12.0 - t * (T - t) ** 2 / 4.0) / T**3


def bl_sigma2(x):
    """sigma^2(t)/T for the broken line against [1, u], x = t/T."""
    s = 1.0 - np.asarray(x, dtype=float)
    return s**3 / 3.0 - s**4 * (1.0 + (1 - s) + (1 - s) ** 2) / 3.0


def bl_sigma2_prime(x):
    x = np.asarray(x, dtype=float)
    s = 1.0 - x
    return -(s**2) + (4.0 * s**3 * (1 + x + x * x) - s**4 * (1 + 2 * x)) / 3.0


def bl_vdot2(x):
    """E(Vdot_t^2)/T for the broken line, x = t/T."""
    x = np.asarray(x, dtype=float)
    s = 1.0 - x
    return s - s * s - 3.0 * (x * s) ** 2


@dataclass
class MomentTable:
    """Null moments for one window length, indexed by r = 0..L."""

    L: int
    lam: np.ndarray
    beta: np.ndarray
    beta0: np.ndarray
    kappa: np.ndarray


class BrokenLineMoments:
    """Continuous-time moments of the broken-line score against a linear trend.

    With x = r/L and sigma^2 = L^3 h(x):
      lambda = k(x)/(L^2 h) - (h'/(2 h L))^2,
      beta   = (3/L - r h'/(L^2 h)) / 2        (growth at the right end),
      beta0  = (3/L + (L - r) h'/(L^2 h)) / 2  (growth at the left end).
    """

    continuous = True
    name = "continuous"

    def __init__(self):
        self._cache: dict[int, MomentTable] = {}

    def table(self, L: int) -> MomentTable:
        tab = self._cache.get(L)
        if tab is not None:
            return tab
        r = np.arange(L + 1, dtype=float)
        x = r / L
        with np.errstate(divide="ignore", invalid="ignore"):
            h = bl_sigma2(x)
            hp = bl_sigma2_prime(x)
            k = bl_vdot2(x)
            lam = k / (L * L * h) - (hp / (2.0 * h * L)) ** 2
            beta = 0.5 * (3.0 / L - r * hp / (L * L * h))
            beta0 = 0.5 * (3.0 / L + (L - r) * hp / (L * L * h))
        bad = ~(h > 0)
        for a in (lam, beta, beta0):
            a[bad] = np.nan
        tab = MomentTable(L, np.maximum(lam, 0.0), beta, beta0, np.full(L + 1, np.nan))
        self._cache[L] = tab
        return tab


def shape_matrix(shape: SignalShape, u: np.ndarray, t: np.ndarray, tau: float = 1.0):
    """F[j, i] = f((u_i - t_j)/tau)."""
    x = u[None, :] - np.asarray(t, dtype=float)[:, None]
    return shape(x, tau)


def shape_dmatrix(shape: SignalShape, u, t, tau: float = 1.0, wrt: str = "t"):
    """Derivative of F with respect to t (default) or tau."""
    x = u[None, :] - np.asarray(t, dtype=float)[:, None]
    fp = shape.derivative(x, tau)
    if wrt == "t":
        return -fp
    if wrt == "tau":
        return -fp * x / tau
    raise ValueError(wrt)


def normalized_rows(A: np.ndarray, F: np.ndarray):
    """Unit-norm rows of A plus the squared norms and a degeneracy mask."""
    sf2 = np.einsum("ij,ij->i", A, A)
    ff = np.einsum("ij,ij->i", F, F)
    ok = (ff > 0) & (sf2 > DEGENERACY_EPS * ff)
    g = np.zeros_like(A)
    g[ok] = A[ok] / np.sqrt(sf2[ok])[:, None]
    return g, sf2, ok


def gradient_rows(g: np.ndarray, sf2: np.ndarray, Adot: np.ndarray, ok: np.ndarray):
    """Derivative of the unit vector g = a/|a| given adot."""
    out = np.zeros_like(Adot)
    inner = np.einsum("ij,ij->i", g, Adot)
    out[ok] = (Adot[ok] - g[ok] * inner[ok, None]) / np.sqrt(sf2[ok])[:, None]
    return out


@dataclass
class WindowKernel:
    """Normalised score kernels for every offset r = 0..L in a window of length L."""

    L: int
    g: np.ndarray
    sf2: np.ndarray
    ok: np.ndarray
    gdot: np.ndarray | None = None


class KernelTable:
    """Lazily built, cached window kernels for one (shape, regression, tau)."""

    def __init__(self, shape: SignalShape, regression: Regression, tau: float | None = None,
                 max_cached_floats: int = 30_000_000):
        self.shape = shape
        self.regression = Regression(regression)
        self.tau = shape.tau if tau is None else float(tau)
        self.max_cached_floats = max_cached_floats
        self._cache: OrderedDict[int, WindowKernel] = OrderedDict()
        self._size = 0

    def get(self, L: int) -> WindowKernel:
        k = self._cache.get(L)
        if k is not None:
            self._cache.move_to_end(L)
            return k
        k = self._build(L)
        self._cache[L] = k
        self._size += k.g.size * (2 if k.gdot is not None else 1)
        while self._size > self.max_cached_floats and len(self._cache) > 1:
            _, old = self._cache.popitem(last=False)
            self._size -= old.g.size * (2 if old.gdot is not None else 1)
        return k

    def _build(self, L: int) -> WindowKernel:
        u = np.arange(1, L + 1, dtype=float)
        r = np.arange(L + 1, dtype=float)
        Q = orthonormal_basis(design(0, L, self.regression))
        F = shape_matrix(self.shape, u, r, self.tau)
        A = project_out(F, Q)
        g, sf2, ok = normalized_rows(A, F)
        gdot = None
        if self.shape.continuous:
            Ad = project_out(shape_dmatrix(self.shape, u, r, self.tau), Q)
            gdot = gradient_rows(g, sf2, Ad, ok)
        return WindowKernel(L, g, sf2, ok, gdot)


class DiscreteMoments:
    """Exact discrete-grid moments computed from the window kernels.

    beta uses the unit-step growth of sigma(t, T) in T, beta0 the growth when
    the window start moves one step to the left, and kappa the one-step
    decorrelation in t (used for discontinuous shapes).
    """

    name = "discrete"

    def __init__(self, shape: SignalShape, regression: Regression | None = None,
                 tau: float | None = None):
        if regression is None:
            regression = shape.default_regression()
        self.kernels = KernelTable(shape, regression, tau, max_cached_floats=2_000_000)
        self.continuous = shape.continuous
        self._sf2: dict[int, np.ndarray] = {}
        self._lam_cache: dict[int, np.ndarray] = {}
        self._kap_cache: dict[int, np.ndarray] = {}
        self._cache: dict[int, MomentTable] = {}

    def _sigma_f2(self, L: int) -> np.ndarray:
        s = self._sf2.get(L)
        if s is None:
            k = self.kernels.get(L)
            s = np.where(k.ok, k.sf2, np.nan)
            self._sf2[L] = s
            if k.gdot is not None:
                self._lam_cache[L] = np.where(k.ok, np.einsum("ij,ij->i", k.gdot, k.gdot), np.nan)
            else:
                kap = np.full(L + 1, np.nan)
                kap[:-1] = 1.0 - np.einsum("ij,ij->i", k.g[:-1], k.g[1:])
                kap[~k.ok] = np.nan
                self._kap_cache[L] = kap
        return s

    def table(self, L: int) -> MomentTable:
        tab = self._cache.get(L)
        if tab is not None:
            return tab
        s = np.sqrt(self._sigma_f2(L))
        sprev = np.sqrt(self._sigma_f2(L - 1)) if L > 2 else np.full(L, np.nan)
        beta = np.full(L + 1, np.nan)
        beta[:L] = 1.0 - sprev / s[:L]
        beta0 = np.full(L + 1, np.nan)
        beta0[1:] = 1.0 - sprev / s[1:]
        nanv = np.full(L + 1, np.nan)
        lam = self._lam_cache.get(L, nanv)
        kap = self._kap_cache.get(L, nanv)
        tab = MomentTable(L, lam, beta, beta0, kap)
        self._cache[L] = tab
        return tab


def default_moments(shape: SignalShape, regression: Regression | None = None):
    """Continuous closed forms for the broken line on a trend, discrete otherwise."""
    if regression is None:
        regression = shape.default_regression()
    if shape.kind is ShapeKind.BROKEN_LINE and Regression(regression) is Regression.LINEAR:
        return BrokenLineMoments()
    if shape.has_scale_range:
        raise UnsupportedShapeError("window scans need a fixed bump scale")
    return DiscreteMoments(shape, regression)
