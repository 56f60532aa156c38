"""Tail approximations for maxima of score processes, and their inversion.

Each approximation is available as a function ``*_prob(b, ...)`` and as a
small class that precomputes the b-independent parts (so thresholds can be
solved quickly).  Probabilities are clamped to [0, 1]; ``raw=True`` returns
the unclamped first-order value.

Continuous shapes use Rice-type terms b lambda^{1/2}/(2 pi)^{1/2} in t; a
direction in which the process behaves like a random walk (growth of the
window, or t for a discontinuous shape) contributes b^2 beta nu(b (2 beta)^{1/2}).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import ndtr
from scipy.stats import norm

from .errors import InputError, ThresholdError, UnsupportedShapeError
from .model import Regression, SignalShape
from .moments import BrokenLineMoments, DiscreteMoments, default_moments

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


class TailMethod(str, Enum):
    RICE = "rice"
    SCAN = "scan"  # random-walk analogue of the Rice bound for discontinuous shapes
    SCALE_SPACE = "scale-space"
    SEQ_V1 = "seq-v1"
    SEQ_V2 = "seq-v2"
    MS = "ms"
    TWO_LOCUS = "two-locus"
    TAR1 = "tar1"
    TAR2 = "tar2"


@dataclass
class TailApproximation:
    method: TailMethod
    b: float
    value: float
    raw: float
    inputs: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"method": self.method.value, "b": self.b, "value": self.value, "raw": self.raw,
                "inputs": self.inputs}


def _clamp(p: float) -> float:
    return float(min(max(p, 0.0), 1.0))


def nu(x):
    """Overshoot correction nu(x) ~ (2/x)(Phi(x/2) - 1/2) / ((x/2)Phi(x/2) + phi(x/2))."""
    x = np.asarray(x, dtype=float)
    h = 0.5 * x
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (2.0 / x) * (ndtr(h) - 0.5) / (h * ndtr(h) + norm.pdf(h))
    out = np.where(x < 1e-8, 1.0 - 0.583 * x, out)
    return out if out.ndim else float(out)


def _trap_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    if n == 1:
        return np.zeros(1)
    w[0] = w[-1] = 0.5
    return w


# ---------------------------------------------------------------------------
# single scans


def rice_bound(b: float, lam, t=None, raw: bool = False) -> float:
    """Two-sided Rice bound 2{phi(b)/(2 pi)^{1/2} int lambda^{1/2} dt + 1 - Phi(b)}."""
    lam = np.asarray(lam, dtype=float)
    if lam.size < 2:
        integral = 0.0
    else:
        x = np.arange(lam.size, dtype=float) if t is None else np.asarray(t, dtype=float)
        integral = float(trapezoid(np.sqrt(np.maximum(lam, 0.0)), x))
    p = 2.0 * (norm.pdf(b) / np.sqrt(2 * np.pi) * integral + norm.sf(b))
    return p if raw else _clamp(p)


def scan_prob(b: float, kappa, raw: bool = False) -> float:
    """Two-sided scan over a discrete grid with one-step decorrelation kappa.

    2 b phi(b) sum kappa nu(b (2 kappa)^{1/2}); the random-walk counterpart
    of the Rice bound, used for jump-type shapes.
    """
    k = np.asarray(kappa, dtype=float)
    k = k[np.isfinite(k) & (k > 0)]
    p = 2.0 * b * norm.pdf(b) * float(np.sum(k * nu(b * np.sqrt(2 * k))))
    return p if raw else _clamp(p)


class ScaleSpaceApprox:
    """Eq.-9-style approximation for a bump searched over location and scale."""

    method = TailMethod.SCALE_SPACE

    def __init__(self, lam_det, lam_t, grid, taus, ok=None):
        lam_det = np.asarray(lam_det, float)
        lam_t = np.asarray(lam_t, float)
        if ok is not None:
            lam_det = np.where(ok, lam_det, 0.0)
            lam_t = np.where(ok, lam_t, 0.0)
        grid = np.asarray(grid, float)
        taus = np.atleast_1d(np.asarray(taus, float))
        if taus.size > 1:
            inner = trapezoid(np.sqrt(lam_det), grid, axis=1)
            self.area = float(trapezoid(inner, taus))
        else:
            self.area = 0.0
        self.edge = float(trapezoid(np.sqrt(lam_t[0]), grid))

    def prob(self, b: float, raw: bool = False) -> float:
        p = 2.0 * (b * norm.pdf(b) / (2 * np.pi) * self.area
                   + norm.pdf(b) / np.sqrt(8 * np.pi) * self.edge)
        return p if raw else _clamp(p)


def scale_space_prob(b, lam_det, lam_t, grid, taus, ok=None, raw=False) -> float:
    """2{b phi(b)/(2 pi) int int det^{1/2} dt dtau + (8 pi)^{-1/2} phi(b) int lambda_t^{1/2}(t, tau0) dt}."""
    return ScaleSpaceApprox(lam_det, lam_t, grid, taus, ok).prob(b, raw)


# ---------------------------------------------------------------------------
# window scans (Seq and MS)


def _rw(b, x):
    """Random-walk factor b^2 x nu(b (2x)^{1/2}) for a growth rate x."""
    return b * b * x * nu(b * np.sqrt(2.0 * x))


class SeqApprox:
    """Pseudo-sequential scan: windows (0, T], T <= m, locations m0 <= t <= T - n0."""

    def __init__(self, m: int, m0: int = 5, n0: int = 5, variant: str = "V2", moments=None,
                 shape: SignalShape | None = None):
        if not m0 + n0 < m:
            raise InputError("seq approximation needs m0 + n0 < m")
        variant = variant.upper()
        if variant not in ("V1", "V2"):
            raise InputError(f"unknown variant {variant!r}")
        self.m, self.m0, self.n0, self.variant = m, m0, n0, variant
        self.method = TailMethod.SEQ_V1 if variant == "V1" else TailMethod.SEQ_V2
        if moments is None:
            moments = default_moments(shape or SignalShape.broken_line())
        self.moments = moments
        self.continuous = moments.continuous
        w, lam, beta, kap = [], [], [], []
        for L in range(m0 + n0, m + 1):
            tab = moments.table(L)
            r = slice(m0, L - n0 + 1)
            n = L - n0 - m0 + 1
            w.append(_trap_weights(n) if self.continuous else np.ones(n))
            lam.append(tab.lam[r])
            beta.append(tab.beta[r])
            kap.append(tab.kappa[r])
        self.w = np.concatenate(w)
        self.lam = np.concatenate(lam)
        self.beta = np.concatenate(beta)
        self.kappa = np.concatenate(kap)
        keep = (self.w > 0) & np.isfinite(self.beta) & (self.beta > 0)
        keep &= np.isfinite(self.lam) if self.continuous else np.isfinite(self.kappa)
        for name in ("w", "lam", "beta", "kappa"):
            setattr(self, name, getattr(self, name)[keep])

    def prob(self, b: float, raw: bool = False) -> float:
        nub = nu(b * np.sqrt(2 * self.beta))
        if self.continuous:
            if self.variant == "V1":
                f = np.sqrt(self.lam * self.beta * nub)
            else:
                f = b * np.sqrt(self.lam) * self.beta * nub
            p = SQRT_2_OVER_PI * b * norm.pdf(b) * float(self.w @ f)
        else:
            f = _rw(b, self.kappa) * _rw(b, self.beta)
            p = 2.0 * norm.pdf(b) / b * float(self.w @ f)
        return p if raw else _clamp(p)


def seq_prob(b, m, m0=5, n0=5, variant="V2", moments=None, raw=False) -> float:
    return SeqApprox(m, m0, n0, variant, moments).prob(b, raw)


class MSApprox:
    """Maximum over all (T0, t, T1) with t - T0 >= m0, T1 - t >= n0, 0 <= T0 < T1 <= m.

    Continuous shapes: (2/pi)^{1/2} b^4 phi(b) sum_L (m - L + 1) int
    lambda^{1/2} beta0 beta nu(b(2 beta0)^{1/2}) nu(b(2 beta)^{1/2}) dr.
    """

    method = TailMethod.MS

    def __init__(self, m: int, m0: int = 5, n0: int | None = None, moments=None,
                 shape: SignalShape | None = None):
        n0 = m0 if n0 is None else n0
        if not m0 + n0 < m:
            raise InputError("MS approximation needs m0 + n0 < m")
        self.m, self.m0, self.n0 = m, m0, n0
        if moments is None:
            moments = default_moments(shape or SignalShape.broken_line())
        self.moments = moments
        self.continuous = moments.continuous
        parts = {k: [] for k in ("w", "lam", "beta", "beta0", "kappa")}
        for L in range(m0 + n0, m + 1):
            tab = moments.table(L)
            r = slice(m0, L - n0 + 1)
            n = L - n0 - m0 + 1
            base = _trap_weights(n) if self.continuous else np.ones(n)
            parts["w"].append(base * (m - L + 1))
            parts["lam"].append(tab.lam[r])
            parts["beta"].append(tab.beta[r])
            parts["beta0"].append(tab.beta0[r])
            parts["kappa"].append(tab.kappa[r])
        for k, v in parts.items():
            setattr(self, k, np.concatenate(v))
        keep = (self.w > 0) & (self.beta > 0) & (self.beta0 > 0)
        keep &= np.isfinite(self.lam) if self.continuous else np.isfinite(self.kappa)
        for k in parts:
            setattr(self, k, getattr(self, k)[keep])

    def prob(self, b: float, raw: bool = False) -> float:
        nb = nu(b * np.sqrt(2 * self.beta))
        nb0 = nu(b * np.sqrt(2 * self.beta0))
        if self.continuous:
            f = np.sqrt(self.lam) * self.beta * self.beta0 * nb * nb0
            p = SQRT_2_OVER_PI * b**4 * norm.pdf(b) * float(self.w @ f)
        else:
            f = _rw(b, self.kappa) * _rw(b, self.beta) * _rw(b, self.beta0)
            p = 2.0 * norm.pdf(b) / b * float(self.w @ f)
        return p if raw else _clamp(p)


def ms_prob(b, m, m0=5, n0=None, moments=None, raw=False) -> float:
    return MSApprox(m, m0, n0, moments).prob(b, raw)


# ---------------------------------------------------------------------------
# two-locus statistic


@dataclass
class PairGeometry:
    """Volume and boundary measure of the (s, t, omega) index set of the two-locus field."""

    volume: float
    boundary: float
    n_pairs: int


def _pair_lambda(Gaa, Gad, Gdd, I, J, om):
    """Metric of the unit field (cos w a_s + sin w a_t)/|.| in (s, t, w) coordinates."""
    c = np.cos(om)[None, :]
    s = np.sin(om)[None, :]
    ss = Gaa[I, I][:, None]
    tt = Gaa[J, J][:, None]
    st = Gaa[I, J][:, None]
    hh = c * c * ss + 2 * c * s * st + s * s * tt
    h_ds = c * (c * Gad[I, I][:, None] + s * Gad[J, I][:, None])
    h_dt = s * (c * Gad[I, J][:, None] + s * Gad[J, J][:, None])
    h_dw = -s * c * ss + (c * c - s * s) * st + s * c * tt
    ds_ds = c * c * Gdd[I, I][:, None]
    dt_dt = s * s * Gdd[J, J][:, None]
    ds_dt = c * s * Gdd[I, J][:, None]
    ds_dw = c * (-s * Gad[I, I][:, None] + c * Gad[J, I][:, None])
    dt_dw = s * (-s * Gad[I, J][:, None] + c * Gad[J, J][:, None])
    dw_dw = s * s * ss - 2 * s * c * st + c * c * tt

    def met(x, hx, hy):
        return (x - hx * hy / hh) / hh

    L11 = met(ds_ds, h_ds, h_ds)
    L22 = met(dt_dt, h_dt, h_dt)
    L33 = met(dw_dw, h_dw, h_dw)
    L12 = met(ds_dt, h_ds, h_dt)
    L13 = met(ds_dw, h_ds, h_dw)
    L23 = met(dt_dw, h_dt, h_dw)
    return L11, L22, L33, L12, L13, L23


def pair_geometry_from_kernels(A: np.ndarray, Ad: np.ndarray, h: int, n_omega: int = 64,
                               chunk: int = 4000) -> PairGeometry:
    """Integrated metric volume and boundary area over pairs j - i > h.

    ``A`` and ``Ad`` hold the projected kernels and their t-derivatives
    (one row per consecutive grid point).
    """
    Gaa = A @ A.T
    Gad = A @ Ad.T
    Gdd = Ad @ Ad.T
    n = A.shape[0]
    I, J = np.triu_indices(n, k=h + 1)
    if I.size == 0:
        return PairGeometry(0.0, 0.0, 0)
    om = np.arange(n_omega) * 2 * np.pi / n_omega
    vol = 0.0
    bnd = 0.0
    for k in range(0, I.size, chunk):
        i, j = I[k:k + chunk], J[k:k + chunk]
        L11, L22, L33, L12, L13, L23 = _pair_lambda(Gaa, Gad, Gdd, i, j, om)
        det = L11 * (L22 * L33 - L23**2) - L12 * (L12 * L33 - L23 * L13) + L13 * (L12 * L23 - L22 * L13)
        vol += float(np.sqrt(np.clip(det, 0, None)).mean(1).sum()) * 2 * np.pi
        # faces: first admissible diagonal, s at the start, t at the end
        diag = (j - i) == h + 1
        if diag.any():
            a = L11 + 2 * L12 + L22
            bb = L13 + L23
            d = (a * L33 - bb**2)[diag]
            bnd += float(np.sqrt(np.clip(d, 0, None)).mean(1).sum()) * 2 * np.pi
        left = i == 0
        if left.any():
            d = (L22 * L33 - L23**2)[left]
            bnd += float(np.sqrt(np.clip(d, 0, None)).mean(1).sum()) * 2 * np.pi
        right = j == n - 1
        if right.any():
            d = (L11 * L33 - L13**2)[right]
            bnd += float(np.sqrt(np.clip(d, 0, None)).mean(1).sum()) * 2 * np.pi
    return PairGeometry(vol, bnd, int(I.size))


@lru_cache(maxsize=16)
def pair_geometry(shape: SignalShape, m: int, h: int, regression: Regression | None = None,
                  n_omega: int = 64) -> PairGeometry:
    """Geometry of the two-locus search over a window of length m."""
    from ._linalg import design, orthonormal_basis, project_out
    from .moments import normalized_rows, shape_dmatrix, shape_matrix
    from .score import default_grid

    if not shape.continuous:
        raise UnsupportedShapeError("the two-locus approximation needs a continuous shape")
    regression = Regression(regression or shape.default_regression())
    u = np.arange(1, m + 1, dtype=float)
    grid = default_grid(shape, 0, m)
    Q = orthonormal_basis(design(0, m, regression))
    F = shape_matrix(shape, u, grid, shape.tau)
    A = project_out(F, Q)
    _, _, ok = normalized_rows(A, F)
    Ad = project_out(shape_dmatrix(shape, u, grid, shape.tau), Q)
    return pair_geometry_from_kernels(A[ok], Ad[ok], h, n_omega)


class TwoLocusApprox:
    """P{max ||Z~_{s,t}|| > b}: Euler-characteristic expansion on (s, t, omega).

    rho3(b) Vol + rho2(b) Area/2 + exp(-b^2/2), with the Gaussian EC
    densities rho3 = (b^2 - 1) e^{-b^2/2}/(2 pi)^2, rho2 = b e^{-b^2/2}/(2 pi)^{3/2}.
    The threshold b is on the norm scale; the quadratic form is compared with b^2.
    """

    method = TailMethod.TWO_LOCUS

    def __init__(self, m: int | None = None, h: int = 5, geometry: PairGeometry | None = None,
                 shape: SignalShape | None = None, regression: Regression | None = None):
        if h < 1:
            raise InputError("h must be at least 1")
        if geometry is None:
            if m is None:
                raise InputError("two-locus approximation needs m or a geometry")
            geometry = pair_geometry(shape or SignalShape.broken_line(), int(m), int(h),
                                     regression)
        self.geometry = geometry
        self.m, self.h = m, h

    def prob(self, b: float, raw: bool = False) -> float:
        g = self.geometry
        if g.n_pairs == 0:
            return 0.0
        e = np.exp(-b * b / 2)
        p = (b * b - 1) * e / (2 * np.pi) ** 2 * g.volume + b * e / (2 * np.pi) ** 1.5 * 0.5 * g.boundary + e
        return p if raw else _clamp(p)


def two_locus_prob(b, m, h=5, geometry=None, shape=None, raw=False) -> float:
    return TwoLocusApprox(m, h, geometry, shape).prob(b, raw)


# ---------------------------------------------------------------------------
# threshold autoregression


class Tar1Approx:
    """Two-sided TAR(1) approximation from the empirical variance increments.

    k2_i is the increment of the sum of squared regressors at step i divided
    by the (projected) variance there; the sum b phi(b) sum k2 nu(b k2^{1/2})
    is the discrete version of 2 b phi(b) int kappa dt with an overshoot
    correction for the finite steps.
    """

    method = TailMethod.TAR1

    def __init__(self, k2):
        k2 = np.asarray(k2, dtype=float)
        self.k2 = k2[np.isfinite(k2) & (k2 > 0)]

    def prob(self, b: float, raw: bool = False) -> float:
        p = b * norm.pdf(b) * float(np.sum(self.k2 * nu(b * np.sqrt(self.k2))))
        return p if raw else _clamp(p)


def tar_prob(b, k2, raw=False) -> float:
    return Tar1Approx(k2).prob(b, raw)


class Tar2Approx:
    """Bivariate TAR: (b^2/2) e^{-b^2/2} (2 pi)^{-1} sum_i int c_i(w) nu(b c_i(w)^{1/2}) dw + e^{-b^2/2}.

    ``C`` holds the normalised 2x2 variance increments Sigma^{-1/2} dG Sigma^{-1/2}.
    Without the overshoot factor the w-integral equals pi * trace(C_i).
    """

    method = TailMethod.TAR2

    def __init__(self, C, n_omega: int = 64):
        C = np.asarray(C, dtype=float)
        om = np.arange(n_omega) * 2 * np.pi / n_omega
        e = np.stack([np.cos(om), np.sin(om)])  # 2 x n_omega
        self.c = np.einsum("kw,ikl,lw->iw", e, C, e)  # c_i(w)
        self.dw = 2 * np.pi / n_omega

    def omega_integral(self) -> np.ndarray:
        return self.c.sum(1) * self.dw

    def prob(self, b: float, raw: bool = False) -> float:
        c = np.clip(self.c, 0, None)
        s = float((c * nu(b * np.sqrt(c))).sum() * self.dw)
        e = np.exp(-b * b / 2)
        p = 0.5 * b * b * e / (2 * np.pi) * s + e
        return p if raw else _clamp(p)


def tar2_prob(b, C, raw=False) -> float:
    return Tar2Approx(C).prob(b, raw)


# ---------------------------------------------------------------------------
# threshold solver

ProbLike = Union[Callable[[float], float], object]


def _as_callable(approx) -> Callable[[float], float]:
    if hasattr(approx, "prob"):
        return lambda b: approx.prob(b, raw=True)
    return approx


def solve_threshold(alpha: float, approx: ProbLike, lo: float = 1.0, hi: float = 10.0,
                    tol: float = 1e-7) -> float:
    """Smallest b in [lo, hi] with approximation(b) = alpha, by bisection."""
    if not (0 < alpha < 1):
        raise InputError("alpha must lie in (0, 1)")
    f = _as_callable(approx)
    plo, phi = f(lo), f(hi)
    if plo < alpha:
        raise ThresholdError(f"probability at b={lo} is already below {alpha}")
    if phi > alpha:
        raise ThresholdError(f"probability at b={hi} is still above {alpha}")
    a, c = lo, hi
    while c - a > tol:
        mid = 0.5 * (a + c)
        if f(mid) > alpha:
            a = mid
        else:
            c = mid
    return 0.5 * (a + c)


def tail_approximation(approx, b: float, **inputs) -> TailApproximation:
    raw = approx.prob(b, raw=True)
    return TailApproximation(approx.method, float(b), _clamp(raw), float(raw), inputs)


__all__ = [
    "TailMethod", "TailApproximation", "nu", "rice_bound", "scan_prob", "scale_space_prob",
    "ScaleSpaceApprox", "SeqApprox", "seq_prob", "MSApprox", "ms_prob", "PairGeometry",
    "pair_geometry", "pair_geometry_from_kernels", "TwoLocusApprox", "two_locus_prob",
    "Tar1Approx", "tar_prob", "Tar2Approx", "tar2_prob", "solve_threshold",
    "tail_approximation", "BrokenLineMoments", "DiscreteMoments",
]
