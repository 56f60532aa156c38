"""Confidence regions from the local (Kac-Slepian) chi-square approximation, and linear refits."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.stats import chi2

from ._linalg import clip_window, design
from ._scan import pair_field
from .crossing import rice_bound, scan_prob
from .errors import DegenerateInputError, InputError, UnsupportedShapeError
from .model import AnalysisConfig, NuisanceModel, Regression, SignalShape, TimeSeries
from .moments import shape_matrix
from .score import ScoreProcess, score_process


class RegionKind(str, Enum):
    LOCATION = "location"
    LOCATION_AMPLITUDE = "location-amplitude"
    PAIR = "pair-locations"


def _runs(values: np.ndarray, step: float = 1.0) -> list:
    """Collapse sorted grid values into [start, end] runs of consecutive points."""
    if values.size == 0:
        return []
    out = []
    start = prev = values[0]
    for v in values[1:]:
        if v - prev > step * 1.5:
            out.append((float(start), float(prev)))
            start = v
        prev = v
    out.append((float(start), float(prev)))
    return out


@dataclass
class ConfidenceRegion:
    kind: RegionKind
    level: float
    members: np.ndarray
    estimate: tuple
    intervals: list = field(default_factory=list)
    xi_intervals: Optional[dict] = None

    def __len__(self) -> int:
        return len(self.members)

    def contains(self, *point) -> bool:
        if self.kind is RegionKind.LOCATION:
            return bool(np.any(np.isclose(self.members, point[0])))
        if self.kind is RegionKind.LOCATION_AMPLITUDE:
            t, xi = point
            iv = self.xi_intervals.get(float(t))
            return iv is not None and iv[0] <= xi <= iv[1]
        s, t = point
        return bool(np.any((self.members[:, 0] == s) & (self.members[:, 1] == t)))

    def as_dict(self) -> dict:
        out = {"kind": self.kind.value, "level": self.level, "size": len(self),
               "estimate": list(self.estimate)}
        if self.kind is RegionKind.LOCATION:
            out["intervals"] = [list(iv) for iv in self.intervals]
        elif self.kind is RegionKind.LOCATION_AMPLITUDE:
            out["t_intervals"] = [list(iv) for iv in self.intervals]
            out["xi_range"] = [float(self.members[:, 1].min()), float(self.members[:, 1].max())]
        else:
            out["s_range"] = [float(self.members[:, 0].min()), float(self.members[:, 0].max())]
            out["t_range"] = [float(self.members[:, 1].min()), float(self.members[:, 1].max())]
        return out


def _check_continuous(zp: ScoreProcess):
    if not zp.shape.continuous:
        raise UnsupportedShapeError("confidence regions need a continuous signal shape")


def conf_region_location(zp: ScoreProcess, alpha: float) -> ConfidenceRegion:
    """{s : Z_s^2 >= max Z^2 - chi2_1(1 - alpha)}."""
    _check_continuous(zp)
    if not (0 < alpha <= 1):
        raise InputError("alpha must lie in (0, 1]")
    c = chi2.ppf(1 - alpha, 1) if alpha < 1 else 0.0
    z2 = zp.z**2
    top = z2.max()
    members = zp.grid[z2 >= top - c]
    return ConfidenceRegion(RegionKind.LOCATION, 1 - alpha, members, (zp.t_hat,), _runs(members))


def conf_region_joint(zp: ScoreProcess, alpha: float, n_xi: int = 201,
                      width: float = 5.0) -> ConfidenceRegion:
    """Cells (t, xi) with [max Z^2 - Z_t^2] + (Z_t - xi sd_t)^2 <= chi2_2(1 - alpha).

    sd_t is the mean of Z_t per unit amplitude; the xi grid spans the point
    estimate +/- ``width`` standard errors.
    """
    _check_continuous(zp)
    c2 = chi2.ppf(1 - alpha, 2)
    sd = zp.signal_sd()
    i = zp.argmax
    xi_hat = zp.z[i] / sd[i]
    se = 1.0 / sd[i]
    xi_grid = np.linspace(xi_hat - width * se, xi_hat + width * se, n_xi)
    slack = c2 - (np.max(zp.z**2) - zp.z**2)
    cells = []
    xi_iv = {}
    for k in np.nonzero(slack >= 0)[0]:
        half = np.sqrt(slack[k]) / sd[k]
        centre = zp.z[k] / sd[k]
        lo, hi = centre - half, centre + half
        xi_iv[float(zp.grid[k])] = (lo, hi)
        inside = xi_grid[(xi_grid >= lo) & (xi_grid <= hi)]
        cells.extend((zp.grid[k], x) for x in inside)
    members = np.array(cells, dtype=float).reshape(-1, 2)
    ts_in = np.array(sorted(xi_iv))
    return ConfidenceRegion(RegionKind.LOCATION_AMPLITUDE, 1 - alpha, members,
                            (zp.t_hat, float(xi_hat)), _runs(ts_in), xi_iv)


def conf_region_pair(ts: TimeSeries, config: AnalysisConfig, alpha: float, pair=None,
                     window=None, rho: float | None = None) -> ConfidenceRegion:
    """{(s1, s2) : ||Z~_{s1,s2}||^2 >= max ||Z~||^2 - chi2_2(1 - alpha)}, s2 - s1 > h."""
    if not config.shape.continuous:
        raise UnsupportedShapeError("confidence regions need a continuous signal shape")
    zp = score_process(ts, config.shape, config, window=window, rho=rho, keep_kernels=True)
    I, J, U = pair_field(zp.z, zp.kernels, zp.grid, config.h)
    if U.size == 0:
        raise DegenerateInputError("no admissible pairs in the window")
    if pair is not None:
        s, t = float(pair[0]), float(pair[1])
        if not t - s > config.h:
            raise InputError("pair must satisfy t1 < t2 - h")
        sel = (zp.grid[I] == s) & (zp.grid[J] == t)
        if not sel.any():
            raise DegenerateInputError("pair covariance is singular or pair is off the grid")
    k = int(np.argmax(U))
    c2 = chi2.ppf(1 - alpha, 2)
    keep = U >= U[k] - c2
    members = np.column_stack([zp.grid[I[keep]], zp.grid[J[keep]]])
    est = (float(zp.grid[I[k]]), float(zp.grid[J[k]])) if pair is None else (s, t)
    return ConfidenceRegion(RegionKind.PAIR, 1 - alpha, members, est)


# ---------------------------------------------------------------------------
# single-change test


@dataclass
class SingleChangeResult:
    process: ScoreProcess
    max_abs_z: float
    t_hat: float
    p_value: float
    threshold: float
    approximation: str

    def as_dict(self) -> dict:
        return {"max_abs_z": self.max_abs_z, "t_hat": self.t_hat, "p_value": self.p_value,
                "threshold": self.threshold, "approximation": self.approximation}


def single_change_prob(zp: ScoreProcess):
    """Tail approximation for max |Z_t| over the process grid, as a function of b."""
    if zp.shape.continuous:
        lam, grid = zp.lam, zp.grid
        return lambda b: rice_bound(b, lam, grid, raw=True), "rice"
    g = zp.kernels
    if g is None:
        raise ValueError("discontinuous scans need the process kernels")
    kap = 1.0 - np.einsum("ij,ij->i", g[:-1], g[1:])
    return lambda b: scan_prob(b, kap, raw=True), "scan"


def detect_single(ts: TimeSeries, config: AnalysisConfig, window=None,
                  rho: float | None = None) -> SingleChangeResult:
    """Test for one local signal: max |Z_t|, its p-value and the level-alpha threshold."""
    from .crossing import solve_threshold

    zp = score_process(ts, config.shape, config, window=window, rho=rho,
                       keep_kernels=not config.shape.continuous)
    f, name = single_change_prob(zp)
    b = solve_threshold(config.alpha, f)
    p = min(max(f(zp.max_abs_z), 0.0), 1.0)
    return SingleChangeResult(zp, zp.max_abs_z, zp.t_hat, p, b, name)


# ---------------------------------------------------------------------------
# linear refit


@dataclass
class Coefficient:
    name: str
    estimate: float
    se: float
    z: float


@dataclass
class RefitReport:
    coefficients: list
    r_squared: float
    rho_hat: float
    design: dict
    sigma2: float
    fitted: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def xi(self) -> np.ndarray:
        return np.array([c.estimate for c in self.coefficients if c.name.startswith("xi")])

    @property
    def xi_z(self) -> np.ndarray:
        return np.array([c.z for c in self.coefficients if c.name.startswith("xi")])

    def as_dict(self) -> dict:
        return {
            "coefficients": [c.__dict__ for c in self.coefficients],
            "r_squared": self.r_squared,
            "rho_hat": self.rho_hat,
            "sigma2": self.sigma2,
            "design": self.design,
        }


def linear_refit(ts: TimeSeries, changepoints, shape: SignalShape | None = None,
                 nuisance: NuisanceModel | None = None, window=None) -> RefitReport:
    """Ordinary least squares on [1, trend, f(u - t_k)...].

    Standard errors use the OLS formula with the residual variance; the lag-1
    autocorrelation of the residuals is reported as a model check.
    """
    shape = shape or SignalShape.broken_line()
    reg = nuisance.regression if nuisance is not None else shape.default_regression()
    y = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, float)
    lo, hi = clip_window(window, y.size, 0)
    cps = [float(c) for c in changepoints]
    if any(b <= a for a, b in zip(cps[:-1], cps[1:])):
        raise InputError("change points must be strictly increasing")
    if any(not (lo < c < hi) for c in cps):
        raise InputError("change points must lie inside the series")
    u = np.arange(lo + 1, hi + 1, dtype=float)
    X0 = design(lo, hi, Regression(reg))
    names = ["alpha"] + (["beta"] if Regression(reg) is Regression.LINEAR else [])
    if cps:
        F = shape_matrix(shape, u, np.array(cps), shape.tau).T
        X = np.column_stack([X0, F])
    else:
        X = X0
    names += [f"xi_{k + 1}" for k in range(len(cps))]
    yy = y[lo:hi]
    n, p = X.shape
    if n <= p or np.linalg.matrix_rank(X) < p:
        raise InputError("collinear refit design (changes too close to the ends or each other)")
    XtX_inv = np.linalg.inv(X.T @ X)
    coef = XtX_inv @ X.T @ yy
    resid = yy - X @ coef
    rss = float(resid @ resid)
    s2 = rss / (n - p)
    se = np.sqrt(np.diag(XtX_inv) * s2)
    tss = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    rho_hat = float(resid[1:] @ resid[:-1] / (resid @ resid)) if rss > 0 else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = np.where(se > 0, coef / se, np.inf)
    coefs = [Coefficient(nm, float(c), float(s), float(z)) for nm, c, s, z in zip(names, coef, se, zs)]
    return RefitReport(coefs, float(min(max(r2, 0.0), 1.0)), rho_hat,
                       {"changes": cps, "shape": shape.describe(), "regression": Regression(reg).value,
                        "window": [lo, hi]}, s2, X @ coef)
