"""Multi-signal search: pseudo-sequential (Seq), maximum score (MS), and top-down pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ._linalg import working_series
from ._scan import ms_scan, pair_stat, seq_stage
from .crossing import MSApprox, SeqApprox, TwoLocusApprox, solve_threshold
from .errors import DegenerateInputError, InputError, UnsupportedShapeError
from .model import AnalysisConfig, SignalShape, TimeSeries
from .moments import KernelTable, default_moments
from .nuisance import resolve_rho
from .score import score_process


class SegMethod(str, Enum):
    SEQ = "seq"
    MS = "ms"
    PAIR = "pair"


@dataclass
class Detection:
    t_hat: float
    z_value: float
    detected_at: tuple
    p_value: float
    direction: int
    shape: SignalShape
    label: object = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "t_hat": self.t_hat,
            "label": self.label,
            "z_value": self.z_value,
            "detected_at": list(self.detected_at),
            "p_value": self.p_value,
            "direction": self.direction,
            "shape": self.shape.describe(),
        }
        if self.extra:
            out.update(self.extra)
        return out


@dataclass
class SegmentationResult:
    method: SegMethod
    detections: list
    threshold: float
    global_alpha: float
    config: dict
    rho: float = 0.0

    @property
    def locations(self) -> list:
        return [d.t_hat for d in self.detections]

    def as_dict(self) -> dict:
        return {
            "method": self.method.value,
            "threshold": self.threshold,
            "global_alpha": self.global_alpha,
            "rho": self.rho,
            "n_detections": len(self.detections),
            "detections": [d.as_dict() for d in self.detections],
            "config": self.config,
        }


def _prepare(ts: TimeSeries, config: AnalysisConfig, rho):
    if config.shape.has_scale_range:
        raise InputError("segmentation needs a fixed signal scale")
    reg = config.nuisance.regression
    if rho is None:
        rho = resolve_rho(ts.values, config.nuisance.rho, reg)
    w, first = working_series(ts.values, rho)
    if ts.m - first < config.m0 + config.n0 + 1:
        raise InputError("series too short for the minimum sample size and lag")
    return rho, w, first


def seq_threshold(m: int, config: AnalysisConfig, moments=None) -> float:
    moments = moments or default_moments(config.shape, config.nuisance.regression)
    return solve_threshold(config.alpha, SeqApprox(m, config.m0, config.n0, "V2", moments))


def seq_detect(ts: TimeSeries, config: AnalysisConfig, b: float | None = None,
               tie_rule: str = "argmax", rho: float | None = None,
               max_detections: int | None = None) -> SegmentationResult:
    """Pseudo-sequential segmentation.

    From the current origin the window end T grows until some t with
    m0 <= t - origin <= T - origin - n0 has |Z(t, T)| >= b.  The location is
    picked among the exceeding t by ``tie_rule`` and the search restarts
    there, with the regression and variance refitted on the new window and
    rho held fixed.
    """
    if tie_rule not in ("argmax", "smallest_t", "largest_t"):
        raise InputError(f"unknown tie rule {tie_rule!r}")
    rho, w, first = _prepare(ts, config, rho)
    reg = config.nuisance.regression
    moments = default_moments(config.shape, reg)
    m_eff = ts.m - first
    if b is None:
        b = seq_threshold(m_eff, config, moments)
    kernels = KernelTable(config.shape, reg)
    spec = config.nuisance.sigma2
    W = w[:, None]
    origin = first
    dets: list[Detection] = []
    pcache: dict[int, SeqApprox] = {}
    while ts.m - origin >= config.m0 + config.n0:
        hit = None
        for L, r, z in seq_stage(W, origin, kernels, config.m0, config.n0, spec):
            z = z[:, 0]
            exc = np.nonzero(np.abs(z) >= b)[0]
            if exc.size:
                if tie_rule == "argmax":
                    k = exc[np.argmax(np.abs(z[exc]))]
                elif tie_rule == "smallest_t":
                    k = exc[0]
                else:
                    k = exc[-1]
                hit = (L, int(r[k]), float(z[k]))
                break
        if hit is None:
            break
        L, r, zval = hit
        t_hat = origin + r
        # the shortest window has a single admissible t; use the next length for its p-value
        Lp = max(L, config.m0 + config.n0 + 1)
        if Lp not in pcache:
            pcache[Lp] = SeqApprox(Lp, config.m0, config.n0, "V2", moments)
        p = pcache[Lp].prob(abs(zval))
        dets.append(Detection(float(t_hat), zval, (origin, origin + L), p, int(np.sign(zval)),
                              config.shape, ts.label_of(t_hat)))
        origin = t_hat
        if max_detections is not None and len(dets) >= max_detections:
            break
    return SegmentationResult(SegMethod.SEQ, dets, float(b), config.alpha, config.describe(), rho)


def ms_threshold(m: int, config: AnalysisConfig, moments=None) -> float:
    moments = moments or default_moments(config.shape, config.nuisance.regression)
    return solve_threshold(config.alpha, MSApprox(m, config.m0, config.n0, moments))


def _random_windows(m: int, first: int, m0: int, n0: int, count: int, seed: int) -> dict:
    Ls = np.arange(m0 + n0, m - first + 1)
    per = m - first - Ls + 1
    total = int(per.sum())
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(total, size=min(count, total), replace=False))
    edges = np.concatenate([[0], np.cumsum(per)])
    li = np.searchsorted(edges, pick, side="right") - 1
    out: dict[int, list] = {}
    for k, i in zip(pick, li):
        out.setdefault(int(Ls[i]), []).append(first + int(k - edges[i]))
    return out


def ms_detect(ts: TimeSeries, config: AnalysisConfig, b: float | None = None,
              interval_sampling="all", selection: str = "largest",
              rho: float | None = None) -> SegmentationResult:
    """Maximum score segmentation over background windows (T0, T1].

    ``interval_sampling`` is ``"all"`` or ``("random", count, seed)``.
    Candidates (the best t in each exceeding window) are accepted greedily,
    by |Z| (``selection="largest"``) or by window length (``"shortest"``),
    skipping any whose background would contain an already accepted signal
    or whose location is within m0 of one.
    """
    rho, w, first = _prepare(ts, config, rho)
    reg = config.nuisance.regression
    m_eff = ts.m - first
    moments = default_moments(config.shape, reg)
    approx = MSApprox(m_eff, config.m0, config.n0, moments)
    if b is None:
        b = solve_threshold(config.alpha, approx)
    windows = None
    if interval_sampling != "all":
        kind, count, seed = interval_sampling
        if kind != "random":
            raise InputError(f"unknown interval sampling {interval_sampling!r}")
        windows = _random_windows(ts.m, first, config.m0, config.n0, int(count), int(seed))
    kernels = KernelTable(config.shape, reg)
    res = ms_scan(w[:, None], first, kernels, config.m0, config.n0, config.nuisance.sigma2,
                  windows=windows, reduce="windows")
    exc = np.abs(res.z) >= b
    T0, T1, t, z = res.T0[exc], res.T1[exc], res.t[exc], res.z[exc]
    if selection == "largest":
        order = np.lexsort((T1 - T0, -np.abs(z)))
    elif selection == "shortest":
        order = np.lexsort((-np.abs(z), T1 - T0))
    else:
        raise InputError(f"unknown selection rule {selection!r}")
    accepted: list[int] = []
    for k in order:
        ok = True
        for a in accepted:
            if abs(t[a] - t[k]) < config.m0 or T0[k] < t[a] < T1[k]:
                ok = False
                break
        if ok:
            accepted.append(int(k))
    dets = [
        Detection(float(t[k]), float(z[k]), (int(T0[k]), int(T1[k])), approx.prob(abs(z[k])),
                  int(np.sign(z[k])), config.shape, ts.label_of(t[k]))
        for k in accepted
    ]
    dets.sort(key=lambda d: d.t_hat)
    return SegmentationResult(SegMethod.MS, dets, float(b), config.alpha, config.describe(), rho)


def pair_threshold(m: int, config: AnalysisConfig) -> float:
    return solve_threshold(config.alpha, TwoLocusApprox(m, config.h, shape=config.shape,
                                                        regression=config.nuisance.regression))


def pair_scan(ts: TimeSeries, config: AnalysisConfig, window, rho: float):
    """Best pair (s, t) with t - s > h in one window: (sqrt(U), s, t, process)."""
    zp = score_process(ts, config.shape, config, window=window, rho=rho, keep_kernels=True)
    U, i, j = pair_stat(zp.z[:, None], zp.kernels, zp.grid, config.h)
    if not np.isfinite(U[0]):
        return None
    return float(np.sqrt(max(U[0], 0.0))), float(zp.grid[i[0]]), float(zp.grid[j[0]]), zp


def topdown_pair_detect(ts: TimeSeries, config: AnalysisConfig, b: float | None = None,
                        end_margin: int | None = None, rho: float | None = None,
                        refit_z: float = 2.0) -> SegmentationResult:
    """Top-down segmentation with the two-locus statistic.

    ``b`` is the threshold for sqrt(U) (U is compared with b^2).  In each
    interval the best pair is found; a member within ``end_margin`` of an
    interval end is dropped when a linear refit gives it |z| < ``refit_z``.
    The interval is split at the kept changes and the search repeats.
    """
    from .inference import linear_refit

    rho, w, first = _prepare(ts, config, rho)
    end_margin = config.n0 if end_margin is None else end_margin
    m_eff = ts.m - first
    if b is None:
        b = pair_threshold(m_eff, config)
    approx_cache: dict[int, TwoLocusApprox] = {}
    min_len = 2 * (config.h + 2) + config.m0
    stack = [(first, ts.m)]
    found: list[Detection] = []
    while stack:
        lo, hi = stack.pop()
        if hi - lo < min_len:
            continue
        try:
            best = pair_scan(ts, config, (lo, hi), rho)
        except (DegenerateInputError, InputError):  # nothing more to find in this piece
            best = None
        if best is None or best[0] < b:
            continue
        u, s, t, _ = best
        refit = linear_refit(ts, [s, t], config.shape, config.nuisance, window=(lo, hi))
        keep = []
        for c, zc, coef in zip((s, t), refit.xi_z, refit.xi):
            near = (c - lo) <= end_margin or (hi - c) <= end_margin
            if near and abs(zc) < refit_z:
                continue
            if any(abs(c - d.t_hat) < config.h for d in found):
                continue
            keep.append((c, zc, coef))
        if not keep:
            continue
        L = hi - lo
        if L not in approx_cache:
            try:
                approx_cache[L] = TwoLocusApprox(L, config.h, shape=config.shape,
                                                 regression=config.nuisance.regression)
            except UnsupportedShapeError:
                approx_cache[L] = None
        ap = approx_cache[L]
        p = ap.prob(u) if ap is not None else float("nan")
        for c, zc, coef in keep:
            found.append(Detection(float(c), u, (lo, hi), p, int(np.sign(coef)), config.shape,
                                   ts.label_of(c), {"refit_z": float(zc), "pair": [s, t]}))
        cuts = sorted(int(c) for c, _, _ in keep)
        edges = [lo] + cuts + [hi]
        for a, bnd in zip(edges[:-1], edges[1:]):
            stack.append((a, bnd))
    found.sort(key=lambda d: d.t_hat)
    return SegmentationResult(SegMethod.PAIR, found, float(b), config.alpha, config.describe(), rho)


def segment(ts: TimeSeries, config: AnalysisConfig, method: str = "seq", b: Optional[float] = None,
            **kw) -> SegmentationResult:
    method = SegMethod(method)
    if method is SegMethod.SEQ:
        return seq_detect(ts, config, b, **kw)
    if method is SegMethod.MS:
        return ms_detect(ts, config, b, **kw)
    return topdown_pair_detect(ts, config, b, **kw)
