"""Command-line interface.

    localsignal [options] {detect,segment,refit,tar,simulate,threshold} ...

Every command writes a JSON report (``--out``, default stdout) that embeds the
resolved configuration, a delimited table (``--table``, or next to ``--out``),
and optionally an SVG figure (``--svg``).  Exit codes: 0 ok, 1 degenerate
data, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DegenerateInputError,
    InputError,
    LocalSignalError,
    ThresholdError,
    UnsupportedShapeError,
)
from .model import (
    AnalysisConfig,
    BumpProfile,
    NuisanceModel,
    Regression,
    RhoSpec,
    Sigma2Spec,
    SignalShape,
    TimeSeries,
)

SCHEMA = 1


# ---------------------------------------------------------------------------
# flag parsing


def _pair(text: str, kind=float, sep: str = ",") -> tuple:
    parts = text.split(sep)
    if len(parts) != 2:
        raise InputError(f"expected two values separated by {sep!r}, got {text!r}")
    try:
        return kind(parts[0]), kind(parts[1])
    except ValueError:
        raise InputError(f"cannot parse {text!r}") from None


def parse_rho(text: str) -> RhoSpec:
    if text == "mle":
        return RhoSpec.mle()
    if text.startswith("fixed:"):
        try:
            return RhoSpec.fixed(float(text[6:]))
        except ValueError:
            raise InputError(f"cannot parse rho {text!r}") from None
    if text.startswith("subset:"):
        a, b = _pair(text[7:], int, "..")
        return RhoSpec.on_subset(a, b)
    try:
        return RhoSpec.fixed(float(text))
    except ValueError:
        raise InputError(f"--rho must be mle, fixed:x or subset:a..b, got {text!r}") from None


def parse_sigma2(text: str) -> Sigma2Spec:
    if text.startswith("fixed:"):
        try:
            return Sigma2Spec.fixed(float(text[6:]))
        except ValueError:
            raise InputError(f"cannot parse sigma2 {text!r}") from None
    return Sigma2Spec(text)


def build_shape(args) -> SignalShape:
    kind = args.shape
    if kind == "jump":
        return SignalShape.jump()
    if kind == "broken-line":
        return SignalShape.broken_line()
    if kind == "paired":
        return SignalShape.paired_jump(args.tau if args.tau is not None else 1.0)
    if kind == "bump":
        profile = BumpProfile(args.bump_profile)
        if args.tau_range is not None:
            scale = _pair(args.tau_range)
        else:
            scale = args.tau if args.tau is not None else 5.0
        return SignalShape.bump(profile, scale)
    raise InputError(f"unknown shape {kind!r}")


def build_config(args, grid=None) -> AnalysisConfig:
    shape = build_shape(args)
    reg = Regression(args.regression) if args.regression else shape.default_regression()
    nuis = NuisanceModel(reg, parse_rho(args.rho), parse_sigma2(args.sigma2))
    return AnalysisConfig(shape, nuis, args.m0, args.n0, args.h, args.alpha, grid)


def _threads(args) -> int:
    from .simulate import default_threads

    if args.threads is not None:
        if args.threads < 1:
            raise InputError("--threads must be at least 1")
        return args.threads
    return default_threads()


# ---------------------------------------------------------------------------
# output


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_jsonable(v) for v in o.tolist()]
    if isinstance(o, np.generic):
        o = o.item()
    if isinstance(o, float):
        if math.isnan(o) or math.isinf(o):
            return None
        if o.is_integer() and abs(o) < 2**53:
            return int(o)
        return o
    return o


def _input_info(ts: TimeSeries, path) -> dict:
    return {"path": str(path), "name": ts.name, "m": ts.m}


def emit(args, command: str, config: dict, result: dict, table: list, ts=None) -> None:
    report = {"schema": SCHEMA, "command": command, "version": __version__,
              "config": config, "result": result}
    if ts is not None:
        report["input"] = _input_info(ts, args.input)
    text = json.dumps(_jsonable(report), indent=2, sort_keys=False) + "\n"
    if args.out and args.out != "-":
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    table_path = args.table
    if table_path is None and args.out and args.out != "-":
        table_path = str(Path(args.out).with_suffix(".csv"))
    if table_path and table:
        from .io import table_text

        Path(table_path).write_text(table_text(_jsonable(table)))


def _read(args) -> TimeSeries:
    from .io import load_lynx, read_csv

    if args.input == "lynx":
        return load_lynx()
    return read_csv(args.input, args.column)


def _window(args):
    return None if args.window is None else _pair(args.window, int)


# ---------------------------------------------------------------------------
# commands


def cmd_detect(args) -> int:
    from .crossing import ScaleSpaceApprox, solve_threshold
    from .inference import conf_region_joint, conf_region_location, detect_single
    from .score import bump_score_surface

    ts = _read(args)
    cfg = build_config(args)
    conf = cfg.describe()
    if cfg.shape.has_scale_range:
        surf = bump_score_surface(ts, cfg.shape, cfg, window=_window(args))
        approx = ScaleSpaceApprox(surf.lam_det, surf.lam_t, surf.grid, surf.taus, surf.ok)
        b = solve_threshold(cfg.alpha, approx)
        zmax = surf.max_abs_z
        p = approx.prob(zmax)
        i, j = surf.argmax
        res = {"t_hat": surf.t_hat, "label": ts.label_of(surf.t_hat), "tau_hat": surf.tau_hat,
               "max_abs_z": zmax, "z_value": float(surf.z[i, j]), "p_value": p, "threshold": b,
               "approximation": "scale-space", "detected": bool(zmax >= b)}
        conf.update({"rho_value": surf.rho, "sigma2_value": surf.sigma2})
        best = surf.z[i]
        table = [{"t": t, "label": ts.label_of(t), "z": z} for t, z in zip(surf.grid, best)]
        emit(args, "detect", conf, res, table, ts)
        if args.svg:
            from .plotting import plot_score

            class _Slice:
                grid, z = surf.grid, best
            plot_score(_Slice, b, args.svg, ts, f"scale {surf.tau_hat:g}")
        return 0
    out = detect_single(ts, cfg, window=_window(args))
    zp = out.process
    res = out.as_dict()
    res.update({"label": ts.label_of(out.t_hat), "z_value": float(zp.z[zp.argmax]),
                "detected": bool(out.max_abs_z >= out.threshold)})
    if cfg.shape.continuous:
        loc = conf_region_location(zp, cfg.alpha)
        joint = conf_region_joint(zp, cfg.alpha)
        res["confidence_location"] = loc.as_dict()
        res["confidence_joint"] = joint.as_dict()
        res["xi_hat"] = joint.estimate[1]
    conf.update({"rho_value": zp.rho, "sigma2_value": zp.sigma2})
    table = [{"t": t, "label": ts.label_of(t), "z": z} for t, z in zip(zp.grid, zp.z)]
    emit(args, "detect", conf, res, table, ts)
    if args.svg:
        from .plotting import plot_score

        plot_score(zp, out.threshold, args.svg, ts, ts.name)
    return 0


def _refit_fitted(ts, refit):
    full = np.full(ts.m, np.nan)
    lo, hi = refit.design["window"]
    full[lo:hi] = refit.fitted
    return full


def cmd_segment(args) -> int:
    from .inference import linear_refit
    from .segmentation import ms_detect, seq_detect, topdown_pair_detect

    ts = _read(args)
    cfg = build_config(args)
    if args.method == "seq":
        res = seq_detect(ts, cfg, b=args.b, tie_rule=args.tie_rule)
    elif args.method == "ms":
        sampling = "all"
        if args.intervals != "all":
            if not args.intervals.startswith("random:"):
                raise InputError("--intervals must be all or random:N")
            sampling = ("random", int(args.intervals[7:]), args.seed)
        res = ms_detect(ts, cfg, b=args.b, interval_sampling=sampling, selection=args.selection)
    else:
        res = topdown_pair_detect(ts, cfg, b=args.b)
    out = res.as_dict()
    fitted = None
    if res.detections:
        try:
            refit = linear_refit(ts, sorted(res.locations), cfg.shape, cfg.nuisance)
            out["refit"] = refit.as_dict()
            fitted = _refit_fitted(ts, refit)
        except InputError as exc:
            out["refit"] = {"error": str(exc)}
    conf = cfg.describe()
    conf.update({"method": args.method, "seed": args.seed, "rho_value": res.rho})
    table = [{"t_hat": d.t_hat, "label": d.label, "z_value": d.z_value, "p_value": d.p_value,
              "window_start": d.detected_at[0], "window_end": d.detected_at[1]}
             for d in res.detections]
    emit(args, "segment", conf, out, table, ts)
    if args.svg:
        from .plotting import plot_segmentation

        plot_segmentation(ts, res.locations, fitted, args.svg, f"{args.method}: {len(res.detections)} changes")
    return 0


def cmd_refit(args) -> int:
    from .inference import linear_refit

    ts = _read(args)
    cfg = build_config(args)
    if not args.changes:
        raise InputError("--changes is required (comma-separated positions)")
    try:
        changes = [float(c) for c in args.changes.split(",") if c.strip()]
    except ValueError:
        raise InputError(f"cannot parse --changes {args.changes!r}") from None
    refit = linear_refit(ts, changes, cfg.shape, cfg.nuisance, window=_window(args))
    base = linear_refit(ts, [], cfg.shape, cfg.nuisance, window=_window(args))
    out = refit.as_dict()
    out["r_squared_baseline"] = base.r_squared
    table = [dict(c.__dict__) for c in refit.coefficients]
    emit(args, "refit", cfg.describe(), out, table, ts)
    if args.svg:
        from .plotting import plot_segmentation

        plot_segmentation(ts, changes, _refit_fitted(ts, refit), args.svg,
                          f"R^2 = {refit.r_squared:.3f}")
    return 0


def cmd_tar(args) -> int:
    from .extensions import tar_score_test

    ts = _read(args)
    q = _pair(args.quantiles)
    res = tar_score_test(ts, args.order, q, args.alpha)
    conf = {"order": args.order, "quantiles": list(q), "alpha": args.alpha}
    table = [{"threshold": t, "z": z} for t, z in zip(res.process.grid, res.process.z)]
    emit(args, "tar", conf, res.as_dict(), table, ts)
    if args.svg:
        from .plotting import plot_tar

        plot_tar(res, args.svg, ts.name)
    return 0


def _parse_changes(text: str | None, shape: SignalShape) -> tuple:
    from .simulate import Change

    if not text:
        return ()
    out = []
    for item in text.split(","):
        t, xi = _pair(item, float, ":")
        out.append(Change(t, xi, shape))
    return tuple(out)


def cmd_simulate(args) -> int:
    from .io import table_text
    from .simulate import Scenario, generate, mc_validate

    shape = build_shape(args)
    sc = Scenario(m=args.m, rho=args.ar, rho2=args.ar2, sigma=args.noise_sd, alpha=args.level,
                  beta=args.slope, changes=_parse_changes(args.changes, shape), noise=args.noise,
                  dispersion=args.dispersion, seed=args.seed)
    if args.approx is None:
        ts = generate(sc, 0)
        rows = [{"position": i + 1, "value": v} for i, v in enumerate(ts.values)]
        if args.series:
            Path(args.series).write_text(table_text(rows))
        res = {"m": ts.m, "mean": float(ts.values.mean()), "sd": float(ts.values.std(ddof=1)),
               "series": args.series}
        emit(args, "simulate", {"scenario": sc.describe()}, res, rows)
        return 0
    cfg = None
    if args.approx not in ("tar1", "tar2"):
        cfg = build_config(args)
        if args.sigma2 == "mse" and not args.estimate_sigma:
            # calibration runs use the known noise variance unless asked otherwise
            cfg = AnalysisConfig(cfg.shape, NuisanceModel(cfg.nuisance.regression, cfg.nuisance.rho,
                                                          Sigma2Spec.fixed(sc.sigma**2)),
                                 cfg.m0, cfg.n0, cfg.h, cfg.alpha)
    r = mc_validate(args.approx, sc, reps=args.reps, seed=args.seed, config=cfg, b=args.b,
                    alpha=args.alpha, threads=_threads(args))
    emit(args, "simulate", {"scenario": sc.describe(), "approx": args.approx, "reps": args.reps,
                            "seed": args.seed}, r.as_dict(), [
        {k: v for k, v in r.as_dict().items() if k != "settings"}])
    return 0


def cmd_threshold(args) -> int:
    from .crossing import (
        MSApprox,
        ScaleSpaceApprox,
        SeqApprox,
        TwoLocusApprox,
        rice_bound,
        scan_prob,
        solve_threshold,
    )
    from .score import score_process, surface_kernels, default_grid

    if args.m is None:
        raise InputError("--m is required for threshold")
    cfg = build_config(args)
    m = args.m
    approx = args.approx or "single"
    if approx == "single":
        if cfg.shape.has_scale_range:
            tau0, tau1 = cfg.shape.scale
            taus = np.arange(tau0, tau1 + 1e-9, 1.0)
            grid = default_grid(cfg.shape, 0, m)
            _, det, lt, ok = surface_kernels(cfg.shape, 0, m, grid, taus, cfg.nuisance.regression)
            f = ScaleSpaceApprox(det, lt, grid, taus, ok)
            name = "scale-space"
        else:
            dummy = TimeSeries(np.random.default_rng(0).standard_normal(m))
            zp = score_process(dummy, cfg.shape, AnalysisConfig(
                cfg.shape, NuisanceModel(cfg.nuisance.regression), cfg.m0, cfg.n0, cfg.h,
                cfg.alpha), keep_kernels=not cfg.shape.continuous)
            if cfg.shape.continuous:
                lam, t = zp.lam, zp.grid
                f = lambda b: rice_bound(b, lam, t, raw=True)  # noqa: E731
                name = "rice"
            else:
                g = zp.kernels
                kap = 1.0 - np.einsum("ij,ij->i", g[:-1], g[1:])
                f = lambda b: scan_prob(b, kap, raw=True)  # noqa: E731
                name = "scan"
    elif approx == "seq":
        f, name = SeqApprox(m, cfg.m0, cfg.n0, args.variant, shape=cfg.shape), f"seq-{args.variant}"
    elif approx == "ms":
        f, name = MSApprox(m, cfg.m0, cfg.n0, shape=cfg.shape), "ms"
    elif approx == "pair":
        f, name = TwoLocusApprox(m, cfg.h, shape=cfg.shape, regression=cfg.nuisance.regression), "two-locus"
    else:
        raise InputError(f"unknown approximation {approx!r}")
    b = solve_threshold(cfg.alpha, f)
    print(f"{b:.4f}")
    if args.out in (None, "-"):
        return 0
    emit(args, "threshold", dict(cfg.describe(), m=m, approx=name), {"b": b, "approximation": name},
         [{"approximation": name, "m": m, "alpha": cfg.alpha, "b": b}])
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = p.add_argument_group("analysis options")
    g.add_argument("--shape", choices=["jump", "broken-line", "bump", "paired"], default=d("broken-line"))
    g.add_argument("--bump-profile", choices=[b.value for b in BumpProfile],
                   default=d("sqrt-normal-density"))
    g.add_argument("--tau", type=float, default=d(None), help="fixed bump scale or paired-jump width")
    g.add_argument("--tau-range", default=d(None), metavar="A,B", help="bump scale range")
    g.add_argument("--regression", choices=["constant", "linear"], default=d(None),
                   help="background regression (default depends on the shape)")
    g.add_argument("--rho", default=d("fixed:0"), help="mle | fixed:x | subset:a..b")
    g.add_argument("--sigma2", default=d("mse"), help="mse | diff1 | diff2 | fixed:x")
    g.add_argument("--m0", type=int, default=d(5))
    g.add_argument("--n0", type=int, default=d(5))
    g.add_argument("--h", type=int, default=d(5))
    g.add_argument("--alpha", type=float, default=d(0.05))
    g.add_argument("--method", choices=["seq", "ms", "pair"], default=d("seq"))
    g.add_argument("--seed", type=int, default=d(0))
    g.add_argument("--threads", type=int, default=d(None))
    g.add_argument("--m", type=int, default=d(None), help="series length (threshold, simulate)")
    o = p.add_argument_group("output")
    o.add_argument("--out", default=d(None), help="JSON report path (default stdout)")
    o.add_argument("--svg", default=d(None), help="SVG figure path")
    o.add_argument("--table", default=d(None), help="CSV table path (default: next to --out)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="localsignal",
                                description="Detect, locate and segment local signals in time series.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _common(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _common(sp, suppress=True)
        return sp

    def data_args(sp):
        sp.add_argument("input", help="CSV file (one or two columns) or 'lynx' for the bundled data")
        sp.add_argument("--column", type=int, default=None, help="value column in wider files")
        sp.add_argument("--window", default=None, metavar="T0,T1")

    sp = add("detect", "single local signal: max |Z|, p-value, confidence regions")
    data_args(sp)
    sp.set_defaults(func=cmd_detect)

    sp = add("segment", "multiple signals by seq, ms or pair search")
    data_args(sp)
    sp.add_argument("--b", type=float, default=None, help="threshold (default: from --alpha)")
    sp.add_argument("--tie-rule", choices=["argmax", "smallest_t", "largest_t"], default="argmax")
    sp.add_argument("--intervals", default="all", help="ms only: all | random:N")
    sp.add_argument("--selection", choices=["largest", "shortest"], default="largest")
    sp.set_defaults(func=cmd_segment)

    sp = add("refit", "least-squares refit with given change locations")
    data_args(sp)
    sp.add_argument("--changes", required=True, help="comma-separated positions")
    sp.set_defaults(func=cmd_refit)

    sp = add("tar", "threshold autoregression score test")
    data_args(sp)
    sp.add_argument("--order", type=int, choices=[1, 2], default=1)
    sp.add_argument("--quantiles", default="0.1,0.9", metavar="LO,HI")
    sp.set_defaults(func=cmd_tar)

    sp = add("simulate", "generate a series, or check an approximation by Monte Carlo")
    sp.add_argument("--approx", choices=["rice", "scale-space", "seq", "ms", "two-locus", "tar1", "tar2"],
                    default=None)
    sp.add_argument("--reps", type=int, default=10_000)
    sp.add_argument("--b", type=float, default=None)
    sp.add_argument("--ar", type=float, default=0.0, help="true AR(1) coefficient")
    sp.add_argument("--ar2", type=float, default=0.0, help="true AR(2) coefficient")
    sp.add_argument("--noise-sd", type=float, default=1.0)
    sp.add_argument("--level", type=float, default=0.0, help="intercept (log rate for counts)")
    sp.add_argument("--slope", type=float, default=0.0)
    sp.add_argument("--changes", default=None, help="t:xi,t:xi,...")
    sp.add_argument("--noise", choices=["gaussian", "poisson", "negbin"], default="gaussian")
    sp.add_argument("--dispersion", type=float, default=1.0)
    sp.add_argument("--series", default=None, help="write the generated series to this CSV")
    sp.add_argument("--estimate-sigma", action="store_true",
                    help="calibrate with the --sigma2 estimator instead of the known variance")
    sp.set_defaults(func=cmd_simulate)

    sp = add("threshold", "level-alpha threshold for a search over m points")
    sp.add_argument("--approx", choices=["single", "seq", "ms", "pair"], default=None)
    sp.add_argument("--variant", choices=["V1", "V2"], default="V2")
    sp.set_defaults(func=cmd_threshold)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command in ("simulate",) and args.m is None:
            raise InputError("--m is required for simulate")
        return args.func(args)
    except (InputError, UnsupportedShapeError) as exc:
        print(f"localsignal: error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateInputError, ThresholdError) as exc:
        print(f"localsignal: degenerate data: {exc}", file=sys.stderr)
        return 1
    except LocalSignalError as exc:
        print(f"localsignal: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"localsignal: degenerate data: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
