"""Command line entry point: ``ahcorner <subcommand>``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 mass-inequality violation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MASS = 0, 1, 2, 3


def _check_green(args) -> int:
    from .green import dump_kernel_csv, flux, green0, kernel_table, ode_residual

    s = np.linspace(0.05, 25.0, args.points)
    ok = True
    for n in args.dims:
        table = kernel_table(n)
        rel = float(np.max(np.abs(ode_residual(table, s)) / np.abs(green0(table, s))))
        fl = float(flux(table, 1e-3))
        good = rel <= 1e-7 and abs(fl - 1.0) <= 1e-5
        ok &= good
        print(f"n={n} theta(1)={table.theta0:.15g} max|residual|/G={rel:.3e} "
              f"flux(1e-3)-1={fl - 1.0:+.3e} {'ok' if good else 'FAIL'}")
        if args.csv:
            path = Path(args.csv.format(n=n))
            dump_kernel_csv(table, s, path)
    return EXIT_OK if ok else EXIT_NUMERIC


def _check_geometry(args) -> int:
    from .warped import (dump_metric_csv, make_ads_schwarzschild, make_hyperbolic,
                         riccati_residual, scalar_curvature)

    ok = True
    for n in args.dims:
        models = [make_hyperbolic(n, args.s_hi, num=args.points)]
        if args.mass > 0.0:
            models.append(make_ads_schwarzschild(n, args.mass, 1.0, args.s_hi,
                                                 num=args.points))
        for g in models:
            dev = float(np.nanmax(np.abs(scalar_curvature(g) + n * (n - 1))))
            ric = float(np.nanmax(np.abs(riccati_residual(g))))
            good = dev <= 1e-8 and ric <= 1e-8
            ok &= good
            print(f"n={n} {g.label or 'metric'}: max|R+n(n-1)|={dev:.3e} "
                  f"max|riccati|={ric:.3e} {'ok' if good else 'FAIL'}")
            if args.csv:
                dump_metric_csv(g, Path(args.csv.format(n=n, label=g.label or "metric")))
    return EXIT_OK if ok else EXIT_NUMERIC


def _solve(args) -> int:
    from .solver import SolverInput, dump_solution_csv, solve
    from .warped import make_hyperbolic

    n = args.n
    g = make_hyperbolic(n, args.s_hi, num=args.points)
    s = g.s
    if args.source == "manufactured":
        w = n * (n + 1) / np.cosh(s) ** (n + 2)
    else:
        lo, hi = args.bump
        inside = (s > lo) & (s < hi)
        w = np.where(inside, np.sin(math.pi * (s - lo) / (hi - lo)) ** 4, 0.0)
    res = solve(SolverInput(g, np.zeros_like(s), w))
    print(json.dumps({"A": res.A, "order": res.fit_order, "positive": res.positive,
                      "residual": res.residual_norm, "m_matrix": res.m_matrix},
                     indent=2, sort_keys=True))
    if args.csv:
        dump_solution_csv(res, args.csv)
    return EXIT_OK


def _represent(args) -> int:
    from .corner import make_corner, smooth
    from .representation import RepresentationConfig, relative_residual, represent
    from .solver import SolverInput, solve
    from .warped import make_ads_schwarzschild, make_hyperbolic

    n = args.n
    omega = args.omega or [1.0] + [0.0] * (n - 1)
    if len(omega) != n:
        print(f"error: omega needs {n} components", file=sys.stderr)
        return EXIT_CONFIG
    if args.mass > 0.0:
        s0 = math.asinh(1.0)
        inside = make_hyperbolic(n, s0, num=401)
        outside = make_ads_schwarzschild(n, args.mass, 1.0, args.s_hi, s_lo=s0, num=4001)
        g = smooth(make_corner(inside, outside, s0), 0.1, h_far=args.h).base
    else:
        g = make_hyperbolic(n, args.s_hi, num=int(round(args.s_hi / args.h)) + 1)
    s = g.s
    lo, hi = args.bump
    w = np.where((s > lo) & (s < hi), np.sin(math.pi * (s - lo) / (hi - lo)) ** 4, 0.0)
    res = solve(SolverInput(g, np.zeros_like(s), w))
    cfg = RepresentationConfig(args.r0, tuple(omega))
    bundle = represent(res.v, res.dv, w, g, cfg, res.A, gauge=res.gauge)
    print(bundle.to_json(cfg))
    if args.mass == 0.0 and relative_residual(bundle) > 1e-5:
        return EXIT_NUMERIC
    return EXIT_OK


def _pipeline(args) -> int:
    from .pipeline import ConfigError, emit_report, exit_code, load_config, run_pipeline

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_pipeline(cfg)
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    csv_path, json_path = emit_report(report, cfg)
    print(report.to_csv(), end="")
    print(f"wrote {csv_path} and {json_path}")
    return exit_code(report)


def _report(args) -> int:
    from .pipeline import PipelineReport, atomic_write, exit_code

    try:
        report = PipelineReport.from_dict(json.loads(Path(args.json).read_text()))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"cannot read report: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = report.to_csv()
    if args.csv:
        atomic_write(args.csv, text)
    else:
        print(text, end="")
    bound = report.bound
    if bound.get("C") is not None:
        print(f"# C={bound['C']:.6g} exponent={bound['exponent']:.4f} "
              f"stable={bound['stable']}", file=sys.stderr)
    return exit_code(report)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ahcorner", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("check-green", help="kernel ODE residual and flux normalization")
    g.add_argument("--dims", type=int, nargs="+", default=[3, 4, 5])
    g.add_argument("--points", type=int, default=500)
    g.add_argument("--csv", help="path template, e.g. kernel_{n}.csv")
    g.set_defaults(func=_check_green)

    c = sub.add_parser("check-geometry", help="curvature and Riccati identities of the models")
    c.add_argument("--dims", type=int, nargs="+", default=[3, 4, 5])
    c.add_argument("--mass", type=float, default=0.1)
    c.add_argument("--s-hi", type=float, default=10.0)
    c.add_argument("--points", type=int, default=2001)
    c.add_argument("--csv", help="path template with {n} and {label}")
    c.set_defaults(func=_check_geometry)

    s = sub.add_parser("solve", help="single radial solve on hyperbolic space")
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--s-hi", type=float, default=22.0)
    s.add_argument("--points", type=int, default=20001)
    s.add_argument("--source", choices=["manufactured", "bump"], default="manufactured")
    s.add_argument("--bump", type=float, nargs=2, default=[1.0, 2.0])
    s.add_argument("--csv")
    s.set_defaults(func=_solve)

    r = sub.add_parser("represent", help="decay coefficient from the integral representation")
    r.add_argument("--n", type=int, default=3)
    r.add_argument("--r0", type=float, default=math.sinh(2.5))
    r.add_argument("--omega", type=float, nargs="+")
    r.add_argument("--mass", type=float, default=0.0)
    r.add_argument("--bump", type=float, nargs=2, default=[3.0, 4.0])
    r.add_argument("--s-hi", type=float, default=22.0)
    r.add_argument("--h", type=float, default=0.0005)
    r.set_defaults(func=_represent)

    pl = sub.add_parser("pipeline", help="full glue-smooth-solve-deform-mass run")
    pl.add_argument("config")
    pl.set_defaults(func=_pipeline)

    rp = sub.add_parser("report", help="re-render the per-nu table from a JSON report")
    rp.add_argument("json")
    rp.add_argument("--csv")
    rp.set_defaults(func=_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        try:
            return args.func(args)
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
