"""Command line entry point: ``symlab <subcommand>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .deficits import deficit_report
from .errors import SymlabError
from .field import read_fld, write_fld
from .models import Bubble, BubbleParams, Nonlinearity, bubble_residual, cube_grid, make_kappa, sobolev_constant
from .moving_planes import (MetricsConfig, ScanConfig, approximate_center, asymmetry_metrics, critical_plane,
                            default_tolerance)


def _floats(s):
    return tuple(float(x) for x in s.split(","))


def _kappa_from_args(a, n):
    params = json.loads(a.kappa_params) if a.kappa_params else {}
    return make_kappa(a.kappa, a.eps, params, a.baseline, a.seed, n)


def cmd_bubble(a):
    center = _floats(a.center) if a.center else (0.0,) * a.dim
    p = BubbleParams(center, a.lam, a.dim)
    shape, origin, h = cube_grid(a.half_width, a.h, a.dim)
    fld = Bubble(p).sample(shape, origin, h)
    out = {"shape": list(shape), "spacing": h}
    if a.dim == 3:
        out["residual_max"] = bubble_residual(p, a.half_width, h)
    if a.out:
        write_fld(a.out, fld)
        out["file"] = a.out
    print(json.dumps(out))


def cmd_solve(a):
    cfg = harness.ExperimentConfig.from_json(a.config) if a.config else harness.ExperimentConfig()
    if a.eps is not None:
        cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), "eps_ladder": [a.eps]})
    S = sobolev_constant(cfg.n)
    base = harness.base_field(cfg)
    row, extra, fld = harness.run_case(cfg, cfg.ladder()[0], base, S)
    if a.dump_field and fld is not None:
        write_fld(a.dump_field, fld, {"eps": float(cfg.ladder()[0])})
    print(json.dumps(harness._clean({"row": row, **extra}), indent=2, sort_keys=True))
    return 0 if row["status"] == "ok" else 1


def cmd_deficit(a):
    u = read_fld(a.field)
    f = Nonlinearity.critical(u.dim)
    rep = deficit_report(u, _kappa_from_args(a, u.dim), f)
    print(rep.to_json())


def cmd_scan(a):
    u = read_fld(a.field)
    tol = a.tolerance
    if tol is None:
        tol, _ = default_tolerance(u, 0.0, order=a.order)
    scan = ScanConfig(order=a.order)
    if a.omega:
        res = critical_plane(u, _floats(a.omega), tol, scan)
        if a.csv:
            res.write_csv(a.csv)
        print(res.to_json())
        return 0
    cen = approximate_center(u, tol, scan)
    met = asymmetry_metrics(u, cen.center, MetricsConfig(order=a.order))
    print(json.dumps(harness._clean({"center": cen.to_dict(), "symmetry": met.to_dict(), "tolerance": tol})))
    return 0


def cmd_sweep(a):
    cfg = harness.ExperimentConfig.from_json(a.config) if a.config else harness.ExperimentConfig()
    over = {"output_dir": a.out} if a.out else {}
    if a.dump_field:
        over["dump_fields"] = True
    if a.resolution_check:
        over["resolution_check"] = True
    if over:
        cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), **over})
    rep = harness.run_stability_sweep(cfg)
    print(json.dumps(harness._clean({"verdicts": rep.verdicts, "stamp": rep.stamp,
                                     "output_dir": cfg.output_dir}), indent=2, sort_keys=True))
    return 0


def cmd_report(a):
    out = harness.report_from_csv(a.csv, a.dim, a.theta_thm2, a.floor_linf)
    text = json.dumps(harness._clean(out), indent=2, sort_keys=True)
    if a.out:
        Path(a.out).write_text(text + "\n")
    print(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="symlab", description="Quantitative symmetry experiments for critical equations")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("bubble", help="write a sampled bubble and report its discrete residual")
    b.add_argument("--dim", type=int, default=3)
    b.add_argument("--lam", type=float, default=1.0)
    b.add_argument("--center", default=None, help="comma separated")
    b.add_argument("--half-width", type=float, default=4.0)
    b.add_argument("--h", type=float, default=0.125)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bubble)

    s = sub.add_parser("solve", help="solve one case of an experiment config")
    s.add_argument("--config", default=None)
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--dump-field", default=None, help="write the solution as FLD1")
    s.set_defaults(func=cmd_solve)

    d = sub.add_parser("deficit", help="deficits of an FLD1 field")
    d.add_argument("field")
    d.add_argument("--kappa", default="smooth_bump")
    d.add_argument("--kappa-params", default=None, help="JSON object")
    d.add_argument("--eps", type=float, default=0.0)
    d.add_argument("--baseline", type=float, default=1.0)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_deficit)

    c = sub.add_parser("scan", help="moving-planes scan of an FLD1 field")
    c.add_argument("field")
    c.add_argument("--omega", default=None, help="scan one direction (comma separated)")
    c.add_argument("--tolerance", type=float, default=None)
    c.add_argument("--order", type=int, default=3, choices=(1, 3))
    c.add_argument("--csv", default=None, help="write lambda, sup_excess, l2star_excess")
    c.set_defaults(func=cmd_scan)

    w = sub.add_parser("sweep", help="run a full stability sweep")
    w.add_argument("--config", default=None)
    w.add_argument("--out", default=None)
    w.add_argument("--dump-field", action="store_true", help="write case_<k>.fld files")
    w.add_argument("--resolution-check", action="store_true")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="refit an existing report.csv")
    r.add_argument("csv")
    r.add_argument("--dim", type=int, default=3)
    r.add_argument("--theta-thm2", type=float, default=None)
    r.add_argument("--floor-linf", type=float, default=0.0)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args) or 0
    except SymlabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
