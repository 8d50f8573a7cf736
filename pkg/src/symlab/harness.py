"""Experiment orchestration: stability sweeps, exponent fits, verdicts and reports."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from ._accel import worker_count
from .deficits import deficit_report
from .errors import InsufficientData, SymlabError
from .field import GridField, write_fld
from .models import KappaField, Nonlinearity, make_kappa, sobolev_constant
from .moving_planes import (MetricsConfig, ScanConfig, approximate_center, asymmetry_metrics, default_tolerance,
                            floors)
from .solver import ShootConfig, SolverConfig, continuation, mass_certificate, solve_perturbed, solve_radial

log = logging.getLogger(__name__)

FLOAT_FMT = "{:.12e}"
TREND_TIE = 1e-12              # round-off allowance on the ratio trend


@dataclass
class ExperimentConfig:
    """Flat experiment description; every field is a JSON key."""

    n: int = 3
    f_kind: str = "critical"
    f_q: Optional[float] = None
    f_C0: Optional[float] = None
    kappa_kind: str = "smooth_bump"
    kappa_profile: str = "shell"
    kappa_widths: Optional[list] = None
    kappa_baseline: float = 1.0
    kappa_seed: int = 0
    eps_ladder: Optional[list] = None
    eps_max: float = 0.06
    eps_count: int = 5
    eps_decades: float = 1.0
    radial_a: float = 3.0 ** 0.25
    half_width: float = 4.0
    grid_points: int = 64
    stencil: str = "4th"
    newton_tol: float = 1e-9
    max_iter: int = 30
    continuation_steps: int = 2
    interp_order: int = 3
    rotations: int = 16
    sphere_samples: int = 512
    radii: int = 30
    floor_factor: float = 10.0
    floor_honesty: float = 3.0
    theta_thm2: Optional[float] = None
    seed: int = 0
    workers: Optional[int] = None
    output_dir: str = "symlab_out"
    dump_fields: bool = False
    resolution_check: bool = False

    def __post_init__(self):
        lad = self.ladder()
        if any(e <= 0 for e in lad) or any(b >= a for a, b in zip(lad, lad[1:])):
            raise ValueError("eps ladder must be positive and strictly decreasing")
        if self.grid_points < 9:
            raise ValueError("grid_points too small")

    def ladder(self):
        if self.eps_ladder is not None:
            return [float(e) for e in self.eps_ladder]
        k = max(self.eps_count - 1, 1)
        return [float(self.eps_max * 10.0 ** (-self.eps_decades * i / k)) for i in range(self.eps_count)]

    @property
    def spacing(self):
        return 2.0 * self.half_width / (self.grid_points - 1)

    @classmethod
    def from_dict(cls, d: dict):
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return asdict(self)

    def nonlinearity(self) -> Nonlinearity:
        spec = {"kind": self.f_kind}
        if self.f_q is not None:
            spec["q"] = self.f_q
        if self.f_C0 is not None:
            spec["C0"] = self.f_C0
        return Nonlinearity.from_spec(spec, self.n)

    def kappa(self, eps: float) -> KappaField:
        params = {}
        if self.kappa_kind == "smooth_bump":
            params["profile"] = self.kappa_profile
        if self.kappa_widths is not None:
            params["widths"] = tuple(self.kappa_widths)
        return make_kappa(self.kappa_kind, eps, params, self.kappa_baseline, self.kappa_seed, self.n)

    def solver(self) -> SolverConfig:
        return SolverConfig(half_width=self.half_width, h=self.spacing, tol=self.newton_tol, max_iter=self.max_iter,
                            stencil=self.stencil, continuation_steps=self.continuation_steps)

    def metrics(self) -> MetricsConfig:
        return MetricsConfig(radii=self.radii, sphere_samples=self.sphere_samples, rotations=self.rotations,
                             order=self.interp_order)

    def theory(self):
        th = (self.n - 2) / 12.0
        t2 = th if self.theta_thm2 is None else float(self.theta_thm2)
        return {"theta_thm11": th, "theta_thm2": t2, "theta_prime": t2 / 2.0}


# ------------------------------------------------------------------ one case
def base_field(cfg: ExperimentConfig) -> GridField:
    """The radial solution for the constant baseline, sampled on the experiment grid."""
    f = cfg.nonlinearity()
    k0 = cfg.kappa_baseline
    prof = solve_radial(f, lambda r: np.full(np.shape(r), k0), cfg.n, ShootConfig(a=cfg.radial_a))
    N = cfg.grid_points
    return prof.sample((N,) * cfg.n, (-cfg.half_width,) * cfg.n, cfg.spacing)


def _nan_row(cfg, eps, status):
    row = {"eps": eps, "delta_f": math.nan, "osc": math.nan, "kappa0": math.nan, "kappa1": math.nan,
           "linf_asym": math.nan, "d12_asym": math.nan, "rad_deriv_max": math.nan, "status": status}
    for k in range(cfg.n):
        row[f"lam{k + 1}"] = math.nan
    return row


def analyse(cfg: ExperimentConfig, u: GridField, kappa: KappaField, f: Nonlinearity, S: float):
    """Deficits, tolerance, center and asymmetry metrics of one solution."""
    dr = deficit_report(u, kappa, f)
    tol, reflect_fl = default_tolerance(u, dr.delta_f, S, cfg.interp_order, cfg.floor_factor)
    scan = ScanConfig(order=cfg.interp_order)
    cen = approximate_center(u, tol, scan)
    met = asymmetry_metrics(u, cen.center, cfg.metrics())
    return dr, tol, reflect_fl, cen, met


def run_case(cfg: ExperimentConfig, eps: float, initial: GridField, S: float, index: int = 0):
    """Solve and measure one ladder point. Failures come back as a status, never as an exception."""
    f = cfg.nonlinearity()
    t0 = time.perf_counter()
    extra = {"eps": eps}
    try:
        kappa = cfg.kappa(eps)
        if eps == 0.0:
            steps = [solve_perturbed(kappa, f, initial, cfg.solver())]
        else:
            steps = continuation(cfg.kappa, eps, f, initial, cfg.solver(), cfg.continuation_steps)
        res = steps[-1]
        if not res.converged:
            row = _nan_row(cfg, eps, "nonconverged")
            extra.update(res.summary())
            return row, extra, None
        dr, tol, reflect_fl, cen, met = analyse(cfg, res.field, kappa, f, S)
    except SymlabError as exc:
        log.warning("case eps=%g failed: %s", eps, exc)
        return _nan_row(cfg, eps, type(exc).__name__), {**extra, "error": str(exc)}, None
    ok_mass, bound = mass_certificate(res, f.f0, kappa.sup_value, S)
    row = {"eps": eps, "delta_f": dr.delta_f, "osc": dr.osc,
           "kappa0": math.nan if dr.kappa0 is None else dr.kappa0, "kappa1": dr.kappa1,
           "linf_asym": met.linf_asymmetry, "d12_asym": met.d12_asymmetry,
           "rad_deriv_max": met.radial_derivative_max, "status": "ok"}
    for k, p in enumerate(cen.plus):
        row[f"lam{k + 1}"] = p.lambda_star
    extra.update({
        "solve": res.summary(),
        "identity_errors": [s.identity_error for s in steps],
        "mass": res.mass, "mass_bound": bound, "mass_ok": bool(ok_mass),
        "deficits": dr.to_dict(), "deficit_error_estimate": dr.error_estimate,
        "ordering_holds": dr.ordering_holds(),
        "tolerance": tol, "reflect_floor": reflect_fl,
        "center": cen.to_dict(), "symmetry": {k: v for k, v in met.to_dict().items()
                                             if k not in ("radii", "sphere_oscillation_profile")},
        "seconds": time.perf_counter() - t0,
    })
    if cfg.dump_fields:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_fld(out / f"case_{index}.fld", res.field, {"eps": float(eps)})
    return row, extra, res.field


def _case_job(args):
    cfg_d, eps, initial, S, idx = args
    row, extra, _ = run_case(ExperimentConfig.from_dict(cfg_d), eps, initial, S, idx)
    return row, extra


# ---------------------------------------------------------------------- fits
@dataclass
class FitResult:
    shape: str
    theta: float
    A: float
    rms: float
    rows: int


def _xy(delta, asym, shape):
    d = np.asarray(delta, float)
    a = np.asarray(asym, float)
    if shape == "power":
        return np.log(d), np.log(a)
    if shape == "log_inverse":
        if np.any(d >= 1.0):
            raise InsufficientData("log_inverse shape needs delta < 1")
        return np.log(np.abs(np.log(d))), np.log(a)
    raise ValueError(f"unknown fit shape {shape!r}")


def fit_exponent(rows, shape: str = "power", metric: str = "linf_asym", min_rows: int = 4) -> FitResult:
    """Least squares of log(asym) on log(delta) (power) or on log|log delta| (log_inverse)."""
    use = [r for r in rows if np.isfinite(r.get("delta_f", np.nan)) and np.isfinite(r.get(metric, np.nan))
           and r["delta_f"] > 0 and r[metric] > 0]
    if len(use) < min_rows:
        raise InsufficientData(f"{len(use)} usable rows, need {min_rows}")
    x, y = _xy([r["delta_f"] for r in use], [r[metric] for r in use], shape)
    X = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    slope = float(coef[1])
    theta = slope if shape == "power" else -slope
    return FitResult(shape, theta, float(np.exp(coef[0])), float(np.sqrt(np.mean(res ** 2))), len(use))


def bound_shape(delta, theta, shape):
    d = np.asarray(delta, float)
    if shape == "power":
        return d ** theta
    return np.abs(np.log(d)) ** (-theta)


def verify_bounds(rows, theory: dict, metric: str = "linf_asym", fits: Optional[dict] = None,
                  checks: Optional[dict] = None) -> dict:
    """PASS when the ratio asym / shape(delta) does not grow as delta decreases.

    The constant C is the max ratio over rows; the trend is the slope of
    log(ratio) against log(1/delta).
    """
    if checks is None:
        checks = {"thm11_log": ("log_inverse", theory["theta_thm11"]),
                  "thm2_power": ("power", theory["theta_thm2"])}
    use = [r for r in rows if np.isfinite(r.get("delta_f", np.nan)) and np.isfinite(r.get(metric, np.nan))
           and 0 < r["delta_f"] < 1 and r[metric] > 0]
    out = {}
    for name, (shape, th) in checks.items():
        if len(use) < 2:
            out[name] = {"verdict": "SKIPPED", "reason": "fewer than 2 usable rows", "shape": shape, "theta": th}
            continue
        d = np.array([r["delta_f"] for r in use])
        a = np.array([r[metric] for r in use])
        ratio = a / bound_shape(d, th, shape)
        x = np.log(1.0 / d)
        trend = float(np.polyfit(x, np.log(ratio), 1)[0])
        ent = {"shape": shape, "theta": th, "C": float(ratio.max()), "ratio_trend": trend,
               "verdict": "PASS" if trend <= TREND_TIE else "FAIL", "notes": []}
        fit = (fits or {}).get(shape)
        if fit is not None and ent["verdict"] == "PASS" and fit.theta >= th:
            ent["notes"].append("sharper than guaranteed")
        if trend > TREND_TIE:
            ent["notes"].append("ratio grows as delta decreases")
        out[name] = ent
    return out


# -------------------------------------------------------------------- report
@dataclass
class StabilityReport:
    rows: List[dict]
    extras: List[dict]
    baseline: dict
    floors: dict
    fits: dict
    verdicts: dict
    theory: dict
    config: dict
    notes: List[str] = dc_field(default_factory=list)
    resolution: Optional[dict] = None
    stamp: str = "OK"

    def columns(self):
        n = self.config["n"]
        return (["eps", "delta_f", "osc", "kappa0", "kappa1", "linf_asym", "d12_asym", "rad_deriv_max"]
                + [f"lam{k + 1}" for k in range(n)] + ["status"])

    def write_csv(self, path):
        write_rows_csv(path, self.rows, self.columns())

    def to_dict(self):
        return {"config": self.config, "theory": self.theory, "baseline": self.baseline, "floors": self.floors,
                "fits": {k: (asdict(v) if isinstance(v, FitResult) else v) for k, v in self.fits.items()},
                "verdicts": self.verdicts, "rows": self.rows, "cases": self.extras, "notes": self.notes,
                "resolution": self.resolution, "stamp": self.stamp}

    def write_json(self, path):
        Path(path).write_text(json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n")


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (np.floating, float)):
        return float(o) if np.isfinite(o) else None
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    return o


def _fmt(v):
    if isinstance(v, str):
        return v
    v = float(v)
    return "nan" if not np.isfinite(v) else FLOAT_FMT.format(v)


def write_rows_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in columns])


def read_rows_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({k: (v if k == "status" else float(v)) for k, v in rec.items()})
    return rows


def write_svg(path, rows, metric="linf_asym", width=420, height=320):
    """Minimal log-log scatter of ``metric`` against delta_f."""
    pts = [(r["delta_f"], r[metric]) for r in rows
           if r.get("status") == "ok" and r["delta_f"] > 0 and r[metric] > 0]
    pad = 40
    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
            f'<rect x="{pad}" y="{pad // 2}" width="{width - 1.5 * pad:.0f}" height="{height - 1.5 * pad:.0f}" '
            'fill="none" stroke="black"/>',
            f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="12" text-anchor="middle">log delta_f</text>',
            f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 {height / 2:.0f})" '
            f'text-anchor="middle">log {metric}</text>']
    if pts:
        lx = np.log10([p[0] for p in pts])
        ly = np.log10([p[1] for p in pts])
        x0, x1 = lx.min() - 0.1, lx.max() + 0.1
        y0, y1 = ly.min() - 0.1, ly.max() + 0.1
        for a, b in zip(lx, ly):
            cx = pad + (a - x0) / (x1 - x0) * (width - 1.5 * pad)
            cy = pad // 2 + (y1 - b) / (y1 - y0) * (height - 1.5 * pad)
            body.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="black"/>')
    body.append("</svg>")
    Path(path).write_text("\n".join(body) + "\n")


def usable_rows(rows, floor_linf, factor=3.0, floor_delta=0.0):
    """Rows kept for fits: ok status, delta above the deficit floor, linf above factor x the radial floor."""
    keep, dropped = [], []
    for r in rows:
        good = (r["status"] == "ok" and np.isfinite(r["linf_asym"]) and r["delta_f"] > floor_delta
                and r["linf_asym"] > factor * floor_linf)
        (keep if good else dropped).append(r)
    return keep, dropped


def fit_all(rows, theory):
    fits, notes = {}, []
    for shape in ("power", "log_inverse"):
        try:
            fits[shape] = fit_exponent(rows, shape)
        except InsufficientData as exc:
            notes.append(f"{shape} fit skipped: {exc}")
    for shape in ("power",):
        try:
            fits["d12_" + shape] = fit_exponent(rows, shape, "d12_asym")
        except InsufficientData as exc:
            notes.append(f"d12 {shape} fit skipped: {exc}")
    return fits, notes


def run_stability_sweep(cfg: ExperimentConfig, write: bool = True) -> StabilityReport:
    f = cfg.nonlinearity()
    S = sobolev_constant(cfg.n)
    theory = cfg.theory()
    U = base_field(cfg)
    # the eps = 0 solve is the radial baseline; its metrics are the asymmetry floor
    b_row, b_extra, b_field = run_case(cfg, 0.0, U, S, -1)
    if b_row["status"] != "ok":
        raise SymlabError(f"baseline solve failed: {b_row['status']}")
    fl = floors(b_field, cfg.metrics())
    fl["baseline_linf"] = b_row["linf_asym"]
    fl["baseline_d12"] = b_row["d12_asym"]
    fl["baseline_delta_f"] = b_row["delta_f"]
    ladder = cfg.ladder()
    jobs = [(cfg.to_dict(), e, b_field, S, i) for i, e in enumerate(ladder)]
    nw = worker_count(cfg.workers)
    if nw > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(nw, len(jobs))) as ex:
            results = list(ex.map(_case_job, jobs))
    else:
        results = [_case_job(j) for j in jobs]
    rows = [r for r, _ in results]
    extras = [e for _, e in results]
    if all(r["status"] != "ok" for r in rows):
        raise SymlabError("every case failed")
    order = np.argsort([r["eps"] for r in rows], kind="stable")
    rows = [rows[i] for i in order]
    extras = [extras[i] for i in order]
    notes = []
    keep, dropped = usable_rows(rows, max(fl["baseline_linf"], fl["linf"]), cfg.floor_honesty,
                                fl["baseline_delta_f"])
    for r in dropped:
        notes.append(f"eps={r['eps']:.6g} excluded from fits (status {r['status']} or at floor)")
    kept = {id(r) for r in keep}
    for r, e in zip(rows, extras):
        e["used_in_fit"] = id(r) in kept
    if all(r["delta_f"] <= fl["baseline_delta_f"] for r in rows if r["status"] == "ok"):
        fits, verdicts = {}, {}
        notes.append("fits skipped: degenerate deficits")
    else:
        fits, fn = fit_all(keep, theory)
        notes += fn
        verdicts = verify_bounds(keep, theory, fits=fits)
        d12_rows = [r for r in keep if r["d12_asym"] > cfg.floor_honesty * fl["baseline_d12"]]
        verdicts.update(verify_bounds(d12_rows, theory, "d12_asym",
                                      checks={"thm2_prime_d12": ("power", theory["theta_prime"])}))
    rep = StabilityReport(rows, extras, {"row": b_row, **b_extra}, fl, fits, verdicts, theory, cfg.to_dict(),
                          notes)
    if cfg.resolution_check:
        rep.resolution = resolution_check(cfg, rep)
        if rep.resolution.get("under_resolved"):
            rep.stamp = "UNDER-RESOLVED"
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        rep.write_csv(out / "report.csv")
        rep.write_json(out / "report.json")
        write_svg(out / "report.svg", rows)
    return rep


def resolution_check(cfg: ExperimentConfig, rep: StabilityReport, limit=0.25) -> dict:
    """Rerun at half the spacing; every fitted theta must move by at most ``limit`` (relative)."""
    fine = ExperimentConfig.from_dict({**cfg.to_dict(), "grid_points": 2 * cfg.grid_points - 1,
                                       "resolution_check": False, "dump_fields": False})
    frep = run_stability_sweep(fine, write=False)
    out = {"grid_points": fine.grid_points, "changes": {}, "under_resolved": False}
    for k, fit in rep.fits.items():
        g = frep.fits.get(k)
        if g is None:
            out["changes"][k] = None
            out["under_resolved"] = True
            continue
        ch = abs(g.theta - fit.theta) / max(abs(fit.theta), 1e-300)
        out["changes"][k] = ch
        out["under_resolved"] |= ch > limit
    return out


def report_from_csv(path, n=3, theta_thm2=None, floor_linf=0.0, factor=3.0):
    """Refit an existing report.csv."""
    rows = read_rows_csv(path)
    theory = ExperimentConfig(n=n, theta_thm2=theta_thm2).theory()
    keep, _ = usable_rows(rows, floor_linf, factor)
    fits, notes = fit_all(keep, theory)
    return {"theory": theory, "fits": {k: asdict(v) for k, v in fits.items()},
            "verdicts": verify_bounds(keep, theory, fits=fits), "notes": notes, "rows_used": len(keep)}
