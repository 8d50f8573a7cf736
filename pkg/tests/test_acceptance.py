"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line.

Run directly (``python3 tests/test_acceptance.py``) or through pytest; the
lines are repeated in the pytest terminal summary.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

from symlab.deficits import deficit_report
from symlab.harness import ExperimentConfig, base_field, run_stability_sweep
from symlab.kelvin import kelvin_transform
from symlab.models import Bubble, BubbleParams, Nonlinearity, bubble_residual, cube_grid, make_kappa
from symlab.moving_planes import (ScanConfig, approximate_center, asymmetry_metrics, default_tolerance, floors,
                                  gradient_error_bound)
from test_deficits import random_triple

pytestmark = pytest.mark.slow


def report(k, ok, msg):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {msg}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="session")
def sweeps(tmp_path_factory):
    """The default sweep, run twice into separate directories."""
    out = []
    for tag in ("a", "b"):
        d = tmp_path_factory.mktemp(f"sweep_{tag}")
        cfg = ExperimentConfig(output_dir=str(d))
        t0 = time.perf_counter()
        rep = run_stability_sweep(cfg)
        out.append((rep, d, time.perf_counter() - t0))
    return out


def test_criterion_1_bubble_residual():
    t0 = time.perf_counter()
    r = [bubble_residual(BubbleParams((0, 0, 0), 1.0), 8.0, h) for h in (0.25, 0.125, 0.0625)]
    q = [r[0] / r[1], r[1] / r[2]]
    dt = time.perf_counter() - t0
    ok = all(3.5 <= x <= 4.5 for x in q) and dt <= 60
    report(1, ok, f"residual ratios {q[0]:.3f}, {q[1]:.3f} in {dt:.1f} s")


def test_criterion_2_kelvin():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    d = rng.normal(size=(200, 3))
    x = d / np.linalg.norm(d, axis=1)[:, None] * rng.uniform(0.2, 5.0, (200, 1))
    exact_err = 0.0
    for lam in (0.5, 1.0, 2.0, 3.7):
        v = kelvin_transform(Bubble(BubbleParams((0, 0, 0), lam)), excluded_radius=1e-3)
        ref = Bubble(BubbleParams((0, 0, 0), 1 / lam))(x)
        exact_err = max(exact_err, float(np.max(np.abs(v(x) - ref) / ref)))
    b = Bubble(BubbleParams((0.3, -0.2, 0.1), 1.0))
    shape, origin, h = cube_grid(4.0, 0.125)
    u = b.sample(shape, origin, h)
    vg = kelvin_transform(u).to_grid(shape, origin, h)
    back = kelvin_transform(vg, excluded_radius=1e-6)
    y = rng.normal(size=(200, 3))
    y = y / np.linalg.norm(y, axis=1)[:, None] * rng.uniform(0.5, 3.0, (200, 1))
    dbl = float(np.max(np.abs(back(y) - b(y))))
    interp = float(np.max(np.abs(u.eval(y) - b(y))))
    yk = y / np.sum(y ** 2, axis=1)[:, None]
    vk = np.linalg.norm(yk, axis=1) ** -1 * b(yk / np.sum(yk ** 2, axis=1)[:, None])
    interp = max(interp, float(np.max(np.abs(vg.eval(yk) - vk) / np.linalg.norm(y, axis=1))))
    dt = time.perf_counter() - t0
    ok = exact_err <= 1e-10 and dbl <= 2 * interp and dt <= 10
    report(2, ok, f"closed form {exact_err:.2e}, double Kelvin {dbl:.2e} vs 2x interpolation {2 * interp:.2e}, "
                  f"{dt:.1f} s")


def test_criterion_3_deficits():
    t0 = time.perf_counter()
    shape, origin, h = cube_grid(4.0, 0.25)
    f = Nonlinearity.critical(3)
    zero = 0.0
    for lam, c, base in ((1.0, 0.0, 1.0), (0.8, 0.4, 1.0), (1.3, 1.7, 2.0)):
        u = Bubble(BubbleParams((0.2, 0, -0.1), lam)).sample(shape, origin, h)
        k = make_kappa("constant", c, baseline=base)
        zero = max(zero, abs(deficit_report(u, k, f, error_estimate=False).delta_f))
    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(50):
        u, k, ff = random_triple(rng)
        rep = deficit_report(u, k, ff, error_estimate=False)
        bad += not rep.ordering_holds()
    dt = time.perf_counter() - t0
    report(3, zero <= 1e-9 and bad == 0 and dt <= 120,
           f"constant-kappa deficit {zero:.1e}, ordering violations {bad}/50, {dt:.1f} s")


def test_criterion_4_mass(sweeps):
    rep = sweeps[0][0]
    worst = np.inf
    for e in [rep.baseline] + rep.extras:
        if "mass" in e:
            worst = min(worst, e["mass"] / e["mass_bound"])
    ok = np.isfinite(worst) and worst >= 0.95
    report(4, ok, f"min mass / bound over the sweep {worst:.4f} (need >= 0.95)")


def test_criterion_5_center():
    t0 = time.perf_counter()
    z = np.array([0.7, -0.3, 0.2])
    shape, origin, h = cube_grid(95 / 16, 0.125)
    assert shape == (96, 96, 96) and h == 0.125
    u = Bubble(BubbleParams(tuple(z), 1.0)).sample(shape, origin, h)
    tol, _ = default_tolerance(u, 0.0, order=3)
    cen = approximate_center(u, tol, ScanConfig(order=3))
    err = float(np.max(np.abs(cen.center - z)))
    axes_err = float(np.max(np.abs(np.array([p.lambda_star for p in cen.plus]) - z)))
    anti = float(np.max(cen.antisymmetry))
    dt = time.perf_counter() - t0
    ok = err <= 2 * h and axes_err <= 2 * h and anti <= 4 * h and dt <= 300
    report(5, ok, f"|O - z| {err:.3g} (one-sided {axes_err:.3g}) <= {2 * h}, antisymmetry {anti:.3g} <= {4 * h}, "
                  f"{dt:.0f} s")


def test_criterion_6_radial_null():
    cfg = ExperimentConfig()
    u = base_field(cfg)
    tol, _ = default_tolerance(u, 0.0, order=cfg.interp_order)
    cen = approximate_center(u, tol, ScanConfig(order=cfg.interp_order))
    met = asymmetry_metrics(u, cen.center, cfg.metrics())
    fl = floors(u, cfg.metrics())
    gb = gradient_error_bound(u)
    ok = (met.linf_asymmetry <= 3 * fl["linf"] and met.d12_asymmetry <= 3 * fl["d12"]
          and met.radial_derivative_max <= gb)
    report(6, ok, f"linf {met.linf_asymmetry:.2e} (floor {fl['linf']:.2e}), d12 {met.d12_asymmetry:.2e} "
                  f"(floor {fl['d12']:.2e}), radial derivative max {met.radial_derivative_max:.2e} <= {gb:.2e}")


def test_criterion_7_sweep(sweeps):
    rep, _, dt = sweeps[0]
    rows = sorted(rep.rows, key=lambda r: -r["eps"])          # along the ladder, eps decreasing
    eps = [r["eps"] for r in rows]
    decade = eps[0] / eps[-1]
    df = [r["delta_f"] for r in rows]
    li = [r["linf_asym"] for r in rows]
    dec = all(b < a for a, b in zip(df, df[1:]))
    band = all(b <= 1.2 * a for a, b in zip(li, li[1:]))
    pw = rep.verdicts.get("thm2_power", {})
    lg = rep.verdicts.get("thm11_log", {})
    ok = (len(rows) == 5 and abs(decade - 10) < 1e-9 and rep.config["grid_points"] == 64
          and all(r["status"] == "ok" for r in rows) and dec and band
          and pw.get("verdict") == "PASS" and pw.get("ratio_trend", 1) <= 0
          and lg.get("verdict") == "PASS" and dt <= 1800)
    report(7, ok, f"delta_f decreasing {dec}, linf within 1.2x band {band}, power {pw.get('verdict')} "
                  f"(trend {pw.get('ratio_trend', float('nan')):.3f}), log {lg.get('verdict')}, {dt:.0f} s")


def test_criterion_8_identity(sweeps):
    rep = sweeps[0][0]
    errs = list(rep.baseline.get("identity_errors", []))
    for e in rep.extras:
        errs += e.get("identity_errors", [])
    worst = max(errs) if errs else np.inf
    report(8, len(errs) > 0 and worst <= 1e-3, f"max identity error {worst:.2e} over {len(errs)} solves")


def test_criterion_9_determinism(sweeps):
    (_, da, _), (_, db, _) = sweeps
    a = (da / "report.csv").read_bytes()
    b = (db / "report.csv").read_bytes()
    report(9, a == b and len(a) > 0, f"report.csv byte-identical across two runs ({len(a)} bytes)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
