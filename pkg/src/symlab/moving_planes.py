"""Moving-planes engine: reflection excess, critical planes, approximate center, asymmetry metrics."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field as dc_field
from typing import List, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from . import kernels
from .errors import NeverSymmetric
from .field import GridField, HalfSpace, fibonacci_sphere, gradient, rotate, sphere_oscillation
from .models import Bubble, BubbleParams, critical_exponent


# -------------------------------------------------------------------- excess
def reflect_excess(u: GridField, plane: HalfSpace, exclude: Optional[tuple] = None, order: int = 1,
                   rule: str = "gregory"):
    """sup and L^{2*} norm of (u - u_{omega,lambda})_+ over the grid nodes in Sigma_{omega,lambda}.

    ``exclude = (center, radius)`` removes a ball (used around reflected
    singularities of Kelvin images). The norm is taken over the box only.
    """
    pts = u.points()
    inside = plane.contains(pts)
    if exclude is not None:
        c, rad = exclude
        inside &= np.linalg.norm(pts - np.asarray(c), axis=1) >= rad
    if not np.any(inside):
        return 0.0, 0.0
    q = plane.reflect_points(pts[inside])
    if exclude is not None:
        # points whose reflection falls in the excluded ball are dropped as well
        keep = np.linalg.norm(q - np.asarray(exclude[0]), axis=1) >= exclude[1]
        idx = np.flatnonzero(inside)[keep]
        q = q[keep]
    else:
        idx = np.flatnonzero(inside)
    ex = np.maximum(u.values.ravel()[idx] - u.eval(q, order), 0.0)
    if ex.size == 0:
        return 0.0, 0.0
    ts = critical_exponent(u.dim)
    w = u.weights(rule).ravel()[idx]
    l2s = kernels.compensated_sum(w * ex ** ts) ** (1.0 / ts)
    return float(ex.max()), float(l2s)


@dataclass
class ScanConfig:
    lam_min: Optional[float] = None
    lam_max: Optional[float] = None
    step: Optional[float] = None          # coarse step, default 2h
    refine: Optional[float] = None        # bisection resolution, default h/2
    order: int = 1
    exclude: Optional[tuple] = None


@dataclass
class PlaneScanResult:
    omega: tuple
    lambda_grid: list
    excess_sup: list
    excess_l2star: list
    lambda_star: float
    tolerance: float
    monotone: bool = True

    def to_dict(self):
        d = asdict(self)
        d["omega"] = list(self.omega)
        return d

    def to_json(self):
        return json.dumps(self.to_dict())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["lambda", "sup_excess", "l2star_excess"])
            for lam, s, l in zip(self.lambda_grid, self.excess_sup, self.excess_l2star):
                wr.writerow([repr(float(lam)), repr(float(s)), repr(float(l))])


def mass_radius(u: GridField, fraction=0.99, center=None):
    """Radius about ``center`` (default: location of the max) containing ``fraction`` of the box mass."""
    pts = u.points()
    c = pts[np.argmax(u.values)] if center is None else np.asarray(center, float)
    r = np.linalg.norm(pts - c, axis=1)
    dens = (np.abs(u.values.ravel()) ** critical_exponent(u.dim)) * u.weights().ravel()
    order = np.argsort(r, kind="stable")
    cum = np.cumsum(dens[order])
    k = int(np.searchsorted(cum, fraction * cum[-1]))
    return float(r[order][min(k, len(r) - 1)]), c


def critical_plane(u: GridField, omega, tolerance: float, scan: Optional[ScanConfig] = None) -> PlaneScanResult:
    """lambda_star = inf of the up-closed set of lambda whose excess stays below tolerance for all mu >= lambda."""
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    scan = scan or ScanConfig()
    w = np.asarray(omega, dtype=float)
    w = w / np.linalg.norm(w)
    h = u.spacing
    step = scan.step or 2 * h
    refine = scan.refine or h / 2
    if scan.lam_min is None or scan.lam_max is None:
        lam0, c = mass_radius(u)
        lo = float(w @ c - lam0) if scan.lam_min is None else scan.lam_min
        hi = float(w @ c + lam0) if scan.lam_max is None else scan.lam_max
    else:
        lo, hi = scan.lam_min, scan.lam_max

    def sup_at(lam):
        return reflect_excess(u, HalfSpace(tuple(w), float(lam)), scan.exclude, scan.order)

    grid, sups, l2s = [], [], []
    lam = hi
    first_fail = None
    monotone = True
    while lam >= lo - 1e-12:
        s, l = sup_at(lam)
        grid.append(float(lam))
        sups.append(s)
        l2s.append(l)
        if s > tolerance and first_fail is None:
            first_fail = len(grid) - 1
        elif s <= tolerance and first_fail is not None:
            monotone = False
        lam -= step
    if first_fail == 0:
        raise NeverSymmetric(f"excess {sups[0]:.3e} above tolerance {tolerance:.3e} at lambda_max")
    if first_fail is None:
        lam_star = grid[-1]
    else:
        a, b = grid[first_fail], grid[first_fail - 1]   # fail, pass
        while b - a > refine:
            mid = 0.5 * (a + b)
            if sup_at(mid)[0] > tolerance:
                a = mid
            else:
                b = mid
        lam_star = b
    order = np.argsort(grid)
    return PlaneScanResult(tuple(w.tolist()), [grid[i] for i in order], [sups[i] for i in order],
                           [l2s[i] for i in order], float(lam_star), float(tolerance), monotone)


# -------------------------------------------------------------------- floors
def reference_bubble(u: GridField, center=None) -> GridField:
    """Exactly radial bubble with u's peak, sampled on u's grid about ``center`` (default: argmax)."""
    n = u.dim
    pts = u.points()
    c = pts[np.argmax(u.values)] if center is None else np.asarray(center, float)
    peak = float(np.max(u.values))
    lam = peak ** (2.0 / (n - 2)) / np.sqrt(n * (n - 2))
    return Bubble(BubbleParams(tuple(c), lam, n)).sample(u.shape, u.origin, u.spacing)


def reflect_floor(u: GridField, order: int = 1, directions: int = 6) -> float:
    """Sup reflection excess of a radial reference across oblique planes through its center."""
    ref = reference_bubble(u)
    c = ref.tail.center
    best = 0.0
    for w in fibonacci_sphere(directions):
        s, _ = reflect_excess(ref, HalfSpace.normalized(w, float(np.dot(w, c))), order=order)
        best = max(best, s)
    return best


def default_tolerance(u: GridField, delta_f: float = 0.0, S: Optional[float] = None, order: int = 1,
                      floor_factor: float = 10.0):
    """max(4 S^-2 delta_f, floor_factor * reflect floor)."""
    if S is None:
        from .models import sobolev_constant
        S = sobolev_constant(u.dim)
    fl = reflect_floor(u, order)
    return max(4.0 * delta_f / S ** 2, floor_factor * fl), fl


# -------------------------------------------------------------------- center
@dataclass
class CenterResult:
    center: np.ndarray
    plus: List[PlaneScanResult]
    minus: List[PlaneScanResult]
    antisymmetry: np.ndarray            # |lambda*(-e_k) + lambda*(e_k)|
    consistent: bool
    estimator: str

    def to_dict(self):
        return {"center": self.center.tolist(), "lambda_plus": [p.lambda_star for p in self.plus],
                "lambda_minus": [p.lambda_star for p in self.minus],
                "antisymmetry": self.antisymmetry.tolist(), "consistent": self.consistent,
                "estimator": self.estimator}


def approximate_center(u: GridField, tolerance: float, scan: Optional[ScanConfig] = None,
                       estimator: str = "symmetric") -> CenterResult:
    """Center from the axis critical planes.

    ``estimator="axes"`` returns (lambda*(e_1), ..., lambda*(e_n)); ``"symmetric"``
    returns ((lambda*(e_k) - lambda*(-e_k))/2), which cancels the offset that the
    tolerance induces in each one-sided scan.
    """
    n = u.dim
    plus, minus = [], []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        plus.append(critical_plane(u, e, tolerance, scan))
        minus.append(critical_plane(u, -e, tolerance, scan))
    lp = np.array([p.lambda_star for p in plus])
    lm = np.array([m.lambda_star for m in minus])
    anti = np.abs(lp + lm)
    c = lp if estimator == "axes" else 0.5 * (lp - lm)
    return CenterResult(c, plus, minus, anti, bool(np.all(anti <= 4 * u.spacing)), estimator)


# ------------------------------------------------------------------- metrics
def rotation_lattice(count: int = 16, seed_axes: Optional[int] = None):
    """Axis-angle lattice: Fibonacci axes times evenly spread angles in (0, pi]."""
    if count < 1:
        raise ValueError("need at least one rotation")
    n_ax = max(1, count // 2)
    axes = fibonacci_sphere(max(n_ax, 1)) if n_ax >= 1 else np.array([[0, 0, 1.0]])
    angles = [np.pi / 2, np.pi] if count >= 2 else [np.pi / 2]
    mats = []
    for a in axes:
        for t in angles:
            mats.append(Rotation.from_rotvec(a * t).as_matrix())
            if len(mats) == count:
                return mats
    return mats


@dataclass
class MetricsConfig:
    radii: int = 30
    sphere_samples: int = 512
    rotations: int = 16
    order: int = 1
    margin_cells: float = 2.0


@dataclass
class SymmetryReport:
    center: list
    radii: list
    sphere_oscillation_profile: list
    linf_asymmetry: float
    d12_asymmetry: float
    radial_derivative_max: float
    center_box_check: bool
    rotation_count: int
    sphere_samples: int

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def metric_radius(u: GridField, center, margin_cells=2.0):
    c = np.asarray(center, float)
    return float(min(np.min(c - u.lower), np.min(u.upper - c)) - margin_cells * u.spacing)


def asymmetry_metrics(u: GridField, center, cfg: Optional[MetricsConfig] = None,
                      lam0: Optional[float] = None) -> SymmetryReport:
    cfg = cfg or MetricsConfig()
    c = np.asarray(center, dtype=float)
    h = u.spacing
    rmax = metric_radius(u, c, cfg.margin_cells)
    if rmax <= 2 * h:
        raise ValueError("center too close to the box boundary")
    radii = np.linspace(2 * h, rmax, cfg.radii)
    prof = []
    for r in radii:
        mx, mn = sphere_oscillation(u, c, r, cfg.sphere_samples, cfg.order)
        prof.append(mx - mn)
    # D^{1,2} distance to rotated copies, box only
    d12 = 0.0
    rots = rotation_lattice(cfg.rotations)
    wts = u.weights()
    for R in rots:
        ur = rotate(u, c, R, cfg.order)
        g = gradient(u, 4, u.values - ur.values)
        d12 = max(d12, float(np.sqrt(kernels.compensated_sum(wts * np.sum(g ** 2, axis=0)))))
    # sup of the radial derivative on the metric ball
    g = gradient(u, 4)
    pts = u.points()
    dvec = pts - c
    r = np.linalg.norm(dvec, axis=1)
    m = (r >= 2 * h) & (r <= rmax)
    gr = np.einsum("ij,ij->i", np.stack([gg.ravel() for gg in g], axis=1)[m], dvec[m] / r[m, None])
    if lam0 is None:
        lam0, _ = mass_radius(u)
    return SymmetryReport(c.tolist(), radii.tolist(), [float(p) for p in prof], float(max(prof)), d12,
                          float(np.max(gr)), bool(np.all(np.abs(c) <= lam0)), len(rots), cfg.sphere_samples)


def gradient_error_bound(u: GridField, center=None) -> float:
    """Max |grad_h U - grad U| on the grid for the radial reference bubble: the gradient floor."""
    ref = reference_bubble(u, center)
    b = Bubble(BubbleParams(ref.tail.center, 1.0 / np.sqrt(ref.tail.core), u.dim))
    g = gradient(ref, 4)
    pts = ref.points()
    d = pts - np.asarray(ref.tail.center)
    r = np.linalg.norm(d, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = (b.radial_derivative(r) / np.where(r > 0, r, 1.0))[:, None] * d
    num = np.stack([gg.ravel() for gg in g], axis=1)
    return float(np.max(np.abs(num - exact)))


def floors(u: GridField, cfg: Optional[MetricsConfig] = None, center=None) -> dict:
    """Metrics of the exactly radial reference on the same grid: the measured discretization floors."""
    ref = reference_bubble(u, center)
    rep = asymmetry_metrics(ref, ref.tail.center, cfg)
    return {"linf": rep.linf_asymmetry, "d12": rep.d12_asymmetry, "radial_derivative": gradient_error_bound(u, center),
            "reflect": reflect_floor(u, (cfg or MetricsConfig()).order)}
