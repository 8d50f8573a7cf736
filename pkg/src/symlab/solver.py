"""Solvers for Delta u + kappa(x) f(u) = 0.

Radial problems are shot in the variable s = log r. Perturbed problems on a
cube use damped Newton with MINRES, preconditioned by an algebraic multigrid
solve of the 7-point Laplacian.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from . import kernels
from .errors import NegativeSolution, NewtonDiverged, NoGroundState
from .field import GridField, PowerTail, RadialProfile, dirichlet_energy, lp_norm
from .models import KappaField, Nonlinearity, critical_exponent

log = logging.getLogger(__name__)


# ===================================================================== radial
@dataclass
class ShootConfig:
    a: Optional[float] = None            # shoot from u(0) = a
    a_range: Optional[tuple] = None      # or bracket the threshold inside this range
    n_scan: int = 24
    r0: float = 1e-6
    r_max: float = 1e4
    rtol: float = 1e-10
    atol: float = 1e-14
    mesh_points: int = 4000
    bisect_tol: float = 1e-10


@dataclass
class ShotOutcome:
    a: float
    crossed: bool
    r_zero: Optional[float]
    s: np.ndarray
    u: np.ndarray
    us: np.ndarray


def _shoot(f, kappa_radial, n, a, cfg: ShootConfig, dense=True) -> ShotOutcome:
    k0 = float(np.asarray(kappa_radial(np.array([0.0])))[0])
    fa = float(np.asarray(f(np.array([a])))[0])
    r0 = cfg.r0
    u0 = a - k0 * fa * r0 ** 2 / (2 * n)
    us0 = -k0 * fa * r0 ** 2 / n

    def rhs(s, y):
        r = np.exp(s)
        kr = float(np.asarray(kappa_radial(np.array([r])))[0])
        fu = float(np.asarray(f(np.array([max(y[0], 0.0)])))[0])
        return [y[1], -(n - 2) * y[1] - r * r * kr * fu]

    def hit_zero(s, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    s0, s1 = np.log(r0), np.log(cfg.r_max)
    sol = solve_ivp(rhs, (s0, s1), [u0, us0], method="DOP853", rtol=cfg.rtol, atol=cfg.atol * max(a, 1e-300),
                    events=hit_zero, dense_output=dense)
    crossed = sol.status == 1 and len(sol.t_events[0]) > 0
    rz = float(np.exp(sol.t_events[0][0])) if crossed else None
    if dense:
        s_end = sol.t[-1]
        s = np.linspace(s0, s_end, cfg.mesh_points)
        y = sol.sol(s)
        return ShotOutcome(a, crossed, rz, s, y[0], y[1])
    return ShotOutcome(a, crossed, rz, sol.t, sol.y[0], sol.y[1])


def fit_tail_exponent(r, u, decades=1.0):
    """Slope of -log u against log r over the last ``decades`` of the mesh; returns (a, c)."""
    r = np.asarray(r)
    u = np.asarray(u)
    m = (r >= r[-1] / 10 ** decades) & (u > 0)
    slope, icpt = np.polyfit(np.log(r[m]), np.log(u[m]), 1)
    return float(-slope), float(np.exp(icpt))


def solve_radial(f: Nonlinearity, kappa_radial: Callable, n: int, cfg: Optional[ShootConfig] = None) -> RadialProfile:
    """Radial solution of u'' + (n-1)/r u' + kappa(r) f(u) = 0, u'(0) = 0."""
    cfg = cfg or ShootConfig()
    if cfg.a is not None:
        out = _shoot(f, kappa_radial, n, float(cfg.a), cfg)
        if out.crossed:
            raise NoGroundState(f"solution from a = {cfg.a} reaches zero at r = {out.r_zero:.4g}")
        return _profile(out, n)
    if cfg.a_range is None:
        raise ValueError("need either a or a_range")
    lo, hi = cfg.a_range
    grid = np.geomspace(lo, hi, cfg.n_scan)
    flags = [_shoot(f, kappa_radial, n, a, cfg, dense=False).crossed for a in grid]
    for i in range(len(grid) - 1):
        if flags[i] != flags[i + 1]:
            a_pos, a_neg = (grid[i], grid[i + 1]) if not flags[i] else (grid[i + 1], grid[i])
            break
    else:
        raise NoGroundState("no change between crossing and positive shots in the a-range")
    while abs(a_pos - a_neg) > cfg.bisect_tol * max(a_pos, a_neg):
        mid = 0.5 * (a_pos + a_neg)
        if _shoot(f, kappa_radial, n, mid, cfg, dense=False).crossed:
            a_neg = mid
        else:
            a_pos = mid
    out = _shoot(f, kappa_radial, n, a_pos, cfg)
    return _profile(out, n)


def _profile(out: ShotOutcome, n) -> RadialProfile:
    r = np.exp(out.s)
    a, _ = fit_tail_exponent(r, out.u)
    return RadialProfile(n, r, out.u, a, derivs=out.us / r)


# ============================================================ lattice operators
@dataclass
class SolverConfig:
    half_width: float = 4.0
    h: float = 8.0 / 63
    tol: float = 1e-9
    max_iter: int = 30
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1.0 / 64
    stencil: str = "4th"            # "4th" (symmetric fourth order) or "7pt"
    bc: str = "guess"               # "guess" (trace of the initial guess) or "fitted" (c/|x|^(n-2))
    linear_rtol: float = 1e-10
    linear_maxiter: int = 2000
    continuation_steps: int = 1

    def __post_init__(self):
        if not self.tol > 0 or not self.h > 0:
            raise ValueError("tolerance and spacing must be positive")
        if self.half_width < 4:
            raise ValueError("half_width must be at least 4")
        if self.stencil not in ("4th", "7pt"):
            raise ValueError("stencil must be '4th' or '7pt'")
        if self.bc not in ("guess", "fitted"):
            raise ValueError("bc must be 'guess' or 'fitted'")


def _second_difference(m, h):
    return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="csr") / h ** 2


@lru_cache(maxsize=4)
def _operators(shape, h, stencil):
    """Interior Laplacian matrix (Dirichlet data eliminated) and an AMG preconditioner of -A7."""
    import pyamg

    ms = [s - 2 for s in shape]
    eyes = [sp.identity(m, format="csr") for m in ms]
    d2 = [_second_difference(m, h) for m in ms]

    def along(ax, mat):
        out = None
        for k in range(3):
            piece = mat if k == ax else eyes[k]
            out = piece if out is None else sp.kron(out, piece, format="csr")
        return out

    a7 = (along(0, d2[0]) + along(1, d2[1]) + along(2, d2[2])).tocsr()
    if stencil == "7pt":
        a = a7
    else:
        d4 = [(d - (h ** 2 / 12.0) * (d @ d)).tocsr() for d in d2]
        a = (along(0, d4[0]) + along(1, d4[1]) + along(2, d4[2])).tocsr()
    ml = pyamg.smoothed_aggregation_solver(-a7, symmetry="symmetric")
    return a, ml.aspreconditioner()


def _lap(u, h, stencil):
    return kernels.lap4(u, h) if stencil == "4th" else kernels.lap7(u, h)


def residual_field(u: np.ndarray, kappa_vals: np.ndarray, f: Nonlinearity, h: float, stencil="4th"):
    r = _lap(u, h, stencil) + kappa_vals * f(np.maximum(u, 0.0))
    r[0, :, :] = r[-1, :, :] = 0
    r[:, 0, :] = r[:, -1, :] = 0
    r[:, :, 0] = r[:, :, -1] = 0
    return r


def residual(u: GridField, kappa: KappaField, f: Nonlinearity, stencil="4th"):
    """(max, l2) of the discrete residual at interior nodes; l2 weighted by the cell volume."""
    r = residual_field(u.values, kappa.on_grid(u), f, u.spacing, stencil)
    inner = r[1:-1, 1:-1, 1:-1]
    return float(np.max(np.abs(inner))), float(np.sqrt(kernels.compensated_sum(inner ** 2) * u.spacing ** 3))


# ============================================================= perturbed solve
@dataclass
class SolveResult:
    field: GridField
    residual_max: float
    residual_l2: float
    iterations: int
    mass: float
    energy: float
    weak_pairing: float
    history: List[float] = dc_field(default_factory=list)
    converged: bool = True
    status: str = "ok"
    min_value: float = 0.0

    @property
    def identity_error(self):
        """|int |grad u|^2 - int kappa f(u) u| / int |grad u|^2."""
        return abs(self.energy - self.weak_pairing) / self.energy

    def summary(self):
        return {"residual_max": self.residual_max, "residual_l2": self.residual_l2, "iterations": self.iterations,
                "mass": self.mass, "energy": self.energy, "weak_pairing": self.weak_pairing,
                "identity_error": self.identity_error, "converged": self.converged, "status": self.status}


def fitted_boundary_tail(guess: GridField, center=None):
    """c / |x - center|^(n-2) fitted by least squares to the outermost shell of the guess."""
    n = guess.dim
    c0 = np.zeros(n) if center is None else np.asarray(center, float)
    m = guess.boundary_mask(0)
    pts = np.stack([g[m] for g in guess.mesh()], axis=1)
    g = np.linalg.norm(pts - c0, axis=1) ** (2 - n)
    c = float(np.dot(g, guess.values[m]) / np.dot(g, g))
    return PowerTail(c, n - 2, tuple(c0))


def weak_pairing(u: GridField, kappa: KappaField, f: Nonlinearity, rule="gregory"):
    """int kappa f(u) u over R^n, with the exterior from the tail."""
    from .field import exterior_rule
    box = u.box_integral(kappa.on_grid(u) * f(np.maximum(u.values, 0.0)) * u.values, "all", rule)
    if u.tail is None:
        return box
    pts, w = exterior_rule(u.lower, u.upper, u.ray_center())
    tv = u.tail(pts)
    return box + kernels.compensated_sum(w * kappa(pts) * f(tv) * tv)


def solve_perturbed(kappa: KappaField, f: Nonlinearity, initial: GridField, config: Optional[SolverConfig] = None,
                    boundary: Optional[GridField] = None) -> SolveResult:
    """Damped Newton for Delta_h u + kappa f(u) = 0 with decay-matched Dirichlet data.

    The Dirichlet values come from ``boundary`` (default: ``initial``). With
    ``bc="fitted"`` they are replaced by c/|x|^(n-2) fitted on the outer shell.
    """
    cfg = config or SolverConfig(h=initial.spacing)
    if initial.dim != 3:
        raise ValueError("grid solver implemented for n = 3")
    if np.min(initial.values) <= 0:
        raise ValueError("initial guess must be positive")
    h = initial.spacing
    base = boundary if boundary is not None else initial
    u = np.array(initial.values, dtype=np.float64)
    bmask = initial.boundary_mask(0)
    tail = base.tail
    if cfg.bc == "fitted":
        tail = fitted_boundary_tail(base)
        pts = np.stack([g[bmask] for g in initial.mesh()], axis=1)
        u[bmask] = tail(pts)
    else:
        u[bmask] = base.values[bmask]
    kv = kappa.on_grid(initial)
    a, prec = _operators(tuple(initial.shape), float(h), cfg.stencil)
    sl = (slice(1, -1),) * 3

    def res(v):
        return residual_field(v, kv, f, h, cfg.stencil)

    def nrm(r):
        return float(np.sqrt(np.sum(r[sl] ** 2)))

    r = res(u)
    hist = [float(np.max(np.abs(r[sl])))]
    it = 0
    stalled = 0
    status = "ok"
    while hist[-1] > cfg.tol:
        if it >= cfg.max_iter:
            status = "max_iter"
            break
        it += 1
        jd = (kv * f.derivative(np.maximum(u, 0.0)))[sl].ravel()
        jac = a + sp.diags(jd)
        d, info = spla.minres(-jac, r[sl].ravel(), M=prec, rtol=cfg.linear_rtol, maxiter=cfg.linear_maxiter)
        d = d.reshape(r[sl].shape)
        r0 = nrm(r)
        step = 1.0
        while True:
            trial = u.copy()
            trial[sl] += step * d
            rt = res(trial)
            if nrm(rt) <= (1.0 - cfg.armijo * step) * r0 or step <= cfg.min_step:
                break
            step *= cfg.backtrack
        if nrm(rt) >= r0:
            stalled += 1
        else:
            stalled = 0
        u, r = trial, rt
        hist.append(float(np.max(np.abs(r[sl]))))
        log.debug("newton %d step %.3g residual %.3e minres %d", it, step, hist[-1], info)
        if stalled >= 5 or not np.isfinite(hist[-1]):
            status = "diverged"
            break
    converged = hist[-1] <= cfg.tol
    if status == "diverged" or (not converged and status == "max_iter" and hist[-1] >= hist[0]):
        raise NewtonDiverged(f"residual {hist[-1]:.3e} after {it} iterations")
    umin = float(np.min(u))
    if converged and umin < -cfg.tol:
        raise NegativeSolution(f"min u = {umin:.3e}")
    fld = GridField(u, initial.origin, h, tail)
    rmax, rl2 = residual(fld, kappa, f, cfg.stencil)
    n = fld.dim
    mass = lp_norm(fld, critical_exponent(n)) ** critical_exponent(n)
    energy = dirichlet_energy(fld)
    pair = weak_pairing(fld, kappa, f)
    return SolveResult(fld, rmax, rl2, it, float(mass), float(energy), float(pair), hist, converged,
                       status if not converged else "ok", umin)


def continuation(kappa_of: Callable[[float], KappaField], eps: float, f: Nonlinearity, initial: GridField,
                 config: Optional[SolverConfig] = None, steps: Optional[int] = None) -> List[SolveResult]:
    """Solve along eps_k = eps k / steps, each step warm-started from the previous one.

    The Dirichlet data stay those of ``initial`` throughout.
    """
    cfg = config or SolverConfig(h=initial.spacing)
    steps = steps or cfg.continuation_steps
    out = []
    guess = initial
    for k in range(1, steps + 1):
        res = solve_perturbed(kappa_of(eps * k / steps), f, guess, cfg, boundary=initial)
        out.append(res)
        guess = res.field
    return out


def mass_lower_bound(f0: float, kappa_sup: float, S: float, n: int) -> float:
    """(S^2 / (f0 sup kappa))^(n/2)."""
    if f0 <= 0 or kappa_sup <= 0 or S <= 0:
        raise ValueError("f0, kappa_sup and S must be positive")
    return (S ** 2 / (f0 * kappa_sup)) ** (n / 2)


def mass_certificate(result: SolveResult, f0: float, kappa_sup: float, S: float, margin: float = 0.05):
    bound = mass_lower_bound(f0, kappa_sup, S, result.field.dim)
    return result.mass >= bound * (1 - margin), bound
