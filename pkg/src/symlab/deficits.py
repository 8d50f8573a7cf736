"""Deficit functionals: delta_f, the reference constant kappa0, delta_tilde and osc."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConvexityViolation, DegenerateDenominator, DivergentTail
from .field import GridField, exterior_rule
from .models import KappaField, Nonlinearity, dual_exponent

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class _Weighted:
    """Samples of kappa and f(u) with box and exterior quadrature weights."""

    def __init__(self, u: GridField, kappa: KappaField, f: Nonlinearity, rule="gregory"):
        n = u.dim
        self.r = dual_exponent(n)
        w = u.weights(rule).ravel()
        k = kappa.on_grid(u).ravel()
        fu = np.asarray(f(np.maximum(u.values, 0.0)), dtype=float).ravel()
        uu = u.values.ravel()
        if u.tail is not None:
            a = u.tail.exponent
            if a * f.p * self.r <= n:
                raise DivergentTail("f(u) tail not in L^(2*)'")
            pts, we = exterior_rule(u.lower, u.upper, u.ray_center())
            tu = u.tail(pts)
            w = np.concatenate([w, we])
            k = np.concatenate([k, kappa(pts)])
            fu = np.concatenate([fu, np.asarray(f(tu), dtype=float)])
            uu = np.concatenate([uu, tu])
        self.w, self.k, self.fu, self.u = w, k, fu, uu
        self.absf_r = np.abs(fu) ** self.r

    def phi(self, t):
        return kernels.compensated_sum(self.w * np.abs(self.k - t) ** self.r * self.absf_r) ** (1.0 / self.r)

    def f_norm(self):
        return kernels.compensated_sum(self.w * self.absf_r) ** (1.0 / self.r)

    def moment(self, with_kappa):
        g = self.fu * self.u
        if with_kappa:
            g = g * self.k
        return kernels.compensated_sum(self.w * g)


def golden_section(phi, a, b, rtol=1e-8, witness=True, slack=1e-12):
    """Minimize a convex function on [a, b]; asserts the convexity witness on every bracket."""
    if b < a:
        a, b = b, a
    width0 = b - a
    if width0 == 0:
        return a, phi(a), 0
    fa, fb = phi(a), phi(b)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    it = 0
    while (b - a) > rtol * max(width0, abs(a), abs(b), 1e-300):
        if witness:
            fm = phi(0.5 * (a + b))
            if fm > max(fa, fb) * (1 + slack) + slack:
                raise ConvexityViolation(f"phi(mid)={fm} above bracket ends on [{a}, {b}]")
        if fc <= fd:
            b, fb = d, fd
            d, fd = c, fc
            c = b - GOLDEN * (b - a)
            fc = phi(c)
        else:
            a, fa = c, fc
            c, fc = d, fd
            d = a + GOLDEN * (b - a)
            fd = phi(d)
        it += 1
    cands = [(fa, a), (fb, b), (fc, c), (fd, d)]
    fbest, tbest = min(cands)
    return tbest, fbest, it


def deficit_df(u: GridField, kappa: KappaField, f: Nonlinearity, rule="gregory", _w=None):
    """(delta_f, kappa1): min over t in [inf kappa, sup kappa] of ||(kappa - t) f(u)||_{(2*)'}."""
    w = _w or _Weighted(u, kappa, f, rule)
    lo, hi = kappa.inf_value, kappa.sup_value
    if hi == lo:
        return float(w.phi(lo)), float(lo)
    t, val, _ = golden_section(w.phi, lo, hi)
    return float(val), float(t)


def kappa0_reference(u: GridField, kappa: KappaField, f: Nonlinearity, rule="gregory", _w=None):
    """int kappa f(u) u / int f(u) u."""
    w = _w or _Weighted(u, kappa, f, rule)
    if np.min(w.fu) < 0:
        raise DegenerateDenominator("f changes sign on the range of u")
    den = w.moment(False)
    if not den > 0:
        raise DegenerateDenominator(f"int f(u) u = {den} <= 0")
    return float(w.moment(True) / den)


def deficit_tilde(u: GridField, kappa: KappaField, f: Nonlinearity, rule="gregory", _w=None):
    w = _w or _Weighted(u, kappa, f, rule)
    return float(w.phi(kappa0_reference(u, kappa, f, rule, w)))


def deficit_osc(kappa: KappaField):
    return float(kappa.osc)


@dataclass
class DeficitReport:
    delta_f: float
    kappa1: float
    kappa0: Optional[float]
    delta_tilde: Optional[float]
    osc: float
    f_norm: float
    error_estimate: Optional[dict] = None

    KEYS = ("delta_f", "kappa1", "kappa0", "delta_tilde", "osc", "f_norm")

    @property
    def bound_f_norm(self):
        return self.f_norm

    def to_dict(self):
        return {k: getattr(self, k) for k in self.KEYS}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=False)

    def ordering_holds(self, tol=1e-9):
        ok = self.delta_f <= self.f_norm * self.osc + tol
        if self.delta_tilde is not None:
            ok = ok and self.delta_f <= self.delta_tilde + tol and self.delta_tilde <= self.f_norm * self.osc + tol
        return bool(ok)


def _compute(u, kappa, f, rule):
    w = _Weighted(u, kappa, f, rule)
    df, k1 = deficit_df(u, kappa, f, rule, w)
    try:
        k0 = kappa0_reference(u, kappa, f, rule, w)
        dt = float(w.phi(k0))
    except DegenerateDenominator:
        k0, dt = None, None
    return DeficitReport(df, k1, k0, dt, deficit_osc(kappa), float(w.f_norm()))


def deficit_report(u: GridField, kappa: KappaField, f: Nonlinearity, rule="gregory",
                   error_estimate=True) -> DeficitReport:
    """All deficits; with ``error_estimate`` the same quantities on every other node are compared."""
    rep = _compute(u, kappa, f, rule)
    if error_estimate and all((s - 1) % 2 == 0 and s >= 11 for s in u.shape):
        sl = tuple(slice(None, None, 2) for _ in range(u.dim))
        coarse = GridField(u.values[sl], u.origin, 2 * u.spacing, u.tail)
        c = _compute(coarse, kappa, f, rule)
        rep.error_estimate = {k: (abs(getattr(rep, k) - getattr(c, k))
                                  if getattr(rep, k) is not None and getattr(c, k) is not None else None)
                              for k in ("delta_f", "delta_tilde", "kappa0", "f_norm")}
    return rep
