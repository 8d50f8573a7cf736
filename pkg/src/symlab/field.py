"""Scalar fields on uniform Cartesian grids, with power-law tails outside the box.

Box integrals use node quadrature (Gregory end corrections by default). The
exterior of the box is integrated along rays from a center inside the box,
which turns any decaying tail into a one-dimensional integral per face point.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import ndimage

from . import kernels
from .errors import DivergentTail, FormatError, OutsideDomain


# --------------------------------------------------------------------- tails
@dataclass(frozen=True)
class PowerTail:
    """Far field ``C0 * (|x - center|^2 + core)^(-exponent/2)``.

    With ``core = 0`` this is the pure power law ``C0 |x - c|^-a``; a positive
    core reproduces the exact far field of a bubble family member.
    """

    coefficient: float
    exponent: float
    center: tuple = (0.0, 0.0, 0.0)
    core: float = 0.0

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("tail exponent must be positive")
        if self.core < 0:
            raise ValueError("tail core must be non-negative")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def _r2(self, pts):
        pts = np.atleast_2d(pts)
        return np.sum((pts - np.asarray(self.center)) ** 2, axis=1) + self.core

    def __call__(self, pts):
        return self.coefficient * self._r2(pts) ** (-0.5 * self.exponent)

    def gradient(self, pts):
        pts = np.atleast_2d(pts)
        q = self._r2(pts)
        fac = -self.exponent * self.coefficient * q ** (-0.5 * self.exponent - 1.0)
        return fac[:, None] * (pts - np.asarray(self.center))

    def to_dict(self):
        return {"coefficient": self.coefficient, "exponent": self.exponent,
                "center": list(self.center), "core": self.core}


@dataclass(frozen=True)
class DecayEnvelope:
    """Two-sided bound ``defi^s/(C0 |x|^(n-2-mu)) <= u <= C0/(defi^s |x|^nu)`` for ``|x| >= R0``."""

    C0: float
    lower_exponent: float
    upper_exponent: float
    sigma: float
    R0: float
    deficit_value: float
    dim: int = 3

    def __post_init__(self):
        n = self.dim
        mu = n - 2 - self.lower_exponent
        if self.C0 < 1 or self.R0 < 1 or self.sigma < 0:
            raise ValueError("envelope needs C0 >= 1, R0 >= 1, sigma >= 0")
        for name, val in (("mu", mu), ("nu", self.upper_exponent)):
            if not (0 < val <= (n - 2) / 2 + 1e-12):
                raise ValueError(f"{name}={val} outside (0, (n-2)/2]")
        if not (0 < self.deficit_value):
            raise ValueError("deficit_value must be positive")

    @property
    def mu(self):
        return self.dim - 2 - self.lower_exponent

    @property
    def nu(self):
        return self.upper_exponent

    def lower(self, r):
        r = np.asarray(r, dtype=float)
        return self.deficit_value ** self.sigma / (self.C0 * r ** self.lower_exponent)

    def upper(self, r):
        r = np.asarray(r, dtype=float)
        return self.C0 / (self.deficit_value ** self.sigma * r ** self.upper_exponent)

    def holds(self, r, values):
        r = np.asarray(r)
        m = r >= self.R0
        v = np.asarray(values)[m]
        return bool(np.all(self.lower(r[m]) <= v) and np.all(v <= self.upper(r[m])))


# --------------------------------------------------------------------- radial
@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Radial function on an increasing mesh, extended by ``c r^-a`` past the last radius."""

    dim: int
    radii: np.ndarray
    values: np.ndarray
    tail_exponent: float
    tail_coefficient: float = None
    derivs: Optional[np.ndarray] = None

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise ValueError("radii and values must be matching 1-D arrays")
        if np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ValueError("radii must be positive and strictly increasing")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)
        if self.tail_coefficient is None:
            # continuity at the last mesh point
            object.__setattr__(self, "tail_coefficient", float(v[-1] * r[-1] ** self.tail_exponent))

    @cached_property
    def _spline(self):
        from scipy.interpolate import CubicHermiteSpline, CubicSpline
        s = np.log(self.radii)
        if self.derivs is not None:
            return CubicHermiteSpline(s, self.values, np.asarray(self.derivs) * self.radii)
        return CubicSpline(s, self.values)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        lo = r < self.radii[0]
        hi = r > self.radii[-1]
        mid = ~(lo | hi)
        out[lo] = self.values[0]
        out[mid] = self._spline(np.log(r[mid]))
        out[hi] = self.tail_coefficient * r[hi] ** (-self.tail_exponent)
        return out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        lo = r < self.radii[0]
        hi = r > self.radii[-1]
        mid = ~(lo | hi)
        out[lo] = 0.0
        out[mid] = self._spline(np.log(r[mid]), 1) / r[mid]
        out[hi] = -self.tail_exponent * self.tail_coefficient * r[hi] ** (-self.tail_exponent - 1)
        return out

    def sample(self, shape, origin, spacing, center=None):
        """Sample on a grid about ``center`` and return a GridField with a matching tail."""
        center = np.zeros(len(shape)) if center is None else np.asarray(center, float)
        axes = [origin[d] + spacing * np.arange(shape[d]) for d in range(len(shape))]
        mesh = np.meshgrid(*axes, indexing="ij")
        r = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, center)))
        vals = self(r.ravel()).reshape(shape)
        return GridField(vals, tuple(origin), spacing, ProfileTail(self, tuple(float(c) for c in center)))


@dataclass(frozen=True, eq=False)
class ProfileTail:
    """Far field given by a radial profile about ``center``; its power law is ``profile``'s tail."""

    profile: RadialProfile
    center: tuple
    core = 0.0

    @property
    def coefficient(self):
        return self.profile.tail_coefficient

    @property
    def exponent(self):
        return self.profile.tail_exponent

    def __call__(self, pts):
        return self.profile(np.linalg.norm(np.atleast_2d(pts) - np.asarray(self.center), axis=1))

    def gradient(self, pts):
        d = np.atleast_2d(pts) - np.asarray(self.center)
        r = np.linalg.norm(d, axis=1)
        safe = np.where(r > 0, r, 1.0)
        return (self.profile.derivative(r) / safe)[:, None] * d

    def to_dict(self):
        return {"coefficient": self.coefficient, "exponent": self.exponent, "center": list(self.center),
                "core": 0.0, "profile": True}


# ---------------------------------------------------------------- geometry
@dataclass(frozen=True)
class HalfSpace:
    """``{x : omega . x > lam}`` with reflection ``x + 2 (lam - omega.x) omega``."""

    omega: tuple
    lam: float

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise ValueError("omega must be a unit vector")
        object.__setattr__(self, "omega", tuple(w.tolist()))

    @classmethod
    def normalized(cls, omega, lam):
        w = np.asarray(omega, dtype=float)
        return cls(tuple(w / np.linalg.norm(w)), float(lam))

    def contains(self, pts):
        return np.atleast_2d(pts) @ np.asarray(self.omega) > self.lam

    def reflect_points(self, pts):
        pts = np.atleast_2d(pts)
        w = np.asarray(self.omega)
        return pts + 2.0 * (self.lam - pts @ w)[:, None] * w


@dataclass(frozen=True)
class Annulus:
    center: tuple
    r_inner: float
    r_outer: float = np.inf

    def contains(self, pts):
        r = np.linalg.norm(np.atleast_2d(pts) - np.asarray(self.center), axis=1)
        return (r >= self.r_inner) & (r <= self.r_outer)


Region = Union[str, HalfSpace, Annulus, None]


def _region_mask(region, pts, h=None):
    """Node weights of the region indicator, ramped linearly across one cell of the boundary."""
    if region is None or (isinstance(region, str) and region == "all"):
        return np.ones(len(pts))
    if h is None:
        return region.contains(pts).astype(float)
    pts = np.atleast_2d(pts)
    if isinstance(region, HalfSpace):
        s = pts @ np.asarray(region.omega) - region.lam
        return np.clip(s / h + 0.5, 0.0, 1.0)
    if isinstance(region, Annulus):
        r = np.linalg.norm(pts - np.asarray(region.center), axis=1)
        w = np.clip((r - region.r_inner) / h + 0.5, 0.0, 1.0)
        if np.isfinite(region.r_outer):
            w *= np.clip((region.r_outer - r) / h + 0.5, 0.0, 1.0)
        return w
    return region.contains(pts).astype(float)


# ----------------------------------------------------------------- quadrature
def node_weights(n, rule="gregory"):
    """1-D node weights (in units of h) over the node box."""
    w = np.ones(n)
    if rule == "gregory" and n >= 6:
        w[:3] = [3 / 8, 7 / 6, 23 / 24]
        w[-3:] = [23 / 24, 7 / 6, 3 / 8]
    elif rule in ("trapezoid", "gregory"):
        w[0] = w[-1] = 0.5
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return w


def _tensor_weights(shape, rule):
    ws = [node_weights(k, rule) for k in shape]
    out = ws[0]
    for w in ws[1:]:
        out = np.multiply.outer(out, w)
    return out


_GL_CACHE: dict = {}


def _gl(nq):
    if nq not in _GL_CACHE:
        _GL_CACHE[nq] = leggauss(nq)
    return _GL_CACHE[nq]


def exterior_nodes(lo, hi, center, nq_face=48, nq_ray=64):
    """Points and weights for integrating over the complement of the box ``[lo, hi]``.

    Each point of the boundary ``x_b`` spawns the ray ``c + t (x_b - c)`` for
    ``t >= 1``; the volume element is ``t^(n-1) ((x_b - c).nu) dA dt``. The ray
    variable is mapped by ``tau = 1/t`` onto (0, 1].

    Returns ``(ray_base, ray_dir_dot_normal_weight)`` arrays ready for
    :func:`exterior_integral`.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    c = np.asarray(center, float)
    dim = len(lo)
    if np.any(c <= lo) or np.any(c >= hi):
        raise ValueError("ray center must be strictly inside the box")
    g, w = _gl(nq_face)
    bases, wts = [], []
    for ax in range(dim):
        others = [a for a in range(dim) if a != ax]
        nodes = [0.5 * (hi[o] - lo[o]) * g + 0.5 * (hi[o] + lo[o]) for o in others]
        ws = [0.5 * (hi[o] - lo[o]) * w for o in others]
        grid = np.meshgrid(*nodes, indexing="ij")
        wt = ws[0]
        for extra in ws[1:]:
            wt = np.multiply.outer(wt, extra)
        for side, sgn in ((lo[ax], -1.0), (hi[ax], 1.0)):
            pts = np.empty((grid[0].size, dim))
            pts[:, ax] = side
            for o, gg in zip(others, grid):
                pts[:, o] = gg.ravel()
            # (x_b - c) . nu, nu = sgn * e_ax
            dn = sgn * (side - c[ax])
            bases.append(pts)
            wts.append(wt.ravel() * dn)
    return np.concatenate(bases), np.concatenate(wts)


def exterior_rule(lo, hi, center, region: Region = None, nq_face=48, nq_ray=64):
    """Quadrature points and weights on ``R^n`` minus the box, optionally inside a region.

    The ray variable is ``t = 1/tau`` with Gauss-Legendre nodes in ``tau`` for
    unbounded rays, and plain Gauss-Legendre in ``t`` for bounded ones.
    """
    base, wb = exterior_nodes(lo, hi, center, nq_face, nq_ray)
    c = np.asarray(center, float)
    dim = base.shape[1]
    d = base - c
    gr, wr = _gl(nq_ray)
    t0 = np.ones(len(base))
    t1 = np.full(len(base), np.inf)
    if isinstance(region, HalfSpace):
        om = np.asarray(region.omega)
        od = d @ om
        rhs = region.lam - c @ om
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = rhs / od
        pos = od > 0
        neg = od < 0
        zer = ~(pos | neg)
        t0 = np.where(pos, np.maximum(t0, tc), t0)
        t1 = np.where(neg, np.minimum(t1, tc), t1)
        # rays parallel to the plane are either fully in or fully out
        t1 = np.where(zer & (0 <= rhs), 0.0, t1)
    elif isinstance(region, Annulus):
        ac = np.asarray(region.center, float)
        if not np.allclose(ac, c):
            raise ValueError("annulus exterior integrals need the ray center at the annulus center")
        rb = np.linalg.norm(d, axis=1)
        t0 = np.maximum(t0, region.r_inner / rb)
        t1 = np.minimum(t1, region.r_outer / rb)
    pts_all, w_all = [np.empty((0, dim))], [np.empty(0)]
    inf_rays = np.isinf(t1) & (t1 > t0)
    fin_rays = np.isfinite(t1) & (t1 > t0)
    if np.any(inf_rays):
        tmax = 1.0 / t0[inf_rays]
        tau = 0.5 * (gr[None, :] + 1.0) * tmax[:, None]
        wt = 0.5 * wr[None, :] * tmax[:, None]
        t = 1.0 / tau
        pts_all.append((c + t[..., None] * d[inf_rays][:, None, :]).reshape(-1, dim))
        w_all.append((wb[inf_rays][:, None] * wt * t ** (dim + 1)).ravel())
    if np.any(fin_rays):
        a, b = t0[fin_rays], t1[fin_rays]
        t = 0.5 * (b - a)[:, None] * (gr[None, :] + 1.0) + a[:, None]
        wt = 0.5 * (b - a)[:, None] * wr[None, :]
        pts_all.append((c + t[..., None] * d[fin_rays][:, None, :]).reshape(-1, dim))
        w_all.append((wb[fin_rays][:, None] * wt * t ** (dim - 1)).ravel())
    return np.concatenate(pts_all), np.concatenate(w_all)


def exterior_integral(func: Callable, lo, hi, center, region: Region = None, nq_face=48, nq_ray=64):
    """Integral of ``func`` over ``R^n`` minus the box, optionally restricted to a region.

    ``func`` maps an ``(m, n)`` array of points to ``m`` values and must decay
    fast enough for the integral to converge.
    """
    pts, w = exterior_rule(lo, hi, center, region, nq_face, nq_ray)
    if len(w) == 0:
        return 0.0
    return float(kernels.compensated_sum(w * np.asarray(func(pts))))


# ----------------------------------------------------------------- the field
SPLINE_PAD = 8


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples on a uniform grid; ``values[i, j, k]`` sits at ``origin + h (i, j, k)``."""

    values: np.ndarray
    origin: tuple
    spacing: float
    tail: Optional[PowerTail] = None
    tail_tolerance: Optional[float] = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if v.ndim < 1 or len(self.origin) != v.ndim:
            raise ValueError("origin must have one entry per axis")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.tail is not None and self.tail_tolerance is not None:
            mis = self.tail_mismatch()
            if mis > self.tail_tolerance:
                raise ValueError(f"tail mismatch {mis:.3e} exceeds tolerance {self.tail_tolerance:.3e}")

    # geometry
    @property
    def dim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def h(self):
        return self.spacing

    @property
    def lower(self):
        return np.asarray(self.origin)

    @property
    def upper(self):
        return self.lower + self.spacing * (np.asarray(self.shape) - 1)

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def axes(self):
        return [self.origin[d] + self.spacing * np.arange(self.shape[d]) for d in range(self.dim)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def inside(self, pts, pad=1e-9):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lower - pad * self.spacing) & (pts <= self.upper + pad * self.spacing), axis=1)

    def with_values(self, values, tail="keep"):
        return GridField(values, self.origin, self.spacing, self.tail if tail == "keep" else tail, None, dict(self.meta))

    def crop(self, k=1):
        """Drop ``k`` layers on every face."""
        sl = tuple(slice(k, -k) for _ in range(self.dim))
        return GridField(self.values[sl], tuple(np.asarray(self.origin) + k * self.spacing), self.spacing,
                         self.tail, None, dict(self.meta))

    def boundary_mask(self, depth=0):
        idx = [np.minimum(np.arange(s), s - 1 - np.arange(s)) for s in self.shape]
        dep = idx[0]
        for i in idx[1:]:
            dep = np.minimum.outer(dep, i)
        return dep <= depth

    def tail_mismatch(self):
        """Max relative gap between boundary samples and the tail."""
        if self.tail is None:
            return 0.0
        m = self.boundary_mask(0)
        pts = np.stack([g[m] for g in self.mesh()], axis=1)
        scale = max(np.max(np.abs(self.values)), 1e-300)
        return float(np.max(np.abs(self.values[m] - self.tail(pts))) / scale)

    # evaluation
    @cached_property
    def _spline_coeffs(self):
        # pad so the prefilter sees a smooth continuation: tail values when known,
        # otherwise odd reflection (exact for affine data)
        if self.tail is not None:
            pad = SPLINE_PAD
            lo = np.asarray(self.origin) - pad * self.spacing
            axes = [lo[d] + self.spacing * np.arange(s + 2 * pad) for d, s in enumerate(self.shape)]
            mesh = np.meshgrid(*axes, indexing="ij")
            vals = self.tail(np.stack([m.ravel() for m in mesh], axis=1)).reshape(mesh[0].shape)
            vals[(slice(pad, -pad),) * self.dim] = self.values
        else:
            pad = 2 * SPLINE_PAD
            vals = np.pad(self.values, pad, mode="reflect", reflect_type="odd")
        return pad, ndimage.spline_filter(vals, order=3, mode="nearest")

    def eval(self, pts, order=1):
        """Interpolated values (trilinear for ``order=1``, cubic B-spline for 3); tail outside."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError("point dimension mismatch")
        inside = self.inside(pts)
        out = np.empty(len(pts))
        if np.any(inside):
            q = pts[inside]
            if order == 1:
                out[inside] = kernels.trilinear(self.values, self.lower, self.spacing, q)
            elif order == 3:
                pad, coeffs = self._spline_coeffs
                g = ((q - self.lower) / self.spacing).T + pad
                out[inside] = ndimage.map_coordinates(coeffs, g, order=3, mode="nearest", prefilter=False)
            else:
                raise ValueError("interpolation order must be 1 or 3")
        if not np.all(inside):
            if self.tail is None:
                raise OutsideDomain("point outside the box and no tail declared")
            out[~inside] = self.tail(pts[~inside])
        return out

    def __call__(self, pts, order=1):
        return self.eval(pts, order)

    # integration
    def weights(self, rule="gregory"):
        return _tensor_weights(self.shape, rule) * self.spacing ** self.dim

    def box_integral(self, values, region: Region = None, rule="gregory"):
        w = self.weights(rule)
        if region is not None and not (isinstance(region, str) and region == "all"):
            w = w * _region_mask(region, self.points(), self.spacing).reshape(self.shape)
        return kernels.compensated_sum((w * values).ravel())

    def ray_center(self, region: Region = None):
        if isinstance(region, Annulus) and np.all(self.inside(np.asarray(region.center)[None], pad=-1)):
            return np.asarray(region.center, float)
        if self.tail is not None:
            tc = np.asarray(self.tail.center)
            if np.all((tc > self.lower) & (tc < self.upper)):
                return tc
        return self.center


def fibonacci_sphere(k: int) -> np.ndarray:
    """Quasi-uniform deterministic points on the unit sphere in R^3."""
    i = np.arange(k) + 0.5
    z = 1.0 - 2.0 * i / k
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


# ------------------------------------------------------------------- norms
def _tail_integrand_power(field, p):
    tail = field.tail
    return lambda pts: np.abs(tail(pts)) ** p


def lp_norm(field: GridField, p: float, region: Region = "all", rule="gregory", with_tail=True,
            values=None, exclude: Optional[tuple] = None):
    """``||u||_{L^p(region)}``: node quadrature on the box plus the exterior tail integral.

    ``values`` overrides the field samples (same grid); ``exclude = (center, radius)``
    removes a ball from the box part.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    vals = field.values if values is None else np.asarray(values)
    integrand = np.abs(vals) ** p
    if exclude is not None:
        c, rad = exclude
        r = np.linalg.norm(field.points() - np.asarray(c), axis=1).reshape(field.shape)
        integrand = np.where(r < rad, 0.0, integrand)
    total = field.box_integral(integrand, region, rule)
    if with_tail and field.tail is not None:
        if field.tail.exponent * p <= field.dim:
            raise DivergentTail(f"tail exponent {field.tail.exponent} * p {p} <= n")
        reg = None if (isinstance(region, str) and region == "all") else region
        total += exterior_integral(_tail_integrand_power(field, p), field.lower, field.upper,
                                   field.ray_center(reg), reg)
    return total ** (1.0 / p)


def power_integral(field: GridField, func_box, func_ext, decay: float, region: Region = "all", rule="gregory",
                   with_tail=True):
    """``int g`` with ``g`` given by samples on the box and a callable outside (decay rate ``decay``)."""
    total = field.box_integral(func_box, region, rule)
    if with_tail and field.tail is not None:
        if decay <= field.dim:
            raise DivergentTail("exterior integrand decays too slowly")
        reg = None if (isinstance(region, str) and region == "all") else region
        total += exterior_integral(func_ext, field.lower, field.upper, field.ray_center(reg), reg)
    return total


def _grad4_axis(u, ax, h):
    ui = np.moveaxis(u, ax, 0)
    g = np.empty_like(ui)
    g[2:-2] = (ui[:-4] - 8 * ui[1:-3] + 8 * ui[3:-1] - ui[4:]) / (12 * h)
    g[0] = (-25 * ui[0] + 48 * ui[1] - 36 * ui[2] + 16 * ui[3] - 3 * ui[4]) / (12 * h)
    g[1] = (-3 * ui[0] - 10 * ui[1] + 18 * ui[2] - 6 * ui[3] + ui[4]) / (12 * h)
    g[-1] = (25 * ui[-1] - 48 * ui[-2] + 36 * ui[-3] - 16 * ui[-4] + 3 * ui[-5]) / (12 * h)
    g[-2] = (3 * ui[-1] + 10 * ui[-2] - 18 * ui[-3] + 6 * ui[-4] - ui[-5]) / (12 * h)
    return np.moveaxis(g, 0, ax)


def gradient(field: GridField, order=4, values=None):
    """Finite-difference gradient, central inside and one-sided on faces; shape ``(n, *shape)``."""
    u = field.values if values is None else np.asarray(values)
    if order == 2 or min(u.shape) < 5:
        return np.stack(np.gradient(u, field.spacing, edge_order=2))
    if order != 4:
        raise ValueError("gradient order must be 2 or 4")
    return np.stack([_grad4_axis(u, ax, field.spacing) for ax in range(u.ndim)])


def dirichlet_energy(field: GridField, region: Region = "all", order=4, rule="gregory", with_tail=True,
                     values=None):
    """``int |grad u|^2`` over the region, box by finite differences plus tail gradient outside."""
    g = gradient(field, order, values)
    dens = np.sum(g ** 2, axis=0)
    total = field.box_integral(dens, region, rule)
    if with_tail and field.tail is not None and values is None:
        if 2 * (field.tail.exponent + 1) <= field.dim:
            raise DivergentTail("gradient tail not square integrable")
        reg = None if (isinstance(region, str) and region == "all") else region
        tail = field.tail
        total += exterior_integral(lambda pts: np.sum(tail.gradient(pts) ** 2, axis=1), field.lower,
                                   field.upper, field.ray_center(reg), reg)
    return total


# ----------------------------------------------------------------- transforms
def _moved_tail(tail, center):
    if tail is None:
        return None
    return replace(tail, center=tuple(float(c) for c in center))


def reflect(field: GridField, plane: HalfSpace, order=1) -> GridField:
    """``o(x) = u(x^{omega,lambda})`` at every node; a radial tail moves to the reflected center."""
    q = plane.reflect_points(field.points())
    vals = field.eval(q, order).reshape(field.shape)
    tail = None if field.tail is None else _moved_tail(field.tail, plane.reflect_points(field.tail.center)[0])
    return field.with_values(vals, tail=tail)


def rotate(field: GridField, center, rotation, order=1) -> GridField:
    """``o(x) = u(c + R (x - c))`` at every node."""
    R = np.asarray(rotation, dtype=float)
    if abs(np.linalg.det(R) - 1.0) > 1e-10 or not np.allclose(R @ R.T, np.eye(len(R)), atol=1e-10):
        raise ValueError("rotation must be orthogonal with determinant 1")
    c = np.asarray(center, dtype=float)
    tail = None
    if field.tail is not None:
        tail = _moved_tail(field.tail, c + R.T @ (np.asarray(field.tail.center) - c))
    if np.array_equal(R, np.eye(len(R))):
        return field.with_values(field.values.copy(), tail=tail)
    q = c + (field.points() - c) @ R.T
    return field.with_values(field.eval(q, order).reshape(field.shape), tail=tail)


def sphere_oscillation(field: GridField, center, radius, samples=512, order=1):
    """(max, min) of the field over a Fibonacci point set on the sphere."""
    if samples < 32:
        raise ValueError("need at least 32 sphere samples")
    if field.dim != 3:
        raise ValueError("sphere sampling implemented for n = 3")
    pts = np.asarray(center, float) + radius * fibonacci_sphere(samples)
    v = field.eval(pts, order)
    return float(v.max()), float(v.min())


# --------------------------------------------------------------------- FLD1
def write_fld(path, field: GridField, extra: Optional[dict] = None):
    """Write the FLD1 format: text header, blank line, little-endian float64 payload."""
    lines = ["FLD1", f"dim {field.dim}", "shape " + " ".join(str(s) for s in field.shape),
             "origin " + " ".join(repr(float(o)) for o in field.origin), f"spacing {float(field.spacing)!r}"]
    if field.tail is not None:
        t = field.tail
        lines.append(f"tail {float(t.coefficient)!r} {float(t.exponent)!r}")
        if any(c != 0.0 for c in t.center):
            lines.append("tail_center " + " ".join(repr(float(c)) for c in t.center))
        if t.core != 0.0:
            lines.append(f"tail_core {float(t.core)!r}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} {v!r}" if not isinstance(v, str) else f"{k} {v}")
    header = ("\n".join(lines) + "\n\n").encode("ascii")
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def read_fld(path, return_header=False):
    data = Path(path).read_bytes()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise FormatError("missing blank line after header")
    head = data[:sep].decode("ascii").split("\n")
    if not head or head[0].strip() != "FLD1":
        raise FormatError("not an FLD1 file")
    hdr = {}
    for line in head[1:]:
        parts = line.split()
        if parts:
            hdr[parts[0]] = parts[1:]
    try:
        dim = int(hdr["dim"][0])
        shape = tuple(int(s) for s in hdr["shape"])
        origin = tuple(float(s) for s in hdr["origin"])
        spacing = float(hdr["spacing"][0])
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"bad header: {exc}") from exc
    if len(shape) != dim or len(origin) != dim:
        raise FormatError("shape/origin length does not match dim")
    payload = data[sep + 2:]
    expected = 8 * int(np.prod(shape))
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, expected {expected}")
    vals = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    tail = None
    if "tail" in hdr:
        c0, a = (float(s) for s in hdr["tail"][:2])
        center = tuple(float(s) for s in hdr.get("tail_center", [0.0] * dim))
        core = float(hdr["tail_core"][0]) if "tail_core" in hdr else 0.0
        tail = PowerTail(c0, a, center, core)
    fld = GridField(vals, origin, spacing, tail)
    if return_header:
        return fld, hdr
    return fld
