"""Kelvin transform v(x) = |x|^(2-n) u(x/|x|^2) together with the inverted coefficient and induced g."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import SingularOrigin
from .field import DecayEnvelope, GridField, PowerTail, RadialProfile, write_fld
from .models import KappaField, Nonlinearity


def invert(pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    r2 = np.sum(pts ** 2, axis=1)
    return pts / r2[:, None], np.sqrt(r2)


def _source_eval(source, pts, order):
    if isinstance(source, GridField):
        return source.eval(pts, order)
    if isinstance(source, RadialProfile):
        return source(np.linalg.norm(pts, axis=1))
    if isinstance(source, KelvinField):
        return source(pts, order)
    return np.asarray(source(pts), dtype=float)


def _source_dim(source):
    if isinstance(source, (GridField, RadialProfile)):
        return source.dim
    if isinstance(source, KelvinField):
        return source.dim
    return 3


def _tail_limit(source):
    """lim_{|y|->inf} |y|^(n-2) u(y) when the source tail decays like |y|^(2-n), else None."""
    n = _source_dim(source)
    if isinstance(source, GridField) and source.tail is not None:
        t = source.tail
        return t.coefficient if abs(t.exponent - (n - 2)) < 1e-12 else None
    if isinstance(source, RadialProfile):
        return source.tail_coefficient if abs(source.tail_exponent - (n - 2)) < 1e-12 else None
    return None


@dataclass(frozen=True, eq=False)
class KelvinField:
    """The Kelvin image of a source field; values inside ``excluded_radius`` are refused."""

    source: Union[GridField, RadialProfile, Callable]
    excluded_radius: float
    C0: Optional[float] = None
    dim: int = 3

    def __post_init__(self):
        if not self.excluded_radius > 0:
            raise ValueError("excluded_radius must be positive")

    def __call__(self, pts, order=1):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if np.any(r < self.excluded_radius):
            raise SingularOrigin(f"query inside excluded radius {self.excluded_radius}")
        y = pts / (r ** 2)[:, None]
        return r ** (2 - self.dim) * _source_eval(self.source, y, order)

    def induced_bound(self, pts):
        """C0 |x|^(2-n), the bound implied by ||u||_inf <= C0."""
        r = np.linalg.norm(np.atleast_2d(pts), axis=1)
        return self.C0 * r ** (2 - self.dim)

    def to_grid(self, shape, origin, spacing, order=1) -> GridField:
        """Sample v on a grid. Nodes inside the excluded ball are filled, not trusted."""
        g = GridField(np.zeros(shape), origin, spacing)
        pts = g.points()
        r = np.linalg.norm(pts, axis=1)
        vals = np.empty(len(pts))
        ok = r >= self.excluded_radius
        vals[ok] = self(pts[ok], order)
        if np.any(~ok):
            # formula where the point is not the origin, the tail limit at the origin
            lim = _tail_limit(self.source)
            fill = lim if lim is not None else (float(np.max(vals[ok])) if np.any(ok) else 0.0)
            bad = np.flatnonzero(~ok)
            nz = bad[r[bad] > 0]
            vals[bad] = fill
            if len(nz):
                y = pts[nz] / (r[nz] ** 2)[:, None]
                inner = r[nz] ** (2 - self.dim) * _source_eval(self.source, y, order)
                vals[nz] = np.where(np.isfinite(inner), inner, fill)
        u0 = float(_source_eval(self.source, np.zeros((1, self.dim)), order)[0])
        tail = PowerTail(u0, self.dim - 2, (0.0,) * self.dim)
        return GridField(vals.reshape(shape), origin, spacing, tail,
                         meta={"excluded_radius": self.excluded_radius})

    def write(self, path, shape, origin, spacing, order=1):
        write_fld(path, self.to_grid(shape, origin, spacing, order), {"excluded_radius": self.excluded_radius})


def default_excluded_radius(u: GridField, factor=2.0):
    """``factor`` image spacings at the far corner of the grid: h / R^2 with R the corner distance."""
    R = float(np.max(np.linalg.norm(np.stack([u.lower, u.upper]), axis=1)))
    return factor * u.spacing / R ** 2


def kelvin_transform(u, excluded_radius: Optional[float] = None, C0: Optional[float] = None) -> KelvinField:
    if isinstance(u, GridField):
        rad = default_excluded_radius(u) if excluded_radius is None else excluded_radius
        c0 = float(np.max(u.values)) if C0 is None else C0
        return KelvinField(u, rad, c0, u.dim)
    if isinstance(u, RadialProfile):
        rad = 1e-6 if excluded_radius is None else excluded_radius
        c0 = float(np.max(u.values)) if C0 is None else C0
        return KelvinField(u, rad, c0, u.dim)
    if isinstance(u, KelvinField):
        # the image of a Kelvin field is the original field away from the origin
        rad = 1e-6 if excluded_radius is None else excluded_radius
        return KelvinField(u, rad, C0, u.dim)
    if excluded_radius is None:
        raise ValueError("callable sources need an explicit excluded_radius")
    return KelvinField(u, excluded_radius, C0, 3)


def transform_kappa(kappa: KappaField) -> KappaField:
    """kappa*(x) = kappa(x/|x|^2); the certified range is unchanged."""
    def ev(x):
        x = np.atleast_2d(x)
        r2 = np.sum(x ** 2, axis=1)
        safe = np.where(r2 > 0, r2, 1.0)
        y = np.where((r2 > 0)[:, None], x / safe[:, None], 0.0)
        y[r2 == 0] = np.array([1e12] + [0.0] * (x.shape[1] - 1))
        return kappa(y)

    radial = None
    if kappa.radial is not None:
        def radial(r):
            r = np.asarray(r, dtype=float)
            return kappa.radial(np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 1e12))
    spec = {"kind": "kelvin", "of": kappa.spec}
    return KappaField(ev, kappa.inf_value, kappa.sup_value, None, None, radial, (0.0,) * len(kappa.center), spec)


def induced_g(f: Nonlinearity, x, v):
    """g(x, v) = |x|^-(n+2) f(|x|^(n-2) v)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    r = np.linalg.norm(x, axis=1)
    if np.any(r == 0):
        raise SingularOrigin("g is undefined at x = 0")
    v = np.asarray(v, dtype=float)
    return r ** (-(n + 2)) * f(r ** (n - 2) * v)


def transported_lower_bound(env: DecayEnvelope):
    """The bound v(x) >= defi^s / (C0 |x|^mu) for |x| < 1/R0 implied by the envelope of u."""
    def bound(r):
        r = np.asarray(r, dtype=float)
        return env.deficit_value ** env.sigma / (env.C0 * r ** env.mu)

    return bound, 1.0 / env.R0
