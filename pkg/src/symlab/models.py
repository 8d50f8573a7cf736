"""Exact bubbles and kappa generators, plus nonlinearities with sampled hypothesis certificates."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import kernels
from .errors import NegativeKappa, NonConvergent, ResolutionTooCoarse
from .field import GridField, PowerTail, RadialProfile, dirichlet_energy, lp_norm


def critical_power(n: int) -> float:
    return (n + 2) / (n - 2)


def critical_exponent(n: int) -> float:
    """2* = 2n/(n-2)."""
    return 2 * n / (n - 2)


def dual_exponent(n: int) -> float:
    """(2*)' = 2n/(n+2)."""
    return 2 * n / (n + 2)


# -------------------------------------------------------------------- bubbles
@dataclass(frozen=True)
class BubbleParams:
    center: tuple
    scale: float = 1.0
    dim: int = 3

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("bubble scale must be positive")
        if self.dim < 3:
            raise ValueError("dimension must be at least 3")
        c = tuple(float(x) for x in self.center)
        if len(c) != self.dim:
            raise ValueError("center length must equal dim")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class Bubble:
    """U[z, lam](x) = (lam sqrt(n(n-2)) / (1 + lam^2 |x - z|^2))^((n-2)/2)."""

    params: BubbleParams

    @property
    def n(self):
        return self.params.dim

    @property
    def peak(self):
        n, lam = self.n, self.params.scale
        return (lam * np.sqrt(n * (n - 2))) ** ((n - 2) / 2)

    def radial(self, r):
        n, lam = self.n, self.params.scale
        r = np.asarray(r, dtype=float)
        return (lam * np.sqrt(n * (n - 2)) / (1.0 + lam ** 2 * r ** 2)) ** ((n - 2) / 2)

    def radial_derivative(self, r):
        n, lam = self.n, self.params.scale
        r = np.asarray(r, dtype=float)
        return -(n - 2) * lam ** 2 * r / (1.0 + lam ** 2 * r ** 2) * self.radial(r)

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        return self.radial(np.linalg.norm(pts - np.asarray(self.params.center), axis=1))

    def tail(self) -> PowerTail:
        """Exact far field written as a cored power law."""
        n, lam = self.n, self.params.scale
        coef = (np.sqrt(n * (n - 2)) / lam) ** ((n - 2) / 2)
        return PowerTail(coef, n - 2, self.params.center, 1.0 / lam ** 2)

    def profile(self, r_min=1e-6, r_max=1e4, points=2001) -> RadialProfile:
        lam = self.params.scale
        r = np.geomspace(r_min / lam, r_max / lam, points)
        return RadialProfile(self.n, r, self.radial(r), self.n - 2, derivs=self.radial_derivative(r))

    def sample(self, shape, origin, spacing, with_tail=True) -> GridField:
        axes = [origin[d] + spacing * np.arange(shape[d]) for d in range(len(shape))]
        mesh = np.meshgrid(*axes, indexing="ij")
        r = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, self.params.center)))
        return GridField(self.radial(r), tuple(origin), spacing, self.tail() if with_tail else None)


def talenti_bubble(params: BubbleParams):
    """Evaluable bubble and its radial profile about the center."""
    b = Bubble(params)
    return b, b.profile()


def cube_grid(half_width: float, h: float, dim: int = 3, center=None):
    """(shape, origin, spacing) of the node grid covering ``center + [-L, L]^n`` with spacing close to h."""
    m = int(round(2 * half_width / h))
    c = np.zeros(dim) if center is None else np.asarray(center, float)
    hh = 2 * half_width / m
    return (m + 1,) * dim, tuple(c - half_width), hh


def bubble_residual(params: BubbleParams, half_width: float, h: float, values: Optional[np.ndarray] = None):
    """Max interior ``|Delta_h U + U^p|`` with the 7-point Laplacian (n = 3).

    ``values`` may replace the samples of U (e.g. 0 or 2U) on the same grid.
    """
    if params.dim != 3:
        raise ValueError("grid residual implemented for n = 3")
    if h > 1.0 / (4.0 * params.scale):
        raise ResolutionTooCoarse(f"h = {h} > 1/(4 lambda) = {1 / (4 * params.scale)}")
    shape, origin, hh = cube_grid(half_width, h, 3, np.zeros(3))
    u = Bubble(params).sample(shape, origin, hh, with_tail=False).values if values is None else values
    if callable(u):
        u = u(Bubble(params).sample(shape, origin, hh, with_tail=False).values)
    p = critical_power(3)
    res = kernels.lap7(u, hh) + np.maximum(u, 0.0) ** p
    return float(np.max(np.abs(res[1:-1, 1:-1, 1:-1])))


# --------------------------------------------------------------- Sobolev S
def sobolev_quotient(field: GridField, order=4, rule="gregory") -> float:
    """||grad u||_2 / ||u||_{2*} with tails."""
    n = field.dim
    e = dirichlet_energy(field, order=order, rule=rule)
    w = lp_norm(field, critical_exponent(n), rule=rule)
    return float(np.sqrt(e) / w)


def _radial_quotient(n):
    b = Bubble(BubbleParams((0.0,) * n, 1.0, n))
    ts = critical_exponent(n)
    # substitute r = tan(theta) to map [0, inf) onto [0, pi/2)
    def e_int(th):
        r = np.tan(th)
        return b.radial_derivative(r) ** 2 * r ** (n - 1) / np.cos(th) ** 2

    def w_int(th):
        r = np.tan(th)
        return b.radial(r) ** ts * r ** (n - 1) / np.cos(th) ** 2

    e = integrate.quad(e_int, 0, np.pi / 2, epsabs=0, epsrel=1e-13, limit=400)[0]
    w = integrate.quad(w_int, 0, np.pi / 2, epsabs=0, epsrel=1e-13, limit=400)[0]
    area = 2 * np.pi ** (n / 2) / _gamma(n / 2)
    return np.sqrt(area * e) / (area * w) ** (1 / ts)


def _gamma(x):
    from math import gamma
    return gamma(x)


@dataclass
class SobolevEstimate:
    value: float
    quotients: list
    spacings: list
    observed_order: float


def sobolev_constant(n: int = 3, ladder=(0.25, 0.125, 0.0625), half_width: float = 6.0,
                     order_band=(1.5, 2.5), details=False):
    """S = ||grad U||_2 / ||U||_{2*} for U = U[0,1], Richardson-extrapolated over ``ladder``.

    The grid quotient uses second-order differences and the trapezoid rule, so
    the ladder must show order-2 convergence. For n != 3 the radial integrals
    are evaluated by adaptive quadrature.
    """
    if n != 3:
        val = float(_radial_quotient(n))
        est = SobolevEstimate(val, [val], [], float("nan"))
        return est if details else val
    hs = sorted((float(x) for x in ladder), reverse=True)
    if len(hs) < 3:
        raise ValueError("need at least three spacings")
    b = Bubble(BubbleParams((0.0, 0.0, 0.0), 1.0, 3))
    qs = []
    for h in hs:
        shape, origin, hh = cube_grid(half_width, h)
        qs.append(sobolev_quotient(b.sample(shape, origin, hh), order=2, rule="trapezoid"))
    d1, d2 = qs[-3] - qs[-2], qs[-2] - qs[-1]
    ratio = hs[-2] / hs[-1]
    if d2 == 0 or d1 / d2 <= 0:
        raise NonConvergent("ladder differences change sign")
    p_obs = float(np.log(d1 / d2) / np.log(ratio))
    if not (order_band[0] <= p_obs <= order_band[1]):
        raise NonConvergent(f"observed order {p_obs:.3f} outside {order_band}")
    val = qs[-1] - d2 / (ratio ** 2 - 1)
    est = SobolevEstimate(float(val), qs, hs, p_obs)
    return est if details else float(val)


# ------------------------------------------------------------ nonlinearities
@dataclass(frozen=True)
class Nonlinearity:
    """f on [0, C0], extended past C0 by the constant f(C0)."""

    raw: Callable
    n: int = 3
    f0: float = 1.0
    L: float = None
    nondecreasing: bool = True
    f_over_up_nonincreasing: bool = True
    C0: float = np.inf
    spec: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.L is None:
            object.__setattr__(self, "L", self.p)

    @property
    def p(self):
        return critical_power(self.n)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.isfinite(self.C0):
            u = np.minimum(u, self.C0)
        return self.raw(u)

    def derivative(self, u, step=1e-6):
        """Centered difference of f (one-sided near 0)."""
        u = np.asarray(u, dtype=float)
        d = step * np.maximum(1.0, np.abs(u))
        lo = np.maximum(u - d, 0.0)
        hi = u + d
        return (self(hi) - self(lo)) / (hi - lo)

    @classmethod
    def critical(cls, n=3):
        p = critical_power(n)
        return cls(lambda u: np.power(np.maximum(u, 0.0), p), n, 1.0, p, True, True, np.inf,
                   {"kind": "critical"})

    @classmethod
    def power(cls, q, n=3, C0=np.inf):
        p = critical_power(n)
        def f(u, q=q):
            return np.power(np.maximum(u, 0.0), q)
        return cls(f, n, np.nan, np.nan, True, q <= p, C0, {"kind": "power", "q": q})

    @classmethod
    def analytic_derivative(cls, u, n=3):
        return critical_power(n) * np.power(np.maximum(u, 0.0), critical_power(n) - 1)

    @classmethod
    def from_spec(cls, spec: dict, n=3):
        kind = spec.get("kind", "critical")
        if kind == "critical":
            return cls.critical(n)
        if kind == "power":
            return cls.power(float(spec["q"]), n, float(spec.get("C0", np.inf)))
        raise ValueError(f"unknown nonlinearity kind {kind!r}")


@dataclass
class HypothesisReport:
    f0: float
    L: float
    nondecreasing: bool
    f_over_up_nonincreasing: bool
    subcritical_certified: bool
    lipschitz_certified: bool
    witnesses: dict
    u_floor: float
    C0: float
    samples: int
    pair_mesh: int

    def to_dict(self):
        return dict(self.__dict__)


def check_hypotheses(f, C0: float, n: int = 3, samples: int = 10_000, pair_mesh: int = 200,
                     u_floor: float = 1e-8) -> HypothesisReport:
    """Sampled certificates for the growth and regularity hypotheses on [u_floor, C0]."""
    if C0 < 1:
        raise ValueError("C0 must be >= 1")
    fn = f if callable(f) else f.raw
    p = critical_power(n)
    u = np.geomspace(u_floor, C0, samples)
    fu = np.asarray(fn(u), dtype=float)
    ratio = np.abs(fu) / u ** p
    f0 = float(np.max(ratio))
    wit = {}
    # difference quotients on a pair mesh plus their u1 -> u2 limits
    m = np.geomspace(u_floor, C0, pair_mesh)
    fm = np.asarray(fn(m), dtype=float)
    i, j = np.triu_indices(pair_mesh, 1)
    quot = (fm[j] - fm[i]) / (m[j] - m[i])
    lq = quot / m[j] ** (p - 1)
    du = 1e-6 * u
    deriv = (np.asarray(fn(u + du)) - np.asarray(fn(np.maximum(u - du, 0.0)))) / (u + du - np.maximum(u - du, 0.0))
    ld = deriv / u ** (p - 1)
    L = float(max(np.max(lq), np.max(ld)))
    neg = np.argmin(quot)
    nondec = bool(quot[neg] >= 0 and np.all(deriv >= -1e-9 * np.maximum(1.0, np.abs(deriv).max())))
    if not nondec:
        k = neg if quot[neg] < 0 else None
        wit["nondecreasing"] = ([float(m[i[k]]), float(m[j[k]])] if k is not None
                                else [float(u[np.argmin(deriv)])])
    # f/u^p on the sample, and past C0 where f is continued by f(C0)
    ext = np.geomspace(C0, 10 * C0, 50)[1:]
    r_all = np.concatenate([fu / u ** p, float(fn(np.array([C0]))[0]) / ext ** p])
    u_all = np.concatenate([u, ext])
    inc = np.diff(r_all) > 1e-12 * np.maximum(1.0, np.abs(r_all[:-1]))
    fup = not bool(np.any(inc))
    if not fup:
        k = int(np.argmax(inc))
        wit["f_over_up_nonincreasing"] = [float(u_all[k]), float(u_all[k + 1])]
    sub = bool(np.isfinite(f0))
    if not sub:
        wit["subcritical"] = float(u[np.argmax(ratio)])
    return HypothesisReport(f0, L, nondec, fup, sub, bool(np.isfinite(L)), wit, u_floor, C0, samples, pair_mesh)


# -------------------------------------------------------------------- kappa
@dataclass(frozen=True, eq=False)
class KappaField:
    """Coefficient with certified range; ``evaluate`` maps ``(m, n)`` points to values."""

    evaluate: Callable
    inf_value: float
    sup_value: float
    grad_bound: Optional[float] = None
    holder: Optional[tuple] = None
    radial: Optional[Callable] = None
    center: tuple = (0.0, 0.0, 0.0)
    spec: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.inf_value <= self.sup_value < np.inf):
            raise ValueError("need 0 <= inf <= sup < inf")

    @property
    def osc(self):
        return self.sup_value - self.inf_value

    def __call__(self, pts):
        return np.asarray(self.evaluate(np.atleast_2d(pts)), dtype=float)

    def on_grid(self, grid: GridField):
        return self(grid.points()).reshape(grid.shape)

    def is_constant(self):
        return self.osc == 0.0


# Pohozaev-balanced widths for the shell profile about a unit bubble: with these
# widths int U^6 x.grad(eta) = 0, so the perturbed problem keeps a solution near U.
SHELL_WIDTHS = tuple(1.2034523 * w for w in (0.75, 1.0, 1.3))


def _shell(q):
    return q * np.exp(1.0 - q)


def make_kappa(kind: str, amplitude: float = 0.0, params: Optional[dict] = None, baseline: float = 1.0,
               seed: int = 0, dim: int = 3) -> KappaField:
    """kappa = baseline + amplitude * eta with ||eta||_inf = 1.

    kinds: ``constant`` (eta = 1), ``radial_step`` (smooth decreasing step from
    1 to 0), ``smooth_bump`` (profile ``gaussian`` exp(-q) or ``shell`` q e^(1-q),
    q the anisotropic squared radius), ``random_fourier`` (seeded periodic sum).
    """
    params = dict(params or {})
    eps = float(amplitude)
    if eps < 0:
        raise ValueError("amplitude must be non-negative")
    if baseline <= 0:
        raise ValueError("baseline must be positive")
    if baseline - eps < 0:
        raise NegativeKappa(f"baseline {baseline} - amplitude {eps} < 0")
    center = np.asarray(params.get("center", (0.0,) * dim), dtype=float)
    spec = {"kind": kind, "amplitude": eps, "baseline": baseline, "seed": seed, **params}
    spec["center"] = center.tolist()

    if kind == "constant":
        k = baseline + eps
        return KappaField(lambda x: np.full(len(x), k), k, k, 0.0, (1.0, 0.0),
                          lambda r: np.full(np.shape(r), k), tuple(center), spec)

    if kind == "radial_step":
        r0 = float(params.get("radius", 1.0))
        w = float(params.get("width", 0.5))
        norm = 1.0 + np.tanh(r0 / w)

        def eta_r(r):
            return (1.0 - np.tanh((np.asarray(r) - r0) / w)) / norm

        def ev(x):
            return baseline + eps * eta_r(np.linalg.norm(x - center, axis=1))

        gb = eps / (w * norm)
        return KappaField(ev, baseline, baseline + eps, gb, (1.0, gb), lambda r: baseline + eps * eta_r(r),
                          tuple(center), spec)

    if kind == "smooth_bump":
        profile = params.get("profile", "gaussian")
        widths = np.asarray(params.get("widths", SHELL_WIDTHS if profile == "shell" else (1.0,) * dim), float)
        spec["profile"] = profile
        spec["widths"] = widths.tolist()
        if profile == "gaussian":
            eta = lambda q: np.exp(-q)
            # max |grad exp(-q)| = sqrt(2/e)/min(w)
            gb = np.sqrt(2.0 / np.e) / widths.min()
        elif profile == "shell":
            eta = _shell
            # max |d/ds s^2 e^(1-s^2)| by dense sampling, over the smallest width
            s = np.linspace(0, 6, 60001)
            gb = float(np.max(np.abs(np.gradient(s ** 2 * np.exp(1 - s ** 2), s)))) * 1.001 / widths.min()
        else:
            raise ValueError(f"unknown bump profile {profile!r}")

        def ev(x):
            q = np.sum(((x - center) / widths) ** 2, axis=1)
            return baseline + eps * eta(q)

        radial = None
        if np.allclose(widths, widths[0]):
            radial = lambda r: baseline + eps * eta((np.asarray(r) / widths[0]) ** 2)
        return KappaField(ev, baseline, baseline + eps, eps * gb, (1.0, eps * gb), radial, tuple(center), spec)

    if kind == "random_fourier":
        modes = int(params.get("modes", 6))
        period = float(params.get("period", 8.0))
        kmax = int(params.get("kmax", 2))
        rng = np.random.default_rng(seed)
        ks = rng.integers(-kmax, kmax + 1, size=(modes, dim))
        ks[np.all(ks == 0, axis=1), 0] = 1
        wav = 2 * np.pi * ks / period
        amp = rng.uniform(0.2, 1.0, size=modes)
        ph = rng.uniform(0, 2 * np.pi, size=modes)

        def raw(x):
            return np.cos((x - center) @ wav.T + ph) @ amp

        # dense sampling of one period, widened by the Lipschitz margin
        m = int(params.get("sample_points", 48))
        g = (np.arange(m) + 0.5) * period / m
        pts = np.stack([a.ravel() for a in np.meshgrid(*([g] * dim), indexing="ij")], axis=1) + center
        vals = np.concatenate([raw(pts[i:i + 200_000]) for i in range(0, len(pts), 200_000)])
        lip = float(np.sum(amp * np.linalg.norm(wav, axis=1)))
        margin = lip * 0.5 * np.sqrt(dim) * period / m
        lo, hi = vals.min() - margin, vals.max() + margin
        scale = max(abs(lo), abs(hi))
        spec["sampling_margin"] = margin / scale

        def ev(x):
            return baseline + eps * raw(np.atleast_2d(x)) / scale

        return KappaField(ev, baseline + eps * lo / scale, baseline + eps * hi / scale, eps * lip / scale,
                          (1.0, eps * lip / scale), None, tuple(center), spec)

    raise ValueError(f"unknown kappa kind {kind!r}")
