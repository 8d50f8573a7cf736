"""Hot loops with a numba implementation and a numpy twin.

The public functions dispatch on ``USE_NUMBA``; both paths are kept importable
so tests and the benchmark can compare them directly.
"""
import math

import numpy as np

from ._accel import HAVE_NUMBA, njit

USE_NUMBA = HAVE_NUMBA


# ----------------------------------------------------------------- summation
@njit(cache=True)
def _neumaier_nb(a):
    s = 0.0
    c = 0.0
    for i in range(a.size):
        x = a[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


def neumaier_sum_numpy(a):
    return math.fsum(np.asarray(a, dtype=np.float64).ravel().tolist())


def compensated_sum(a):
    """Compensated sum of all entries; order-independent to rounding level."""
    a = np.ascontiguousarray(a, dtype=np.float64).ravel()
    if USE_NUMBA:
        return float(_neumaier_nb(a))
    return neumaier_sum_numpy(a)


# ------------------------------------------------------------- interpolation
@njit(cache=True)
def _trilinear_nb(values, origin, h, pts, out, fill):
    nx, ny, nz = values.shape
    for k in range(pts.shape[0]):
        gx = (pts[k, 0] - origin[0]) / h
        gy = (pts[k, 1] - origin[1]) / h
        gz = (pts[k, 2] - origin[2]) / h
        if gx < -1e-9 or gy < -1e-9 or gz < -1e-9 or gx > nx - 1 + 1e-9 or gy > ny - 1 + 1e-9 or gz > nz - 1 + 1e-9:
            out[k] = fill
            continue
        i = min(max(int(math.floor(gx)), 0), nx - 2)
        j = min(max(int(math.floor(gy)), 0), ny - 2)
        l = min(max(int(math.floor(gz)), 0), nz - 2)
        tx = gx - i
        ty = gy - j
        tz = gz - l
        c00 = values[i, j, l] * (1 - tx) + values[i + 1, j, l] * tx
        c10 = values[i, j + 1, l] * (1 - tx) + values[i + 1, j + 1, l] * tx
        c01 = values[i, j, l + 1] * (1 - tx) + values[i + 1, j, l + 1] * tx
        c11 = values[i, j + 1, l + 1] * (1 - tx) + values[i + 1, j + 1, l + 1] * tx
        c0 = c00 * (1 - ty) + c10 * ty
        c1 = c01 * (1 - ty) + c11 * ty
        out[k] = c0 * (1 - tz) + c1 * tz


def multilinear_numpy(values, origin, h, pts, fill=np.nan):
    """Multilinear interpolation in any dimension; NaN (``fill``) outside."""
    values = np.asarray(values, dtype=np.float64)
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    dim = values.ndim
    shape = np.array(values.shape)
    g = (pts - np.asarray(origin)) / h
    inside = np.all((g >= -1e-9) & (g <= shape - 1 + 1e-9), axis=1)
    i0 = np.clip(np.floor(g).astype(np.int64), 0, shape - 2)
    t = g - i0
    out = np.zeros(len(pts))
    for corner in range(2 ** dim):
        bits = [(corner >> d) & 1 for d in range(dim)]
        w = np.ones(len(pts))
        idx = []
        for d, b in enumerate(bits):
            w = w * (t[:, d] if b else 1.0 - t[:, d])
            idx.append(i0[:, d] + b)
        out += w * values[tuple(idx)]
    out[~inside] = fill
    return out


def trilinear(values, origin, h, pts, fill=np.nan):
    pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    if USE_NUMBA and values.ndim == 3:
        out = np.empty(len(pts))
        _trilinear_nb(np.ascontiguousarray(values, dtype=np.float64), np.asarray(origin, dtype=np.float64),
                      float(h), pts, out, float(fill))
        return out
    return multilinear_numpy(values, origin, h, pts, fill)


# ---------------------------------------------------------------- Laplacians
@njit(cache=True)
def _lap7_nb(u, h, out):
    nx, ny, nz = u.shape
    ih2 = 1.0 / (h * h)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                out[i, j, k] = (u[i + 1, j, k] + u[i - 1, j, k] + u[i, j + 1, k] + u[i, j - 1, k]
                                + u[i, j, k + 1] + u[i, j, k - 1] - 6.0 * u[i, j, k]) * ih2


def lap7_numpy(u, h):
    out = np.zeros_like(u)
    c = slice(1, -1)
    out[c, c, c] = (u[2:, c, c] + u[:-2, c, c] + u[c, 2:, c] + u[c, :-2, c] + u[c, c, 2:] + u[c, c, :-2]
                    - 6.0 * u[c, c, c]) / h ** 2
    return out


def lap7(u, h):
    """7-point Laplacian at interior nodes, zero on the boundary layer."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    if USE_NUMBA:
        out = np.zeros_like(u)
        _lap7_nb(u, float(h), out)
        return out
    return lap7_numpy(u, h)


@njit(cache=True)
def _lap4_nb(u, h, out):
    # per axis S = second difference (0 on boundary nodes), C = S - D2(S)/12
    nx, ny, nz = u.shape
    ih2 = 1.0 / (h * h)
    s = np.zeros_like(u)
    for ax in range(3):
        s[:, :, :] = 0.0
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if ax == 0:
                        if i == 0 or i == nx - 1:
                            continue
                        s[i, j, k] = (u[i + 1, j, k] - 2 * u[i, j, k] + u[i - 1, j, k]) * ih2
                    elif ax == 1:
                        if j == 0 or j == ny - 1:
                            continue
                        s[i, j, k] = (u[i, j + 1, k] - 2 * u[i, j, k] + u[i, j - 1, k]) * ih2
                    else:
                        if k == 0 or k == nz - 1:
                            continue
                        s[i, j, k] = (u[i, j, k + 1] - 2 * u[i, j, k] + u[i, j, k - 1]) * ih2
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                for k in range(1, nz - 1):
                    if ax == 0:
                        d = s[i + 1, j, k] - 2 * s[i, j, k] + s[i - 1, j, k]
                    elif ax == 1:
                        d = s[i, j + 1, k] - 2 * s[i, j, k] + s[i, j - 1, k]
                    else:
                        d = s[i, j, k + 1] - 2 * s[i, j, k] + s[i, j, k - 1]
                    out[i, j, k] += s[i, j, k] - d / 12.0


def lap4_numpy(u, h):
    out = np.zeros_like(u)
    for ax in range(3):
        ui = np.moveaxis(u, ax, 0)
        s = np.zeros_like(ui)
        s[1:-1] = (ui[2:] - 2 * ui[1:-1] + ui[:-2]) / h ** 2
        c = np.zeros_like(ui)
        c[1:-1] = s[1:-1] - (s[2:] - 2 * s[1:-1] + s[:-2]) / 12.0
        out += np.moveaxis(c, 0, ax)
    inner = np.zeros_like(u)
    sl = slice(1, -1)
    inner[sl, sl, sl] = out[sl, sl, sl]
    return inner


def lap4(u, h):
    """Symmetric fourth-order Laplacian (per axis D2 - h^2/12 D2^2)."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    if USE_NUMBA:
        out = np.zeros_like(u)
        _lap4_nb(u, float(h), out)
        return out
    return lap4_numpy(u, h)
