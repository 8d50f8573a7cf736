import json
import os
import subprocess
import sys

import numpy as np
import pytest

from symlab import kernels
from symlab._accel import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not importable")


@pytest.fixture
def cube(rng):
    return rng.standard_normal((13, 11, 9))


def both(monkeypatch, fn, *args):
    monkeypatch.setattr(kernels, "USE_NUMBA", True)
    a = fn(*args)
    monkeypatch.setattr(kernels, "USE_NUMBA", False)
    b = fn(*args)
    return a, b


@needs_numba
@pytest.mark.parametrize("name", ["lap7", "lap4"])
def test_laplacians_agree(monkeypatch, cube, name):
    a, b = both(monkeypatch, getattr(kernels, name), cube, 0.3)
    assert np.allclose(a, b, rtol=0, atol=1e-10 * np.max(np.abs(a)))
    assert np.all(a[0] == 0) and np.all(b[:, -1] == 0)


@needs_numba
def test_trilinear_agrees(monkeypatch, cube, rng):
    pts = rng.uniform(-0.5, 4.0, size=(500, 3))
    a, b = both(monkeypatch, kernels.trilinear, cube, (0.0, 0.0, 0.0), 0.3, pts)
    assert np.array_equal(np.isnan(a), np.isnan(b))
    m = ~np.isnan(a)
    assert m.any() and (~m).any()
    assert np.allclose(a[m], b[m], rtol=0, atol=1e-13)


@needs_numba
def test_compensated_sum_agrees(monkeypatch, rng):
    x = rng.standard_normal(10_000) * 10.0 ** rng.integers(-8, 8, 10_000)
    a, b = both(monkeypatch, kernels.compensated_sum, x)
    assert a == pytest.approx(b, rel=1e-15, abs=1e-300)


def test_compensated_sum_cancellation():
    x = np.array([1e16, 1.0, -1e16, 1.0])
    assert kernels.compensated_sum(x) == 2.0
    assert kernels.neumaier_sum_numpy(x) == 2.0


def test_lap_exact_on_quadratics():
    g = np.arange(9) * 0.5
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    u = X ** 2 + 2 * Y ** 2 - Z ** 2
    for fn in (kernels.lap7_numpy, kernels.lap4_numpy):
        assert np.allclose(fn(u, 0.5)[2:-2, 2:-2, 2:-2], 4.0, atol=1e-11)


def test_multilinear_any_dimension():
    g = np.arange(5.0)
    X, Y = np.meshgrid(g, g, indexing="ij")
    v = 3 * X - Y + 2
    val = kernels.multilinear_numpy(v, (0.0, 0.0), 1.0, [[1.5, 2.25], [9.0, 0.0]])
    assert val[0] == pytest.approx(3 * 1.5 - 2.25 + 2) and np.isnan(val[1])


def test_fallback_flag_in_subprocess():
    code = ("import json; from symlab import kernels, _accel; from symlab.models import BubbleParams, "
            "bubble_residual; print(json.dumps([_accel.HAVE_NUMBA, kernels.USE_NUMBA, "
            "bubble_residual(BubbleParams((0, 0, 0), 1.0), 4.0, 0.25)]))")
    env = {**os.environ, "SYMLAB_NO_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    have, use, res = json.loads(out.stdout)
    assert have is False and use is False
    from symlab.models import BubbleParams, bubble_residual
    assert res == pytest.approx(bubble_residual(BubbleParams((0, 0, 0), 1.0), 4.0, 0.25), rel=1e-10)
