import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from symlab.errors import NegativeKappa, NonConvergent, ResolutionTooCoarse
from symlab.field import GridField, sphere_oscillation
from symlab.models import (SHELL_WIDTHS, Bubble, BubbleParams, Nonlinearity, bubble_residual, check_hypotheses,
                           critical_exponent, critical_power, cube_grid, dual_exponent, make_kappa,
                           sobolev_constant, sobolev_quotient, talenti_bubble)

S3 = math.sqrt(3 * math.pi) * (math.sqrt(math.pi) / 4) ** (1 / 3)   # closed-form Sobolev constant, n = 3


def test_exponents():
    assert critical_power(3) == 5 and critical_exponent(3) == 6
    assert dual_exponent(3) == pytest.approx(6 / 5)
    assert critical_power(5) == pytest.approx(7 / 3)


def test_bubble_peak_value():
    b = Bubble(BubbleParams((0.3, -1.0, 2.0), 1.0))
    assert b([[0.3, -1.0, 2.0]])[0] == pytest.approx(3 ** 0.25, rel=1e-15)
    assert b.peak == pytest.approx(3 ** 0.25)


def test_bubble_decay_exponent():
    b = Bubble(BubbleParams((0, 0, 0, 0), 1.7, 4))
    r = np.array([1e3, 1e4])
    slope = np.log(b.radial(r[1]) / b.radial(r[0])) / np.log(10.0)
    assert slope == pytest.approx(-2.0, abs=1e-6)


@given(st.floats(0.2, 5.0), st.integers(3, 6))
def test_bubble_scaling_identity(lam, n):
    x = np.random.default_rng(7).normal(size=(100, n))
    z = (0.0,) * n
    u_lam = Bubble(BubbleParams(z, lam, n))(x)
    u_1 = Bubble(BubbleParams(z, 1.0, n))(lam * x)
    assert np.allclose(u_lam, lam ** ((n - 2) / 2) * u_1, rtol=1e-12, atol=0)


def test_bubble_radial_identity():
    b = Bubble(BubbleParams((0.2, 0.1, -0.4), 2.0))
    pts = np.asarray(b.params.center) + 0.7 * np.random.default_rng(0).normal(size=(512, 3))
    pts = np.asarray(b.params.center) + 0.7 * (pts - b.params.center) / np.linalg.norm(pts - b.params.center,
                                                                                    axis=1)[:, None]
    v = b(pts)
    assert v.max() - v.min() < 1e-12


def test_bubble_tail_is_exact():
    b = Bubble(BubbleParams((1.0, 0.0, 0.0), 0.6))
    x = np.random.default_rng(3).uniform(-30, 30, size=(50, 3))
    assert np.allclose(b.tail()(x), b(x), rtol=1e-13)


def test_talenti_returns_profile():
    b, prof = talenti_bubble(BubbleParams((0, 0, 0), 1.0))
    r = np.array([0.5, 3.0, 40.0])
    assert np.allclose(prof(r), b.radial(r), rtol=1e-8)
    assert prof.tail_exponent == 1


def test_bubble_residual_rate():
    p = BubbleParams((0, 0, 0), 1.0)
    r1 = bubble_residual(p, 4.0, 0.25)
    r2 = bubble_residual(p, 4.0, 0.125)
    assert 3.5 <= r1 / r2 <= 4.5


def test_bubble_residual_zero_and_double():
    p = BubbleParams((0, 0, 0), 1.0)
    shape, _, _ = cube_grid(4.0, 0.25)
    assert bubble_residual(p, 4.0, 0.25, np.zeros(shape)) == 0.0
    # 2U fails by (2^5 - 2) U^5 at the peak, whatever h
    vals = [bubble_residual(p, 4.0, h, lambda u: 2 * u) for h in (0.25, 0.125)]
    floor = (2 ** 5 - 2) * 3 ** 1.25 * 0.9
    assert min(vals) > floor


def test_bubble_residual_resolution():
    with pytest.raises(ResolutionTooCoarse):
        bubble_residual(BubbleParams((0, 0, 0), 2.0), 4.0, 0.25)


def test_sobolev_constant_closed_form():
    est = sobolev_constant(3, details=True)
    assert est.value == pytest.approx(S3, rel=1e-5)
    assert 1.5 <= est.observed_order <= 2.5
    for n in (4, 5, 6):
        exact = math.sqrt(math.pi * n * (n - 2)) * (math.gamma(n / 2) / math.gamma(n)) ** (1 / n)
        assert sobolev_constant(n) == pytest.approx(exact, rel=1e-9)


def test_sobolev_constant_two_ladders():
    a = sobolev_constant(3, ladder=(0.25, 0.125, 0.0625))
    b = sobolev_constant(3, ladder=(0.2, 0.1, 0.05))
    assert a == pytest.approx(b, rel=1e-3)


def test_sobolev_nonconvergent():
    with pytest.raises(NonConvergent):
        sobolev_constant(3, ladder=(1.0, 0.9, 0.85), order_band=(1.99, 2.01))


def test_sobolev_quotient_invariant_and_minimal():
    rng = np.random.default_rng(11)
    shape, origin, h = cube_grid(5.0, 1 / 6)
    base = sobolev_quotient(Bubble(BubbleParams((0, 0, 0), 1.0)).sample(shape, origin, h))
    for _ in range(5):
        z = tuple(rng.uniform(-0.4, 0.4, 3))
        lam = rng.uniform(0.8, 1.3)
        q = sobolev_quotient(Bubble(BubbleParams(z, lam)).sample(shape, origin, h))
        assert q == pytest.approx(base, rel=1e-3)
    U = Bubble(BubbleParams((0, 0, 0), 1.0)).sample(shape, origin, h)
    x = U.points()
    for _ in range(10):
        c = rng.uniform(-1, 1, 3)
        bump = np.exp(-np.sum((x - c) ** 2, axis=1) / rng.uniform(0.3, 1.0)).reshape(shape)
        qb = sobolev_quotient(U.with_values(U.values * (1 + 0.1 * bump)))
        assert qb >= base * (1 - 1e-6)


def test_check_hypotheses_critical():
    rep = check_hypotheses(Nonlinearity.critical(3), 4.0)
    assert rep.f0 == pytest.approx(1.0, abs=1e-6)
    assert rep.L == pytest.approx(5.0, rel=1e-6)
    assert rep.nondecreasing and rep.f_over_up_nonincreasing


def test_check_hypotheses_subcritical():
    q, C0 = 3.0, 2.0
    rep = check_hypotheses(Nonlinearity.power(q, 3, C0), C0)
    assert rep.f_over_up_nonincreasing
    # f0 = sup u^(q-p): attained at the smallest sampled u
    assert rep.f0 == pytest.approx(rep.u_floor ** (q - 5), rel=1e-6)


def test_check_hypotheses_refutes_sign():
    rep = check_hypotheses(lambda u: -u, 2.0)
    assert not rep.nondecreasing
    assert "nondecreasing" in rep.witnesses


def test_nonlinearity_constant_past_C0():
    f = Nonlinearity.power(2.0, 3, 1.5)
    assert f(np.array([3.0]))[0] == pytest.approx(1.5 ** 2)
    assert f.derivative(np.array([1.0]))[0] == pytest.approx(2.0, rel=1e-6)


def test_nonlinearity_from_spec():
    assert Nonlinearity.from_spec({"kind": "critical"}).f0 == 1.0
    with pytest.raises(ValueError):
        Nonlinearity.from_spec({"kind": "cubic-ish"})


def test_kappa_constant():
    k = make_kappa("constant", 0.0)
    assert k.osc == 0.0 and k.is_constant()


def test_kappa_smooth_bump_osc():
    k = make_kappa("smooth_bump", 0.1)
    assert k.osc == pytest.approx(0.1)
    v = k(np.zeros((1, 3)))[0]
    assert v == pytest.approx(1.1)
    ks = make_kappa("smooth_bump", 0.1, {"profile": "shell"})
    assert ks.osc == pytest.approx(0.1)
    assert ks.spec["widths"] == pytest.approx(list(SHELL_WIDTHS))


def test_kappa_negative():
    with pytest.raises(NegativeKappa):
        make_kappa("smooth_bump", 1.5, baseline=1.0)


@pytest.mark.parametrize("kind,params", [("constant", {}), ("radial_step", {}), ("smooth_bump", {}),
                                         ("smooth_bump", {"profile": "shell"}), ("random_fourier", {})])
def test_kappa_bounds_hold(kind, params):
    k = make_kappa(kind, 0.2, params, seed=4)
    x = np.random.default_rng(0).uniform(-10, 10, size=(1_000_000, 3))
    v = np.concatenate([k(x[i:i + 200_000]) for i in range(0, len(x), 200_000)])
    assert np.all(v >= k.inf_value) and np.all(v <= k.sup_value)
    assert k.osc == pytest.approx(k.sup_value - k.inf_value, abs=1e-12)


def test_kappa_random_fourier_reproducible():
    a = make_kappa("random_fourier", 0.1, seed=9)
    b = make_kappa("random_fourier", 0.1, seed=9)
    x = np.random.default_rng(1).normal(size=(20, 3))
    assert np.array_equal(a(x), b(x))
    assert 0.1 <= a.osc <= 0.2 + 1e-12


def test_shell_widths_balance_pohozaev():
    # int U^6 x . grad(eta) = 0 for the shell profile with the stored widths
    k = make_kappa("smooth_bump", 1.0, {"profile": "shell"}, baseline=1.0)
    shape, origin, h = cube_grid(6.0, 0.1)
    g = GridField(np.zeros(shape), origin, h)
    x = g.points()
    w = np.asarray(SHELL_WIDTHS)
    q = np.sum((x / w) ** 2, axis=1)
    deta = (1 - q) * np.exp(1 - q)             # d eta / dq
    x_grad = deta * 2 * q                       # x . grad q = 2 q
    U6 = Bubble(BubbleParams((0, 0, 0), 1.0))(x) ** 6
    val = g.box_integral((U6 * x_grad).reshape(shape))
    scale = g.box_integral((U6 * np.abs(x_grad)).reshape(shape))
    assert abs(val) < 1e-4 * scale
    assert k.sup_value == 2.0
