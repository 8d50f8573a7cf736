import numpy as np
import pytest

from symlab.errors import NoGroundState
from symlab.models import Bubble, BubbleParams, Nonlinearity, cube_grid, make_kappa
from symlab.solver import (ShootConfig, SolverConfig, continuation, fit_tail_exponent, mass_certificate,
                           mass_lower_bound, residual, residual_field, solve_perturbed, solve_radial)

F = Nonlinearity.critical(3)
ONE = make_kappa("constant", 0.0)


def unit_grid(h=0.25):
    shape, origin, hh = cube_grid(4.0, h)
    return Bubble(BubbleParams((0, 0, 0), 1.0)).sample(shape, origin, hh)


@pytest.fixture(scope="module")
def grid_solution():
    u = unit_grid()
    return u, solve_perturbed(ONE, F, u, SolverConfig(h=u.spacing))


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_radial_shot_is_bubble(lam):
    b = Bubble(BubbleParams((0, 0, 0), lam))
    prof = solve_radial(F, lambda r: np.ones(np.shape(r)), 3, ShootConfig(a=b.peak))
    m = prof.radii < 1e3
    rel = np.abs(prof.values[m] - b.radial(prof.radii[m])) / b.radial(prof.radii[m])
    assert np.max(rel) < 1e-6
    assert abs(prof.tail_exponent - 1.0) < 0.05


def test_subcritical_shot_crosses():
    with pytest.raises(NoGroundState):
        solve_radial(Nonlinearity.power(3.0), lambda r: np.ones(np.shape(r)), 3, ShootConfig(a=1.0))


def test_decreasing_kappa_branches():
    k = make_kappa("radial_step", 0.5, {"radius": 1.0, "width": 0.5}, baseline=0.5)
    fast = solve_radial(F, k.radial, 3, ShootConfig(a=0.3))
    slow = solve_radial(F, k.radial, 3, ShootConfig(a=1.0))
    assert abs(fast.tail_exponent - 1.0) < 0.05
    assert abs(slow.tail_exponent - 0.5) < 0.05


def test_fit_tail_exponent_exact():
    r = np.geomspace(1, 1e4, 200)
    a, c = fit_tail_exponent(r, 3.0 * r ** -1.7)
    assert a == pytest.approx(1.7, abs=1e-12) and c == pytest.approx(3.0, rel=1e-10)


def test_newton_from_bubble(grid_solution):
    _, res = grid_solution
    assert res.converged and res.iterations <= 3
    assert res.residual_max <= 1e-9
    assert res.identity_error < 1e-3


def test_fixed_point_takes_no_steps(grid_solution):
    _, res = grid_solution
    again = solve_perturbed(ONE, F, res.field, SolverConfig(h=res.field.spacing))
    assert again.iterations == 0
    assert np.array_equal(again.field.values, res.field.values)


def test_bubble_residual_fourth_order():
    # the first interior layer sees a truncated stencil; order 4 holds from two nodes in
    r = []
    for h in (0.25, 0.125):
        u = unit_grid(h)
        res = residual_field(u.values, np.ones(u.shape), F, u.spacing, "4th")
        r.append(np.max(np.abs(res[2:-2, 2:-2, 2:-2])))
    assert 12 < r[0] / r[1] < 20


def test_seven_point_second_order():
    r = []
    for h in (0.25, 0.125):
        r.append(residual(unit_grid(h), ONE, F, "7pt")[0])
    assert 3.5 < r[0] / r[1] < 4.5


def test_bad_guess_not_converged():
    u = unit_grid()
    res = solve_perturbed(ONE, F, u.with_values(30 * u.values), SolverConfig(h=u.spacing, max_iter=4))
    assert not res.converged and res.status == "max_iter"
    with pytest.raises(ValueError):
        solve_perturbed(ONE, F, u.with_values(u.values - 1.0))


def test_continuation_keeps_boundary(grid_solution):
    u, _ = grid_solution
    steps = continuation(lambda e: make_kappa("smooth_bump", e), 0.05, F, u, SolverConfig(h=u.spacing), 2)
    assert len(steps) == 2
    m = u.boundary_mask(0)
    for s in steps:
        assert s.converged
        assert np.array_equal(s.field.values[m], u.values[m])


def test_mass_bound_algebra():
    assert mass_lower_bound(1.0, 1.0, 2.0, 3) == pytest.approx(8.0)
    assert mass_lower_bound(2.0, 2.0, 2.0, 4) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mass_lower_bound(0.0, 1.0, 1.0, 3)


def test_mass_certificate(grid_solution):
    _, res = grid_solution
    S = 2.3404877
    ok, bound = mass_certificate(res, 1.0, 1.0, S)
    assert ok and bound == pytest.approx(S ** 3)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(half_width=3.0)
    with pytest.raises(ValueError):
        SolverConfig(stencil="9pt")
