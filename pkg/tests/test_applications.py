import numpy as np
import pytest
from hypothesis import given, strategies as st

from bvrc.applications import (
    BvDriver,
    path_integral,
    rs_cumulative,
    rs_integral,
    skorohod_residual,
    skorohod_solve,
    skorohod_stieltjes_solve,
    solve_second_order,
    solve_state_dependent,
    solve_sweeping,
)
from bvrc.catching_up import march, run_grid
from bvrc.errors import DomainError, NonConvergenceError
from bvrc.measures import MixedMeasure, VariationFunction, build_partition
from bvrc.monotone import Box, StateDependentFamily, moving_normal_cone, psd_linear, state_interval_family


def lebesgue(T=1.0):
    return MixedMeasure(VariationFunction(T))


half_line = moving_normal_cone(Box([0.0], [np.inf]))


def reflected_oracle(b, y0, T=1.0, dt=1e-4):
    # independent fine-grid Picard: trapezoid for h, explicit clipped Euler for Y
    ts = np.arange(0, T + dt / 2, dt)
    X = np.full_like(ts, y0)
    for _ in range(200):
        bx = b(ts, X)
        h = np.concatenate(([0.0], np.cumsum(0.5 * (bx[1:] + bx[:-1]) * dt)))
        Y = np.empty_like(ts)
        Y[0] = y0
        for k in range(len(ts) - 1):
            Y[k + 1] = max(0.0, Y[k] - dt * h[k + 1])
        Xn = h + Y
        done = np.max(np.abs(Xn - X)) < 1e-12
        X = Xn
        if done:
            break
    return ts, X, Y


# -- sweeping -----------------------------------------------------------------------


def test_sweeping_examples():
    const = solve_sweeping(Box([-1.0], [1.0]), lebesgue(), [0.3])
    assert np.all(const.trajectory.values == 0.3)
    play = solve_sweeping(lambda t: Box([t - 1.0], [t + 1.0]), MixedMeasure(VariationFunction.linear(2.0)), [0.0],
                          tol=1e-3)
    ts = np.linspace(0, 2, 201)
    assert np.max(np.abs(play.trajectory.evaluate(ts)[:, 0] - np.maximum(0, ts - 1))) <= 5e-3
    jump = solve_sweeping(lambda t: Box([0.0], [1.0]) if t < 0.5 else Box([2.0], [3.0]),
                          MixedMeasure(VariationFunction(1.0, atoms=[(0.5, 2.0)])), [0.5])
    assert jump.trajectory.evaluate(0.5)[0] == 2.0 and jump.trajectory.evaluate(0.49)[0] == 0.5


def test_sweeping_rejects_infeasible_start():
    with pytest.raises(DomainError):
        solve_sweeping(Box([0.0], [1.0]), lebesgue(), [2.0])


# -- integrals of trajectories -----------------------------------------------------


def test_path_integral_trapezoid_and_atom_cells():
    m = MixedMeasure(VariationFunction(1.0, atoms=[(0.5, 2.0)]))
    P = build_partition(m, 0.25)
    traj = run_grid(moving_normal_cone(lambda t: Box([0.0], [1.0]) if t < 0.5 else Box([2.0], [3.0])), None,
                    [0.5], P)
    # constant 0.5 up to the atom, then 2: int = 0.25 + 1.0
    np.testing.assert_allclose(path_integral(traj)[:, 0], [0, 0.125, 0.25, 0.75, 1.25])


@pytest.mark.parametrize(
    "integrand, z, t, expected",
    [
        (lambda s: np.eye(2), BvDriver([0.0, 1.0], [[0.0, 0.0], [2.0, -1.0]]), 0.5, [1.0, -0.5]),
        (lambda s: np.array([[1.0, 2.0], [3.0, 4.0]]), BvDriver([0, 0.3, 1], [[0, 0], [1, 5], [2, -1]]), 1.0,
         [0.0, 2.0]),
        (lambda s: s, BvDriver.from_function(lambda s: s * s, 1.0, 1000), 1.0, [2 / 3]),
    ],
)
def test_rs_integral_examples(integrand, z, t, expected):
    np.testing.assert_allclose(rs_integral(integrand, z, t), expected, atol=1e-6)


def test_rs_cumulative_matches_pointwise():
    z = BvDriver([0.0, 0.4, 1.0], [0.0, 1.0, -0.5])
    times = np.linspace(0, 1, 11)
    cum = rs_cumulative(np.cos, z, times)
    for t, c in zip(times, cum):
        np.testing.assert_allclose(c, rs_integral(np.cos, z, t), atol=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=8), st.floats(0.5, 5), st.floats(0.1, 1))
def test_rs_integral_variation_bound(vals, freq, t):
    times = np.linspace(0, 1, len(vals))
    z = BvDriver(times, vals)
    phi = lambda s: np.sin(freq * s)
    sup = np.max(np.abs(np.sin(freq * np.linspace(0, t, 2001))))
    sup = max(sup, np.abs(np.sin(freq * t)))
    assert abs(rs_integral(phi, z, t)[0]) <= min(1.0, sup + 1e-3) * z.variation(0, t) + 1e-10


def test_driver_validation():
    with pytest.raises(DomainError):
        BvDriver([0.0], [1.0])
    with pytest.raises(DomainError):
        BvDriver([0.1, 1.0], [0.0, 1.0])


# -- Skorohod decomposition --------------------------------------------------------------


def test_skorohod_zero_drift_gives_identical_paths():
    r = skorohod_solve(half_line, lambda s, x: np.zeros(1), [0.5], lebesgue())
    np.testing.assert_array_equal(r.X.values, r.Y.values)
    assert np.all(r.X.values == 0.5)


@pytest.mark.parametrize("c", [-1.0, 1.0])
def test_skorohod_constant_drift_closed_form(c):
    # h = c t and Y carries the drift -h: Y = y0 - c t^2 / 2 while feasible
    r = skorohod_solve(half_line, lambda s, x: np.array([c]), [0.5], lebesgue())
    t = r.Y.nodes
    np.testing.assert_allclose(r.Y.values[:, 0], 0.5 - c * t ** 2 / 2, atol=1e-12)
    np.testing.assert_allclose(r.X.values[:, 0], 0.5 + c * t - c * t ** 2 / 2, atol=1e-12)


def test_skorohod_reflected_state_dependent_drift_matches_oracle():
    b = lambda s, x: 2.0 - x
    r = skorohod_solve(half_line, b, [0.5], lebesgue(), tol=1e-6)
    ts, X, Y = reflected_oracle(b, 0.5)
    assert np.min(Y) == 0.0  # the constraint is active
    assert np.max(np.abs(r.X_at(ts)[:, 0] - X)) <= 1e-3
    assert np.max(np.abs(r.Y.evaluate(ts)[:, 0] - Y)) <= 1e-3
    assert r.residual <= 1e-6
    assert skorohod_residual(b, r.X_at, r.Y, r.X.values) <= 1e-6
    tail = r.history[-3:]
    assert tail[-1] < tail[0]


def test_skorohod_nonconvergence():
    with pytest.raises(NonConvergenceError) as info:
        skorohod_solve(half_line, lambda s, x: 2.0 - x, [0.5], lebesgue(), tol=1e-12, max_iters=3)
    assert len(info.value.history) == 3


def test_stieltjes_with_time_driver_matches_lebesgue():
    tol = 1e-6
    b = lambda s, x: 2.0 - x
    a = skorohod_solve(half_line, b, [0.5], lebesgue(), tol=tol)
    z = BvDriver([0.0, 1.0], [0.0, 1.0])
    s = skorohod_stieltjes_solve(half_line, b, z, [0.5], lebesgue(), tol=tol)
    assert np.max(np.abs(a.X.values - s.X.values)) <= 2 * tol
    assert s.residual <= tol


def test_stieltjes_constant_integrand():
    # b = B constant: h = B (z - z(0)), Y' = -h inside a large box
    z = BvDriver([0.0, 0.3, 1.0], [0.0, 0.6, 0.2])
    fam = moving_normal_cone(Box([-10.0], [10.0]))
    r = skorohod_stieltjes_solve(fam, lambda s, x: 1.5, z, [0.5], lebesgue(), tol=1e-8)
    t = r.Y.nodes
    h = 1.5 * z(t)[:, 0]
    np.testing.assert_allclose(r.h(t)[:, 0], h, atol=1e-9)
    tt = np.linspace(0, 1, 100001)
    Y = 0.5 - np.concatenate(([0.0], np.cumsum(np.diff(tt) * 1.5 * 0.5 * (z(tt)[1:, 0] + z(tt)[:-1, 0]))))
    np.testing.assert_allclose(r.Y.evaluate(tt[::1000])[:, 0], Y[::1000], atol=1e-6)


def test_stieltjes_zero_drift_is_unperturbed():
    z = BvDriver([0.0, 1.0], [0.0, 3.0])
    r = skorohod_stieltjes_solve(half_line, lambda s, x: 0.0, z, [0.5], lebesgue())
    assert np.all(r.Y.values == 0.5) and np.all(r.X.values == 0.5)


# -- coupled second-order systems ---------------------------------------------------------


def oscillator(t, x, u):
    return -x


@pytest.mark.parametrize("family", [moving_normal_cone(Box([-10.0], [10.0])), psd_linear(np.zeros((1, 1)))])
def test_second_order_oscillator(family):
    r = solve_second_order(family, oscillator, [1.0], [0.0], lebesgue(3.0), tol=1e-4)
    t = r.u.nodes
    assert np.max(np.abs(r.x(t)[:, 0] - np.cos(t))) <= 1e-2
    assert np.max(np.abs(r.u.values[:, 0] + np.sin(t))) <= 1e-2
    np.testing.assert_allclose(r.x.values, 1.0 + path_integral(r.u), atol=1e-10)


def test_second_order_reductions():
    single = moving_normal_cone(Box([0.0], [0.0]))
    r = solve_second_order(single, oscillator, [2.0], [0.0], lebesgue())
    assert np.all(r.u.values == 0.0) and np.all(r.x.values == 2.0)
    fam = moving_normal_cone(lambda t: Box([t - 1.0], [t + 1.0]))
    m = MixedMeasure(VariationFunction.linear(2.0))
    r = solve_second_order(fam, None, [1.0], [0.0], m, eps=0.01)
    u = march(fam, build_partition(m, 0.01), [0.0])
    np.testing.assert_array_equal(r.u.values, u.values)
    np.testing.assert_allclose(r.x.values, 1.0 + path_integral(u), atol=1e-12)


def test_state_dependent_without_state_matches_second_order():
    tol = 1e-6
    sf = StateDependentFamily(lambda t, x: moving_normal_cone(Box([-10.0], [10.0])).snapshot(t), 0.0)
    a = solve_state_dependent(sf, oscillator, [1.0], [0.0], VariationFunction(1.0), tol=tol)
    b = solve_second_order(moving_normal_cone(Box([-10.0], [10.0])), oscillator, [1.0], [0.0], lebesgue(), tol=tol)
    assert np.max(np.abs(a.x.values - b.x.values)) <= 2 * tol


def test_state_dependent_one_iteration_when_static():
    # u stays at 0 (interior, no drift) so h = x0 is already the fixed point
    sf = state_interval_family(1.0, 1.0)
    r = solve_state_dependent(sf, None, [0.2], [0.0], VariationFunction(1.0), gamma=1.0)
    assert r.iterations == 1 and np.all(r.x.values == 0.2)


def test_state_dependent_self_consistency():
    tol = 1e-8
    sf = state_interval_family(0.3, 0.8, speed=1.0)
    var = VariationFunction.linear(1.0)
    r = solve_state_dependent(sf, None, [0.0], [0.0], var, gamma=0.8, tol=tol)
    # re-solve the inclusion with the converged h frozen
    P = r.u.partition
    u = march(sf.frozen(r.x), P, [0.0])
    assert np.max(np.abs(u.values - r.u.values)) <= 10 * tol
    np.testing.assert_allclose(r.x.values, path_integral(r.u) + 0.0, atol=tol)
