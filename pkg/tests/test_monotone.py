import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from bvrc.errors import CapabilityError, DomainError, InfeasibleSetError
from bvrc.monotone import (
    Ball,
    Box,
    Halfspace,
    Intersection,
    LinearOperator,
    NormalCone,
    hausdorff,
    lemma23_bound,
    moving_normal_cone,
    project,
    prox_family,
    psd_linear,
    pseudo_distance,
    resolvent,
    soft_threshold,
    state_interval_family,
    vladimirov_dis,
)

coords = st.floats(-5, 5)


# -- bodies ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "body, x, expected",
    [
        (Box([0.0], [np.inf]), [-0.5], [0.0]),
        (Ball([0.0, 0.0], 1.0), [3.0, 4.0], [0.6, 0.8]),
        (Intersection([Halfspace([1, 0], 0), Halfspace([0, 1], 0)]), [1.0, 1.0], [0.0, 0.0]),
        (Halfspace([1.0, 1.0], 1.0), [1.0, 1.0], [0.5, 0.5]),
    ],
)
def test_project_examples(body, x, expected):
    np.testing.assert_allclose(project(body, x), expected, atol=1e-12)


def test_intersection_matches_constrained_minimiser():
    # Dykstra vs. an SLSQP solve of min |y - x|^2 over a ball cut by a halfspace
    body = Intersection([Ball([0.0, 0.0], 1.0), Halfspace([1.0, 2.0], 0.5)])
    x = np.array([1.5, 1.0])
    cons = [
        {"type": "ineq", "fun": lambda y: 1.0 - y @ y},
        {"type": "ineq", "fun": lambda y: 0.5 - y[0] - 2 * y[1]},
    ]
    ref = minimize(lambda y: np.sum((y - x) ** 2), np.zeros(2), constraints=cons, tol=1e-14).x
    np.testing.assert_allclose(body.project(x), ref, atol=1e-6)


@pytest.mark.parametrize(
    "make",
    [
        lambda: Box([1.0], [0.0]),
        lambda: Ball([0.0], -1.0),
        lambda: Halfspace([0.0, 0.0], 1.0),
        lambda: Intersection([Halfspace([1.0], -1.0), Halfspace([-1.0], -1.0)]),
    ],
)
def test_invalid_bodies(make):
    with pytest.raises((DomainError, InfeasibleSetError)):
        make()


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (Box([0.0], [1.0]), Box([0.5], [2.0]), 1.0),
        (Ball([0.0, 0.0], 1.0), Ball([0.0, 0.0], 2.0), 1.0),
        (Box([0.0], [1.0]), Box([0.0], [1.0]), 0.0),
        (Box([0.0], [np.inf]), Box([1.0], [np.inf]), 1.0),
        (Halfspace([1.0], 0.0), Halfspace([2.0], 2.0), 1.0),
        (Halfspace([1.0, 0.0], 0.0), Halfspace([0.0, 1.0], 0.0), math.inf),
    ],
)
def test_hausdorff_examples(a, b, expected):
    assert hausdorff(a, b) == expected


def _sampled_excess(a, b, rng, n=4000):
    # brute force: sup over random points of A of dist(x, B)
    lo, hi = a.lower, a.upper
    pts = rng.uniform(lo, hi, (n, len(lo)))
    corners = np.array(np.meshgrid(*zip(lo, hi))).reshape(len(lo), -1).T
    pts = np.vstack((pts, corners))
    return max(np.linalg.norm(p - b.project(p)) for p in pts)


def test_box_hausdorff_against_sampling(rng):
    for _ in range(20):
        lo1, lo2 = rng.uniform(-2, 0, (2, 2))
        a, b = Box(lo1, lo1 + rng.uniform(0.1, 2, 2)), Box(lo2, lo2 + rng.uniform(0.1, 2, 2))
        brute = max(_sampled_excess(a, b, rng), _sampled_excess(b, a, rng))
        assert hausdorff(a, b) == pytest.approx(brute, abs=1e-9)


@given(st.lists(st.tuples(coords, st.floats(0, 3)), min_size=3, max_size=3))
def test_hausdorff_triangle_inequality(spec):
    a, b, c = (Box([lo], [lo + w]) for lo, w in spec)
    assert hausdorff(a, c) <= hausdorff(a, b) + hausdorff(b, c) + 1e-12


@given(st.tuples(coords, coords), st.tuples(coords, coords), st.tuples(coords, coords), st.floats(0, 3))
def test_projection_firmly_nonexpansive(c, x, y, radius):
    body = Ball(c, radius)
    x, y = np.array(x), np.array(y)
    px, py = body.project(x), body.project(y)
    assert np.sum((px - py) ** 2) <= (px - py) @ (x - y) + 1e-10


# -- snapshots and families -----------------------------------------------------


def test_resolvent_examples():
    fam = moving_normal_cone(Box([-1.0], [1.0]))
    for eta in (0.01, 1.0, 100.0):
        assert resolvent(fam, 0.0, eta, [2.0])[0] == 1.0
    assert psd_linear(np.eye(1)).resolvent(0.0, 0.5, [1.0])[0] == pytest.approx(2 / 3)
    assert prox_family(soft_threshold()).resolvent(0.0, 0.3, [0.1])[0] == 0.0


@given(st.floats(-3, 3), st.floats(0.01, 3), st.floats(0.1, 2))
def test_soft_threshold_against_grid_minimiser(x, eta, weight):
    ys = np.linspace(-4, 4, 160001)
    ref = ys[np.argmin(weight * np.abs(ys) + (ys - x) ** 2 / (2 * eta))]
    got = soft_threshold(weight).resolvent(eta, [x])[0]
    assert got == pytest.approx(ref, abs=1e-4)


def test_psd_linear_rejects_bad_matrix():
    with pytest.raises(DomainError):
        LinearOperator([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(DomainError):
        LinearOperator([[-1.0]])


def test_psd_linear_growth_from_samples():
    fam = psd_linear(lambda t: np.diag([1 + t, 0.5]), horizon=2.0)
    assert fam.growth == pytest.approx(3.0)
    assert psd_linear(np.diag([2.0, 1.0])).growth == pytest.approx(2.0)


@given(st.floats(0.01, 10), st.lists(coords, min_size=4, max_size=4))
def test_psd_monotone_and_resolvent_nonexpansive(eta, xs):
    A = np.array([[2.0, 1.0], [1.0, 1.0]])
    op = LinearOperator(A)
    x, y = np.array(xs[:2]), np.array(xs[2:])
    assert (A @ x - A @ y) @ (x - y) >= -1e-10
    assert np.linalg.norm(op.resolvent(eta, x) - op.resolvent(eta, y)) <= np.linalg.norm(x - y) + 1e-10


def test_normal_cone_resolvent_is_projection(rng):
    body = Intersection([Ball([0.0, 0.0], 1.0), Halfspace([1.0, 0.0], 0.2)])
    fam = moving_normal_cone(lambda t: body.translate([t, 0.0]))
    for _ in range(20):
        t, x = rng.uniform(0, 1), rng.normal(0, 2, 2)
        p = project(body.translate([t, 0.0]), x)
        for eta in (0.1, 1.0, 7.0):
            np.testing.assert_allclose(fam.resolvent(t, eta, x), p, atol=1e-12)


def test_family_membership():
    fam = moving_normal_cone(lambda t: Box([t - 1], [t + 1]))
    assert fam.contains(0.5, [1.4]) and not fam.contains(0.0, [1.4])
    assert psd_linear(np.eye(2)).contains(0.0, [5.0, 5.0])


def test_eta_must_be_positive():
    with pytest.raises(DomainError):
        moving_normal_cone(Box([0.0], [1.0])).resolvent(0.0, 0.0, [0.5])


# -- pseudo-distance and the resolvent estimate -------------------------------------


def test_vladimirov_dis_examples():
    fam = moving_normal_cone(lambda t: Box([0.0], [1.0]) if t < 0.5 else Box([0.5], [2.0]))
    assert vladimirov_dis(fam, 0.0, 1.0) == 1.0
    assert vladimirov_dis(fam, 0.0, 0.2) == 0.0
    balls = moving_normal_cone(lambda t: Ball([0.0, 0.0], 1.0 + t))
    assert vladimirov_dis(balls, 0.0, 1.0) == 1.0
    assert pseudo_distance(LinearOperator(np.eye(1)), LinearOperator(2 * np.eye(1))) == math.inf
    with pytest.raises(NotImplementedError):
        pseudo_distance(soft_threshold(), soft_threshold(2.0))


def test_lemma23_bound_examples():
    A, B = NormalCone(Box([-1.0], [1.0])), NormalCone(Box([-1.0], [1.0]))
    assert lemma23_bound(A, B, 0.7, [0.5]) == 0.0
    A, B = NormalCone(Box([0.0], [1.0])), NormalCone(Box([0.2], [1.2]))
    bound = lemma23_bound(A, B, 0.1, [0.0])
    assert bound == pytest.approx(0.2 + math.sqrt(0.1 * 0.2))
    assert abs(0.0 - B.resolvent(0.1, [0.0])[0]) <= bound
    L = LinearOperator(np.eye(1))
    assert lemma23_bound(L, L, 0.2, [1.0]) == pytest.approx(0.2)
    with pytest.raises(CapabilityError):
        lemma23_bound(soft_threshold().__class__(lambda e, x: x), L, 0.1, [0.0])


def test_min_section_outside_domain():
    with pytest.raises(DomainError):
        NormalCone(Box([0.0], [1.0])).min_section([2.0])


def test_state_interval_family_freezes_path():
    sf = state_interval_family(1.0, 0.5, speed=0.2)
    fam = sf.frozen(lambda t: np.array([2.0]))
    assert fam.resolvent(1.0, 0.1, [5.0])[0] == pytest.approx(0.2 + 1.0 + 1.0)
    assert sf.lipschitz == 0.5
