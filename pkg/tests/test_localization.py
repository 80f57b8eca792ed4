import time

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from cpal.localization import (Halfspace, LocalizationSet, analytic_center, barrier_gradient,
                               init_ball, is_feasible, phase_one)
from conftest import random_polytope


def barrier_oracle(A, b, r, x0):
    """Dense trust-region minimisation of -sum log(b - Ax) - log(r^2 - |x|^2)."""
    A, b = np.asarray(A, float), np.asarray(b, float)

    def fun(x):
        s, q = b - A @ x, r * r - x @ x
        if np.any(s <= 0) or q <= 0:
            return np.inf
        return -np.sum(np.log(s)) - np.log(q)

    def grad(x):
        s, q = b - A @ x, r * r - x @ x
        return A.T @ (1 / s) + 2 * x / q

    def hess(x):
        s, q = b - A @ x, r * r - x @ x
        return (A.T / s ** 2) @ A + 2 / q * np.eye(x.size) + 4 / q ** 2 * np.outer(x, x)

    res = minimize(fun, x0, jac=grad, hess=hess, method="trust-exact", options={"gtol": 1e-13})
    return res.x


TRIANGLE = [Halfspace([-1, 0], 0), Halfspace([0, -1], 0), Halfspace([1, 1], 1)]


def test_unit_disk_center_is_origin():
    c = analytic_center(init_ball(2))
    assert c.ok and np.array_equal(c.theta, [0.0, 0.0])


def test_triangle_center():
    t0 = time.perf_counter()
    L = init_ball(2, radius=10.0).add_cuts(TRIANGLE)
    c = analytic_center(L)
    assert c.ok
    oracle = barrier_oracle([[-1, 0], [0, -1], [1, 1]], [0, 0, 1], 10.0, np.array([0.2, 0.2]))
    assert np.allclose(c.theta, oracle, atol=1e-6, rtol=0)
    # the ball term moves the point by about 2e-4 at r = 10 and by nothing visible at r = 1e6
    assert np.allclose(c.theta, [1 / 3, 1 / 3], atol=1e-3)
    far = analytic_center(init_ball(2, radius=1e6).add_cuts(TRIANGLE))
    assert np.allclose(far.theta, [1 / 3, 1 / 3], atol=1e-6, rtol=0)
    assert time.perf_counter() - t0 < 1.0


def test_interval_center():
    L = init_ball(1, radius=10.0).add_cuts([Halfspace([1], 1), Halfspace([-1], 1)])
    assert abs(analytic_center(L).theta[0]) < 1e-9


@pytest.mark.parametrize("d", [2, 3, 5])
def test_symmetric_box_center(d):
    cuts = [Halfspace(s * np.eye(d)[i], 0.4) for i in range(d) for s in (1, -1)]
    c = analytic_center(init_ball(d).add_cuts(cuts))
    assert c.ok and np.max(np.abs(c.theta)) < 1e-6


def test_symmetric_cone_center():
    # cone symmetric about e1: center lies on the axis, at the radius fixed by the barrier
    d = 3
    cuts = []
    for k in range(6):
        phi = 2 * np.pi * k / 6
        cuts.append(Halfspace([-1.0, 2 * np.cos(phi), 2 * np.sin(phi)], 0.0))
    c = analytic_center(init_ball(d).add_cuts(cuts))
    assert c.ok
    assert np.max(np.abs(c.theta[1:])) < 1e-6
    # -6 log rho - log(1 - rho^2) is minimal at rho^2 = 6 / 8
    assert abs(c.theta[0] - np.sqrt(6 / 8)) < 1e-6


def test_empty_set_detected():
    L = init_ball(2).add_cuts([Halfspace([1, 0], -2)])
    c = analytic_center(L)
    assert c.status == "infeasible" and not c.feasible
    assert not is_feasible(L)


def test_feasibility_checks():
    assert is_feasible(init_ball(2).add_cuts([Halfspace([1, 0], 0.5)]))
    slab = init_ball(2).add_cuts([Halfspace([1, 0], 0), Halfspace([-1, 0], 0)])
    assert not is_feasible(slab)


def test_half_disk_and_duplicate_cut():
    L = init_ball(2).add_cuts([Halfspace([1, 0], 0)])
    assert L.contains([-0.5, 0.1]) and not L.contains([0.5, 0.1])
    L2 = L.add_cuts([Halfspace([1, 0], 0)])
    pts = np.random.default_rng(0).uniform(-1, 1, (500, 2))
    assert np.array_equal(L.contains_many(pts), L2.contains_many(pts))


def test_cuts_are_normalised_and_immutable():
    L = init_ball(2)
    L2 = L.add_cuts([Halfspace([3, 4], 5)])
    assert L.n_cuts == 0 and L2.n_cuts == 1
    assert np.allclose(L2.A.toarray(), [[0.6, 0.8]]) and np.allclose(L2.b, [1.0])


def test_bad_inputs():
    with pytest.raises(ValueError):
        Halfspace([0, 0], 1)
    with pytest.raises(ValueError):
        Halfspace([1, np.inf], 1)
    with pytest.raises(ValueError):
        init_ball(2).add_cuts([Halfspace([1, 0, 0], 1)])
    with pytest.raises(ValueError):
        LocalizationSet(0)
    with pytest.raises(ValueError):
        analytic_center(init_ball(2), tol=0)


def test_json_round_trip(tmp_path):
    L = init_ball(3, radius=2.0).add_cuts([Halfspace([1, 2, 0], 0.3), Halfspace([0, -1, 1], 0.1)])
    path = tmp_path / "L.json"
    L.to_json(path)
    back = LocalizationSet.from_json(path)
    assert back.radius == 2.0
    assert np.allclose(back.A.toarray(), L.A.toarray()) and np.allclose(back.b, L.b)


def test_keep_last_only_uses_recent_groups():
    L = LocalizationSet(2, keep_last=1)
    L = L.add_cuts([Halfspace([1, 0], 0.0)]).add_cuts([Halfspace([0, 1], 0.0)])
    act = L.active()
    assert act.n_cuts == 1 and np.allclose(act.A.toarray(), [[0, 1]])


def test_start_and_toward_do_not_change_the_center():
    gen = np.random.default_rng(3)
    A, b = random_polytope(gen, 4, 8)
    L = init_ball(4).add_cuts((A, b))
    plain = analytic_center(L).theta
    warm = analytic_center(L, start=np.zeros(4), toward=0.3 * np.ones(4) / 2).theta
    assert np.allclose(plain, warm, atol=1e-6)


def test_phase_one_witness_is_interior():
    gen = np.random.default_rng(4)
    A, b = random_polytope(gen, 3, 10)
    b = b - 0.05 - A @ np.full(3, 0.2)  # shift the set away from the origin
    L = init_ball(3).add_cuts((A, b))
    x, sig, feas = phase_one(L)
    if feas:
        assert np.all(L.slacks(x) > 0) and x @ x < 1


polytopes = st.tuples(st.integers(0, 2 ** 31 - 1), st.integers(1, 5), st.integers(1, 12))


@given(polytopes)
def test_center_matches_dense_oracle(args):
    seed, d, m = args
    A, b = random_polytope(np.random.default_rng(seed), d, m)
    L = init_ball(d).add_cuts((A, b))
    c = analytic_center(L)
    assert c.ok
    assert np.all(L.slacks(c.theta) > 0) and c.theta @ c.theta < 1
    oracle = barrier_oracle(L.A.toarray(), L.b, 1.0, np.zeros(d))
    assert np.allclose(c.theta, oracle, atol=1e-6)


@given(polytopes)
def test_gradient_small_at_ok_center(args):
    seed, d, m = args
    A, b = random_polytope(np.random.default_rng(seed), d, m)
    L = init_ball(d).add_cuts((A, b))
    c = analytic_center(L, tol=1e-10)
    assert c.ok
    assert np.linalg.norm(barrier_gradient(L, c.theta)) < 1e-3


@given(polytopes, st.floats(0.01, 100.0))
def test_row_rescaling_invariance(args, scale):
    seed, d, m = args
    A, b = random_polytope(np.random.default_rng(seed), d, m)
    c1 = analytic_center(init_ball(d).add_cuts((A, b))).theta
    c2 = analytic_center(init_ball(d).add_cuts((scale * A, scale * b))).theta
    assert np.allclose(c1, c2, atol=1e-7)


@given(polytopes)
def test_cut_through_satisfied_center_keeps_set_nonempty(args):
    seed, d, m = args
    gen = np.random.default_rng(seed)
    A, b = random_polytope(gen, d, m)
    L = init_ball(d).add_cuts((A, b))
    c = analytic_center(L).theta
    a = gen.standard_normal(d)
    L2 = L.add_cuts([Halfspace(a, float(a @ c) + 1e-3)])
    assert is_feasible(L2)
    assert analytic_center(L2).feasible


@given(polytopes)
def test_add_cuts_shrinks_the_set(args):
    seed, d, m = args
    gen = np.random.default_rng(seed)
    A, b = random_polytope(gen, d, m)
    L = init_ball(d)
    L2 = L.add_cuts((A, b))
    pts = gen.uniform(-1, 1, (400, d))
    assert np.all(L.contains_many(pts)[L2.contains_many(pts)])


@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 6), st.integers(1, 10))
def test_homogeneous_cuts_match_dense_oracle(seed, d, m):
    # all cuts through the origin: the separable formulation must give the same point
    gen = np.random.default_rng(seed)
    w = gen.standard_normal(d)
    A = -gen.standard_normal((m, d))
    A -= np.outer(A @ w + 0.5 * np.linalg.norm(A, axis=1) * np.linalg.norm(w), w) / (w @ w)
    L = init_ball(d).add_cuts((A, np.zeros(m)))
    c = analytic_center(L)
    assert c.ok
    oracle = barrier_oracle(L.A.toarray(), L.b, 1.0, 0.5 * w / np.linalg.norm(w))
    assert np.allclose(c.theta, oracle, atol=1e-6)


def test_thin_slab_far_from_origin_in_high_dimension():
    # the interior lies outside the cube inscribed in the ball, which a cube-only LP misses
    d = 400
    e0 = np.eye(d)[0]
    L = init_ball(d).add_cuts([Halfspace(-e0, -0.5), Halfspace(e0, 0.5 + 1e-4)])
    assert is_feasible(L)
    c = analytic_center(L)
    assert c.ok and abs(c.theta[0] - (0.5 + 5e-5)) < 1e-6


def test_emptiness_certified_by_the_ball():
    # every cut is satisfiable inside the enclosing cube but not inside the ball
    L = init_ball(3).add_cuts([Halfspace([-1, 0, 0], -0.8), Halfspace([0, -1, 0], -0.8)])
    assert not is_feasible(L)
    assert analytic_center(L).status == "infeasible"
    # shrinking the offsets below 1/sqrt(2) makes the set nonempty again
    L = init_ball(3).add_cuts([Halfspace([-1, 0, 0], -0.7), Halfspace([0, -1, 0], -0.7)])
    assert is_feasible(L) and analytic_center(L).ok
