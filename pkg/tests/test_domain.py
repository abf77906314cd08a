import cvxpy as cp
import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings, strategies as st

from conftest import random_chain, random_interior_instance
from oblique_switch import (ControlledTransitionModel, DomainError, ProjectionError, ValidationError,
                            analyze_chain, build_domain, classical_embedding, controlled_costs_counterexample,
                            emit_slice_polygon, euclidean_project, example1, example2, example3,
                            membership, nonemptiness_report, oblique_project, obstacle,
                            shift_to_positive_costs, slice_vertices, triangle_check, uncontrolled)
from oblique_switch.domain import (barycentric, barycentric_and_normal_cone, max_slack_point,
                                   obstacle_argmax, obstacle_values)

P2 = example2().P[0]


# ---- obstacle

def test_obstacle_example2_origin():
    assert obstacle(np.zeros(3), 0, example2()) == -1.0


@pytest.mark.parametrize("builder", [example1, example2, lambda: example3(grid=11, closed_form=False)])
def test_obstacle_translation(builder):
    m = builder()
    h = 0.37
    for i in range(3):
        assert obstacle(np.full(3, h), i, m) == pytest.approx(h - m.cbar[:, i].min(), abs=1e-14)


def test_obstacle_closed_form_origin():
    m = example3()
    assert obstacle(np.zeros(3), 0, m) == pytest.approx(-0.75, abs=1e-15)
    # fine grid search over u agrees with the closed form
    us = np.linspace(0, 1, 100_001)
    for y in np.random.default_rng(1).normal(size=(20, 3)):
        for i in range(3):
            q = us * y[(i + 1) % 3] + (1 - us) * y[(i + 2) % 3] - 1 + us * (1 - us)
            assert obstacle(y, i, m) == pytest.approx(q.max(), abs=1e-9)
            assert obstacle(y, i, m) >= q.max() - 1e-15


def test_obstacle_argmax_tie_takes_smallest():
    m = example1()
    # from mode 1 both controls reach a zero-valued neighbour at unit cost
    best, ctrl = obstacle_argmax(np.zeros((1, 3)), m)
    assert ctrl[0, 0] == 0
    assert best[0, 0] == -1.0


# ---- membership

def test_membership_examples():
    m = example2()
    ok, slack = membership(np.zeros(3), m)
    assert ok and slack == 1.0
    ok, slack = membership([2.0, 0, 0], m)
    assert ok and slack == pytest.approx(0.0, abs=1e-15)
    for v in slice_vertices(m):
        ok, slack = membership(v, m)
        assert ok and abs(slack) < 1e-12


# ---- nonemptiness

def test_report_example2():
    cert = nonemptiness_report(example2())
    assert cert.verdict == "nonempty-interior"
    assert cert.mu_cbar[0] == pytest.approx(1.0)
    assert cert.agreement and cert.strict_agreement


def test_report_negative_mean_cost():
    cert = nonemptiness_report(uncontrolled(P2, [-1.0, 0.4, 0.4]))
    assert cert.mu_cbar[0] == pytest.approx(-0.2 / 3)
    assert cert.verdict == "empty"
    assert cert.agreement


def test_report_counterexample():
    cert = nonemptiness_report(controlled_costs_counterexample())
    assert cert.chat_pair_min > 0
    assert cert.mu_chat == pytest.approx(-1 / 30)
    assert cert.verdict == "empty"


def test_report_zero_costs_boundary():
    cert = nonemptiness_report(example2(0.0))
    assert cert.verdict == "nonempty-empty-interior"


def test_report_reducible_control():
    # mode 3 is left for good under the first control
    P = np.stack([np.array([[0, 1, 0], [1, 0, 0], [1, 0, 0.0]]), P2])
    m = ControlledTransitionModel(P=P, cbar=np.ones((2, 3)), controls=(0, 1))
    cert = nonemptiness_report(m)
    assert not cert.markov_available
    assert cert.verdict == "nonempty-interior"


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1), st.floats(-1.5, 1.5))
def test_lp_agrees_with_scipy(d, seed, shift):
    r = np.random.default_rng(seed)
    P = random_chain(r, d)
    c = r.normal(size=d) + shift
    m = uncontrolled(P, c)
    s, y = max_slack_point(m)
    N, b, _ = m.half_spaces()
    A = np.hstack([N, np.ones((N.shape[0], 1))])
    Aeq = np.zeros((1, d + 1))
    Aeq[0, d - 1] = 1
    ref = scipy.optimize.linprog(np.r_[np.zeros(d), -1.0], A_ub=A, b_ub=b, A_eq=Aeq, b_eq=[0],
                                 bounds=[(None, None)] * d + [(None, 1e6)], method="highs")
    assert s == pytest.approx(-ref.fun, abs=1e-9)
    mc = analyze_chain(P, c).mean_cost
    if abs(mc) > 1e-8:
        assert (s > 0) == (mc > 0)


# ---- slice vertices, barycentric coordinates

def test_example2_vertices():
    V = slice_vertices(example2())
    np.testing.assert_allclose(V, [[2, 0, 0], [0, 2, 0], [-2, -2, 0]], atol=1e-14)


def test_two_state_vertices():
    V = slice_vertices(uncontrolled([[0, 1], [1, 0]], [0.3, 0.5]))
    np.testing.assert_allclose(sorted(V[:, 0]), [-0.3, 0.5], atol=1e-15)


def test_vertices_need_interior():
    with pytest.raises(DomainError, match="interior empty"):
        slice_vertices(example2(0.0))


def test_vertices_hull_random_d4(rng):
    P, c = random_interior_instance(rng, 4)
    m = uncontrolled(P, c)
    V = slice_vertices(m)
    lam = rng.dirichlet(np.ones(4), size=1000)
    assert all(membership(y, m)[0] for y in lam @ V)
    # random feasible slice points via rejection in the bounding box
    lo, hi = V.min(axis=0), V.max(axis=0)
    pts = []
    while len(pts) < 1000:
        y = rng.uniform(lo, hi)
        y[-1] = 0.0
        if membership(y, m, tol=0.0)[0]:
            pts.append(y)
    assert barycentric(np.array(pts), V).min() >= -1e-9


def test_barycentric_and_cone_examples():
    m = example2()
    V = slice_vertices(m)
    lam, support, G, idx = barycentric_and_normal_cone(V[0], m)
    np.testing.assert_allclose(lam, [1, 0, 0], atol=1e-14)
    assert list(idx) == [1, 2]
    lam, support, G, idx = barycentric_and_normal_cone(V.mean(axis=0), m)
    assert len(G) == 0
    mid = 0.5 * (V[0] + V[1])
    _, _, G, idx = barycentric_and_normal_cone(mid, m)
    assert list(idx) == [2]
    z = np.random.default_rng(0).dirichlet(np.ones(3), 1000) @ V
    assert np.max((z - mid) @ G[0]) <= 1e-9
    with pytest.raises(DomainError, match="outside slice"):
        barycentric_and_normal_cone([5.0, 5.0, 0.0], m)


# ---- projections

def _lp_least_point(y, model):
    N, b, _ = model.half_spaces()
    d = model.d
    res = scipy.optimize.linprog(np.ones(d), A_ub=N, b_ub=b, bounds=[(v, None) for v in y], method="highs")
    return res.x


def test_oblique_fixed_point_and_hand_case():
    m = example2()
    y = np.array([0.3, -0.2, 0.1])
    np.testing.assert_array_equal(oblique_project(y, m), y)
    m2 = classical_embedding(np.array([[0, 1.0], [1.0, 0]]))
    np.testing.assert_allclose(oblique_project([5.0, 0.0], m2), [5.0, 4.0], atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_oblique_matches_lp_least_point(seed):
    r = np.random.default_rng(seed)
    for m in (example2(), example1(), uncontrolled(random_chain(r, 4), r.uniform(0.1, 1, 4))):
        y = r.normal(scale=3, size=m.d)
        z = oblique_project(y, m)
        np.testing.assert_allclose(z, _lp_least_point(y, m), atol=1e-8)
        assert np.all(z >= y)
        assert membership(z, m, tol=1e-10)[0]


def test_oblique_closed_form_bracketed_by_grid():
    r = np.random.default_rng(3)
    exact, grid = example3(), example3(grid=201, closed_form=False)
    for y in r.normal(scale=2, size=(30, 3)):
        z = oblique_project(y, exact)
        zg = oblique_project(y, grid)
        assert np.all(z >= zg - 1e-12)
        assert np.max(z - zg) < 1e-4
        assert np.max(obstacle_values(z, exact) - z) <= 1e-12


def test_oblique_projection_empty_domain():
    m = uncontrolled(P2, [-1.0, 0.4, 0.4])
    with pytest.raises(ProjectionError):
        oblique_project(np.zeros(3), m)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_euclidean_matches_cvxpy(seed):
    r = np.random.default_rng(seed)
    m = example1() if seed % 2 else example2()
    y = r.normal(scale=3, size=3)
    z = euclidean_project(y, m)
    N, b, _ = m.half_spaces()
    x = cp.Variable(3)
    cp.Problem(cp.Minimize(cp.sum_squares(x - y)), [N @ x <= b]).solve()
    assert np.linalg.norm(z - y) == pytest.approx(np.linalg.norm(x.value - y), abs=1e-6)
    assert membership(z, m, tol=1e-9)[0]


def test_euclidean_examples():
    m = example2()
    y = np.array([2.0, 0.0, 0.0])
    np.testing.assert_allclose(euclidean_project(y, m), y, atol=1e-14)
    y = np.array([4.0, -1.0, 0.5])
    h = 1.75
    np.testing.assert_allclose(euclidean_project(y + h, m), euclidean_project(y, m) + h, atol=1e-9)
    with pytest.raises(DomainError):
        euclidean_project(y, uncontrolled(P2, [-1.0, 0.4, 0.4]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_translation_invariance(seed, h):
    r = np.random.default_rng(seed)
    m = example1()
    y = r.normal(size=3)
    assert membership(y, m)[0] == membership(y + h, m)[0]
    np.testing.assert_allclose(oblique_project(y + h, m), oblique_project(y, m) + h, atol=1e-9 * (1 + abs(h)))


# ---- signed costs

def test_shift_zero_is_identity():
    m = example2()
    s = shift_to_positive_costs(np.zeros(3), m)
    np.testing.assert_array_equal(s.cbar, m.cbar)


def test_shift_signed_instance():
    m = uncontrolled(P2, [-0.4, 1.0, 0.9])
    assert nonemptiness_report(m).verdict == "nonempty-interior"
    _, y0 = max_slack_point(m)
    s = shift_to_positive_costs(y0, m)
    assert np.all(s.cbar > 0)
    with pytest.raises(ValidationError):
        shift_to_positive_costs(np.array([10.0, 0, 0]), m)


# ---- classical embedding

def test_classical_is_example1():
    m = classical_embedding(np.ones((3, 3)) - np.eye(3))
    np.testing.assert_array_equal(m.P, example1().P)
    np.testing.assert_array_equal(m.cbar, example1().cbar)
    two = classical_embedding(np.array([[0, 0.3], [0.7, 0]]))
    assert two.n_controls == 1
    np.testing.assert_array_equal(two.P[0], [[0, 1], [1, 0]])
    with pytest.raises(ValidationError):
        classical_embedding(np.eye(3))


def test_classical_half_spaces_random(rng):
    c = rng.uniform(0.1, 2, (4, 4))
    np.fill_diagonal(c, 0)
    m = classical_embedding(c)
    N, b, _ = m.half_spaces()
    direct = {(i, j) for i in range(4) for j in range(4) if i != j}
    got = set()
    for row, off in zip(N, b):
        i = int(np.flatnonzero(row < 0)[0])
        j = int(np.flatnonzero(row > 0)[0])
        assert off == c[i, j]
        got.add((i, j))
    assert got == direct


# ---- triangle inequality

def test_triangle_examples():
    rep = triangle_check(analyze_chain(P2, np.ones(3)))
    assert rep.holds and rep.consistent and rep.min_round_trip > 0
    bad = triangle_check(analyze_chain(P2, [-1.0, 0.4, 0.4]))
    assert not bad.holds and bad.consistent
    two = triangle_check(analyze_chain([[0, 1], [1, 0]], [0.5, -0.2]))
    assert two.holds and two.min_round_trip == pytest.approx(0.3)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_triangle_consistent_with_mean_cost(d, seed):
    r = np.random.default_rng(seed)
    a = analyze_chain(random_chain(r, d), r.normal(size=d))
    if abs(a.mean_cost) > 1e-8:
        assert triangle_check(a).consistent


# ---- polygon

def test_polygon_example1_hexagon():
    pts = emit_slice_polygon(example1())
    assert len(pts) == 6
    assert all(membership(p, example1(), tol=1e-8)[0] for p in pts)


def test_polygon_example3_contains_no_cheaper_region():
    pts = emit_slice_polygon(example3(), resolution=90)
    assert len(pts) == 90
    assert all(membership(p, example3(), tol=1e-8)[0] for p in pts)
    assert all(membership(p, example1(), tol=1e-8)[0] for p in pts)


def test_polygon_resolution_three():
    pts = emit_slice_polygon(example3(), resolution=3)
    assert len(pts) == 3 and all(membership(p, example3(), tol=1e-8)[0] for p in pts)


def test_polygon_empty_interior():
    with pytest.raises(DomainError):
        emit_slice_polygon(example2(0.0))


def test_build_domain():
    dom = build_domain(example2())
    assert dom.member(np.zeros(3))
    np.testing.assert_allclose(dom.slice_vertices, slice_vertices(example2()))
