import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oblique_switch import CapabilityError, ConstructionError, example2, uncontrolled
from oblique_switch.reflection import (ReflectionField, build_H_controlled_dim3_vertices, build_H_dim3,
                                       build_H_markovian, build_H_symmetric, cone_eta, copositivity_check,
                                       dim4_counterexample, symmetric_vertex_matrix, verify_H)
from oblique_switch.markov import minor
from oblique_switch.model import dim4_counterexample_matrix


# ---- copositivity

def test_copositivity_pd_case():
    Q = np.eye(3) - example2().P[0]
    res = copositivity_check(minor(Q, 0, 0))
    assert res.strict and res.method == "positive-definite"


def test_copositivity_witness():
    res = copositivity_check([[1, -3], [-3, 1]])
    assert res.status == "not-strict"
    x = res.witness
    np.testing.assert_allclose(x, [1, 1])
    assert x @ np.array([[1, -3], [-3, 1]]) @ x == -4


def test_copositivity_diagonally_dominant(rng):
    A = rng.normal(size=(5, 5))
    S = 0.5 * (A + A.T)
    np.fill_diagonal(S, np.abs(S).sum(axis=1) + 0.1)
    assert copositivity_check(S).strict


def test_copositive_but_indefinite():
    # nonnegative entries: copositive though not positive definite
    res = copositivity_check([[1, 2], [2, 1]])
    assert res.strict and res.method == "nonnegative-entries"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 4))
def test_copositivity_exact_vs_sampling(seed, n):
    r = np.random.default_rng(seed)
    A = r.normal(size=(n, n))
    S = 0.5 * (A + A.T)
    res = copositivity_check(S)
    X = r.dirichlet(np.ones(n), 20_000)
    sampled = np.einsum("ij,jk,ik->i", X, S, X).min()
    assert sampled >= (res.min_value if res.min_value is not None else -np.inf) - 1e-12
    if res.status == "not-strict":
        w = res.witness
        assert w.min() >= 0 and w @ S @ w <= 1e-12


# ---- eta

def test_cone_eta_identity():
    assert cone_eta(np.eye(3), np.array([[1.0, 0, 0], [0, 1, 0]])) == pytest.approx(1.0)
    # two generators at an obtuse angle: identity still has eta 1 on unit vectors
    assert cone_eta(np.eye(2), np.array([[1.0, 0], [-1, 0.1]])) == pytest.approx(1.0)


def test_cone_eta_against_sampling(rng):
    H = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    G = rng.normal(size=(2, 3))
    alpha = rng.exponential(size=(200_000, 2))
    V = alpha @ G
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    sampled = np.einsum("ij,jk,ik->i", V, H, V).min()
    eta = cone_eta(H, G)
    assert eta <= sampled + 1e-12
    assert sampled - eta < 1e-3


# ---- Markovian construction

def test_markovian_example2():
    f = build_H_markovian(example2())
    assert f.certificate.passed and f.certificate.eta_min > 0
    # H(y^i) maps each active normal n_j to -e_j
    Q = np.eye(3) - example2().P[0]
    for i in range(3):
        H = f.evaluate(f.vertices[i])
        for j in range(3):
            if j != i:
                np.testing.assert_allclose(H @ (-Q[j]), -np.eye(3)[j], atol=1e-12)


def test_markovian_dim4_refused():
    with pytest.raises(ConstructionError) as exc:
        build_H_markovian(uncontrolled(dim4_counterexample_matrix(), np.ones(4)))
    assert exc.value.witness is not None


def test_field_translation_invariance():
    # dyadic values keep y + h exact, so the slice representative is identical
    f = build_H_markovian(example2(), verify=False)
    y = np.array([0.375, -0.25, 0.125])
    for h in (-3.0, 0.5, 8.0):
        np.testing.assert_array_equal(f.evaluate(y + h), f.evaluate(y))


def test_field_off_domain_uses_projection():
    f = build_H_markovian(example2(), verify=False)
    np.testing.assert_allclose(f.evaluate([9.0, 0.0, 0.0]), f.evaluate([2.0, 0.0, 0.0]), atol=1e-9)


# ---- dim-3 field

def test_dim3_half():
    f = build_H_dim3(0.5, 0.5, 0.5)
    assert f.certificate.passed and f.certificate.eta_min > 1e-3
    H1 = f.vertex_matrices[2]
    np.testing.assert_allclose(H1, 16 / 3 * np.array([[1.5, 1.25, 1], [1.25, 1.5, 1], [1, 1, 1]]), atol=1e-12)
    assert np.linalg.eigvalsh(H1).min() > 0
    np.testing.assert_allclose(H1 @ [-1, 0.5, 0.5], [-2, 0, 0], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_dim3_vertex_identities(p, q, r):
    f = build_H_dim3(p, q, r, verify=False)
    H1 = f.vertex_matrices[2]
    np.testing.assert_allclose(H1 @ [-1, p, 1 - p], [-1 / q, 0, 0], atol=1e-9 * np.abs(H1).max())
    np.testing.assert_allclose(H1 @ [q, -1, 1 - q], [0, -1 / p, 0], atol=1e-9 * np.abs(H1).max())
    for M in f.vertex_matrices:
        np.testing.assert_allclose(M, M.T)
        assert np.linalg.eigvalsh(M).min() > 0


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_dim3_certificate_random(p, q, r):
    assert build_H_dim3(p, q, r, sample_count=60).certificate.passed


@pytest.mark.parametrize("bad", [(0.0, 0.5, 0.5), (0.5, 1.0, 0.5), (0.5, 0.5, 0.0)])
def test_dim3_refuses_degenerate(bad):
    with pytest.raises(ConstructionError):
        build_H_dim3(*bad)


# ---- symmetric family

def _closed_det_trace(d, a):
    k = (d - 1) / d
    return (a - 2 * k) * (d - 1) * k ** (d - 2), d * a - 2 * k


def test_symmetric_d3_numbers():
    H = symmetric_vertex_matrix(3)
    assert np.linalg.det(H) == pytest.approx(8 / 9, abs=1e-12)
    assert np.trace(H) == pytest.approx(14 / 3, abs=1e-12)


@pytest.mark.parametrize("d", [3, 4, 5])
def test_symmetric_family(d):
    f = build_H_symmetric(d, sample_count=200)
    assert f.certificate.passed
    det, tr = _closed_det_trace(d, 2.0)
    for M in f.vertex_matrices:
        assert np.linalg.det(M) == pytest.approx(det, abs=1e-10)
        assert np.trace(M) == pytest.approx(tr, abs=1e-10)
    Hd = f.vertex_matrices[-1]
    n1 = -(np.eye(d) - f.model.P[0])[0]
    np.testing.assert_allclose(Hd @ n1, -np.eye(d)[0], atol=1e-12)


def test_symmetric_eigen_multiplicity():
    d = 5
    ev = np.linalg.eigvalsh(symmetric_vertex_matrix(d))
    assert np.sum(np.isclose(ev, (d - 1) / d, atol=1e-12)) == d - 2


def test_symmetric_refuses_small_d():
    with pytest.raises(ConstructionError):
        build_H_symmetric(2)


# ---- controlled example vertices

def test_controlled_vertices():
    rec = build_H_controlled_dim3_vertices()
    assert max(rec.identity_residuals.values()) <= 1e-10
    f = rec.field
    np.testing.assert_array_equal(f.vertex_matrices[0], [[1, 1, 1], [1, 2, 1], [1, 1, 2]])
    np.testing.assert_array_equal(f.vertex_matrices[1], [[2, 1, 1], [1, 1, 1], [1, 1, 2]])
    for M in f.vertex_matrices:
        assert np.linalg.eigvalsh(M).min() > 0
    assert f.certificate.passed
    with pytest.raises(CapabilityError):
        f.evaluate([0.1, 0.1, 0.0])


def test_controlled_vertices_are_boundary_points():
    from oblique_switch import membership
    f = build_H_controlled_dim3_vertices(verify=False).field
    for v in f.vertices:
        ok, slack = membership(v, f.model)
        assert ok and abs(slack) < 1e-12


# ---- verify_H failure path and dimension-4 witness

def test_zero_field_fails():
    f = build_H_markovian(example2(), verify=False)
    zero = ReflectionField("markovian-barycentric", f.model, f.vertices, np.zeros_like(f.vertex_matrices))
    cert = verify_H(zero, sample_count=50)
    assert not cert.passed and cert.eta_min == 0.0
    assert cert.failures and "sample" in cert.failures[0]


def test_dim4_witness():
    w = dim4_counterexample()
    assert abs(w.vHv) <= 1e-12
    assert w.irreducible and w.row_sum_defect <= 1e-15
    np.testing.assert_allclose(w.normal_sums, 0.0, atol=1e-15)
    for j in range(3):
        np.testing.assert_allclose(w.H @ w.normals[j], -np.eye(4)[j], atol=1e-12)
