import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_chain
from oblique_switch import (DomainError, StructuralError, absorption_moments, adjugate_identity_check,
                            analyze_chain, example1, example2, irreducible, validate_model)
from oblique_switch.markov import adjugate, excursion_inverse, minor


def _excursion_mc(P, cbar, i, j, n, rng):
    """Vectorised Monte Carlo of the cost accumulated from i until the first hit of j."""
    cum = np.cumsum(P, axis=1)
    state = np.full(n, i)
    cost = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        s = state[idx]
        cost[idx] += cbar[s]
        u = rng.random(idx.size)
        nxt = (u[:, None] > cum[s]).sum(axis=1)
        state[idx] = np.minimum(nxt, len(cbar) - 1)
        alive[idx] = state[idx] != j
    return cost.mean(), cost.std(ddof=1) / np.sqrt(n)


# ---- validate_model

def test_validate_example2():
    rep = validate_model([example2().P[0]], [np.ones(3)])
    assert rep.valid
    assert rep.c_hat == 1.0 and rep.c_check == 1.0


def test_validate_identity_flags_diagonal():
    rep = validate_model([np.eye(3)], [np.ones(3)])
    assert not rep.valid
    assert len(rep.diagonal_ones) == 3


def test_validate_row_defect_named():
    P = np.full((3, 3), 1 / 3)
    P[1] = [0.3, 0.3, 0.3]
    rep = validate_model([P], [np.ones(3)])
    assert not rep.valid
    assert any("row 2" in m for m in rep.messages())


def test_validate_dimension_mismatch():
    with pytest.raises(StructuralError):
        validate_model([np.full((3, 3), 1 / 3)], [np.ones(2)])


# ---- irreducible

def test_irreducible_examples(rng):
    assert irreducible(example1().P[0])
    block = np.zeros((4, 4))
    block[0, 1] = block[1, 0] = block[2, 3] = block[3, 2] = 1.0
    assert not irreducible(block)
    P = rng.uniform(0.1, 1.0, (5, 5))
    assert irreducible(P / P.sum(axis=1, keepdims=True))


# ---- analyze_chain

def test_two_state_excursions():
    a = analyze_chain([[0, 1], [1, 0]], [0.7, -0.2])
    np.testing.assert_allclose(a.mu, [0.5, 0.5])
    assert a.C[0, 1] == pytest.approx(0.7) and a.C[1, 0] == pytest.approx(-0.2)
    assert a.Cbar_diag[0] == pytest.approx(0.5)


def test_counterexample_mean_cost():
    a = analyze_chain(example2().P[0], [-0.5, 0.2, 0.2])
    np.testing.assert_allclose(a.mu, np.full(3, 1 / 3), atol=1e-15)
    assert a.mean_cost == pytest.approx(-0.1 / 3, abs=1e-15)


def test_reducible_raises():
    with pytest.raises(DomainError, match="excursion costs undefined"):
        analyze_chain(np.eye(2), [1.0, 1.0])


def test_excursion_costs_monte_carlo(rng):
    P = random_chain(rng, 4)
    c = rng.normal(size=4)
    a = analyze_chain(P, c)
    for i, j in [(0, 1), (2, 3), (3, 0)]:
        m, se = _excursion_mc(P, c, i, j, 200_000, rng)
        assert abs(m - a.C[i, j]) <= 3 * se + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_round_trip_identities(d, seed):
    r = np.random.default_rng(seed)
    P = random_chain(r, d)
    c = r.normal(size=d)
    a = analyze_chain(P, c)
    mc = a.mean_cost
    np.testing.assert_allclose(a.Cbar_diag * a.mu, mc, rtol=1e-9, atol=1e-12)
    Q = np.eye(d) - P
    for j in range(d):
        inv = excursion_inverse(Q, j)
        for i in range(d):
            if i == j:
                continue
            ii = i - (i > j)
            assert a.C[i, j] + a.C[j, i] == pytest.approx(mc / a.mu[i] * inv[ii, ii], rel=1e-9, abs=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_invariant_measure_is_stationary(d, seed):
    P = random_chain(np.random.default_rng(seed), d)
    a = analyze_chain(P, np.ones(d))
    np.testing.assert_allclose(a.mu @ P, a.mu, atol=1e-13)
    assert a.mu.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(a.mu_tilde / a.mu_tilde.sum(), a.mu, atol=1e-13)


def test_adjugate_matches_inverse(rng):
    A = rng.normal(size=(4, 4))
    np.testing.assert_allclose(adjugate(A), np.linalg.det(A) * np.linalg.inv(A), atol=1e-12)
    assert minor(A, 1, 2).shape == (3, 3)


# ---- absorption_moments

def test_geometric_moments():
    p = 0.3
    m = absorption_moments([[p]])
    assert m.expected_steps[0] == pytest.approx(1 / (1 - p))
    assert m.second_moment[0] == pytest.approx((1 + p) / (1 - p) ** 2)


def test_two_state_absorption():
    m = absorption_moments([[0, 0.5], [0.5, 0]])
    np.testing.assert_allclose(m.expected_steps, [2.0, 2.0])


def test_absorption_monte_carlo(rng):
    S = rng.uniform(size=(3, 3))
    S = 0.8 * S / S.sum(axis=1, keepdims=True)
    mom = absorption_moments(S)
    n = 400_000
    full = np.hstack([S, 1 - S.sum(axis=1, keepdims=True)])
    cum = np.cumsum(full, axis=1)
    state = np.zeros(n, dtype=int)
    count = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        count[idx] += 1
        u = rng.random(idx.size)
        state[idx] = np.minimum((u[:, None] > cum[state[idx]]).sum(axis=1), 3)
        alive[idx] = state[idx] != 3
    se1 = count.std(ddof=1) / np.sqrt(n)
    se2 = (count ** 2).std(ddof=1) / np.sqrt(n)
    assert abs(count.mean() - mom.expected_steps[0]) <= 3 * se1
    assert abs((count ** 2).mean() - mom.second_moment[0]) <= 3 * se2


def test_not_absorbing():
    with pytest.raises(DomainError, match="not absorbing"):
        absorption_moments([[0.0, 1.0], [1.0, 0.0]])


# ---- adjugate identity

def test_adjugate_identity(rng):
    assert adjugate_identity_check(example2().P[0]) <= 1e-12
    assert adjugate_identity_check(random_chain(rng, 5)) <= 1e-9
    cyc = np.roll(np.eye(3), 1, axis=1)
    assert adjugate_identity_check(cyc) == 0.0


def test_adjugate_identity_needs_three():
    with pytest.raises(ValueError, match="three distinct indices"):
        adjugate_identity_check([[0, 1], [1, 0]])
