"""Finite-state Markov chain analytics.

Excursion costs, invariant measures and absorbing-chain moments for the
transition matrices that drive the randomised switching.  Indices are
0-based throughout; ``Q`` always denotes ``I - P``.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .errors import DomainError, StructuralError

__all__ = [
    "ValidationReport",
    "ChainAnalysis",
    "AbsorptionMoments",
    "validate_model",
    "irreducible",
    "analyze_chain",
    "excursion_inverse",
    "absorption_moments",
    "adjugate_identity_check",
    "adjugate",
    "minor",
]

ROW_SUM_TOL = 1e-9
MU_CROSSCHECK_TOL = 1e-8
COND_WARN = 1e12
DET_ROUTE_MAX_DIM = 8


def minor(A, i, j):
    """Matrix ``A`` with row ``i`` and column ``j`` removed."""
    A = np.asarray(A)
    return np.delete(np.delete(A, i, axis=0), j, axis=1)


def adjugate(A):
    """Classical adjugate (transpose of the cofactor matrix)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return np.ones((1, 1))
    cof = np.empty_like(A)
    for r in range(n):
        for c in range(n):
            cof[r, c] = (-1) ** (r + c) * np.linalg.det(minor(A, r, c))
    return cof.T


@dataclass(frozen=True)
class ValidationReport:
    d: int
    n_controls: int
    row_defects: list = field(default_factory=list)
    negative_entries: list = field(default_factory=list)
    diagonal_ones: list = field(default_factory=list)
    nonfinite_costs: list = field(default_factory=list)
    c_hat: float = np.nan
    c_check: float = np.nan

    @property
    def valid(self) -> bool:
        return not (self.row_defects or self.negative_entries
                    or self.diagonal_ones or self.nonfinite_costs)

    def messages(self) -> list[str]:
        out = []
        for u, i, s in self.row_defects:
            out.append(f"control {u}: row {i + 1} sums to {s!r}")
        for u, i, j, v in self.negative_entries:
            out.append(f"control {u}: entry ({i + 1},{j + 1}) = {v!r} outside [0,1]")
        for u, i in self.diagonal_ones:
            out.append(f"control {u}: P[{i + 1},{i + 1}] = 1 (mode cannot be left)")
        for u, i in self.nonfinite_costs:
            out.append(f"control {u}: cost of mode {i + 1} is not finite")
        return out

    def __str__(self):
        if self.valid:
            return f"valid model: d={self.d}, controls={self.n_controls}, c_hat={self.c_hat:g}, c_check={self.c_check:g}"
        return "invalid model:\n  " + "\n  ".join(self.messages())


def validate_model(P_family, costs) -> ValidationReport:
    """Check a family of stochastic matrices and mean cost vectors.

    Parameters
    ----------
    P_family : array_like, shape (n_controls, d, d)
        One transition matrix per control.
    costs : array_like, shape (n_controls, d)
        Mean switching cost of each mode under each control.

    Returns
    -------
    ValidationReport
        Lists every row-sum defect, entry outside ``[0, 1]`` and diagonal
        entry equal to one.  ``c_hat``/``c_check`` are the smallest and largest
        cost over modes and controls.

    Raises
    ------
    StructuralError
        If shapes are inconsistent.
    """
    P = np.asarray(P_family, dtype=float)
    c = np.asarray(costs, dtype=float)
    if P.ndim == 2:
        P = P[None]
    if c.ndim == 1:
        c = c[None]
    if P.ndim != 3 or P.shape[1] != P.shape[2]:
        raise StructuralError(f"transition family must have shape (n, d, d), got {P.shape}")
    n, d, _ = P.shape
    if d < 2:
        raise StructuralError("need at least two modes")
    if c.shape != (n, d):
        raise StructuralError(f"costs must have shape {(n, d)}, got {c.shape}")

    rows, neg, diag, nonfin = [], [], [], []
    for u in range(n):
        s = P[u].sum(axis=1)
        for i in np.flatnonzero(~(np.abs(s - 1.0) <= ROW_SUM_TOL)):
            rows.append((u, int(i), float(s[i])))
        bad = np.argwhere(~((P[u] >= 0.0) & (P[u] <= 1.0)))
        neg.extend((u, int(i), int(j), float(P[u, i, j])) for i, j in bad)
        diag.extend((u, int(i)) for i in np.flatnonzero(P[u].diagonal() == 1.0))
        nonfin.extend((u, int(i)) for i in np.flatnonzero(~np.isfinite(c[u])))
    finite = c[np.isfinite(c)]
    return ValidationReport(
        d=d, n_controls=n, row_defects=rows, negative_entries=neg,
        diagonal_ones=diag, nonfinite_costs=nonfin,
        c_hat=float(finite.min()) if finite.size else np.nan,
        c_check=float(finite.max()) if finite.size else np.nan,
    )


def irreducible(P) -> bool:
    """True iff the graph of strictly positive entries is strongly connected."""
    P = np.asarray(P, dtype=float)
    n_comp, _ = connected_components(P > 0.0, directed=True, connection="strong")
    return n_comp == 1


@dataclass(frozen=True)
class ChainAnalysis:
    """Excursion-cost summary of an irreducible chain with mean costs.

    ``C[i, j]`` is the expected cost accumulated from ``i`` until the first
    visit of ``j`` (zero on the diagonal); ``Cbar_diag[j]`` is the expected
    cost of a round trip from ``j`` back to ``j``.
    """

    P: np.ndarray
    cbar: np.ndarray
    Q: np.ndarray
    mu: np.ndarray
    mu_tilde: np.ndarray
    C: np.ndarray
    Cbar_diag: np.ndarray
    cond: np.ndarray

    @property
    def d(self) -> int:
        return self.P.shape[0]

    @property
    def mean_cost(self) -> float:
        return float(self.mu @ self.cbar)

    def pair_sums(self) -> np.ndarray:
        return self.C + self.C.T

    def min_pair_sum(self) -> float:
        S = self.pair_sums()
        off = ~np.eye(self.d, dtype=bool)
        return float(S[off].min())


def _lu_solve_minor(Q, j, rhs):
    Qj = minor(Q, j, j)
    lu = scipy.linalg.lu_factor(Qj)
    cond = np.linalg.cond(Qj)
    if cond > COND_WARN:
        warnings.warn(f"Q^({j + 1},{j + 1}) is ill-conditioned (cond={cond:.3g})", RuntimeWarning, stacklevel=3)
    return scipy.linalg.lu_solve(lu, rhs), cond


def excursion_inverse(Q, j) -> np.ndarray:
    """``(Q^{(j,j)})^{-1}``, the expected visit counts before hitting ``j``."""
    Qj = minor(Q, j, j)
    lu = scipy.linalg.lu_factor(Qj)
    return scipy.linalg.lu_solve(lu, np.eye(Qj.shape[0]))


def _invariant_by_solve(Q):
    d = Q.shape[0]
    A = np.vstack([Q.T, np.ones((1, d))])
    b = np.zeros(d + 1)
    b[-1] = 1.0
    mu, *_ = np.linalg.lstsq(A, b, rcond=None)
    return mu


def analyze_chain(P, cbar) -> ChainAnalysis:
    """Invariant measure and excursion costs of an irreducible chain.

    Raises
    ------
    DomainError
        If ``P`` is reducible (excursion costs are then undefined).
    """
    P = np.asarray(P, dtype=float)
    cbar = np.asarray(cbar, dtype=float)
    d = P.shape[0]
    if P.shape != (d, d) or cbar.shape != (d,):
        raise StructuralError("P must be (d, d) and cbar (d,)")
    if not irreducible(P):
        raise DomainError("chain is reducible: excursion costs undefined")
    Q = np.eye(d) - P

    mu_tilde = np.array([np.linalg.det(minor(Q, i, i)) for i in range(d)])
    mu_solve = _invariant_by_solve(Q)
    if d <= DET_ROUTE_MAX_DIM:
        mu = mu_tilde / mu_tilde.sum()
        gap = np.max(np.abs(mu - mu_solve))
        if gap > MU_CROSSCHECK_TOL:
            raise RuntimeError(f"invariant measure routes disagree by {gap:.3g}")
    else:
        mu = mu_solve

    C = np.zeros((d, d))
    cond = np.empty(d)
    for j in range(d):
        x, cond[j] = _lu_solve_minor(Q, j, np.delete(cbar, j))
        C[np.arange(d) != j, j] = x
    Cbar_diag = (mu @ cbar) / mu
    for a in (P, cbar, Q, mu, mu_tilde, C, Cbar_diag, cond):
        a.setflags(write=False)
    return ChainAnalysis(P=P, cbar=cbar, Q=Q, mu=mu, mu_tilde=mu_tilde, C=C,
                         Cbar_diag=Cbar_diag, cond=cond)


@dataclass(frozen=True)
class AbsorptionMoments:
    expected_steps: np.ndarray
    second_moment: np.ndarray
    fundamental: np.ndarray

    @property
    def variance(self):
        return self.second_moment - self.expected_steps ** 2


def absorption_moments(P_sub) -> AbsorptionMoments:
    """First two moments of the number of steps spent in the transient set.

    ``P_sub`` is the substochastic transition matrix restricted to the
    transient states.  The count includes the starting state, so a single
    state with self-loop probability ``p`` gives a geometric law with mean
    ``1/(1-p)``.
    """
    P_sub = np.atleast_2d(np.asarray(P_sub, dtype=float))
    n = P_sub.shape[0]
    rho = np.max(np.abs(np.linalg.eigvals(P_sub))) if n else 0.0
    if rho >= 1.0 - 1e-12:
        raise DomainError(f"not absorbing: spectral radius {rho:.6g} >= 1")
    M = np.linalg.inv(np.eye(n) - P_sub)
    t = M @ np.ones(n)
    t2 = (2.0 * M - np.eye(n)) @ t
    return AbsorptionMoments(expected_steps=t, second_moment=t2, fundamental=M)


def adjugate_identity_check(P) -> float:
    """Largest residual of the three-index adjugate identity.

    For distinct ``i, j, k`` and ``A^j = adj(Q^{(j,j)})`` the identity reads
    ``mu_i A^j[i,k] + mu_j A^i[j,k] = mu_k A^j[i,i]`` (indices taken inside
    the reduced matrices).
    """
    P = np.asarray(P, dtype=float)
    d = P.shape[0]
    if d < 3:
        raise ValueError("identity requires three distinct indices (d >= 3)")
    if not irreducible(P):
        raise DomainError("chain is reducible")
    Q = np.eye(d) - P
    mu_tilde = np.array([np.linalg.det(minor(Q, i, i)) for i in range(d)])
    mu = mu_tilde / mu_tilde.sum()
    adj = [adjugate(minor(Q, j, j)) for j in range(d)]

    def r(a, b):  # index of a inside the matrix with b removed
        return a - (a > b)

    worst = 0.0
    for i, j, k in itertools.permutations(range(d), 3):
        lhs = mu[i] * adj[j][r(i, j), r(k, j)] + mu[j] * adj[i][r(j, i), r(k, i)]
        rhs = mu[k] * adj[j][r(i, j), r(i, j)]
        worst = max(worst, abs(lhs - rhs))
    return worst
