"""Dense two-phase simplex with Bland's anti-cycling rule.

Sized for the small systems that describe switching domains (a few hundred
constraints at most).  ``linprog`` mirrors the familiar
``min c.x  s.t.  A_ub x <= b_ub, A_eq x = b_eq`` signature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LPResult", "linprog", "simplex_standard"]

_EPS = 1e-11


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    fun: float
    iterations: int

    @property
    def success(self):
        return self.status == "optimal"


def _pivot(T, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T, basis, n_cols, max_iter):
    """Minimise the objective stored in the last row of ``T`` (reduced costs)."""
    it = 0
    m = T.shape[0] - 1
    while it < max_iter:
        obj = T[-1, :n_cols]
        entering = np.flatnonzero(obj < -_EPS)
        if entering.size == 0:
            return "optimal", it
        c = entering[0]
        col = T[:m, c]
        pos = col > _EPS
        if not pos.any():
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + _EPS * max(1.0, abs(best)))
        r = ties[np.argmin(np.asarray(basis)[ties])]
        _pivot(T, r, c)
        basis[r] = c
        it += 1
    raise RuntimeError("simplex iteration limit reached")


def simplex_standard(c, A, b, max_iter=50_000) -> LPResult:
    """Solve ``min c.x`` subject to ``A x = b, x >= 0``."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: artificials in columns n .. n+m-1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _, it1 = _run(T, basis, n + m, max_iter)
    scale = max(1.0, np.abs(b).max(initial=0.0))
    if -T[-1, -1] > 1e-9 * scale:
        return LPResult("infeasible", None, np.nan, it1)

    # drive artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(T[r, :n]) > 1e-9)
            if cand.size:
                _pivot(T, r, cand[0])
                basis[r] = cand[0]
                keep.append(r)
        else:
            keep.append(r)
    T = np.vstack([T[keep][:, list(range(n)) + [T.shape[1] - 1]], np.zeros((1, n + 1))])
    basis = [basis[r] for r in keep]

    # phase 2
    T[-1, :n] = c
    for r, bv in enumerate(basis):
        T[-1] -= T[-1, bv] * T[r]
    status, it2 = _run(T, basis, n, max_iter)
    if status != "optimal":
        return LPResult(status, None, -np.inf, it1 + it2)
    x = np.zeros(n)
    for r, bv in enumerate(basis):
        x[bv] = T[r, -1]
    return LPResult("optimal", x, float(c @ x), it1 + it2)


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=True) -> LPResult:
    """Minimise ``c.x`` with inequality and equality rows.

    Variables are unrestricted in sign when ``free`` is true (split as
    ``x = x+ - x-``), otherwise nonnegative.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]

    if free:
        A_ub2 = np.hstack([A_ub, -A_ub])
        A_eq2 = np.hstack([A_eq, -A_eq])
        c2 = np.concatenate([c, -c])
    else:
        A_ub2, A_eq2, c2 = A_ub, A_eq, c
    nv = c2.size
    A = np.zeros((m_ub + m_eq, nv + m_ub))
    A[:m_ub, :nv] = A_ub2
    A[:m_ub, nv:] = np.eye(m_ub)
    A[m_ub:, :nv] = A_eq2
    b = np.concatenate([b_ub, b_eq])
    cs = np.concatenate([c2, np.zeros(m_ub)])
    res = simplex_standard(cs, A, b)
    if not res.success:
        return res
    z = res.x[:nv]
    x = z[:n] - z[n:] if free else z
    return LPResult("optimal", x, float(c @ x), res.iterations)
