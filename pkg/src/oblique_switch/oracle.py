"""Independent reference values for the lattice solver.

Nothing here calls the projection or obstacle code of the solver: the
dynamic-programming oracle runs Gauss-Seidel value iteration on its own
loops, and the tree oracle maximises over every decision at every history
node of a tiny instance.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import CapabilityError
from .lattice import LatticeSpec
from .model import ControlledTransitionModel
from .solver import Driver

__all__ = ["dp_oracle", "exhaustive_tree_value"]


def _switch_fixed_point(v, P, c, tol=1e-15, max_sweeps=1_000_000):
    """Least ``w >= v`` with ``w_i >= max_u (P^u w)_i - c^u_i`` by Gauss-Seidel sweeps."""
    w = v.copy()
    n_u, d, _ = P.shape
    for _ in range(max_sweeps):
        change = 0.0
        for i in range(d):
            best = w[i]
            for u in range(n_u):
                cand = float(P[u, i] @ w) - c[u, i]
                if cand > best:
                    best = cand
            change = max(change, best - w[i])
            w[i] = best
        if change <= tol * (1.0 + abs(w).max()):
            return w
    raise RuntimeError("value iteration did not converge (is the domain empty?)")


def dp_oracle(model: ControlledTransitionModel, driver: Driver, lattice: LatticeSpec):
    """Exact lattice value ``V[k, m, i]`` for a driver ``f(t, x, i)``.

    ``V(t_N) `` is the least switching fixed point above ``g``;
    ``V(t_k)`` the one above ``E_k[V(t_{k+1})] + dt f(t_k, x, .)``.
    Closed-form obstacles are replaced by the model's control grid.
    """
    if not driver.yz_free:
        raise CapabilityError("dp_oracle needs a driver independent of (y, z)")
    P = np.asarray(model.P)
    c = np.asarray(model.cbar)
    x = lattice.x
    N, M, d = lattice.steps, lattice.M, model.d
    V = np.empty((N + 1, M, d))
    g = driver.g(x)
    for m in range(M):
        V[N, m] = _switch_fixed_point(g[m].astype(float), P, c)
    for k in range(N - 1, -1, -1):
        cont = lattice.W @ V[k + 1] + lattice.dt * driver.profit(lattice.times[k], x, d)
        for m in range(M):
            V[k, m] = _switch_fixed_point(cont[m].copy(), P, c)
    return V


def exhaustive_tree_value(model: ControlledTransitionModel, driver: Driver, lattice: LatticeSpec,
                          start_mode: int, switch_cap: int = 80):
    """Best reward over all strategies on a tiny lattice, by full tree search.

    A decision node is ``(k, x-history, mode, switches already made at t_k)``.
    At each node the controller either stops switching (earning
    ``f dt`` and moving to ``t_{k+1}``, or collecting ``g`` at the horizon) or
    switches with some control, paying its mean cost and branching over the
    random new mode.  The maximum is taken separately at every history node,
    which is the maximum over all strategy trees.  ``switch_cap`` bounds the
    number of switches per grid time; the truncation error decays
    geometrically in it.
    """
    if not driver.yz_free:
        raise CapabilityError("tree search needs a driver independent of (y, z)")
    P = np.asarray(model.P)
    c = np.asarray(model.cbar)
    x = lattice.x
    W = lattice.W
    N, dt = lattice.steps, lattice.dt
    g = driver.g(x)
    f = [driver.profit(t, x, model.d) for t in lattice.times]
    count = [0]

    @lru_cache(maxsize=None)
    def value(k, hist, mode, n):
        count[0] += 1
        m = hist[-1]
        if k == N:
            best = g[m, mode]
        else:
            best = f[k][m, mode] * dt
            for nxt in np.flatnonzero(W[m] > 0):
                best_nxt = value(k + 1, hist + (int(nxt),), mode, 0)
                best += W[m, nxt] * best_nxt
        if n < switch_cap:
            for u in range(P.shape[0]):
                row = P[u, mode]
                val = -c[u, mode]
                for j in np.flatnonzero(row > 0):
                    val += row[j] * value(k, hist, int(j), n + 1)
                best = max(best, val)
        return float(best)

    v = value(0, (lattice.root,), int(start_mode), 0)
    return v, count[0]
