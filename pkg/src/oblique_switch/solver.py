"""Backward lattice scheme for the obliquely reflected BSDE.

At every node the continuation value ``E_k[Y_{k+1}] + dt f`` is pushed into
the domain along the mode directions ``-e_i`` (``oblique_project``); the push
is the reflection increment ``K``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import nnls

from .domain import max_slack_point, obstacle_values, oblique_project, shift_to_positive_costs
from .errors import CapabilityError, DomainError, StabilityError, ValidationError
from .lattice import LatticeSpec
from .model import ControlledTransitionModel

__all__ = ["Driver", "LatticeSolution", "solve", "refine_and_extrapolate", "ConvergenceTable"]

SKOROKHOD_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Driver:
    """Per-mode generator ``f^i(t, x, y_i, z_i)`` and terminal reward ``g(x)``.

    The common case is ``f^i = running(t, x)[i] + ky[i] y_i + kz[i] z_i``; a
    general vectorised ``full(t, x, Y, Z) -> (M, d)`` overrides it.

    Parameters
    ----------
    terminal : callable
        ``g(x) -> (len(x), d)``.
    running : callable or None
        ``(t, x) -> (len(x), d)``; ``None`` means zero.
    """

    terminal: Callable
    running: Callable | None = None
    ky: np.ndarray | None = None
    kz: np.ndarray | None = None
    full: Callable | None = None

    @property
    def yz_free(self):
        if self.full is not None:
            return False
        return not ((self.ky is not None and np.any(self.ky)) or (self.kz is not None and np.any(self.kz)))

    def profit(self, t, x, d):
        """``f(t, x, i)`` for (y, z)-free drivers, shape (len(x), d)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.running is None:
            return np.zeros((x.size, d))
        return np.broadcast_to(np.asarray(self.running(t, x), dtype=float), (x.size, d))

    def f(self, t, x, Y, Z):
        if self.full is not None:
            return np.asarray(self.full(t, x, Y, Z), dtype=float)
        out = self.profit(t, x, Y.shape[1]).copy()
        if self.ky is not None:
            out += np.asarray(self.ky) * Y
        if self.kz is not None:
            out += np.asarray(self.kz) * Z
        return out

    def g(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.asarray(self.terminal(x), dtype=float)

    def lipschitz_y(self, lattice: LatticeSpec, d, eps=1e-6):
        """Lipschitz constant of ``f`` in ``y`` (exact for linear terms, finite differences otherwise)."""
        if self.full is None:
            return float(np.abs(self.ky).max()) if self.ky is not None else 0.0
        rng = np.random.default_rng(0)
        x = lattice.x
        best = 0.0
        for t in lattice.times[:-1][:: max(1, lattice.steps // 5)]:
            Y = rng.normal(size=(x.size, d))
            Z = rng.normal(size=(x.size, d))
            base = self.f(t, x, Y, Z)
            for i in range(d):
                Yp = Y.copy()
                Yp[:, i] += eps
                best = max(best, float(np.abs((self.f(t, x, Yp, Z) - base)[:, i]).max() / eps))
        return best

    @classmethod
    def constant(cls, g_value, running=None):
        g_value = np.asarray(g_value, dtype=float)
        return cls(terminal=lambda x: np.broadcast_to(g_value, (np.size(x), g_value.size)).copy(),
                   running=running)


@dataclass(frozen=True, eq=False)
class LatticeSolution:
    """Value field ``Y[k, m, i]``, ``Z[k, m, i]`` and reflection increments ``Kinc[k, m, i]``.

    ``Kinc[k]`` is the push applied at time ``t_k`` (``k = 0..steps``; the
    last layer is the push of the terminal reward into the domain).
    """

    model: ControlledTransitionModel
    lattice: LatticeSpec
    Y: np.ndarray
    Z: np.ndarray
    Kinc: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def root_value(self):
        return self.Y[0, self.lattice.root].copy()

    def to_csv(self, path, meta=None):
        """Columns ``k, t, m, x, i, Y, Z, Kinc`` (17 significant digits); metadata as ``#`` lines."""
        lat = self.lattice
        N, M, d = self.Y.shape
        k, m, i = np.meshgrid(np.arange(N), np.arange(M), np.arange(d), indexing="ij")
        Z = np.full(self.Y.shape, np.nan)
        Z[:-1] = self.Z
        cols = [k.ravel(), lat.times[k].ravel(), m.ravel(), lat.x[m].ravel(), i.ravel(),
                self.Y.ravel(), Z.ravel(), self.Kinc.ravel()]
        header = []
        for key, val in {**(meta or {}), **self.diagnostics}.items():
            header.append(f"# {key}: {val}")
        with open(path, "w") as fh:
            for line in header:
                fh.write(line + "\n")
            fh.write("k,t,m,x,i,Y,Z,Kinc\n")
            np.savetxt(fh, np.column_stack(cols), delimiter=",",
                       fmt=["%d", "%.17g", "%d", "%.17g", "%d", "%.17g", "%.17g", "%.17g"])


def _interior_anchor(model):
    s, y = max_slack_point(model)
    if s <= 1e-10 * (1.0 + np.abs(model.cbar).max()):
        raise DomainError("domain has no interior point to shift costs around")
    return y


def _project_layer(Yt, model):
    out = Yt.copy()
    inside = np.min(Yt - obstacle_values(Yt, model), axis=1) >= 0.0
    for m in np.flatnonzero(~inside):
        out[m] = oblique_project(Yt[m], model)
    return out


def _decomposition_defect(H_field, Y, K, dt):
    """Largest ``|K + dt H(Y) G' psi|`` over nodes, ``psi >= 0`` fitted by NNLS."""
    worst = 0.0
    for y, k in zip(Y, K):
        if k.max() <= 0.0:
            continue
        G, _ = H_field.normal_cone(y)
        if len(G) == 0:
            worst = max(worst, float(np.linalg.norm(k)))
            continue
        A = -dt * H_field.evaluate(y) @ G.T
        _, res = nnls(A, k)
        worst = max(worst, float(res))
    return worst


def solve(model: ControlledTransitionModel, lattice: LatticeSpec, driver: Driver, field=None,
          y0=None, picard_tol=1e-12, picard_max=50) -> LatticeSolution:
    """Backward induction with oblique reflection.

    Parameters
    ----------
    field : ReflectionField, optional
        When given, the increments ``Kinc`` are also decomposed as
        ``-dt H(Y) psi`` with ``psi`` in the normal cone and the residual is
        reported (``decomposition_defect``).
    y0 : array_like or "lp", optional
        Interior point used to shift signed costs to positive ones.  Required
        (or found by LP when ``"lp"``) when some cost is not positive.

    Raises
    ------
    StabilityError
        If ``L dt >= 1`` for the Lipschitz constant of ``f`` in ``y``.
    DomainError
        If the domain is empty, or costs are not positive and no interior
        point is available.
    """
    d = model.d
    s, _ = max_slack_point(model)
    if s < -1e-10 * (1.0 + np.abs(model.cbar).max()):
        raise DomainError("domain is empty")
    dt = lattice.dt
    L = driver.lipschitz_y(lattice, d)
    if L * dt >= 1.0:
        raise StabilityError(f"Picard map not contracting: L*dt = {L * dt:.3g} >= 1; "
                             f"use dt < {1.0 / L:.6g}", max_dt=1.0 / L)
    if not driver.yz_free and driver.kz is not None and np.any(driver.kz):
        warnings.warn("z-dependent driver: lattice Z carries an O(dt^1/2) error", RuntimeWarning, stacklevel=2)

    shift = np.zeros(d)
    work = model
    if isinstance(y0, str) and y0 == "lp":
        y0 = _interior_anchor(model)
    if y0 is not None:
        shift = np.asarray(y0, dtype=float)
        work = shift_to_positive_costs(shift, model)
    elif model.c_hat <= 0:
        raise DomainError("costs are not all positive: supply an interior point y0 (or 'lp')")

    x = lattice.x
    N, M = lattice.steps, lattice.M
    Y = np.empty((N + 1, M, d))
    Z = np.empty((N, M, d))
    K = np.zeros((N + 1, M, d))
    g = driver.g(x) - shift
    Y[N] = _project_layer(g, work)
    K[N] = Y[N] - g
    iters = 0
    weighted_W = lattice.W * lattice.dW
    for k in range(N - 1, -1, -1):
        t = lattice.times[k]
        E = lattice.W @ Y[k + 1]
        Z[k] = weighted_W @ Y[k + 1] / dt
        Yt = E + dt * driver.f(t, x, E + shift, Z[k])
        it = 1
        if not driver.yz_free:
            for it in range(2, picard_max + 1):
                Yn = E + dt * driver.f(t, x, Yt + shift, Z[k])
                change = np.abs(Yn - Yt).max()
                Yt = Yn
                if change <= picard_tol * (1.0 + np.abs(Yt).max()):
                    break
        iters = max(iters, it)
        Y[k] = _project_layer(Yt, work)
        K[k] = Y[k] - Yt

    slack = Y - obstacle_values(Y, work)
    scale = 1.0 + np.abs(Y).max()
    diagnostics = {
        "membership_defect": float(max(0.0, -slack.min())),
        "skorokhod_defect": float(np.sum(K * np.maximum(0.0, slack - SKOROKHOD_TOL * scale))),
        "kinc_min": float(K[:-1].min()),
        "terminal_defect": float(np.abs(K[N]).max()),
        "picard_iters": int(iters),
        "lipschitz_y": L,
        "shift": shift.tolist(),
    }
    if field is not None:
        try:
            diagnostics["decomposition_defect"] = max(
                _decomposition_defect(field, Y[k] + shift, K[k], dt) for k in range(N))
        except CapabilityError as exc:
            diagnostics["decomposition_defect"] = f"unavailable: {exc}"
    Y += shift
    for a in (Y, Z, K):
        a.setflags(write=False)
    return LatticeSolution(model=model, lattice=lattice, Y=Y, Z=Z, Kinc=K, diagnostics=diagnostics)


@dataclass
class ConvergenceTable:
    steps: list
    status: list
    root_values: list
    differences: list  # sup over modes between successive resolutions
    orders: list
    monotone: bool | None
    extrapolated: np.ndarray | None

    def rows(self):
        out = []
        for n, (st, v) in enumerate(zip(self.steps, self.status)):
            diff = self.differences[n - 1] if n > 0 else None
            order = self.orders[n - 2] if n > 1 else None
            val = self.root_values[n]
            out.append({"steps": st, "status": v,
                        "root_value": None if val is None else np.asarray(val).tolist(),
                        "difference": diff, "order": order})
        return out


def refine_and_extrapolate(model, lattices, driver, **solve_kw) -> ConvergenceTable:
    """Root values over a sequence of lattices, successive differences and empirical orders.

    Differences are sup-norms over modes of the root value.  The order
    estimate between three consecutive resolutions is
    ``log(diff_{n-1}/diff_n) / log(steps_{n+1}/steps_n)``.  Richardson
    extrapolation is emitted only when the differences decrease strictly.
    """
    if len(lattices) < 3:
        raise ValidationError("need at least three lattice resolutions")
    steps, status, vals = [], [], []
    for lat in lattices:
        steps.append(lat.steps)
        try:
            sol = solve(model, lat, driver, **solve_kw)
            vals.append(sol.root_value())
            status.append("ok")
        except StabilityError as exc:
            vals.append(None)
            status.append(f"refused: {exc}")
    diffs = []
    for a, b in zip(vals[:-1], vals[1:]):
        diffs.append(None if a is None or b is None else float(np.abs(b - a).max()))
    orders = []
    for n in range(1, len(diffs)):
        a, b = diffs[n - 1], diffs[n]
        if a is None or b is None or a == 0 or b == 0:
            orders.append(None)
        else:
            orders.append(float(np.log(a / b) / np.log(steps[n + 1] / steps[n])))
    ok = all(x is not None for x in diffs)
    monotone = None
    extrap = None
    if ok:
        monotone = all(b < a for a, b in zip(diffs[:-1], diffs[1:])) or all(x == 0 for x in diffs)
        if monotone and orders and orders[-1] is not None and orders[-1] > 0:
            r = (steps[-1] / steps[-2]) ** orders[-1]
            extrap = vals[-1] + (vals[-1] - vals[-2]) / (r - 1.0)
        elif monotone and all(x == 0 for x in diffs):
            extrap = vals[-1]
    return ConvergenceTable(steps=steps, status=status, root_values=vals, differences=diffs,
                            orders=orders, monotone=monotone, extrapolated=extrap)
