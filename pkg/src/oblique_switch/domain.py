"""Geometry of the switching domain.

The domain is the set of value vectors ``y`` with
``y_i >= max_u (P^u y)_i - cbar^u_i`` for every mode ``i``.  It is invariant
under translation along ``(1, ..., 1)``, so most routines work on the slice
``y_d = 0``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import lp
from .errors import DomainError, ProjectionError, ValidationError
from .markov import ChainAnalysis, analyze_chain, irreducible
from .model import QUADRATIC_CYCLIC, ControlledTransitionModel

__all__ = [
    "obstacle",
    "obstacle_values",
    "obstacle_argmax",
    "membership",
    "SwitchingDomain",
    "build_domain",
    "NonEmptinessCertificate",
    "nonemptiness_report",
    "max_slack_point",
    "slice_vertices",
    "reduce_to_slice",
    "barycentric",
    "barycentric_and_normal_cone",
    "euclidean_project",
    "oblique_project",
    "shift_to_positive_costs",
    "TriangleReport",
    "triangle_check",
    "emit_slice_polygon",
]

ACTIVE_TOL = 1e-8
TIE_TOL = 1e-12


# --------------------------------------------------------------------------
# obstacle


def _quadratic_cyclic(Y):
    """Exact max over ``u in [0,1]`` of the cyclic-mixture obstacle; also returns u*."""
    Y = np.asarray(Y, dtype=float)
    a = np.roll(Y, -1, axis=-1)  # y_{i+1}
    b = np.roll(Y, -2, axis=-1)  # y_{i+2}
    slope = 1.0 + a - b
    u = np.clip(slope / 2.0, 0.0, 1.0)
    return -u * u + u * slope + b - 1.0, u


def obstacle_values(Y, model: ControlledTransitionModel, grid=False):
    """Obstacle of every mode at one or many points ``Y[..., d]``.

    With ``grid`` true the closed-form obstacle (if any) is ignored and the
    maximum is taken over the finite control grid.
    """
    Y = np.asarray(Y, dtype=float)
    if model.closed_form == QUADRATIC_CYCLIC and not grid:
        return _quadratic_cyclic(Y)[0]
    vals = np.einsum("uij,...j->...ui", model.P, Y) - model.cbar
    return vals.max(axis=-2)


def obstacle_argmax(Y, model: ControlledTransitionModel, tol=TIE_TOL):
    """Grid obstacle together with the smallest maximising control index.

    Controls whose value is within ``tol`` (relative to the magnitude of the
    point) of the maximum count as ties; the first of them in the control
    order wins.
    """
    Y = np.asarray(Y, dtype=float)
    vals = np.einsum("uij,...j->...ui", model.P, Y) - model.cbar
    best = vals.max(axis=-2)
    scale = 1.0 + np.abs(Y).max(axis=-1, keepdims=True)
    hit = vals >= (best - tol * scale)[..., None, :]
    return best, np.argmax(hit, axis=-2)


def obstacle(y, i, model: ControlledTransitionModel) -> float:
    """``max_u sum_j P^u[i, j] y_j - cbar^u_i`` for one mode ``i``."""
    return float(obstacle_values(y, model)[..., i])


def membership(y, model: ControlledTransitionModel, tol=1e-9):
    """Return ``(inside, worst_slack)`` for a point."""
    y = np.asarray(y, dtype=float)
    slack = float(np.min(y - obstacle_values(y, model)))
    return slack >= -tol, slack


# --------------------------------------------------------------------------
# linear programming views of the domain


def _lp_rows(model):
    """Rows ``A y <= b`` equivalent to ``Q^u y + cbar^u >= 0`` on the grid."""
    normals, offsets, _ = model.half_spaces()
    return normals, offsets


def max_slack_point(model: ControlledTransitionModel):
    """Maximise the uniform slack ``s`` in ``Q^u y + cbar^u >= s`` with ``y_d = 0``.

    Returns ``(s, y)``.  ``s >= 0`` iff the domain (on the grid) is nonempty,
    ``s > 0`` iff it has nonempty interior.
    """
    N, b = _lp_rows(model)
    d = model.d
    A_ub = np.hstack([N, np.ones((N.shape[0], 1))])
    A_eq = np.zeros((1, d + 1))
    A_eq[0, d - 1] = 1.0
    cap = 1e6 * (1.0 + np.abs(b).max())
    A_ub = np.vstack([A_ub, np.eye(d + 1)[-1]])
    b_ub = np.concatenate([b, [cap]])
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = lp.linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[0.0])
    if not res.success:  # pragma: no cover - the slack LP is always feasible
        raise DomainError(f"slack LP failed: {res.status}")
    return float(res.x[-1]), res.x[:d]


def lp_feasible(model: ControlledTransitionModel) -> bool:
    """Phase-one feasibility of the grid constraints."""
    N, b = _lp_rows(model)
    res = lp.linprog(np.zeros(model.d), A_ub=N, b_ub=b)
    return res.success


@lru_cache(maxsize=64)
def _cached_slack(model):
    return max_slack_point(model)


# --------------------------------------------------------------------------
# domain object


@dataclass(frozen=True, eq=False)
class SwitchingDomain:
    model: ControlledTransitionModel
    normals: np.ndarray
    offsets: np.ndarray
    labels: list
    per_control: list  # ChainAnalysis or None for reducible controls
    Chat: np.ndarray | None
    slice_vertices: np.ndarray | None = None

    def member(self, y, tol=1e-9):
        return membership(y, self.model, tol)


def build_domain(model: ControlledTransitionModel) -> SwitchingDomain:
    normals, offsets, labels = model.half_spaces()
    per = []
    for u in range(model.n_controls):
        if irreducible(model.P[u]):
            per.append(analyze_chain(model.P[u], model.cbar[u]))
        else:
            per.append(None)
    Chat = None
    if all(a is not None for a in per):
        Chat = np.min(np.stack([a.C for a in per]), axis=0)
    verts = None
    if model.is_uncontrolled and per[0] is not None and per[0].mean_cost > 0:
        verts = slice_vertices(model, per[0])
    return SwitchingDomain(model=model, normals=normals, offsets=offsets, labels=labels,
                           per_control=per, Chat=Chat, slice_vertices=verts)


# --------------------------------------------------------------------------
# non-emptiness


@dataclass(frozen=True)
class NonEmptinessCertificate:
    """LP verdict on the domain plus the excursion-cost conditions.

    In the uncontrolled irreducible case the four classical conditions
    (LP feasibility, some pair sum, mean cost, all pair sums) must coincide;
    ``agreement`` records whether they did.  For controlled models the
    Markov quantities are necessary conditions only and are reported as such.
    """

    lp_feasible: bool
    lp_strict: bool
    max_slack: float
    mu_cbar: list
    pair_mins: list
    chat_pair_min: float | None
    mu_chat: float | None
    triangle_ok: bool | None
    markov_available: bool
    agreement: bool | None
    strict_agreement: bool | None
    verdict: str
    notes: list = field(default_factory=list)

    @property
    def nonempty(self):
        return self.verdict != "empty"

    @property
    def has_interior(self):
        return self.verdict == "nonempty-interior"


def nonemptiness_report(model: ControlledTransitionModel, tol=1e-10) -> NonEmptinessCertificate:
    s, _ = max_slack_point(model)
    feas = lp_feasible(model)
    scale = 1.0 + np.abs(model.cbar).max()
    strict = s > tol * scale
    notes = []
    if model.closed_form is not None:
        notes.append("LP evaluated on the control grid; the exact domain can be smaller")

    mu_cbar, pair_mins, analyses = [], [], []
    for u in range(model.n_controls):
        if irreducible(model.P[u]):
            a = analyze_chain(model.P[u], model.cbar[u])
            analyses.append(a)
            mu_cbar.append(a.mean_cost)
            pair_mins.append(a.min_pair_sum())
        else:
            analyses.append(None)
            mu_cbar.append(None)
            pair_mins.append(None)
            notes.append(f"control {model.controls[u]} is reducible: Markov conditions unavailable")
    markov = all(a is not None for a in analyses)

    chat_pair_min = mu_chat = triangle_ok = None
    agreement = strict_agreement = None
    if markov:
        Chat = np.min(np.stack([a.C for a in analyses]), axis=0)
        off = ~np.eye(model.d, dtype=bool)
        chat_pair_min = float((Chat + Chat.T)[off].min())
        if model.is_uncontrolled:
            a = analyses[0]
            S = a.pair_sums()[off]
            conds = [feas, bool((S >= -tol * scale).any()), a.mean_cost >= -tol * scale,
                     bool((S >= -tol * scale).all())]
            sconds = [strict, bool((S > tol * scale).any()), a.mean_cost > tol * scale,
                      bool((S > tol * scale).all())]
            agreement = len(set(conds)) == 1
            strict_agreement = len(set(sconds)) == 1
            triangle_ok = triangle_check(a).holds
        elif np.allclose(model.P, model.P[0]):
            # controls act on costs only: the cheapest cost per mode decides
            c_min = model.cbar.min(axis=0)
            mu_chat = float(analyses[0].mu @ c_min)

    verdict = "empty" if not feas else ("nonempty-interior" if strict else "nonempty-empty-interior")
    return NonEmptinessCertificate(
        lp_feasible=feas, lp_strict=bool(strict), max_slack=s, mu_cbar=mu_cbar,
        pair_mins=pair_mins, chat_pair_min=chat_pair_min, mu_chat=mu_chat,
        triangle_ok=triangle_ok, markov_available=markov, agreement=agreement,
        strict_agreement=strict_agreement, verdict=verdict, notes=notes)


# --------------------------------------------------------------------------
# slice vertices and barycentric coordinates


def slice_vertices(model: ControlledTransitionModel, analysis: ChainAnalysis | None = None):
    """Vertices of the slice ``y_d = 0`` of an uncontrolled domain.

    Row ``j`` is ``-(C[:, j] - C[d-1, j])``; it saturates every constraint
    except the ``j``-th.
    """
    if not model.is_uncontrolled:
        raise DomainError("vertex characterisation needs an uncontrolled model")
    a = analysis or analyze_chain(model.P[0], model.cbar[0])
    if not a.mean_cost > 0:
        raise DomainError("interior empty; vertex characterization unavailable")
    theta = a.C - a.C[-1, :][None, :]
    V = -theta.T + 0.0  # drop signed zeros
    diff = V[1:] - V[0]
    rank = np.linalg.matrix_rank(diff, tol=1e-10 * (1.0 + np.abs(V).max()))
    if rank != model.d - 1:
        raise DomainError(f"slice vertices are not affinely independent (rank {rank})")
    return V


def reduce_to_slice(y):
    """Translate ``y`` along ``(1, ..., 1)`` so its last coordinate is zero."""
    y = np.asarray(y, dtype=float)
    return y - y[..., -1:]


def barycentric(y, vertices):
    """Affine coordinates of ``y`` (on the slice) w.r.t. ``d`` vertices."""
    V = np.asarray(vertices, dtype=float)
    d = V.shape[0]
    A = np.vstack([V[:, :-1].T, np.ones((1, d))])
    y = reduce_to_slice(y)
    rhs = np.concatenate([y[..., :-1], np.ones(y.shape[:-1] + (1,))], axis=-1)
    return np.linalg.solve(A, rhs.T).T


def barycentric_and_normal_cone(y, model: ControlledTransitionModel, vertices=None,
                                tol=1e-9, active_tol=ACTIVE_TOL):
    """Barycentric coordinates, positive-weight set and normal-cone generators.

    Returns ``(lam, support, generators, gen_index)`` where ``support`` holds
    the vertex indices with ``lam > active_tol`` and the generators are the
    rows of ``-Q`` indexed by the complement of ``support``.
    """
    V = slice_vertices(model) if vertices is None else vertices
    lam = barycentric(y, V)
    if lam.min() < -tol:
        raise DomainError(f"point outside slice (barycentric minimum {lam.min():.3g})")
    support = np.flatnonzero(lam > active_tol)
    gen_index = np.setdiff1d(np.arange(model.d), support)
    generators = -model.Q(0)[gen_index]
    return lam, support, generators, gen_index


# --------------------------------------------------------------------------
# projections


def _require_nonempty(model):
    s, _ = _cached_slack(model)
    if s < -1e-10 * (1.0 + np.abs(model.cbar).max()):
        raise DomainError("domain is empty")


def euclidean_project(y, model: ControlledTransitionModel, tol=1e-10, max_rounds=10_000):
    """Nearest point of the (grid) domain to ``y``.

    Dykstra's alternating projections over the half-spaces, followed by an
    exact solve on the detected active set when that solve is consistent.
    """
    _require_nonempty(model)
    y = np.asarray(y, dtype=float)
    N, b = _lp_rows(model)
    keep = np.linalg.norm(N, axis=1) > 0
    N, b = N[keep], b[keep]
    nn = np.einsum("ij,ij->i", N, N)
    scale = 1.0 + np.abs(y).max() + np.abs(b).max()
    if np.all(N @ y <= b + 1e-14 * scale):
        return y.copy()

    z = y.copy()
    incr = np.zeros_like(N)
    for _ in range(max_rounds):
        z_prev = z.copy()
        for k in range(N.shape[0]):
            w = z + incr[k]
            excess = N[k] @ w - b[k]
            z = w - (excess / nn[k]) * N[k] if excess > 0 else w
            incr[k] = w - z
        if np.linalg.norm(z - z_prev) < tol:
            break

    active = N @ z >= b - 1e-7 * scale
    if active.any():
        NA, bA = N[active], b[active]
        lam, *_ = np.linalg.lstsq(NA @ NA.T, NA @ y - bA, rcond=None)
        z2 = y - NA.T @ lam
        if (lam.min() >= -1e-12 * scale and np.all(N @ z2 <= b + 1e-12 * scale)
                and np.linalg.norm(z2 - z) < 1e-6 * scale):
            z = z2
    return z


def _policy_iteration(y, model, max_iter):
    """Least point of the domain above ``y`` by Howard's policy iteration."""
    d = model.d
    scale = 1.0 + np.abs(y).max() + np.abs(model.cbar).max()
    eps = 1e-12 * scale
    idx = np.arange(d)
    action = np.full(d, -1)
    z = y.copy()
    for it in range(max_iter):
        S = action >= 0
        z = y.copy()
        if S.any():
            rows = model.P[action[S], idx[S]]
            cost = model.cbar[action[S], idx[S]]
            A = np.eye(S.sum()) - rows[:, S]
            rhs = rows[:, ~S] @ y[~S] - cost
            try:
                z[S] = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                raise ProjectionError("switching policy has no exit (empty domain or nonpositive costs)")
            if not np.all(np.isfinite(z)):
                raise ProjectionError("policy evaluation diverged")
        vals, arg = obstacle_argmax(z, model)
        new = action.copy()
        for i in range(d):
            if action[i] < 0:
                if vals[i] > y[i] + eps:
                    new[i] = arg[i]
            else:
                current = model.P[action[i], i] @ z - model.cbar[action[i], i]
                if y[i] > max(vals[i], current) + eps:
                    new[i] = -1
                elif vals[i] > current + eps:
                    new[i] = arg[i]
        if np.array_equal(new, action):
            return z, it + 1
        action = new
    raise ProjectionError(f"policy iteration did not settle in {max_iter} rounds")


def _policy_iteration_closed_form(y, model, max_iter):
    d = 3
    scale = 1.0 + np.abs(y).max()
    eps = 1e-12 * scale
    S = np.zeros(d, dtype=bool)
    u = np.zeros(d)
    z = y.copy()
    for it in range(max_iter):
        z_old = z
        z = y.copy()
        if S.any():
            rows = np.array([_row_mixture(i, u[i]) for i in range(d)])[S]
            cost = (1.0 - u * (1.0 - u))[S]
            A = np.eye(S.sum()) - rows[:, S]
            try:
                z[S] = np.linalg.solve(A, rows[:, ~S] @ y[~S] - cost)
            except np.linalg.LinAlgError:
                raise ProjectionError("switching policy has no exit")
        vals, ustar = _quadratic_cyclic(z)
        newS = S | (vals > y + eps)
        newS &= ~(y > vals + eps)
        if np.array_equal(newS, S) and np.max(np.abs(z - z_old)) <= 1e-15 * scale and it > 0:
            return z, it + 1
        S = newS
        u = np.where(S, ustar, u)
    resid = np.max(np.abs(z - np.maximum(y, _quadratic_cyclic(z)[0])))
    if resid <= 1e-11 * scale:
        return z, max_iter
    raise ProjectionError(f"closed-form policy iteration stalled (residual {resid:.3g})")


def _row_mixture(i, u):
    row = np.zeros(3)
    row[(i + 1) % 3] = u
    row[(i + 2) % 3] = 1.0 - u
    return row


def oblique_project(y, model: ControlledTransitionModel, max_iter=None):
    """Smallest ``z >= y`` (componentwise) lying in the domain.

    Only coordinates whose constraint ends up active are raised, which is
    the discrete analogue of pushing along ``-e_i`` on active faces.  The
    fixed point ``z = max(y, obstacle(z))`` is found by policy iteration:
    each round fixes which modes sit on their obstacle (and with which
    control) and solves the resulting linear system exactly.

    Raises
    ------
    ProjectionError
        If no fixed point is reached (nonpositive costs without an interior,
        or an empty domain).
    """
    y = np.asarray(y, dtype=float)
    if max_iter is None:
        max_iter = 50 + 10 * model.d * model.n_controls
    if model.closed_form == QUADRATIC_CYCLIC:
        z, _ = _policy_iteration_closed_form(y, model, max_iter)
    else:
        z, _ = _policy_iteration(y, model, max_iter)
    scale = 1.0 + np.abs(z).max() + np.abs(model.cbar).max()
    defect = np.max(obstacle_values(z, model) - z)
    if defect > 1e-10 * scale or np.any(z < y - 1e-12 * scale):
        raise ProjectionError(f"projection defect {defect:.3g}")
    return z


# --------------------------------------------------------------------------
# signed costs


def shift_to_positive_costs(y0, model: ControlledTransitionModel) -> ControlledTransitionModel:
    """Re-centre the domain at an interior point so every cost is positive.

    The new costs are ``cbar^u + Q^u y0`` (the slacks of ``y0``); the new
    domain is the old one translated by ``-y0``.  The closed-form obstacle,
    if any, is dropped and the grid is used.
    """
    y0 = np.asarray(y0, dtype=float)
    Q = np.eye(model.d)[None] - model.P
    c_new = model.cbar + np.einsum("uij,j->ui", Q, y0)
    if model.closed_form is not None:
        inside, slack = membership(y0, model)
        if slack <= 0:
            raise ValidationError("y0 is not strictly interior")
    if not np.all(c_new > 0):
        raise ValidationError(f"y0 is not strictly interior (smallest slack {c_new.min():.3g})")
    return ControlledTransitionModel(P=model.P, cbar=c_new, controls=model.controls,
                                     name=(model.name + " shifted").strip())


# --------------------------------------------------------------------------
# triangle inequality / round trips


@dataclass(frozen=True)
class TriangleReport:
    holds: bool
    worst_violation: float
    worst_triple: tuple | None
    min_round_trip: float
    worst_cycle: tuple
    nonempty: bool

    @property
    def consistent(self):
        """Triangle inequality and nonemptiness must agree."""
        return self.holds == self.nonempty


def triangle_check(analysis: ChainAnalysis, tol=1e-9) -> TriangleReport:
    """Check ``C[j,k] <= C[j,i] + C[i,k]`` and round-trip costs up to length d."""
    C = analysis.C
    d = C.shape[0]
    # viol[j, i, k] = C[j,k] - C[j,i] - C[i,k]
    viol = C[:, None, :] - (C[:, :, None] + C[None, :, :])
    worst = float(viol.max())
    wt = tuple(int(t) for t in np.unravel_index(np.argmax(viol), viol.shape))
    min_rt, worst_cycle = np.inf, ()
    for n in range(2, d + 1):
        for cyc in itertools.permutations(range(d), n):
            if cyc[0] != min(cyc):
                continue
            cost = sum(C[cyc[k], cyc[(k + 1) % n]] for k in range(n))
            if cost < min_rt:
                min_rt, worst_cycle = cost, cyc
    scale = 1.0 + np.abs(C).max()
    holds = worst <= tol * scale and min_rt >= -tol * scale
    return TriangleReport(holds=bool(holds), worst_violation=worst,
                          worst_triple=wt if worst > tol * scale else None,
                          min_round_trip=float(min_rt), worst_cycle=worst_cycle,
                          nonempty=analysis.mean_cost >= -tol * scale)


# --------------------------------------------------------------------------
# slice polygon (d = 3)


def _exact_polygon(model):
    N, b = _lp_rows(model)
    A = N[:, :2]  # y_3 = 0 on the slice
    keep = np.linalg.norm(A, axis=1) > 1e-15
    A, b = A[keep], b[keep]
    scale = 1.0 + np.abs(b).max()
    pts = []
    for k, l in itertools.combinations(range(A.shape[0]), 2):
        M = A[[k, l]]
        if abs(np.linalg.det(M)) < 1e-14:
            continue
        p = np.linalg.solve(M, b[[k, l]])
        if np.all(A @ p <= b + 1e-9 * scale):
            pts.append(p)
    if not pts:
        raise DomainError("slice has no vertices")
    pts = np.array(pts)
    uniq = []
    for p in pts:
        if not any(np.max(np.abs(p - q)) < 1e-9 * scale for q in uniq):
            uniq.append(p)
    P2 = np.array(uniq)
    c = P2.mean(axis=0)
    order = np.argsort(np.arctan2(P2[:, 1] - c[1], P2[:, 0] - c[0]))
    P2 = P2[order]
    return np.column_stack([P2, np.zeros(len(P2))]) + 0.0  # drop signed zeros


def _trace_polygon(model, anchor, resolution):
    out = []
    for k in range(resolution):
        ang = 2.0 * np.pi * k / resolution
        w = np.array([np.cos(ang), np.sin(ang), 0.0])
        hi = 1.0
        for _ in range(80):
            if not membership(anchor + hi * w, model, tol=0.0)[0]:
                break
            hi *= 2.0
        else:
            raise DomainError("slice is unbounded along a traced direction")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if membership(anchor + mid * w, model, tol=0.0)[0]:
                lo = mid
            else:
                hi = mid
        out.append(anchor + lo * w)
    return np.array(out)


def emit_slice_polygon(model: ControlledTransitionModel, resolution=360, method="auto"):
    """Ordered boundary points of the slice ``y_3 = 0`` for a 3-mode model.

    ``method="auto"`` returns the exact vertices when the domain is a
    polytope (uncontrolled, or a finite control grid) and traces the boundary
    along ``resolution`` rays from an interior anchor for the closed-form
    obstacle.  ``method="trace"`` forces ray tracing.
    """
    if model.d != 3:
        raise DomainError("slice polygon is only emitted for d = 3")
    s, y_lp = _cached_slack(model)
    if s <= 1e-10 * (1.0 + np.abs(model.cbar).max()):
        raise DomainError("interior empty; no polygon to emit")
    if method == "auto":
        if model.is_uncontrolled:
            return slice_vertices(model)
        if model.closed_form is None:
            return _exact_polygon(model)
        method = "trace"
    if method != "trace":
        raise ValueError(f"unknown method {method!r}")
    if model.is_uncontrolled:
        anchor = slice_vertices(model).mean(axis=0)
    else:
        anchor = reduce_to_slice(y_lp)
        if membership(anchor, model)[1] <= 0:
            raise DomainError("could not find an interior anchor for tracing")
    return _trace_polygon(model, anchor, int(resolution))
