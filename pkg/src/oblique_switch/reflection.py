"""Oblique reflection operators on the switching domain.

A reflection field ``H`` maps every outward normal ``v`` of the domain at
``y`` to a pushing direction ``H(y) v`` that only involves the active modes
(nonpositive entries, zero elsewhere), with ``v' H(y) v >= eta |v|^2``.
Fields are stored by their matrices at the slice vertices and interpolated
with barycentric weights.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .domain import barycentric, euclidean_project, membership, reduce_to_slice, slice_vertices
from .errors import CapabilityError, ConstructionError, DomainError, StructuralError
from .markov import analyze_chain, irreducible, minor
from .model import ControlledTransitionModel, dim3_model, example3, symmetric_model

__all__ = [
    "CopositivityResult",
    "copositivity_check",
    "ReflectionField",
    "HCertificate",
    "build_H_markovian",
    "build_H_dim3",
    "build_H_symmetric",
    "symmetric_vertex_matrix",
    "build_H_controlled_dim3_vertices",
    "verify_H",
    "dim4_counterexample",
    "cone_eta",
]

EXACT_COPOSITIVE_MAX = 6
ETA_ACCEPT = 1e-6
CONE_TOL = 1e-9


# --------------------------------------------------------------------------
# copositivity


@dataclass(frozen=True)
class CopositivityResult:
    status: str  # "strict" | "not-strict" | "inconclusive"
    method: str
    min_value: float | None = None  # min of x'Mx over the standard simplex
    witness: np.ndarray | None = None

    @property
    def strict(self):
        return self.status == "strict"


def _simplex_min_exact(S):
    """Exact minimum of ``x'Sx`` over the standard simplex (``S`` symmetric).

    Every face is visited; on each face the interior critical point solves
    ``S_F x = t 1, 1'x = 1``.  Faces where that system is singular carry their
    minimum on a lower-dimensional face too, so skipping them is harmless.
    """
    n = S.shape[0]
    best, arg = np.inf, None
    for k in range(1, n + 1):
        for F in itertools.combinations(range(n), k):
            F = list(F)
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = S[np.ix_(F, F)]
            K[:k, k] = -1.0
            K[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            xF = sol[:k]
            if not np.all(np.isfinite(xF)) or xF.min() < -1e-14:
                continue
            x = np.zeros(n)
            x[F] = np.clip(xF, 0.0, None)
            x /= x.sum()
            val = float(x @ S @ x)
            if val < best:
                best, arg = val, x
    return best, arg


def copositivity_check(M, n_samples=100_000, seed=0) -> CopositivityResult:
    """Decide strict copositivity of ``M`` (``x'Mx > 0`` for nonzero ``x >= 0``).

    Positive definiteness of the symmetric part, or a nonnegative matrix with
    positive diagonal, certifies directly.  Otherwise the simplex minimum is
    computed exactly by face enumeration up to size 6, and sampled above
    that (where only a negative finding is conclusive).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise StructuralError("copositivity needs a square matrix")
    S = 0.5 * (M + M.T)
    n = S.shape[0]
    scale = max(1.0, np.abs(S).max())
    lam_min = np.linalg.eigvalsh(S)[0]
    if lam_min > 1e-12 * scale:
        return CopositivityResult("strict", "positive-definite", None, None)
    if np.all(S >= 0) and np.all(np.diag(S) > 0):
        return CopositivityResult("strict", "nonnegative-entries", float(np.diag(S).min() / n), None)
    if n <= EXACT_COPOSITIVE_MAX:
        val, x = _simplex_min_exact(S)
        if val > 1e-12 * scale:
            return CopositivityResult("strict", "face-enumeration", val, None)
        return CopositivityResult("not-strict", "face-enumeration", val, x / x.max())
    rng = np.random.default_rng(seed)
    X = rng.dirichlet(np.full(n, 0.5), size=n_samples)
    X = np.vstack([np.eye(n), X])
    vals = np.einsum("ij,jk,ik->i", X, S, X)
    k = int(np.argmin(vals))
    if vals[k] <= 0.0:
        return CopositivityResult("not-strict", "sampling", float(vals[k]), X[k] / X[k].max())
    return CopositivityResult("inconclusive", "sampling", float(vals[k]), None)


# --------------------------------------------------------------------------
# field


@dataclass(frozen=True, eq=False)
class ReflectionField:
    """Piecewise-linear matrix field on the slice, extended by translation and projection.

    Attributes
    ----------
    construction : str
        ``"markovian-barycentric"``, ``"dim3-nonmarkovian"``,
        ``"symmetric-family"``, ``"controlled-dim3-vertices"`` or a free label.
    vertices : ndarray, shape (n_vertices, d)
        Slice points carrying a matrix (last coordinate 0).
    vertex_matrices : ndarray, shape (n_vertices, d, d)
    vertex_normals : list or None
        Explicit normal-cone generators per vertex (controlled fields only).
    notes : list of str
    """

    construction: str
    model: ControlledTransitionModel
    vertices: np.ndarray
    vertex_matrices: np.ndarray
    vertex_only: bool = False
    vertex_normals: list | None = None
    notes: list = field(default_factory=list)
    certificate: "HCertificate | None" = None

    @property
    def d(self):
        return self.vertices.shape[1]

    @property
    def symmetric(self):
        return self.construction in ("dim3-nonmarkovian", "symmetric-family", "controlled-dim3-vertices")

    def _vertex_index(self, y, tol=1e-12):
        z = reduce_to_slice(y)
        gap = np.abs(self.vertices - z).max(axis=1)
        k = int(np.argmin(gap))
        return k if gap[k] <= tol * (1.0 + np.abs(z).max()) else None

    def weights(self, y):
        """Barycentric weights of the point of the slice representing ``y``."""
        y = np.asarray(y, dtype=float)
        if not membership(y, self.model, tol=1e-12)[0]:
            y = euclidean_project(y, self.model)
        lam = barycentric(y, self.vertices)
        lam = np.clip(lam, 0.0, None)
        return lam / lam.sum()

    def evaluate(self, y):
        """``H(y)``; constant along ``(1, ..., 1)`` and equal to ``H(proj(y))`` off the domain."""
        if self.vertex_only:
            k = self._vertex_index(y)
            if k is None:
                raise CapabilityError("only vertex matrices are available for this field")
            return self.vertex_matrices[k].copy()
        lam = self.weights(y)
        return np.einsum("k,kij->ij", lam, self.vertex_matrices)

    def normal_cone(self, y, active_tol=1e-8):
        """Generators of the normal cone at a slice point and the active modes they map to."""
        if self.vertex_only:
            k = self._vertex_index(y)
            if k is None:
                raise CapabilityError("normal cones are only tabulated at vertices")
            G, act = self.vertex_normals[k]
            return np.asarray(G), list(act)
        lam = barycentric(reduce_to_slice(y), self.vertices)
        J = np.flatnonzero(lam <= active_tol)
        return -self.model.Q(0)[J], list(J)

    def with_certificate(self, cert):
        return ReflectionField(self.construction, self.model, self.vertices, self.vertex_matrices,
                               self.vertex_only, self.vertex_normals, list(self.notes), cert)

    def to_record(self):
        """Plain-data view for reports."""
        rec = {
            "construction": self.construction,
            "d": self.d,
            "vertices": self.vertices.tolist(),
            "vertex_matrices": self.vertex_matrices.tolist(),
            "vertex_only": self.vertex_only,
            "notes": list(self.notes),
        }
        if self.certificate is not None:
            rec["certificate"] = self.certificate.to_record()
        return rec


# --------------------------------------------------------------------------
# verification


def cone_eta(H, G):
    """Exact ``min v'Hv / |v|^2`` over the cone spanned by the rows of ``G``.

    The minimum of a Rayleigh quotient over a polyhedral cone sits at a
    generalised eigenvector of some face with strictly positive weights, so
    every subset of generators is scanned.
    """
    G = np.atleast_2d(G)
    k = G.shape[0]
    if k == 0:
        return np.inf
    A = G @ (0.5 * (H + H.T)) @ G.T
    B = G @ G.T
    best = np.inf
    for r in range(1, k + 1):
        for S in itertools.combinations(range(k), r):
            S = list(S)
            w, V = scipy.linalg.eigh(A[np.ix_(S, S)], B[np.ix_(S, S)])
            for m in range(r):
                v = V[:, m]
                v = v if v.sum() >= 0 else -v
                if v.min() > -1e-12 * np.abs(v).max():
                    best = min(best, float(w[m]))
    return best


@dataclass(frozen=True)
class HCertificate:
    passed: bool
    eta_min: float
    eta_sampled: float
    cone_max_defect: float
    symmetry_defect: float
    bound_max: float
    spectral_L: float | None
    n_samples: int
    seed: int
    failures: list = field(default_factory=list)

    def to_record(self):
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}

    def __str__(self):
        head = "PASS" if self.passed else "FAIL"
        return (f"{head}: eta_min={self.eta_min:.6g} cone_defect={self.cone_max_defect:.3g} "
                f"symmetry={self.symmetry_defect:.3g} bound={self.bound_max:.6g} samples={self.n_samples}")


def _boundary_samples(n_vertices, count, rng):
    """Barycentric weights stratified over boundary faces (vertices first)."""
    out = [np.eye(n_vertices)[k] for k in range(n_vertices)]
    dims = list(range(2, n_vertices))  # support sizes of proper faces above vertices
    if not dims:
        return np.array(out[:max(count, n_vertices)])
    k = 0
    while len(out) < count:
        r = dims[k % len(dims)]
        S = rng.choice(n_vertices, size=r, replace=False)
        lam = np.zeros(n_vertices)
        lam[S] = rng.dirichlet(np.ones(r))
        out.append(lam)
        k += 1
    return np.array(out)


def verify_H(field: ReflectionField, sample_count=1000, seed=0, eta_accept=ETA_ACCEPT,
             cone_tol=CONE_TOL) -> HCertificate:
    """Check cone mapping, coercivity, bound and (for symmetric fields) spectra.

    Boundary points of the slice are sampled per face (all vertices, then
    edges, then higher faces in turn).  At each point the normal-cone
    generators are mapped through ``H(y)``: the image must be nonpositive and
    supported on the active modes.  ``eta_min`` is the exact cone minimum of
    the quadratic form at the sampled points, ``eta_sampled`` a plain
    sampling estimate over random unit cone directions.
    """
    rng = np.random.default_rng(seed)
    failures = []
    if field.vertex_only:
        points = [field.vertices[k] for k in range(len(field.vertices))]
    else:
        lams = _boundary_samples(len(field.vertices), sample_count, rng)
        points = list(lams @ field.vertices)
    eta_min = eta_s = np.inf
    cone_def = sym_def = bound = 0.0
    for idx, y in enumerate(points):
        H = field.evaluate(y)
        G, act = field.normal_cone(y)
        bound = max(bound, float(np.linalg.norm(H, 2)))
        sym_def = max(sym_def, float(np.abs(H - H.T).max()))
        if len(G) == 0:
            continue
        img = G @ H.T  # row m is H g_m
        inactive = np.setdiff1d(np.arange(field.d), act)
        dfc = max(float(img.max(initial=-np.inf)), 0.0)
        if inactive.size:
            dfc = max(dfc, float(np.abs(img[:, inactive]).max()))
        if dfc > cone_tol:
            failures.append(f"sample {idx} y={np.round(y, 12).tolist()}: cone defect {dfc:.3g}")
        cone_def = max(cone_def, dfc)
        eta = cone_eta(H, G)
        if eta <= eta_accept:
            failures.append(f"sample {idx} y={np.round(y, 12).tolist()}: eta {eta:.3g}")
        eta_min = min(eta_min, eta)
        alpha = rng.exponential(size=(16, len(G)))
        V = alpha @ G
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        eta_s = min(eta_s, float(np.einsum("ij,jk,ik->i", V, H, V).min()))

    spectral_L = None
    if field.symmetric:
        if sym_def > 1e-12:
            failures.append(f"symmetry defect {sym_def:.3g}")
        ev = np.concatenate([np.linalg.eigvalsh(0.5 * (M + M.T)) for M in field.vertex_matrices])
        if ev.min() <= 0:
            failures.append(f"vertex matrix not positive definite (min eigenvalue {ev.min():.3g})")
            spectral_L = np.inf
        else:
            spectral_L = float(max(ev.max(), 1.0 / ev.min()))
    if not np.isfinite(eta_min):
        eta_min = 0.0 if failures else eta_min
    return HCertificate(passed=not failures, eta_min=float(eta_min), eta_sampled=float(eta_s),
                        cone_max_defect=cone_def, symmetry_defect=sym_def, bound_max=bound,
                        spectral_L=spectral_L, n_samples=len(points), seed=seed, failures=failures)


# --------------------------------------------------------------------------
# constructions


def _insert_delete(i, d):
    """``I^i`` (R^{d-1} -> R^d, zero at ``i``) and ``P^i`` (drop coordinate ``i``)."""
    keep = [k for k in range(d) if k != i]
    Ins = np.zeros((d, d - 1))
    Ins[keep, np.arange(d - 1)] = 1.0
    return Ins, Ins.T.copy()


def build_H_markovian(model: ControlledTransitionModel, sample_count=1000, seed=0,
                      verify=True) -> ReflectionField:
    """Barycentric field with ``H(y^i) = I^i B^i P^i``, ``B^i = (Q^{(i,i)'})^{-1}``.

    ``H(y^i)`` sends each active normal ``n_j`` (row ``j`` of ``-Q``, ``j != i``)
    to ``-e_j``.  Coercivity on the cone at ``y^i`` is strict copositivity
    of ``Q^{(i,i)}``, which is checked for every vertex first.

    Raises
    ------
    ConstructionError
        When some ``Q^{(i,i)}`` is not certified strictly copositive (the
        witness is attached) or the domain has no interior.
    """
    if not model.is_uncontrolled:
        raise CapabilityError("Markovian construction needs an uncontrolled model")
    P = model.P[0]
    if not irreducible(P):
        raise ConstructionError("chain is reducible")
    a = analyze_chain(P, model.cbar[0])
    if not a.mean_cost > 0:
        raise ConstructionError("domain has empty interior (mean cost <= 0)")
    d = model.d
    Q = a.Q
    mats = np.zeros((d, d, d))
    for i in range(d):
        Qi = minor(Q, i, i)
        cp = copositivity_check(Qi)
        if not cp.strict:
            raise ConstructionError(
                f"Q^({i + 1},{i + 1}) is not certified strictly copositive ({cp.status}, "
                f"min over simplex {cp.min_value})", witness=cp.witness)
        Ins, Dl = _insert_delete(i, d)
        B = np.linalg.inv(Qi.T)
        mats[i] = Ins @ B @ Dl
    f = ReflectionField("markovian-barycentric", model, slice_vertices(model, a), mats)
    if verify:
        f = f.with_certificate(verify_H(f, sample_count, seed))
    return f


def _dim3_vertex_matrices(p, q, r):
    H1 = np.array([[1 + p, 1 + p * q, 1], [1 + p * q, 1 + q, 1], [1, 1, 1]]) / (p * q * (1 - p * q))
    s = r * (1 - p)
    H2 = np.array([[2 - p, 1, 1 + s], [1, 1, 1], [1 + s, 1, 1 + r]]) / (s * (1 - s))
    t = (1 - q) * (1 - r)
    H3 = np.array([[1, 1, 1], [1, 2 - q, 1 + t], [1, 1 + t, 2 - r]]) / (t * (1 - t))
    return H1, H2, H3


def build_H_dim3(p, q, r, costs=(1.0, 1.0, 1.0), sample_count=1000, seed=0, verify=True) -> ReflectionField:
    """Symmetric positive definite field for the general 3-mode chain.

    The chain jumps from mode 1 to 2 w.p. ``p``, from 2 to 1 w.p. ``q`` and
    from 3 to 1 w.p. ``r``.  The three vertex matrices are closed forms; the
    one at the vertex where modes 1 and 2 are active (slice vertex index 2)
    satisfies ``H (-1, p, 1-p)' = (-1/q, 0, 0)'`` and
    ``H (q, -1, 1-q)' = (0, -1/p, 0)'``.
    """
    for name, v in (("p", p), ("q", q), ("r", r)):
        if not 0.0 < v < 1.0:
            raise ConstructionError(f"{name}={v} must lie strictly between 0 and 1")
    model = dim3_model(p, q, r, costs)
    H1, H2, H3 = _dim3_vertex_matrices(p, q, r)
    mats = np.stack([H3, H2, H1])  # slice vertex j has every constraint but j active
    f = ReflectionField("dim3-nonmarkovian", model, slice_vertices(model), mats,
                        notes=["continuous, not globally C1 (projection extension off the domain)"])
    if verify:
        f = f.with_certificate(verify_H(f, sample_count, seed))
    return f


def symmetric_vertex_matrix(d, a=2.0):
    """Vertex matrix at the last slice vertex for the uniform-jump chain."""
    if d < 3:
        raise ConstructionError("symmetric family needs d >= 3")
    H = np.full((d, d), a - (d - 1) / d)
    H[-1, :] = H[:, -1] = a - 2 * (d - 1) / d
    np.fill_diagonal(H, a)
    H[-1, -1] = a - 2 * (d - 1) / d
    return H


def build_H_symmetric(d, a=2.0, cost=1.0, sample_count=1000, seed=0, verify=True) -> ReflectionField:
    """Field for ``P_ij = 1/(d-1)`` (``i != j``); vertex ``k`` is vertex ``d`` with ``k``, ``d`` swapped."""
    if d < 3:
        raise ConstructionError("symmetric family needs d >= 3")
    model = symmetric_model(d, cost)
    Hd = symmetric_vertex_matrix(d, a)
    mats = np.empty((d, d, d))
    for k in range(d):
        perm = np.arange(d)
        perm[[k, d - 1]] = perm[[d - 1, k]]
        mats[k] = Hd[np.ix_(perm, perm)]
    f = ReflectionField("symmetric-family", model, slice_vertices(model), mats,
                        notes=["continuous, not globally C1 (projection extension off the domain)"])
    if verify:
        f = f.with_certificate(verify_H(f, sample_count, seed))
    return f


@dataclass(frozen=True)
class ControlledVertexRecord:
    field: ReflectionField
    identity_residuals: dict


def build_H_controlled_dim3_vertices(verify=True) -> ControlledVertexRecord:
    """Vertex matrices for the cyclic-mixture example with quadratic costs.

    Slice vertices are ``(1,0,0)``, ``(0,1,0)`` and ``(-1,-1,0)``.  The first
    two matrices are the closed forms; the third follows from the model's
    invariance under the cyclic relabelling ``1 -> 2 -> 3 -> 1``.  Only the
    vertices carry matrices; evaluating elsewhere raises.
    """
    model = example3()
    H1 = np.array([[1.0, 1, 1], [1, 2, 1], [1, 1, 2]])
    H2 = np.array([[2.0, 1, 1], [1, 1, 1], [1, 1, 2]])
    H3 = np.array([[2.0, 1, 1], [1, 2, 1], [1, 1, 1]])
    verts = np.array([[1.0, 0, 0], [0, 1, 0], [-1, -1, 0]])
    normals = [
        (np.array([[1.0, 0, -1], [1, -1, 0]]), [2, 1]),
        (np.array([[-1.0, 1, 0], [0, 1, -1]]), [0, 2]),
        (np.array([[-1.0, 0, 1], [0, -1, 1]]), [0, 1]),
    ]
    checks = {
        "H(y1)(1,0,-1)=(0,0,-1)": H1 @ [1, 0, -1] - np.array([0, 0, -1]),
        "H(y1)(1,-1,0)=(0,-1,0)": H1 @ [1, -1, 0] - np.array([0, -1, 0]),
        "H(y2)(-1,1,0)=(-1,0,0)": H2 @ [-1, 1, 0] - np.array([-1, 0, 0]),
        "H(y2)(0,1,-1)=(0,0,-1)": H2 @ [0, 1, -1] - np.array([0, 0, -1]),
    }
    residuals = {k: float(np.abs(v).max()) for k, v in checks.items()}
    f = ReflectionField("controlled-dim3-vertices", model, verts, np.stack([H1, H2, H3]),
                        vertex_only=True, vertex_normals=normals,
                        notes=["third vertex matrix obtained by cyclic relabelling",
                               "edge interpolation not provided"])
    if verify:
        f = f.with_certificate(verify_H(f))
    return ControlledVertexRecord(field=f, identity_residuals=residuals)


# --------------------------------------------------------------------------
# impossibility witness


@dataclass(frozen=True)
class Dim4Witness:
    P: np.ndarray
    normals: np.ndarray
    H: np.ndarray
    v: np.ndarray
    vHv: float
    alpha: np.ndarray
    irreducible: bool
    row_sum_defect: float
    normal_sums: np.ndarray


def dim4_counterexample() -> Dim4Witness:
    """Four-mode chain where the vertex matrix is forced to be degenerate.

    At the vertex where modes 1-3 are active, the requirements ``H n_j = -e_j``
    (``j = 1, 2, 3``) force ``v' H v = alpha' Q^{(4,4)} alpha`` for
    ``v = sum alpha_j n_j``; the nonnegative ``alpha = (1/2, 1, sqrt(3)/2)``
    makes it vanish, so no coercive ``H`` exists.
    """
    from .model import dim4_counterexample_matrix

    P = dim4_counterexample_matrix()
    Q = np.eye(4) - P
    N = -Q[:3]  # rows n_1, n_2, n_3
    T = -np.eye(4)[:, :3]
    H = T @ np.linalg.pinv(N.T)
    alpha = np.array([0.5, 1.0, np.sqrt(3.0) / 2])
    v = alpha @ N
    return Dim4Witness(P=P, normals=N, H=H, v=v, vHv=float(v @ H @ v), alpha=alpha,
                       irreducible=irreducible(P), row_sum_defect=float(np.abs(P.sum(1) - 1).max()),
                       normal_sums=N.sum(axis=1))
