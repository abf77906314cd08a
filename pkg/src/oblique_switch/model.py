"""Controlled transition models and the named instances used across the package."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import StructuralError, ValidationError
from .markov import validate_model

__all__ = [
    "ControlledTransitionModel",
    "example1",
    "example2",
    "example3",
    "classical_embedding",
    "symmetric_model",
    "dim3_model",
    "controlled_costs_counterexample",
    "dim4_counterexample_matrix",
    "uncontrolled",
]

QUADRATIC_CYCLIC = "quadratic-cyclic"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ControlledTransitionModel:
    """Finite control grid with one transition matrix and cost vector per control.

    Attributes
    ----------
    P : ndarray, shape (n_controls, d, d)
    cbar : ndarray, shape (n_controls, d)
    controls : tuple
        Ordered control labels; position in the tuple is the control index.
    closed_form : str or None
        ``"quadratic-cyclic"`` selects the exact obstacle of the controlled
        example with ``P^u`` a cyclic mixture and cost ``1 - u(1-u)``.  The grid
        stays available for everything that needs finitely many controls.
    """

    P: np.ndarray
    cbar: np.ndarray
    controls: tuple = None
    closed_form: str | None = None
    name: str = ""
    report: object = field(default=None, repr=False)

    def __post_init__(self):
        P = _frozen(self.P)
        c = _frozen(self.cbar)
        if P.ndim == 2:
            P = _frozen(P[None])
        if c.ndim == 1:
            c = _frozen(c[None])
        report = validate_model(P, c)
        if not report.valid:
            raise ValidationError(str(report))
        controls = self.controls
        if controls is None:
            controls = tuple(range(P.shape[0]))
        controls = tuple(controls)
        if len(controls) != P.shape[0]:
            raise StructuralError(f"{len(controls)} control labels for {P.shape[0]} matrices")
        if len(set(controls)) != len(controls) or list(controls) != sorted(controls):
            raise StructuralError("control labels must be distinct and increasing")
        if self.closed_form not in (None, QUADRATIC_CYCLIC):
            raise StructuralError(f"unknown closed-form obstacle {self.closed_form!r}")
        if self.closed_form == QUADRATIC_CYCLIC and P.shape[1] != 3:
            raise StructuralError("quadratic-cyclic obstacle is defined for d = 3")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "cbar", c)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "report", report)

    @property
    def d(self) -> int:
        return self.P.shape[1]

    @property
    def n_controls(self) -> int:
        return self.P.shape[0]

    @property
    def is_uncontrolled(self) -> bool:
        return self.n_controls == 1 and self.closed_form is None

    @property
    def c_hat(self) -> float:
        return float(self.cbar.min())

    @property
    def c_check(self) -> float:
        return float(self.cbar.max())

    def Q(self, u=0) -> np.ndarray:
        return np.eye(self.d) - self.P[u]

    def half_spaces(self):
        """Constraints ``n . y <= b`` describing the domain on the control grid.

        Returns ``(normals, offsets, labels)`` with one row per ``(mode, control)``;
        the normal is the mode's row of ``-Q^u`` and the offset its cost.
        """
        normals, offsets, labels = [], [], []
        for u in range(self.n_controls):
            N = -self.Q(u)
            for i in range(self.d):
                normals.append(N[i])
                offsets.append(self.cbar[u, i])
                labels.append((i, u))
        return np.array(normals), np.array(offsets), labels

    def grid_only(self) -> "ControlledTransitionModel":
        """Same model with the closed-form obstacle switched off."""
        if self.closed_form is None:
            return self
        return replace(self, closed_form=None, name=self.name + " (grid)", report=None)


def uncontrolled(P, cbar, name="") -> ControlledTransitionModel:
    return ControlledTransitionModel(P=np.asarray(P, float)[None], cbar=np.asarray(cbar, float)[None],
                                     controls=(0,), name=name)


def classical_embedding(c) -> ControlledTransitionModel:
    """Classical switching with pairwise costs ``c[i, j]`` as a randomised model.

    Control ``u`` in ``1..d-1`` moves mode ``i`` deterministically to
    ``(i + u) mod d`` and charges ``c[i, (i + u) mod d]``.
    """
    c = np.asarray(c, dtype=float)
    d = c.shape[0]
    if c.shape != (d, d) or d < 2:
        raise StructuralError("cost matrix must be square with d >= 2")
    if np.any(np.diag(c) != 0.0):
        raise ValidationError("classical cost matrix must have a zero diagonal")
    P = np.zeros((d - 1, d, d))
    cbar = np.zeros((d - 1, d))
    for k, u in enumerate(range(1, d)):
        for i in range(d):
            j = (i + u) % d
            P[k, i, j] = 1.0
            cbar[k, i] = c[i, j]
    return ControlledTransitionModel(P=P, cbar=cbar, controls=tuple(range(1, d)), name="classical")


def example1() -> ControlledTransitionModel:
    """Classical three-mode switching with unit costs."""
    m = classical_embedding(np.ones((3, 3)) - np.eye(3))
    return replace(m, name="example1", report=None)


def example2(cost=1.0) -> ControlledTransitionModel:
    """Uncontrolled randomised switching: jump uniformly to one of the other two modes."""
    P = np.full((3, 3), 0.5)
    np.fill_diagonal(P, 0.0)
    return uncontrolled(P, np.full(3, float(cost)) if np.ndim(cost) == 0 else cost, name="example2")


def _cyclic_mixture(u):
    u = float(u)
    return np.array([[0.0, u, 1.0 - u],
                     [1.0 - u, 0.0, u],
                     [u, 1.0 - u, 0.0]])


def example3(grid=101, closed_form=True) -> ControlledTransitionModel:
    """Controlled randomisation on ``[0, 1]`` with cost ``1 - u(1 - u)``.

    ``grid`` uniform controls are kept for routines that need a finite set.
    With ``closed_form`` the obstacle is maximised exactly over ``[0, 1]``.
    """
    us = np.linspace(0.0, 1.0, int(grid))
    P = np.stack([_cyclic_mixture(u) for u in us])
    cbar = np.stack([np.full(3, 1.0 - u * (1.0 - u)) for u in us])
    return ControlledTransitionModel(P=P, cbar=cbar, controls=tuple(float(u) for u in us),
                                     closed_form=QUADRATIC_CYCLIC if closed_form else None,
                                     name="example3")


def symmetric_model(d, cost=1.0) -> ControlledTransitionModel:
    """Jump uniformly to any other mode; ``d >= 3``."""
    if d < 3:
        raise StructuralError("symmetric family needs d >= 3")
    P = np.full((d, d), 1.0 / (d - 1))
    np.fill_diagonal(P, 0.0)
    c = np.full(d, float(cost)) if np.ndim(cost) == 0 else np.asarray(cost, float)
    return uncontrolled(P, c, name=f"symmetric({d})")


def dim3_model(p, q, r, costs=(1.0, 1.0, 1.0)) -> ControlledTransitionModel:
    P = np.array([[0.0, p, 1.0 - p],
                  [q, 0.0, 1.0 - q],
                  [r, 1.0 - r, 0.0]])
    return uncontrolled(P, np.asarray(costs, float), name=f"dim3({p},{q},{r})")


def controlled_costs_counterexample() -> ControlledTransitionModel:
    """Two controls sharing one chain, where pairwise excursion bounds mislead.

    The minimal controlled excursion costs have positive pair sums, yet the
    domain is empty because the cheapest cost per mode averages negative.
    """
    P = np.full((3, 3), 0.5)
    np.fill_diagonal(P, 0.0)
    return ControlledTransitionModel(
        P=np.stack([P, P]),
        cbar=np.array([[-0.5, 1.2, 0.7], [1.5, 0.2, 0.2]]),
        controls=(0, 1), name="controlled-costs-counterexample")


def dim4_counterexample_matrix() -> np.ndarray:
    """Irreducible 4-state chain for which no admissible reflection operator exists."""
    s = np.sqrt(3.0)
    return np.array([[0.0, s / 2, 0.0, 1.0 - s / 2],
                     [1.0 - s / 2, 0.0, s - 1.0, 1.0 - s / 2],
                     [0.0, 1.0, 0.0, 0.0],
                     [1 / 3, 1 / 3, 1 / 3, 0.0]])
