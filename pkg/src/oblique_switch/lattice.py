"""Time x state lattices for a one-dimensional diffusion.

``dX = b(X) dt + sigma(X) dW`` with affine coefficients is replaced by a
Markov chain on a uniform grid.  Each node carries transition weights to
the grid and the standardised Brownian increment of every move, which the
solver uses for conditional expectations and the ``Z`` estimate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError

__all__ = ["SDEParams", "LatticeSpec", "build_lattice"]


@dataclass(frozen=True)
class SDEParams:
    """Affine coefficients ``b(x) = b0 + b1 x`` and ``sigma(x) = s0 + s1 x``."""

    b0: float = 0.0
    b1: float = 0.0
    s0: float = 1.0
    s1: float = 0.0
    x0: float = 0.0

    def drift(self, x):
        return self.b0 + self.b1 * np.asarray(x, dtype=float)

    def vol(self, x):
        return self.s0 + self.s1 * np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Uniform grid with one transition matrix per time step.

    Attributes
    ----------
    x : ndarray, shape (M,)
    W : ndarray, shape (M, M)
        ``W[m, n]`` is the probability of moving from node ``m`` to ``n``.
    dW : ndarray, shape (M, M)
        Standardised increment ``(x_n - x_m - b(x_m) dt) / sigma(x_m)``.
    root : int
        Index of ``x0``.
    """

    T: float
    steps: int
    x: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    mode: str
    sde: SDEParams
    root: int

    @property
    def dt(self):
        return self.T / self.steps

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.steps + 1)

    @property
    def M(self):
        return self.x.size

    def expect(self, V):
        """Conditional expectation of next-step values ``V[M, ...]``."""
        return self.W @ V

    def sample_paths(self, uniforms):
        """Grid-index paths driven by ``uniforms[n_paths, steps]`` (inverse CDF per row)."""
        cum = np.cumsum(self.W, axis=1)
        n = uniforms.shape[0]
        idx = np.empty((n, self.steps + 1), dtype=np.int64)
        idx[:, 0] = self.root
        for k in range(self.steps):
            rows = cum[idx[:, k]]
            nxt = (rows <= uniforms[:, k:k + 1]).sum(axis=1)
            idx[:, k + 1] = np.minimum(nxt, self.M - 1)
        return idx


def _trinomial(sde, x, h, dt):
    M = x.size
    mu = sde.drift(x) * dt
    var = sde.vol(x) ** 2 * dt
    m2 = (var + mu ** 2) / (h * h)
    pu = 0.5 * m2 + mu / (2 * h)
    pd = 0.5 * m2 - mu / (2 * h)
    pm = 1.0 - m2
    P3 = np.stack([pd, pm, pu], axis=1)
    if P3.min() < -1e-15:
        bad = int(np.argmin(P3.min(axis=1)))
        lo = np.sqrt(var[bad] + mu[bad] ** 2)
        hi = (var[bad] + mu[bad] ** 2) / abs(mu[bad]) if mu[bad] else np.inf
        raise ValidationError(
            f"trinomial branch probability negative at x={x[bad]:.6g}; "
            f"admissible spacing lies in [{lo:.6g}, {hi:.6g}] (try {np.sqrt(lo * hi) if np.isfinite(hi) else 1.5 * lo:.6g})")
    P3 = np.clip(P3, 0.0, None)
    W = np.zeros((M, M))
    idx = np.arange(M)
    for off, col in zip((-1, 0, 1), P3.T):
        tgt = np.clip(idx + off, 0, M - 1)
        np.add.at(W, (idx, tgt), col)
    return W


def _gaussian(sde, x, h, dt):
    mean = x + sde.drift(x) * dt
    sd = sde.vol(x) * np.sqrt(dt)
    edges = np.concatenate([[-np.inf], 0.5 * (x[1:] + x[:-1]), [np.inf]])
    cdf = ndtr((edges[None, :] - mean[:, None]) / sd[:, None])
    return np.diff(cdf, axis=1)


def build_lattice(sde: SDEParams, T: float, steps: int, mode="trinomial", spacing=None,
                  half_width=None, coverage=5.0) -> LatticeSpec:
    """Grid ``x0 + m h`` (``|m| <= half_width``) with transition weights.

    Parameters
    ----------
    mode : {"trinomial", "gaussian"}
        ``trinomial`` matches the conditional mean and variance of the Euler
        step exactly with three branches (default spacing
        ``sigma sqrt(3 dt)``, ``half_width = steps`` so the tree from ``x0``
        never touches the clamped edges).  ``gaussian`` integrates the
        Euler-step normal law over grid cells (default spacing
        ``sigma sqrt(dt) / 2``; refused if spacing exceeds ``sigma sqrt(dt)``).
    coverage : float
        For the Gaussian mode without an explicit ``half_width``, the grid
        spans ``coverage * sigma * sqrt(T)`` on each side.
    """
    if steps < 1 or T <= 0:
        raise ValidationError("need T > 0 and at least one step")
    dt = T / steps
    s_ref = float(sde.vol(sde.x0))
    if s_ref <= 0:
        raise ValidationError("volatility must be positive at x0")
    if mode == "trinomial":
        h = s_ref * np.sqrt(3 * dt) if spacing is None else float(spacing)
        n = steps if half_width is None else int(half_width)
    elif mode == "gaussian":
        h = 0.5 * s_ref * np.sqrt(dt) if spacing is None else float(spacing)
        if h > s_ref * np.sqrt(dt) * (1 + 1e-12):
            raise ValidationError(
                f"grid too coarse: spacing {h:.6g} > sigma*sqrt(dt) = {s_ref * np.sqrt(dt):.6g}; "
                f"suggested spacing {0.5 * s_ref * np.sqrt(dt):.6g}")
        n = int(np.ceil(coverage * s_ref * np.sqrt(T) / h)) if half_width is None else int(half_width)
    else:
        raise ValidationError(f"unknown lattice mode {mode!r}")
    x = sde.x0 + h * np.arange(-n, n + 1)
    vol = sde.vol(x)
    if np.any(vol <= 0):
        raise ValidationError("volatility must stay positive on the grid")
    W = _trinomial(sde, x, h, dt) if mode == "trinomial" else _gaussian(sde, x, h, dt)
    W /= W.sum(axis=1, keepdims=True)
    dW = (x[None, :] - x[:, None] - sde.drift(x)[:, None] * dt) / vol[:, None]
    for a in (x, W, dW):
        a.setflags(write=False)
    return LatticeSpec(T=float(T), steps=int(steps), x=x, W=W, dW=dW, mode=mode, sde=sde, root=n)
