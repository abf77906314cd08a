"""Monte Carlo simulation of switching strategies with randomised transitions.

Paths of the driving state move on the solver's lattice, so a strategy's
estimated reward is directly comparable with the lattice value.  Random
numbers are counter-based: the uniform used for a given (seed, stream, path,
counter) never depends on how many paths are simulated together.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import obstacle_argmax
from .errors import CapabilityError, ValidationError
from .lattice import LatticeSpec
from .model import ControlledTransitionModel
from .solver import Driver, LatticeSolution

__all__ = [
    "hash_uniforms",
    "StrategySpec",
    "StrategyTrace",
    "RewardEstimate",
    "never_switch",
    "fixed_schedule",
    "randomized_baseline",
    "optimal_strategy",
    "sample_trace",
    "simulate",
    "evaluate_strategy",
    "verify_representation",
]

DEFAULT_SWITCH_CAP = 100
STREAM_X, STREAM_MODE, STREAM_DECIDE, STREAM_CONTROL = 0, 1, 2, 3

_G1 = np.uint64(0x9E3779B97F4A7C15)
_G2 = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_uniforms(seed, stream, path, counter):
    """Uniforms in (0, 1) from a splitmix64 hash of ``(seed, stream, path, counter)``.

    All arguments broadcast; integers must be nonnegative.
    """
    with np.errstate(over="ignore"):
        s = np.asarray(seed, dtype=np.uint64)
        z = _mix(s * _G2 + np.asarray(stream, dtype=np.uint64) * _G1 + _G1)
        z = _mix(z ^ (np.asarray(path, dtype=np.uint64) * _G2 + _G1))
        z = _mix(z + np.asarray(counter, dtype=np.uint64) * _G1)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


# --------------------------------------------------------------------------
# strategies


@dataclass(frozen=True, eq=False)
class StrategySpec:
    """What to do at each grid time.

    kind : {"never-switch", "fixed-schedule", "randomized-baseline", "threshold-from-solution"}
    params : dict
        ``fixed-schedule``: ``schedule`` list of ``(k, control_index)``, one
        switch each.  ``randomized-baseline``: ``p_switch`` and ``salt``.
        ``threshold-from-solution``: precomputed ``switch`` (bool
        ``[k, m, i]``) and ``control`` (int ``[k, m, i]``) tables.
    max_switches : int
        Cap on the total number of switches of a path.
    per_time_cap : int
        Cap on simultaneous switches at one grid time.
    """

    kind: str
    params: dict = field(default_factory=dict)
    max_switches: int = 10_000
    per_time_cap: int = DEFAULT_SWITCH_CAP

    def __post_init__(self):
        kinds = ("never-switch", "fixed-schedule", "randomized-baseline", "threshold-from-solution")
        if self.kind not in kinds:
            raise ValidationError(f"unknown strategy kind {self.kind!r}")
        if self.max_switches < 0 or self.per_time_cap < 1:
            raise ValidationError("switch caps must be positive")


def never_switch():
    return StrategySpec("never-switch")


def fixed_schedule(schedule):
    return StrategySpec("fixed-schedule", {"schedule": [(int(k), int(u)) for k, u in schedule]})


def randomized_baseline(p_switch=0.1, salt=0, max_switches=10_000):
    """Switch with probability ``p_switch`` once per grid time, with a uniformly drawn control."""
    return StrategySpec("randomized-baseline", {"p_switch": float(p_switch), "salt": int(salt)},
                        max_switches=max_switches)


def optimal_strategy(solution: LatticeSolution, model: ControlledTransitionModel = None, tol=1e-9,
                     per_time_cap=DEFAULT_SWITCH_CAP) -> StrategySpec:
    """First-hitting strategy read off a solved lattice.

    Switch from mode ``i`` at node ``(k, m)`` iff ``Y_i <= obstacle_i(Y) + tol``,
    using the smallest control attaining the obstacle's maximum.

    Raises
    ------
    ValidationError
        If ``model`` differs from the solved one.
    CapabilityError
        For closed-form obstacles (use ``model.grid_only()`` to solve).
    """
    if model is not None and model is not solution.model:
        same = (model.P.shape == solution.model.P.shape and np.array_equal(model.P, solution.model.P)
                and np.array_equal(model.cbar, solution.model.cbar))
        if not same:
            raise ValidationError("solution was computed for a different model")
    model = solution.model
    if model.closed_form is not None:
        raise CapabilityError("optimal strategy needs a finite control grid; solve model.grid_only()")
    Y = np.asarray(solution.Y)
    best, arg = obstacle_argmax(Y, model)
    scale = 1.0 + np.abs(Y).max()
    switch = Y <= best + tol * scale
    return StrategySpec("threshold-from-solution",
                        {"switch": switch, "control": arg, "steps": solution.lattice.steps,
                         "M": solution.lattice.M},
                        per_time_cap=per_time_cap)


# --------------------------------------------------------------------------
# simulation engine


@dataclass
class StrategyTrace:
    """One simulated path.

    ``zeta[n]`` is the mode after the ``n``-th switch (``zeta[0]`` the start),
    ``tau[n]`` / ``tau_index[n]`` the time of switch ``n+1``, ``alpha`` the
    control labels, ``uniforms`` the draws fed to the inverse CDF.  ``mode_path[k]``
    is the mode held on ``[t_k, t_{k+1})`` (after switches at ``t_k``);
    ``A[k]``, ``N[k]`` are cumulative cost and switch count up to and
    including ``t_k``.
    """

    zeta: list
    tau: list
    tau_index: list
    alpha: list
    uniforms: list
    costs: list
    mode_path: np.ndarray
    x_index: np.ndarray
    A: np.ndarray
    N: np.ndarray
    truncated: bool
    reward: float

    def to_csv(self, path, times):
        """Columns ``k, t, mode, control, uniform, cost, A, N`` (one row per switch)."""
        with open(path, "w") as fh:
            fh.write("k,t,mode,control,uniform,cost,A,N\n")
            A = 0.0
            for n, (k, u, c, lab) in enumerate(zip(self.tau_index, self.uniforms, self.costs, self.alpha)):
                A += c
                fh.write(f"{k},{times[k]:.17g},{self.zeta[n + 1]},{lab!r},{u:.17g},{c:.17g},{A:.17g},{n + 1}\n")


@dataclass(frozen=True)
class RewardEstimate:
    mean: float
    se: float
    n_paths: int
    seed: int
    truncated_fraction: float = 0.0
    mean_switches: float = 0.0


def _draw_next(model, controls, modes, u):
    rows = model.P[controls, modes]
    cum = np.cumsum(rows, axis=1)
    nxt = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(nxt, model.d - 1)


def simulate(model: ControlledTransitionModel, strategy: StrategySpec, lattice: LatticeSpec,
             driver: Driver, start_mode, x_paths, seed=0, path_ids=None, record=False):
    """Run a strategy along given lattice paths.

    Returns ``(rewards, n_switches, truncated, events)`` where ``events`` (when
    ``record``) lists ``(path, k, from_mode, control_index, uniform, cost, to_mode)``.
    """
    if not driver.yz_free:
        raise CapabilityError("strategy rewards need a driver f(t, x, i); use the lattice solver for (y, z) terms")
    if strategy.kind == "threshold-from-solution":
        if strategy.params["steps"] != lattice.steps or strategy.params["M"] != lattice.M:
            raise ValidationError("strategy tables do not match the lattice")
    x_paths = np.asarray(x_paths)
    P_n = x_paths.shape[0]
    ids = np.arange(P_n, dtype=np.uint64) if path_ids is None else np.asarray(path_ids, dtype=np.uint64)
    N, dt = lattice.steps, lattice.dt
    mode = np.full(P_n, int(start_mode), dtype=np.int64)
    A = np.zeros(P_n)
    n_sw = np.zeros(P_n, dtype=np.int64)
    trunc = np.zeros(P_n, dtype=bool)
    reward = np.zeros(P_n)
    events = [] if record else None
    mode_path = np.empty((P_n, N + 1), dtype=np.int64) if record else None
    A_path = np.empty((P_n, N + 1)) if record else None
    N_path = np.empty((P_n, N + 1), dtype=np.int64) if record else None
    cap = strategy.per_time_cap
    n_ctrl = model.n_controls
    sched = {}
    if strategy.kind == "fixed-schedule":
        for k, u in strategy.params["schedule"]:
            sched.setdefault(k, []).append(u)
    paths_all = np.arange(P_n)
    for k in range(N + 1):
        m = x_paths[:, k]
        for r in range(cap + 1):
            # which paths want to switch now, and with which control
            if strategy.kind == "never-switch":
                want = np.zeros(P_n, dtype=bool)
                ctrl = np.zeros(P_n, dtype=np.int64)
            elif strategy.kind == "fixed-schedule":
                lst = sched.get(k, [])
                want = np.full(P_n, r < len(lst))
                ctrl = np.full(P_n, lst[r] if r < len(lst) else 0, dtype=np.int64)
            elif strategy.kind == "randomized-baseline":
                salt = strategy.params["salt"]
                if r == 0:
                    ud = hash_uniforms(seed, STREAM_DECIDE + 4 * salt, ids, k)
                    want = ud < strategy.params["p_switch"]
                    uc = hash_uniforms(seed, STREAM_CONTROL + 4 * salt, ids, k)
                    ctrl = np.minimum((uc * n_ctrl).astype(np.int64), n_ctrl - 1)
                else:
                    want = np.zeros(P_n, dtype=bool)
            else:
                want = strategy.params["switch"][k, m, mode]
                ctrl = strategy.params["control"][k, m, mode]
            over = want & (n_sw >= strategy.max_switches)
            trunc |= over
            want = want & ~over
            if r == cap:
                trunc |= want
                break
            if not want.any():
                break
            idx = paths_all[want]
            u = hash_uniforms(seed, STREAM_MODE, ids[idx], np.uint64(k * (cap + 1) + r))
            c = model.cbar[ctrl[idx], mode[idx]]
            new = _draw_next(model, ctrl[idx], mode[idx], u)
            if record:
                for p, cc, uu, co, fm, tm in zip(idx, ctrl[idx], u, c, mode[idx], new):
                    events.append((int(p), k, int(fm), int(cc), float(uu), float(co), int(tm)))
            A[idx] += c
            n_sw[idx] += 1
            mode[idx] = new
        if record:
            mode_path[:, k] = mode
            A_path[:, k] = A
            N_path[:, k] = n_sw
        if k < N:
            reward += dt * driver.profit(lattice.times[k], lattice.x[m], model.d)[paths_all, mode]
        else:
            reward += driver.g(lattice.x[m])[paths_all, mode]
    reward -= A
    if record:
        return reward, n_sw, trunc, (events, mode_path, A_path, N_path)
    return reward, n_sw, trunc, None


def _x_paths(lattice, n_paths, seed, antithetic=False, first_path=0):
    ids = np.arange(first_path, first_path + n_paths, dtype=np.uint64)
    k = np.arange(lattice.steps, dtype=np.uint64)
    if antithetic:
        base = ids // np.uint64(2)
        U = hash_uniforms(seed, STREAM_X, base[:, None], k[None, :])
        flip = (ids % np.uint64(2)).astype(bool)
        U[flip] = 1.0 - U[flip]
    else:
        U = hash_uniforms(seed, STREAM_X, ids[:, None], k[None, :])
    return lattice.sample_paths(U), ids


def sample_trace(model, strategy, lattice, driver, start_mode, x_path=None, seed=0, path_index=0):
    """Single path with full bookkeeping (deterministic in its arguments).

    With ``x_path`` omitted the lattice path of ``path_index`` under
    ``seed`` is used, i.e. the same path ``evaluate_strategy`` would draw.
    """
    if x_path is None:
        xp, _ = _x_paths(lattice, 1, seed, first_path=path_index)
    else:
        xp = np.asarray(x_path, dtype=np.int64)[None, :]
    reward, n_sw, trunc, (events, mp, Ap, Np) = simulate(
        model, strategy, lattice, driver, start_mode, xp, seed=seed,
        path_ids=[path_index], record=True)
    times = lattice.times
    zeta = [int(start_mode)] + [e[6] for e in events]
    return StrategyTrace(
        zeta=zeta, tau=[float(times[e[1]]) for e in events], tau_index=[e[1] for e in events],
        alpha=[model.controls[e[3]] for e in events], uniforms=[e[4] for e in events],
        costs=[e[5] for e in events], mode_path=mp[0], x_index=xp[0], A=Ap[0], N=Np[0],
        truncated=bool(trunc[0]), reward=float(reward[0]))


def evaluate_strategy(model, strategy, lattice, driver, start_mode, n_paths=10_000, seed=0,
                      antithetic=False, batch=50_000) -> RewardEstimate:
    """Monte Carlo estimate of ``E[sum f dt + g(X_T, a_T) - A_T]`` from ``(t_0, x_0, start_mode)``."""
    if not driver.yz_free:
        raise CapabilityError("strategy rewards need a driver f(t, x, i); use the lattice solver for (y, z) terms")
    total = []
    n_sw_all = []
    trunc_all = []
    for start in range(0, n_paths, batch):
        n = min(batch, n_paths - start)
        xp, ids = _x_paths(lattice, n, seed, antithetic, first_path=start)
        r, n_sw, tr, _ = simulate(model, strategy, lattice, driver, start_mode, xp, seed=seed, path_ids=ids)
        total.append(r)
        n_sw_all.append(n_sw)
        trunc_all.append(tr)
    r = np.concatenate(total)
    if antithetic:
        pair = r[: 2 * (r.size // 2)].reshape(-1, 2).mean(axis=1)
        mean, se = float(r.mean()), float(pair.std(ddof=1) / np.sqrt(pair.size)) if pair.size > 1 else 0.0
    else:
        mean, se = float(r.mean()), float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0
    return RewardEstimate(mean=mean, se=se, n_paths=int(r.size), seed=int(seed),
                          truncated_fraction=float(np.concatenate(trunc_all).mean()),
                          mean_switches=float(np.concatenate(n_sw_all).mean()))


# --------------------------------------------------------------------------
# representation check


@dataclass
class RepresentationReport:
    modes: list
    baselines: list
    passed: bool

    def lines(self):
        out = []
        for r in self.modes:
            out.append(f"mode {r['mode'] + 1}: Y={r['Y']:.6g} phi*={r['estimate']:.6g} "
                       f"se={r['se']:.3g} gap/se={r['z']:.3g} {'PASS' if r['pass'] else 'FAIL'}")
        bad = [b for b in self.baselines if not b["pass"]]
        out.append(f"baselines: {len(self.baselines) - len(bad)}/{len(self.baselines)} dominated")
        return out


def verify_representation(model, driver, lattice, solution=None, n_paths=10_000, seed=0,
                          n_baselines=20, z_crit=3.0, threads=1) -> RepresentationReport:
    """Compare strategy rewards with the lattice value at ``(t_0, x_0)``.

    (1) the first-hitting strategy must be within ``z_crit`` standard errors
    of ``Y^i`` for every start mode; (2) ``n_baselines`` randomised
    strategies (different switching rates and salts, rotating start modes)
    must not exceed ``Y^i + z_crit * se``.  ``threads > 1`` evaluates the
    start modes concurrently; results do not depend on it.
    """
    from .solver import solve

    if not driver.yz_free:
        raise CapabilityError("representation check needs a driver f(t, x, i)")
    if solution is None:
        solution = solve(model, lattice, driver)
    phi = optimal_strategy(solution, model)
    Y0 = solution.root_value()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ests = list(pool.map(lambda i: evaluate_strategy(model, phi, lattice, driver, i, n_paths, seed),
                                 range(model.d)))
    else:
        ests = [evaluate_strategy(model, phi, lattice, driver, i, n_paths, seed) for i in range(model.d)]
    modes = []
    for i, est in enumerate(ests):
        gap = est.mean - Y0[i]
        tol = z_crit * est.se + 1e-12 * (1 + abs(Y0[i]))
        modes.append({"mode": i, "Y": float(Y0[i]), "estimate": est.mean, "se": est.se,
                      "z": gap / est.se if est.se > 0 else (0.0 if gap == 0 else np.inf),
                      "truncated_fraction": est.truncated_fraction,
                      "pass": bool(abs(gap) <= tol)})
    baselines = []
    for b in range(n_baselines):
        i = b % model.d
        p = (0.02, 0.05, 0.1, 0.25, 0.5)[b % 5]
        strat = randomized_baseline(p_switch=p, salt=b + 1)
        est = evaluate_strategy(model, strat, lattice, driver, i, n_paths, seed + 1 + b)
        tol = z_crit * est.se + 1e-12 * (1 + abs(Y0[i]))
        baselines.append({"index": b, "mode": i, "p_switch": p, "estimate": est.mean, "se": est.se,
                          "Y": float(Y0[i]), "pass": bool(est.mean <= Y0[i] + tol)})
    passed = all(r["pass"] for r in modes) and all(b["pass"] for b in baselines)
    return RepresentationReport(modes=modes, baselines=baselines, passed=passed)
