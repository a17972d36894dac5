"""Controlled diffusions, the Hamiltonian, feedback synthesis and value checks.

The state equation is

    dX = (B(X) + G(X) r(X, u)) dt + G(X) dW,

with cost J = E[ int_t^T l(X, u) ds + phi(X_T) ]. The Hamiltonian is
psi_H(x, z) = min_u { l(x, u) + z . r(x, u) } over a finite control set.

Sign convention: the value function solves D_t v + A v + psi_H(x, G grad v) = 0,
so the driver handed to the mild solver and to the FBSDE is ``-psi_H``
(see :func:`hjb_driver`).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import CoefficientField, as_points
from .errors import DegenerateWeightsError, MissingGradientError
from .functions import cosine
from .mild_solver import HamiltonianSpec
from .sde import PathEnsemble, check_grid, guard, stream


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Finite control set ``U`` (shape ``(n_u, d_u)``), costs ``l``, action ``r``, terminal ``phi``.

    ``l(x, u)`` maps ``(n, N), (n, d_u)`` to ``(n,)`` and ``r(x, u)`` to ``(n, N)``.
    ``interval`` records ``(lo, hi)`` when ``U`` discretizes an interval.
    """

    U: np.ndarray
    l: Callable
    r: Callable
    phi: Callable
    C: float
    dim: int = 1
    interval: tuple | None = None
    name: str = "control"

    def __post_init__(self):
        U = np.asarray(self.U, float)
        if U.ndim == 1:
            U = U[:, None]
        if len(U) == 0:
            raise ValueError("control set must be nonempty")
        object.__setattr__(self, "U", U)

    @property
    def n_controls(self) -> int:
        return len(self.U)

    def refined(self) -> "ControlProblem":
        """Same problem on the one-level refined interval grid (2n - 1 points)."""
        if self.interval is None:
            raise ValueError("only interval control sets can be refined")
        U = np.linspace(self.interval[0], self.interval[1], 2 * self.n_controls - 1)
        return ControlProblem(U, self.l, self.r, self.phi, self.C, self.dim, self.interval, self.name)


def interval_controls(lo: float, hi: float, n: int = 101) -> np.ndarray:
    return np.linspace(lo, hi, n)[:, None]


def benchmark_problem(n_controls: int = 101) -> ControlProblem:
    """U = [-1, 1], l = u^2 / 2, r = u, phi = cos in one dimension."""
    return ControlProblem(
        interval_controls(-1.0, 1.0, n_controls),
        lambda x, u: 0.5 * u[:, 0] ** 2,
        lambda x, u: u.copy(),
        cosine(),
        1.0,
        1,
        (-1.0, 1.0),
        "benchmark",
    )


def _cost_rate(problem: ControlProblem, x: np.ndarray, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """l(x, u) + z . r(x, u) row by row; the one code path used everywhere."""
    return np.asarray(problem.l(x, u), float) + np.sum(z * problem.r(x, u), axis=1)


def _rate_table(problem: ControlProblem, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    n, m = len(x), problem.n_controls
    xr = np.repeat(x, m, axis=0)
    zr = np.repeat(z, m, axis=0)
    ur = np.tile(problem.U, (n, 1))
    return _cost_rate(problem, xr, zr, ur).reshape(n, m)


def hamiltonian(problem: ControlProblem, x, z):
    """(psi_H, argmin control) by enumeration; ties go to the smallest index.

    A single point returns a scalar and one control; batches return arrays
    ``(n,)`` and ``(n, d_u)``.
    """
    single = np.asarray(x).ndim < 2 and np.size(x) == problem.dim
    X = as_points(x, problem.dim)
    Z = as_points(z, problem.dim)
    Z = np.broadcast_to(Z, X.shape)
    table = _rate_table(problem, X, Z)
    idx = np.argmin(table, axis=1)
    val = table[np.arange(len(X)), idx]
    u = problem.U[idx]
    if single:
        return float(val[0]), u[0]
    return val, u


def hamiltonian_index(problem: ControlProblem, X: np.ndarray, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    table = _rate_table(problem, X, Z)
    idx = np.argmin(table, axis=1)
    return table[np.arange(len(X)), idx], idx


def hjb_driver(problem: ControlProblem, L: float | None = None) -> HamiltonianSpec:
    """Driver -psi_H for the mild solver (L defaults to the problem constant C)."""

    def fn(x, z):
        return -hamiltonian_index(problem, x, z)[0]

    return HamiltonianSpec(fn, float(problem.C if L is None else L), True, f"-H[{problem.name}]")


def check_hamiltonian_lipschitz(problem: ControlProblem, samples: int = 1000, seed: int = 0, radius: float = 3.0) -> dict:
    """Fit c in |psi(x,z) - psi(x',z')| <= c|z - z'| + c|x - x'|(1 + |z| + |z'|) and |psi(x,0)| <= c.

    z-pairs share x and x-pairs share z, so the two terms are fitted
    separately; ``c`` is the largest of the three fitted quantities.
    """
    rng = np.random.default_rng(seed)
    N = problem.dim
    x, x2 = rng.uniform(-radius, radius, (2, samples, N))
    z, z2 = rng.uniform(-radius, radius, (2, samples, N))
    H = lambda a, b: hamiltonian_index(problem, a, b)[0]  # noqa: E731
    cz = np.max(np.abs(H(x, z) - H(x, z2)) / np.maximum(np.linalg.norm(z - z2, axis=1), 1e-300))
    den_x = np.linalg.norm(x - x2, axis=1) * (1 + 2 * np.linalg.norm(z, axis=1))
    cx = np.max(np.abs(H(x, z) - H(x2, z)) / np.maximum(den_x, 1e-300))
    at0 = np.max(np.abs(H(x, np.zeros_like(z))))
    c = float(max(cz, cx, at0))
    gap = None
    if problem.interval is not None:
        gap = float(np.max(np.abs(H(x, z) - hamiltonian_index(problem.refined(), x, z)[0])))
    return {
        "c": c,
        "c_z": float(cz),
        "c_x": float(cx),
        "sup_psi_x0": float(at0),
        "holds": bool(c <= problem.C * 1.1),
        "discretization_gap": gap,
        "samples": samples,
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class OpenLoopPolicy:
    """Piecewise-constant control: ``indices[i]`` on ``[breaks[i], breaks[i+1])``."""

    breaks: np.ndarray
    indices: np.ndarray

    def __call__(self, t: float, X: np.ndarray):
        i = int(np.searchsorted(self.breaks, t, side="right") - 1)
        i = min(max(i, 0), len(self.indices) - 1)
        return np.full(len(X), int(self.indices[i])), None


@dataclass(frozen=True)
class ConstantPolicy:
    index: int

    def __call__(self, t, X):
        return np.full(len(X), int(self.index)), None


@dataclass(frozen=True, eq=False)
class FeedbackPolicy:
    """u = argmin_u l(x, u) + (G grad v)(t, x) . r(x, u), evaluated path by path."""

    problem: ControlProblem
    v: object

    def __call__(self, t: float, X: np.ndarray):
        _, Z = self.v.evaluate(min(t, self.v.times[-1]), X)
        _, idx = hamiltonian_index(self.problem, X, Z)
        return idx, Z


def feedback_selector(problem: ControlProblem, v, field: CoefficientField | None = None) -> FeedbackPolicy:
    """gamma(t, x) = argmin_u { l(x, u) + (G grad v)(t, x) . r(x, u) }.

    At t = T the gradient of the last stored slice is used.
    """
    if getattr(v, "wgrad", None) is None or not hasattr(v, "evaluate"):
        raise MissingGradientError("the feedback selector needs a solution carrying weighted gradients")
    return FeedbackPolicy(problem, v)


# ---------------------------------------------------------------------------
# simulation and cost


@dataclass(frozen=True, eq=False)
class AdmissibleControlRun:
    policy: object
    ensemble: PathEnsemble
    controls: np.ndarray  # (M, K) indices into U
    u: np.ndarray  # (M, K, d_u)
    actions: np.ndarray  # (M, K, N) r(X_k, u_k)
    running: np.ndarray  # (M, K) l(X_k, u_k)
    gradients: np.ndarray | None  # (M, K, N) feedback z values, when available
    reference: bool

    @property
    def M(self) -> int:
        return self.ensemble.M


def simulate_controlled(
    problem: ControlProblem,
    field: CoefficientField,
    policy,
    x0,
    t: float,
    grid,
    M: int,
    seed: int,
    *,
    key: tuple = (),
    reference: bool = False,
    guard_radius: float | None = None,
) -> AdmissibleControlRun:
    """Euler-Maruyama for the controlled equation on ``grid`` (absolute times from t).

    With ``reference=True`` the drift omits G r and the run is meant to be
    reweighted with :func:`girsanov_weight`. Increments come from the same
    stream as :func:`hjblab.sde.simulate_forward` when ``key`` is empty.
    """
    grid = check_grid(grid)
    if abs(grid[0] - t) > 1e-12:
        raise ValueError("grid must start at t")
    N = field.dim
    X = np.broadcast_to(as_points(x0, N), (M, N)).astype(float).copy()
    dts = np.diff(grid)
    K = len(dts)
    rng = stream(seed, "forward", *key)
    increments = rng.standard_normal((M, K, N)) * np.sqrt(dts)[None, :, None]
    paths = np.empty((M, K + 1, N))
    paths[:, 0] = X
    ctrl = np.empty((M, K), dtype=int)
    us = np.empty((M, K, problem.U.shape[1]))
    acts = np.empty((M, K, N))
    run_cost = np.empty((M, K))
    grads = None
    for k, dt in enumerate(dts):
        idx, z = policy(grid[k], X)
        if z is not None:
            if grads is None:
                grads = np.zeros((M, K, N))
            grads[:, k] = z
        u = problem.U[idx]
        r = np.asarray(problem.r(X, u), float)
        ctrl[:, k] = idx
        us[:, k] = u
        acts[:, k] = r
        run_cost[:, k] = problem.l(X, u)
        G = field.G(X)
        drift = field.B(X)
        if not reference:
            drift = drift + np.einsum("nij,nj->ni", G, r)
        X = X + drift * dt + np.einsum("nij,nj->ni", G, increments[:, k])
        guard(X, guard_radius, grid[k + 1])
        paths[:, k + 1] = X
    ens = PathEnsemble(x0=np.asarray(x0, float), times=grid, paths=paths, increments=increments, seed=seed)
    return AdmissibleControlRun(policy, ens, ctrl, us, acts, run_cost, grads, reference)


def girsanov_weight(run: AdmissibleControlRun, min_ess_fraction: float = 0.1) -> np.ndarray:
    """exp(sum r . dW - 1/2 sum |r|^2 dt) per path for a reference-measure run."""
    dts = run.ensemble.dt
    logw = np.sum(run.actions * run.ensemble.increments, axis=(1, 2)) - 0.5 * np.sum(
        np.sum(run.actions**2, axis=2) * dts[None, :], axis=1
    )
    w = np.exp(logw)
    ess = w.sum() ** 2 / np.sum(w**2)
    if ess < min_ess_fraction * len(w):
        raise DegenerateWeightsError(f"effective sample size {ess:.1f} below {min_ess_fraction:.0%} of {len(w)} paths")
    return w


def path_costs(problem: ControlProblem, run: AdmissibleControlRun) -> np.ndarray:
    dts = run.ensemble.dt
    return run.running @ dts + np.asarray(problem.phi(run.ensemble.paths[:, -1]), float)


def cost(problem: ControlProblem, run: AdmissibleControlRun, weights: np.ndarray | None = None) -> tuple[float, float]:
    """(J, SE): mean of sum l dt + phi(X_T), reweighted for reference runs."""
    c = path_costs(problem, run)
    if run.reference and weights is None:
        weights = girsanov_weight(run)
    if weights is not None:
        c = c * weights
    se = float(np.std(c, ddof=1) / math.sqrt(len(c))) if len(c) > 1 else 0.0
    return float(np.mean(c)), se


def selector_identity_gap(problem: ControlProblem, run: AdmissibleControlRun) -> float:
    """max |psi_H(X_k, Z_k) - l(X_k, u_k) - Z_k . r(X_k, u_k)| along a feedback run."""
    if run.gradients is None:
        raise MissingGradientError("run was not driven by a feedback policy")
    worst = 0.0
    for k in range(run.controls.shape[1]):
        X = run.ensemble.paths[:, k]
        Z = run.gradients[:, k]
        psi, _ = hamiltonian_index(problem, X, Z)
        rate = _cost_rate(problem, X, Z, run.u[:, k])
        worst = max(worst, float(np.max(np.abs(psi - rate))))
    return worst


# ---------------------------------------------------------------------------
# value inequality


def random_open_loop(problem: ControlProblem, t: float, T: float, n_sub: int, rng: np.random.Generator) -> OpenLoopPolicy:
    return OpenLoopPolicy(np.linspace(t, T, n_sub + 1), rng.integers(0, problem.n_controls, n_sub))


@dataclass
class ValueReport:
    v0: float
    x0: list
    t: float
    openloop_J: list
    openloop_SE: list
    violations: list
    feedback_J: float
    feedback_SE: float
    feedback_budget: float
    selector_gap: float
    n_policies: int
    paths: int
    dt: float
    notes: list = field(default_factory=list)

    @property
    def best_openloop_J(self) -> float:
        return float(min(self.openloop_J)) if self.openloop_J else math.nan

    @property
    def feedback_gap(self) -> float:
        return abs(self.feedback_J - self.v0)

    @property
    def dominance_holds(self) -> bool:
        return not self.violations

    @property
    def feedback_ok(self) -> bool:
        return self.feedback_gap <= self.feedback_budget

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(
            best_openloop_J=self.best_openloop_J,
            feedback_gap=self.feedback_gap,
            dominance_holds=self.dominance_holds,
            feedback_ok=self.feedback_ok,
        )
        return d


def verify_value_inequality(
    problem: ControlProblem,
    field: CoefficientField,
    v,
    x0,
    t: float = 0.0,
    n_policies: int = 256,
    M: int = 2000,
    seed: int = 0,
    *,
    n_sub: int = 8,
    dt: float = 0.01,
    feedback_paths: int | None = None,
    workers: int = 1,
) -> ValueReport:
    """Compare v(t, x0) with sampled open-loop costs and the feedback cost.

    Every open-loop policy i draws its constants and its paths from streams
    keyed by i, so results do not depend on ``workers``. The sampled class
    only bounds V from above; the report cannot certify V itself.
    """
    T = float(v.times[-1])
    K = max(1, int(math.ceil((T - t) / dt - 1e-9)))
    grid = np.linspace(t, T, K + 1)
    x0 = as_points(x0, field.dim)[0]
    v0 = float(v.evaluate(t, x0[None])[0][0])

    def job(i):
        pol = random_open_loop(problem, t, T, n_sub, stream(seed, "policy-draw", i))
        run = simulate_controlled(problem, field, pol, x0, t, grid, M, seed, key=("policy", i))
        return cost(problem, run)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(job, range(n_policies)))
    else:
        res = [job(i) for i in range(n_policies)]
    Js = [r[0] for r in res]
    SEs = [r[1] for r in res]
    viol = [i for i, (J, se) in enumerate(res) if v0 > J + 3 * se]
    fb = feedback_selector(problem, v, field)
    run = simulate_controlled(problem, field, fb, x0, t, grid, feedback_paths or 4 * M, seed, key=("feedback",))
    Jf, sef = cost(problem, run)
    return ValueReport(
        v0=v0,
        x0=x0.tolist(),
        t=float(t),
        openloop_J=Js,
        openloop_SE=SEs,
        violations=viol,
        feedback_J=Jf,
        feedback_SE=sef,
        feedback_budget=max(3 * sef, 2e-2),
        selector_gap=selector_identity_gap(problem, run),
        n_policies=n_policies,
        paths=M,
        dt=float(grid[1] - grid[0]),
        notes=["open-loop costs bound V from above; V itself is an infimum over all admissible systems"],
    )
