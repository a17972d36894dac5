"""Mild solutions of D_t v + A v = psi(x, G grad v), v(T) = phi.

A mild solution is a fixed point of

    Gamma v(t) = S(T - t) phi - int_t^T S(r - t) psi(., G grad v(r)) dr.

Functions of (t, x) are stored as time slices on a shared tensor grid,
holding both values and weighted gradients. Gamma is evaluated with the
grid transition kernels of :mod:`hjblab.kernels`. Picard iteration runs on
windows short enough for Gamma to be a contraction in the weighted norm

    ||v||_K = sup |v| + sup_t (T - t)^{1/2} sup_x |G grad v(t, x)|,

and the windows are chained backward to cover [0, T].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .coefficients import CoefficientField, as_points
from .errors import (
    ContinuationError,
    HJBLabError,
    MaxIterError,
    MissingGradientError,
    NoContractionError,
    QuadratureError,
)
from .functions import TestFunction, sup_norm
from .grids import GridConfig, TensorGrid
from .kernels import KernelConfig, TransitionKernels
from .semigroup import ValueSlice

# ---------------------------------------------------------------------------
# Hamiltonians and mollification


@dataclass(frozen=True)
class HamiltonianSpec:
    """A driver psi(x, z) evaluated on batches ``x, z`` of shape ``(n, N)``."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    L: float
    bounded_at_zero: bool = True
    name: str = "psi"

    def __call__(self, x, z) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, float), np.asarray(z, float)), dtype=float)

    def lipschitz_check(self, dim: int, samples: int = 1000, seed: int = 0, radius: float = 5.0) -> dict:
        """Fit the Lipschitz quotients of psi on random pairs and compare with ``L``.

        Checks |psi(x,z) - psi(y,w)| <= L(|x-y| + |z-w|) and |psi(x,0)| <= L.
        """
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(-radius, radius, (2, samples, dim))
        z, w = rng.uniform(-radius, radius, (2, samples, dim))
        num = np.abs(self(x, z) - self(y, w))
        den = np.linalg.norm(x - y, axis=1) + np.linalg.norm(z - w, axis=1)
        q = float(np.max(num / np.maximum(den, 1e-300)))
        at0 = float(np.max(np.abs(self(x, np.zeros_like(z)))))
        return {
            "fitted_L": q,
            "sup_psi_x0": at0,
            "holds": bool(q <= self.L * (1 + 1e-9) and (at0 <= self.L or not self.bounded_at_zero)),
        }


def zero_hamiltonian() -> HamiltonianSpec:
    return HamiltonianSpec(lambda x, z: np.zeros(len(x)), 0.0, True, "zero")


def constant_hamiltonian(c: float) -> HamiltonianSpec:
    return HamiltonianSpec(lambda x, z: np.full(len(x), float(c)), abs(float(c)), True, f"const({c})")


def abs_hamiltonian(scale: float = 1.0) -> HamiltonianSpec:
    """psi(x, z) = scale * |z|."""
    return HamiltonianSpec(lambda x, z: scale * np.linalg.norm(z, axis=1), abs(scale), True, f"abs({scale})")


def _bump_rule(dim: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in the closed unit ball and probability weights for rho(y) ~ (1 - |y|^2)^2."""
    s, w = np.polynomial.legendre.leggauss(nodes)
    mesh = np.meshgrid(*([s] * dim), indexing="ij")
    Y = np.stack([m.ravel() for m in mesh], axis=1)
    W = np.ones(len(Y))
    for k, m in enumerate(np.meshgrid(*([w] * dim), indexing="ij")):
        W *= m.ravel()
    r2 = np.sum(Y * Y, axis=1)
    keep = r2 < 1.0
    W = W[keep] * (1.0 - r2[keep]) ** 2
    return Y[keep], W / W.sum()


@dataclass(frozen=True)
class MollifierPair:
    """phi_n = phi * rho_n and psi_n = psi *_z rho_n at kernel scale 1/n."""

    n: int
    phi_n: TestFunction
    psi_n: HamiltonianSpec
    scale: float


def mollify(phi, ham: HamiltonianSpec, n: int, dim: int = 1, nodes: int = 8) -> MollifierPair:
    """Convolve with a polynomial bump of radius 1/n by Gauss quadrature.

    The discrete weights are nonnegative and sum to one, so phi_n is a
    convex combination of shifts of phi (``||phi_n|| <= ||phi||``) and
    ``|psi_n - psi| <= L/n`` holds exactly, each shift having length < 1/n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    Y, W = _bump_rule(dim, nodes)
    shifts = Y / n

    def phi_n(x):
        x = np.asarray(x, float)
        return sum(w * np.asarray(phi(x - y[None, :])) for y, w in zip(shifts, W))

    def psi_n(x, z):
        return sum(w * ham(x, z - y[None, :]) for y, w in zip(shifts, W))

    name = getattr(phi, "name", "phi")
    sup = getattr(phi, "sup", None)
    phi_fn = TestFunction(f"{name}*rho_{n}", phi_n, sup if sup is not None else np.inf, (n,))
    return MollifierPair(n, phi_fn, HamiltonianSpec(psi_n, ham.L, ham.bounded_at_zero, f"{ham.name}*rho_{n}"), 1.0 / n)


# ---------------------------------------------------------------------------
# K-normed functions


@dataclass(eq=False)
class KNormedFunction:
    """Time slices of (v, G grad v) on a tensor grid, ascending in time.

    ``values`` has shape ``(J, n)``, ``wgrad`` ``(J, n, N)``. The weight in
    the seminorm uses ``T`` (the last slice time unless given otherwise).
    When ``terminal`` is set, evaluation at t = T uses it exactly instead of
    interpolating grid data.
    """

    times: np.ndarray
    grid: TensorGrid
    values: np.ndarray
    wgrad: np.ndarray
    T: float | None = None
    terminal: Callable | None = None
    provenance: dict = field(default_factory=dict)
    _interp: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        if self.T is None:
            self.T = float(self.times[-1])
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("slice times must be strictly increasing")
        n, N = self.grid.size, self.grid.dim
        if self.values.shape != (len(self.times), n) or self.wgrad.shape != (len(self.times), n, N):
            raise ValueError("slice arrays do not match the grid")
        self.stored_norm = self._norm_parts()

    @classmethod
    def from_callable(cls, times, grid: TensorGrid, value_fn, wgrad_fn, T=None, terminal=None):
        X = grid.points
        vals = np.stack([np.asarray(value_fn(t, X), float) for t in times])
        wg = np.stack([np.asarray(wgrad_fn(t, X), float).reshape(len(X), grid.dim) for t in times])
        return cls(np.asarray(times, float), grid, vals, wg, T, terminal)

    def _norm_parts(self) -> tuple[float, float]:
        sup = float(np.max(np.abs(self.values)))
        w = np.sqrt(np.maximum(self.T - self.times, 0.0))
        g = np.linalg.norm(self.wgrad, axis=2).max(axis=1)
        return sup, float(np.max(w * g))

    @property
    def sup(self) -> float:
        return self.stored_norm[0]

    @property
    def seminorm(self) -> float:
        return self.stored_norm[1]

    @property
    def norm(self) -> float:
        return self.sup + self.seminorm

    def gradient_profile(self) -> tuple[np.ndarray, np.ndarray]:
        """(t, sup_x |G grad v(t, .)|) for every slice."""
        return self.times, np.linalg.norm(self.wgrad, axis=2).max(axis=1)

    def slice(self, j: int) -> ValueSlice:
        n = self.grid.size
        return ValueSlice(float(self.times[j]), self.grid.points, self.values[j], np.zeros(n), self.wgrad[j], np.zeros((n, self.grid.dim)))

    @property
    def slices(self) -> list:
        return [self.slice(j) for j in range(len(self.times))]

    def _slice_interp(self, j: int):
        if j not in self._interp:
            kind = "cubic" if self.grid.dim == 1 else "linear"
            data = np.concatenate([self.values[j][:, None], self.wgrad[j]], axis=1)
            self._interp[j] = self.grid.interpolator(data, kind=kind)
        return self._interp[j]

    def evaluate(self, t: float, X) -> tuple[np.ndarray, np.ndarray]:
        """(v(t, X), G grad v(t, X)) by linear interpolation in time between slices."""
        X = as_points(X, self.grid.dim)
        t = float(t)
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"t={t} outside [{self.times[0]}, {self.times[-1]}]")
        j = int(np.searchsorted(self.times, t, side="right") - 1)
        j = min(max(j, 0), len(self.times) - 1)
        if abs(t - self.times[j]) <= 1e-12 * max(1.0, abs(t)) or j == len(self.times) - 1:
            out = self._slice_interp(j)(X)
        else:
            lam = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
            out = (1 - lam) * self._slice_interp(j)(X) + lam * self._slice_interp(j + 1)(X)
        vals, wg = out[:, 0], out[:, 1:]
        if self.terminal is not None and abs(t - self.times[-1]) <= 1e-12 * max(1.0, abs(t)):
            vals = np.asarray(self.terminal(X), float)
        return vals, wg

    def restrict(self, t0: float, t1: float) -> "KNormedFunction":
        keep = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        return KNormedFunction(self.times[keep], self.grid, self.values[keep], self.wgrad[keep], t1, None)

    def to_rows(self) -> tuple[list, list]:
        N = self.grid.dim
        header = ["t"] + [f"x{i}" for i in range(N)] + ["value"] + [f"wgrad{i}" for i in range(N)]
        rows = []
        X = self.grid.points
        for j, t in enumerate(self.times):
            for i in range(len(X)):
                rows.append([float(t), *map(float, X[i]), float(self.values[j, i]), *map(float, self.wgrad[j, i])])
        return header, rows


def knorm(v: KNormedFunction) -> tuple[float, float]:
    """(sup |v|, sup_t (T - t)^{1/2} sup_x |G grad v|) recomputed from the slices."""
    return v._norm_parts()


def _diff_norm(a: np.ndarray, ga: np.ndarray, b: np.ndarray, gb: np.ndarray, weights: np.ndarray) -> float:
    sup = np.max(np.abs(a - b))
    semi = np.max(weights * np.linalg.norm(ga - gb, axis=2).max(axis=1))
    return float(sup + semi)


def apply_F(ham: HamiltonianSpec, field: CoefficientField, slice: ValueSlice) -> np.ndarray:
    """psi(x, (G grad v)(t, x)) at the slice points."""
    if slice.wgrad is None:
        raise MissingGradientError(f"slice at t={slice.t} carries no weighted gradient")
    return ham(slice.points, slice.wgrad)


# ---------------------------------------------------------------------------
# Constants from the contraction argument


@dataclass(frozen=True)
class FixedPointConstants:
    C_T: float
    L: float
    T: float
    delta: float
    contraction_bound: float

    def ball_radius(self, phi_sup: float) -> float:
        return 2.0 * (1.0 + 2.0 * self.C_T) * (phi_sup + self.delta * self.L)

    def to_dict(self) -> dict:
        return {"C_T": self.C_T, "L": self.L, "T": self.T, "delta": self.delta, "contraction_bound": self.contraction_bound}


def fixed_point_constants(C_T: float, L: float, T: float) -> FixedPointConstants:
    """delta = (4L + 2 pi C_T L)^{-2} ^ T and the matching contraction factor."""
    if L <= 0:
        delta = float(T)
    else:
        delta = min((4 * L + 2 * math.pi * C_T * L) ** -2, float(T))
    bound = math.sqrt(delta) * (2 * L + math.pi * C_T * L)
    return FixedPointConstants(float(C_T), float(L), float(T), float(delta), float(bound))


def gronwall_envelope(C_T: float, L: float, T: float, phi_sup: float) -> float:
    """Bound on sup_t (T - t)^{1/2} ||G grad v(t)|| from the Gronwall argument.

    With c = max(C_T, 1) multiplying each appearance of the semigroup
    gradient estimate:
    (C_T ||phi|| + 2 T L c)(1 + T^{1/2} pi L c) exp(2 pi L^2 c^2 T).
    """
    c = max(C_T, 1.0)
    return (C_T * phi_sup + 2 * T * L * c) * (1 + math.sqrt(T) * math.pi * L * c) * math.exp(2 * math.pi * L**2 * c**2 * T)


# ---------------------------------------------------------------------------
# Quadrature and Gamma


@dataclass(frozen=True)
class QuadConfig:
    """Gauss nodes per window integral and the budget for the fine/coarse error estimate."""

    nodes: int = 16
    budget: float = 1e-2

    def __post_init__(self):
        if self.nodes < 4 or self.nodes % 4:
            raise ValueError("quadrature nodes must be a positive multiple of 4")


def unit_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for integrands with inverse square-root ends.

    The lower half uses xi = s^2 and the upper half xi = 1 - s^2, each with
    ``nodes/2`` Gauss-Legendre points in s, which makes (xi)^{-1/2} and
    (1 - xi)^{-1/2} singularities smooth in s.
    """
    s, w = np.polynomial.legendre.leggauss(nodes // 2)
    a = math.sqrt(0.5)
    s = 0.5 * a * (s + 1)
    w = 0.5 * a * w
    lower = s**2
    jac = 2 * s * w
    xi = np.concatenate([lower, 1 - lower[::-1]])
    wt = np.concatenate([jac, jac[::-1]])
    return xi, wt


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-3
    max_iter: int = 50
    window_factor: float = 0.8
    slices_per_window: int = 4
    quad: QuadConfig = QuadConfig()
    grid: GridConfig = GridConfig()
    kernel: KernelConfig = KernelConfig()
    init: str = "semigroup"

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


class _WindowOperator:
    """Gamma on one window with fixed slice offsets below the window end."""

    def __init__(self, ham, kernels: TransitionKernels, offsets: np.ndarray, quad: QuadConfig):
        self.ham = ham
        self.kernels = kernels
        self.offsets = np.asarray(offsets, float)  # descending: offsets[0] = window length, offsets[-1] = 0
        self.X = kernels.grid.points
        self.fine = unit_rule(quad.nodes)
        self.coarse = unit_rule(quad.nodes // 2)
        self._stacks = kernels.memo

    def lags(self) -> list:
        out = []
        for tau in self.offsets[:-1]:
            out.append(tau)
            for xi, _ in (self.fine, self.coarse):
                out.extend(tau * xi)
        return out

    def _stack(self, j: int, rule_name: str):
        """Quadrature-weighted kernels side by side: ``(n, q n)`` and ``(N, n, q n)``."""
        key = ("window-blocks", tuple(np.round(self.offsets, 12)), j, rule_name)
        if key not in self._stacks:
            xi, wt = self.fine if rule_name == "fine" else self.coarse
            tau = self.offsets[j]
            pairs = [self.kernels(tau * x) for x in xi]
            Pcat = np.concatenate([tau * w * p for (p, _), w in zip(pairs, wt)], axis=1)
            Wcat = np.concatenate([tau * w * g for (_, g), w in zip(pairs, wt)], axis=2)
            self._stacks[key] = (Pcat, Wcat)
        return self._stacks[key]

    def apply(self, values, wgrad, rule="fine", integral=True):
        """Gamma on the slice arrays; the last slice (offset 0) is the terminal datum.

        ``integral=False`` keeps only the semigroup term.
        """
        ham = self.ham
        g = values[-1]
        new_v = values.copy()
        new_g = wgrad.copy()
        rev_off = self.offsets[::-1]  # ascending offsets
        for j, tau in enumerate(self.offsets[:-1]):
            P, W = self.kernels(tau)
            sem = P @ g
            semg = np.einsum("kij,j->ik", W, g)
            if not integral:
                new_v[j], new_g[j] = sem, semg
                continue
            xi, wt = self.fine if rule == "fine" else self.coarse
            node_off = tau * (1 - xi)  # offset of r = t + tau xi below the window end
            # linear interpolation of G grad v in time (ascending offsets -> reversed slices)
            Z = np.stack([_interp_slices(rev_off, wgrad[::-1], o) for o in node_off])
            q, n = Z.shape[0], Z.shape[1]
            F = ham(np.tile(self.X, (q, 1)), Z.reshape(q * n, -1)).reshape(q, n)
            Pcat, Wcat = self._stack(j, rule)
            quad_v = Pcat @ F.ravel()
            quad_g = (Wcat @ F.ravel()).T
            new_v[j] = sem - quad_v
            new_g[j] = semg - quad_g
        return new_v, new_g


def _interp_slices(off_asc: np.ndarray, data_asc: np.ndarray, o: float) -> np.ndarray:
    k = int(np.searchsorted(off_asc, o, side="right") - 1)
    k = min(max(k, 0), len(off_asc) - 2)
    lam = (o - off_asc[k]) / (off_asc[k + 1] - off_asc[k])
    lam = min(max(lam, 0.0), 1.0)
    return (1 - lam) * data_asc[k] + lam * data_asc[k + 1]


def terminal_slice(phi, field: CoefficientField, grid: TensorGrid) -> tuple[np.ndarray, np.ndarray]:
    """phi on the grid and G grad phi by central differences of phi itself."""
    X = grid.points
    vals = np.asarray(phi(X), float)
    eps = 1e-5 * (1 + np.linalg.norm(X, axis=1))
    grads = np.empty_like(X)
    for k in range(grid.dim):
        e = np.zeros(grid.dim)
        e[k] = 1.0
        grads[:, k] = (np.asarray(phi(X + eps[:, None] * e)) - np.asarray(phi(X - eps[:, None] * e))) / (2 * eps)
    return vals, np.einsum("nij,nj->ni", field.G(X), grads)


def build_kernels(field: CoefficientField, config: SolverConfig) -> TransitionKernels:
    return TransitionKernels(field, config.grid.build(field.dim), config.kernel)


def apply_gamma(
    v: KNormedFunction,
    phi,
    ham: HamiltonianSpec,
    field: CoefficientField,
    quad: QuadConfig = QuadConfig(),
    kernels: TransitionKernels | None = None,
) -> KNormedFunction:
    """Gamma v on the slices of ``v`` (the window is [v.times[0], v.times[-1]]).

    ``phi`` sets the terminal slice; pass ``None`` to keep the terminal slice
    stored in ``v``.
    """
    if kernels is None:
        kernels = TransitionKernels(field, v.grid)
    values, wgrad = v.values.copy(), v.wgrad.copy()
    if phi is not None:
        values[-1], wgrad[-1] = terminal_slice(phi, field, v.grid)
    offsets = v.times[-1] - v.times
    op = _WindowOperator(ham, kernels, offsets, quad)
    kernels.prepare(op.lags())
    nv, ng = op.apply(values, wgrad)
    return KNormedFunction(v.times.copy(), v.grid, nv, ng, v.T, phi if phi is not None else v.terminal)


@dataclass
class WindowReport:
    t0: float
    t1: float
    iterations: int
    diffs: list
    ratios: list
    max_norm: float
    ball_radius: float
    in_ball: bool
    residual: float
    quad_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _picard(op: _WindowOperator, values, wgrad, weights, tol, max_iter, ball_radius):
    diffs, ratios, norms = [], [], []
    streak = 0
    for it in range(1, max_iter + 1):
        nv, ng = op.apply(values, wgrad)
        d = _diff_norm(nv, ng, values, wgrad, weights)
        norm = float(np.max(np.abs(nv)) + np.max(weights * np.linalg.norm(ng, axis=2).max(axis=1)))
        norms.append(norm)
        if diffs:
            r = d / diffs[-1] if diffs[-1] > 0 else 0.0
            ratios.append(r)
            streak = streak + 1 if r >= 1.0 else 0
            if streak >= 2:
                raise NoContractionError(
                    f"Picard ratios {ratios[-2]:.3g}, {ratios[-1]:.3g} >= 1: window too long or C_T underestimated"
                )
        diffs.append(d)
        values, wgrad = nv, ng
        if d == 0.0 or d <= tol * norm:
            return values, wgrad, it, diffs, ratios, max(norms)
    raise MaxIterError(f"no convergence after {max_iter} Picard iterations (last difference {diffs[-1]:.3g})")


def local_fixed_point(
    phi,
    ham: HamiltonianSpec,
    field: CoefficientField,
    window: tuple[float, float],
    tol: float = 1e-3,
    max_iter: int = 50,
    *,
    C_T: float,
    T: float | None = None,
    config: SolverConfig = SolverConfig(),
    kernels: TransitionKernels | None = None,
    terminal_data: tuple | None = None,
    init: str | None = None,
    check_delta: bool = True,
) -> KNormedFunction:
    """Picard iteration of Gamma on ``window = (t0, t1)``.

    ``phi`` is the terminal datum at t1, or ``None`` together with
    ``terminal_data = (values, wgrad)`` on the grid (used when chaining
    windows). ``C_T`` should be the inflated empirical constant. The window
    length must not exceed delta from :func:`fixed_point_constants` unless
    ``check_delta`` is false.
    """
    t0, t1 = map(float, window)
    horizon = t1 if T is None else float(T)
    consts = fixed_point_constants(C_T, ham.L, horizon)
    length = t1 - t0
    if length <= 0:
        raise ValueError("empty window")
    if check_delta and length > consts.delta * (1 + 1e-9):
        raise ValueError(f"window length {length:.4g} exceeds delta = {consts.delta:.4g}")
    if kernels is None:
        kernels = build_kernels(field, config)
    grid = kernels.grid
    J = config.slices_per_window
    offsets = length * np.arange(J, -1, -1) / J
    times = t1 - offsets
    times[0], times[-1] = t0, t1
    if phi is not None:
        g_vals, g_grad = terminal_slice(phi, field, grid)
    else:
        g_vals, g_grad = terminal_data
    op = _WindowOperator(ham, kernels, offsets, config.quad)
    kernels.prepare(op.lags())
    n, N = grid.size, grid.dim
    values = np.zeros((J + 1, n))
    wgrad = np.zeros((J + 1, n, N))
    values[-1], wgrad[-1] = g_vals, g_grad
    if (init or config.init) == "semigroup":
        values, wgrad = op.apply(values, wgrad, integral=False)
    elif (init or config.init) != "zero":
        raise ValueError("init must be 'semigroup' or 'zero'")
    weights = np.sqrt(offsets)
    ball = consts.ball_radius(float(np.max(np.abs(g_vals))))
    values, wgrad, its, diffs, ratios, max_norm = _picard(op, values, wgrad, weights, tol, max_iter, ball)
    # fixed-point residual and quadrature error of the returned iterate
    rv, rg = op.apply(values, wgrad)
    residual = _diff_norm(rv, rg, values, wgrad, weights)
    cv, cg = op.apply(values, wgrad, rule="coarse")
    quad_err = _diff_norm(rv, rg, cv, cg, weights)
    if quad_err > config.quad.budget:
        raise QuadratureError(f"quadrature error estimate {quad_err:.3g} exceeds budget {config.quad.budget:.3g} on {window}")
    report = WindowReport(t0, t1, its, diffs, ratios, max_norm, ball, bool(max_norm <= ball), residual, quad_err)
    out = KNormedFunction(times, grid, values, wgrad, T=t1, terminal=phi)
    out.provenance = {"windows": [report.to_dict()], "constants": consts.to_dict(), "tol": tol}
    return out


def extend_to_full_interval(
    phi,
    ham: HamiltonianSpec,
    field: CoefficientField,
    T: float,
    tol: float = 1e-3,
    *,
    C_T: float,
    config: SolverConfig = SolverConfig(),
    kernels: TransitionKernels | None = None,
    init: str | None = None,
) -> KNormedFunction:
    """March backward from T to 0 in equal windows of length <= window_factor * delta.

    Each window takes the first slice of the previous one as its terminal
    datum. Failures are re-raised as ContinuationError with the window and
    the (T - t)^{1/2} ||G grad v|| profile accumulated so far.
    """
    consts = fixed_point_constants(C_T, ham.L, T)
    n_win = max(1, int(math.ceil(T / (config.window_factor * consts.delta) - 1e-9)))
    length = T / n_win
    if kernels is None:
        kernels = build_kernels(field, config)
    grid = kernels.grid
    times = [np.array([T])]
    g_vals, g_grad = terminal_slice(phi, field, grid)
    vals_all = [g_vals[None]]
    grads_all = [g_grad[None]]
    reports = []
    for w in range(n_win):
        t1 = T - w * length
        t0 = max(0.0, T - (w + 1) * length)
        try:
            piece = local_fixed_point(
                phi if w == 0 else None,
                ham,
                field,
                (t0, t1),
                tol,
                config.max_iter,
                C_T=C_T,
                T=T,
                config=config,
                kernels=kernels,
                terminal_data=None if w == 0 else (vals_all[-1][0], grads_all[-1][0]),
                init=init,
                check_delta=False,
            )
        except HJBLabError as exc:
            t_done = np.concatenate(times[::-1])
            g_done = np.concatenate([np.linalg.norm(g, axis=2).max(axis=1) for g in grads_all[::-1]])
            profile = {"t": t_done.tolist(), "weighted_sup": (np.sqrt(T - t_done) * g_done).tolist()}
            raise ContinuationError(f"window [{t0:.6g}, {t1:.6g}] failed: {exc}", window=(t0, t1), profile=profile) from exc
        rep = piece.provenance["windows"][0]
        rep["seam_gap"] = float(np.max(np.abs(piece.values[-1] - vals_all[-1][0])))
        reports.append(rep)
        times.append(piece.times[:-1])
        vals_all.append(piece.values[:-1])
        grads_all.append(piece.wgrad[:-1])
    t_all = np.concatenate(times[::-1])
    v_all = np.concatenate(vals_all[::-1])
    g_all = np.concatenate(grads_all[::-1])
    out = KNormedFunction(t_all, grid, v_all, g_all, T=T, terminal=phi)
    phi_sup = sup_norm(phi, grid.points)
    env = gronwall_envelope(C_T, ham.L, T, phi_sup)
    out.provenance = {
        "T": T,
        "windows": reports,
        "n_windows": n_win,
        "window_length": length,
        "constants": consts.to_dict(),
        "tol": tol,
        "knorm": list(knorm(out)),
        "gronwall_envelope": env,
        "within_envelope": bool(out.seminorm <= env),
        "iterations": [r["iterations"] for r in reports],
        "contraction_ratios": [r["ratios"] for r in reports],
        "max_ratio": max((max(r["ratios"]) for r in reports if r["ratios"]), default=0.0),
        "all_in_ball": all(r["in_ball"] for r in reports),
    }
    return out


def k_distance(u: KNormedFunction, v: KNormedFunction) -> float:
    """||u - v||_K on a common slice set."""
    if u.times.shape != v.times.shape or np.any(np.abs(u.times - v.times) > 1e-12):
        raise ValueError("functions live on different slice times")
    w = np.sqrt(np.maximum(u.T - u.times, 0.0))
    return _diff_norm(u.values, u.wgrad, v.values, v.wgrad, w)


def solve_mild(phi, ham, field, T, C_T, config: SolverConfig = SolverConfig(), kernels=None, init=None) -> KNormedFunction:
    """Convenience wrapper around :func:`extend_to_full_interval` with ``config.tol``."""
    return extend_to_full_interval(phi, ham, field, T, config.tol, C_T=C_T, config=config, kernels=kernels, init=init)
