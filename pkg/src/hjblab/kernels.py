"""Grid transition kernels for S(tau) and G grad S(tau).

A kernel pair for lag tau consists of two matrices acting on grid data g:

    (S(tau) g)(x_i)          ~ sum_j P[i, j] g_j
    (G grad S(tau) g)(x_i)_k ~ sum_j W[k, i, j] g_j

The mild solver only ever needs a handful of lags, and since the
coefficients do not depend on time the same lags recur in every window, so
kernels are computed once and cached.

Two backends:

* ``"fd"``: matrix exponential of the reflecting finite-difference
  generator; W applies G times the grid difference matrices to P.
* ``"mc"``: Feynman-Kac rows. Each node (and its +/- h neighbours) launches
  paths; the landing points are spread onto the grid with cubic Lagrange
  weights. Rows use common random numbers inside each stencil and
  independent streams across nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .coefficients import CoefficientField
from .grids import TensorGrid, generator_matrix
from .sde import euler_step, guard, stream


@dataclass(frozen=True)
class KernelConfig:
    backend: str = "fd"
    paths: int = 4000
    dt: float = 1e-3
    seed: int = 0
    fd_h: float | None = None  # default: one grid spacing
    scheme: str = "euler"


def _lag_key(tau: float) -> float:
    return round(float(tau), 12)


@dataclass(eq=False)
class TransitionKernels:
    field: CoefficientField
    grid: TensorGrid
    config: KernelConfig = KernelConfig()
    _cache: dict = field(default_factory=dict, repr=False)
    memo: dict = field(default_factory=dict, repr=False)  # derived blocks cached by callers

    def __post_init__(self):
        if self.config.backend not in ("fd", "mc"):
            raise ValueError(f"unknown kernel backend {self.config.backend!r}")
        if self.config.backend == "mc" and (self.config.paths < 2 or self.config.paths % 2):
            raise ValueError("the mc backend pairs antithetic paths; use an even path count")
        X = self.grid.points
        self._G = self.field.G(X)
        if self.config.backend == "fd":
            self._L = generator_matrix(self.field, self.grid, boundary="reflect").toarray()
            self._D = [d.toarray() for d in self.grid.difference_matrices()]

    def __call__(self, tau: float) -> tuple[np.ndarray, np.ndarray]:
        return self.pair(tau)

    def pair(self, tau: float) -> tuple[np.ndarray, np.ndarray]:
        key = _lag_key(tau)
        if key not in self._cache:
            self.prepare([key])
        return self._cache[key]

    def prepare(self, lags) -> None:
        """Compute and cache kernels for all missing lags in one pass."""
        todo = sorted({_lag_key(t) for t in lags} - set(self._cache))
        if not todo:
            return
        if todo[0] <= 0:
            raise ValueError("kernel lags must be positive")
        if self.config.backend == "fd":
            for tau in todo:
                P = scipy.linalg.expm(tau * self._L)
                self._cache[tau] = (P, self._weighted(P))
        else:
            self._mc_rows(todo)

    @property
    def lags(self) -> list:
        return sorted(self._cache)

    def _weighted(self, P: np.ndarray) -> np.ndarray:
        grads = np.stack([D @ P for D in self._D])  # (N, n, n)
        return np.einsum("ikl,lij->kij", self._G, grads)

    def _mc_rows(self, lags: list) -> None:
        cfg = self.config
        grid = self.grid
        X = grid.points
        n, N = X.shape
        h = cfg.fd_h if cfg.fd_h is not None else float(grid.spacing.min())
        P = np.zeros((len(lags), n, n))
        DP = np.zeros((len(lags), N, n, n))
        eye = np.eye(N)
        for i in range(n):
            starts = [X[i]] + [X[i] + s * h * eye[k] for k in range(N) for s in (1, -1)]
            starts = np.array(starts)
            S = len(starts)
            rng = stream(cfg.seed, "kernel", i)
            Y = np.repeat(starts, cfg.paths, axis=0)
            t = 0.0
            for j, tau in enumerate(lags):
                steps = max(1, int(math.ceil((tau - t) / cfg.dt - 1e-9))) if tau > t else 0
                dt = (tau - t) / steps if steps else 0.0
                for _ in range(steps):
                    half = rng.standard_normal((cfg.paths // 2, N))
                    z = np.concatenate([half, -half]) * math.sqrt(dt)
                    Y = euler_step(self.field, Y, dt, np.tile(z, (S, 1)), cfg.scheme)
                    guard(Y, None, tau)
                t = tau
                rows = _spread_mean(grid, Y, S, cfg.paths)
                P[j, i] = rows[0]
                for k in range(N):
                    DP[j, k, i] = (rows[1 + 2 * k] - rows[2 + 2 * k]) / (2 * h)
        for j, tau in enumerate(lags):
            W = np.einsum("ikl,lij->kij", self._G, DP[j])
            self._cache[tau] = (P[j], W)


def _lagrange_weights(u: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights for nodes -1, 0, 1, 2 at fractional offset u in [0, 1]."""
    return np.stack(
        [
            -u * (u - 1) * (u - 2) / 6,
            (u + 1) * (u - 1) * (u - 2) / 2,
            -(u + 1) * u * (u - 2) / 2,
            (u + 1) * u * (u - 1) / 6,
        ],
        axis=-1,
    )


def _axis_stencil(ax: np.ndarray, x: np.ndarray):
    n = len(ax)
    h = ax[1] - ax[0]
    s = np.clip((x - ax[0]) / h, 0.0, n - 1.0)
    base = np.clip(np.floor(s).astype(int), 1, n - 3)
    u = s - base
    idx = base[:, None] + np.arange(-1, 3)[None, :]
    return idx, _lagrange_weights(u)


def _spread_mean(grid: TensorGrid, Y: np.ndarray, S: int, M: int) -> np.ndarray:
    """Average interpolation weights of the M landing points of each of S starts."""
    n = grid.size
    N = grid.dim
    owner = np.repeat(np.arange(S), M)
    if N == 1:
        idx, w = _axis_stencil(grid.axes[0], Y[:, 0])
        flat = owner[:, None] * n + idx
        acc = np.bincount(flat.ravel(), weights=w.ravel(), minlength=S * n)
    else:
        i0, w0 = _axis_stencil(grid.axes[0], Y[:, 0])
        i1, w1 = _axis_stencil(grid.axes[1], Y[:, 1])
        n1 = len(grid.axes[1])
        idx = i0[:, :, None] * n1 + i1[:, None, :]
        w = w0[:, :, None] * w1[:, None, :]
        flat = owner[:, None, None] * n + idx
        acc = np.bincount(flat.ravel(), weights=w.ravel(), minlength=S * n)
    return acc.reshape(S, n) / M

