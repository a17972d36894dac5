"""Euler-Maruyama simulation of dX = B(X) dt + G(X) dW."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientField, as_points
from .errors import BlowupError

SCHEMES = ("euler", "tamed")


def stream(seed: int, *key) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``.

    String components are hashed with crc32 so the mapping is stable across
    runs and platforms; the stream never depends on how many workers run.
    """
    parts = [zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(parts))))


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing with at least two nodes")
    return grid


def uniform_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    k = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    return np.linspace(t0, t1, k + 1)


def euler_step(field: CoefficientField, X: np.ndarray, dt: float, dW: np.ndarray, scheme: str = "euler"):
    drift = field.B(X)
    if scheme == "tamed":
        norm = np.linalg.norm(drift, axis=-1, keepdims=True)
        drift = drift / (1.0 + dt * norm)
    return X + drift * dt + np.einsum("nij,nj->ni", field.G(X), dW)


def guard(X: np.ndarray, radius: float | None, t: float):
    if not np.all(np.isfinite(X)):
        raise BlowupError(f"non-finite state at t={t:.6g}; reduce dt or use the tamed scheme")
    if radius is not None:
        r = np.max(np.abs(X))
        if r > radius:
            raise BlowupError(f"path left the guard radius {radius:g} at t={t:.6g} (|x|={r:.3g})")


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated paths with the Brownian increments that drove them.

    ``paths`` has shape ``(M, K+1, N)``, ``increments`` ``(M, K, N)``.
    """

    x0: np.ndarray
    times: np.ndarray
    paths: np.ndarray
    increments: np.ndarray
    seed: int
    scheme: str = "euler"

    @property
    def M(self) -> int:
        return self.paths.shape[0]

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def dim(self) -> int:
        return self.paths.shape[2]


def simulate_forward(
    field: CoefficientField,
    x0,
    grid,
    M: int,
    seed: int,
    scheme: str = "euler",
    guard_radius: float | None = None,
    increments: np.ndarray | None = None,
) -> PathEnsemble:
    """Euler-Maruyama paths on ``grid`` started at ``x0``.

    ``x0`` is a single point or an ``(M, N)`` array of per-path starts.
    Supplying ``increments`` reuses a given Brownian sample (common random
    numbers).
    """
    grid = check_grid(grid)
    if M < 1:
        raise ValueError("M must be >= 1")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    N = field.dim
    x0 = np.asarray(x0, dtype=float)
    X = np.broadcast_to(as_points(x0, N) if x0.ndim < 2 else x0, (M, N)).astype(float).copy()
    dts = np.diff(grid)
    if increments is None:
        rng = stream(seed, "forward")
        increments = rng.standard_normal((M, len(dts), N)) * np.sqrt(dts)[None, :, None]
    elif increments.shape != (M, len(dts), N):
        raise ValueError(f"increments must have shape {(M, len(dts), N)}")
    paths = np.empty((M, len(grid), N))
    paths[:, 0] = X
    for k, dt in enumerate(dts):
        X = euler_step(field, X, dt, increments[:, k], scheme)
        guard(X, guard_radius, grid[k + 1])
        paths[:, k + 1] = X
    return PathEnsemble(x0=x0, times=grid, paths=paths, increments=increments, seed=seed, scheme=scheme)
