"""Monte Carlo Feynman-Kac evaluation of S(t)phi and of G grad S(t)phi.

Gradients are central differences of the Monte Carlo estimator taken with
common random numbers: the starts x and x +/- h e_k are driven by the very
same Brownian increments, so the difference quotient stays O(1) in variance
for smooth data instead of blowing up like 1/h.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .coefficients import CoefficientField, as_points
from .errors import StepTooSmallError
from .functions import sup_norm
from .sde import euler_step, guard, stream


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo settings.

    ``fd_step`` fixes the absolute difference step; when ``None`` the step is
    ``max(h_min (1 + |x|), fd_c * SE^{1/3})`` with SE the standard error of
    the value estimate at that point.
    """

    paths: int = 10_000
    dt: float = 1e-3
    seed: int = 0
    guard_radius: float | None = 1e3
    scheme: str = "euler"
    fd_step: float | None = None
    fd_c: float = 0.1
    h_min: float = 1e-4
    antithetic: bool = False

    def with_(self, **kw) -> "MCConfig":
        return replace(self, **kw)


@dataclass
class ValueSlice:
    """Values (and optionally weighted gradients) of one time slice at given points."""

    t: float
    points: np.ndarray
    values: np.ndarray
    se: np.ndarray
    wgrad: np.ndarray | None = None
    wgrad_se: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def csv_rows(self) -> tuple[list, list]:
        N = self.points.shape[1]
        header = ["t"] + [f"x{i}" for i in range(N)] + ["value", "se"]
        if self.wgrad is not None:
            header += [f"wgrad{i}" for i in range(N)] + [f"wgrad_se{i}" for i in range(N)]
        rows = []
        for k in range(len(self.points)):
            row = [self.t, *self.points[k], self.values[k], self.se[k]]
            if self.wgrad is not None:
                wse = self.wgrad_se[k] if self.wgrad_se is not None else np.zeros(N)
                row += [*self.wgrad[k], *wse]
            rows.append([float(v) for v in row])
        return header, rows


def _draws(rng: np.random.Generator, M: int, N: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal((M, N))
    half = rng.standard_normal(((M + 1) // 2, N))
    return np.concatenate([half, -half])[:M]


def propagate(
    field: CoefficientField,
    starts: np.ndarray,
    record: np.ndarray,
    mc: MCConfig,
    key=("semigroup",),
) -> np.ndarray:
    """Simulate ``mc.paths`` paths from each start, sharing increments across starts.

    ``starts`` is ``(S, N)``; returns states of shape ``(len(record), S, M, N)``.
    Time steps never exceed ``mc.dt`` and land exactly on every recording time.
    """
    record = np.asarray(record, dtype=float)
    S, N = starts.shape
    M = mc.paths
    out = np.empty((len(record), S, M, N))
    X = np.broadcast_to(starts[:, None, :], (S, M, N)).reshape(S * M, N).copy()
    rng = stream(mc.seed, *key)
    t = 0.0
    for j, tr in enumerate(record):
        if tr < t - 1e-15:
            raise ValueError("recording times must be nondecreasing")
        n_steps = int(math.ceil((tr - t) / mc.dt - 1e-9)) if tr > t else 0
        h = (tr - t) / n_steps if n_steps else 0.0
        for _ in range(n_steps):
            z = _draws(rng, M, N, mc.antithetic) * math.sqrt(h)
            dW = np.broadcast_to(z[None], (S, M, N)).reshape(S * M, N)
            X = euler_step(field, X, h, dW, mc.scheme)
            guard(X, mc.guard_radius, tr)
        t = max(t, tr)
        out[j] = X.reshape(S, M, N)
    return out


def apply_semigroup(field: CoefficientField, phi, t: float, points, mc: MCConfig) -> ValueSlice:
    """S(t)phi(x) as the mean of phi(X_t^x) over ``mc.paths`` paths.

    At ``t == 0`` phi is returned exactly with zero standard error.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    pts = as_points(points, field.dim)
    if t == 0:
        return ValueSlice(0.0, pts, np.asarray(phi(pts), dtype=float), np.zeros(len(pts)), meta={"paths": 0})
    X = propagate(field, pts, np.array([t]), mc)[0]
    vals = phi(X.reshape(-1, field.dim)).reshape(len(pts), mc.paths)
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(mc.paths) if mc.paths > 1 else np.zeros(len(pts))
    return ValueSlice(float(t), pts, mean, se, meta={"paths": mc.paths, "dt": mc.dt, "seed": mc.seed})


def _fd_starts(pts: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Stack x, x + h e_1, x - h e_1, ..., per point: ``(P, 1 + 2N, N)``."""
    P, N = pts.shape
    eye = np.eye(N)
    starts = [pts]
    for k in range(N):
        starts.append(pts + h[:, None] * eye[k])
        starts.append(pts - h[:, None] * eye[k])
    return np.stack(starts, axis=1)


def _gradient_core(field, phis, times, pts, mc, key):
    """Values and weighted gradients for every (phi, t, point) on shared paths."""
    P, N = pts.shape
    M = mc.paths
    sups = [sup_norm(phi, pts) for phi in phis]
    if mc.fd_step is not None:
        h = np.full(P, float(mc.fd_step))
    else:
        centre = propagate(field, pts, times, mc, key)
        se_min = np.full(P, np.inf)
        for phi in phis:
            v = phi(centre.reshape(-1, N)).reshape(len(times), P, M)
            se = v.std(axis=2, ddof=1).min(axis=0) / math.sqrt(M)
            se_min = np.minimum(se_min, se)
        h = np.maximum(mc.h_min * (1.0 + np.linalg.norm(pts, axis=1)), mc.fd_c * np.cbrt(se_min))
    starts = _fd_starts(pts, h)
    S = starts.shape[1]
    states = propagate(field, starts.reshape(-1, N), times, mc, key).reshape(len(times), P, S, M, N)
    G = field.G(pts)
    results = []
    for phi in phis:
        f = phi(states.reshape(-1, N)).reshape(len(times), P, S, M)
        vals = f[:, :, 0]
        grads = np.stack([(f[:, :, 1 + 2 * k] - f[:, :, 2 + 2 * k]) / (2 * h[None, :, None]) for k in range(N)], axis=-1)
        wg = np.einsum("pij,tpmj->tpmi", G, grads)
        results.append(
            {
                "values": vals.mean(axis=2),
                "se": vals.std(axis=2, ddof=1) / math.sqrt(M),
                "wgrad": wg.mean(axis=2),
                "wgrad_se": wg.std(axis=2, ddof=1) / math.sqrt(M),
            }
        )
    return results, h, sups


def weighted_gradient(field: CoefficientField, phi, t: float, points, mc: MCConfig, check_noise: bool = True) -> ValueSlice:
    """G(x) grad S(t)phi(x) by common-random-number central differences.

    Raises
    ------
    StepTooSmallError
        When the standard error of the gradient exceeds the scale
        ``||phi|| |G(x)| / sqrt(t)`` any genuine gradient can have, i.e. the
        difference step is below the Monte Carlo noise floor.
    """
    if t <= 0:
        raise ValueError("weighted_gradient needs t > 0")
    pts = as_points(points, field.dim)
    (res,), h, (sup,) = _gradient_core(field, [phi], np.array([t]), pts, mc, ("wgrad",))
    wse = res["wgrad_se"][0]
    if check_noise:
        bound = sup * np.linalg.norm(field.G(pts), ord=2, axis=(1, 2)) / math.sqrt(t)
        noisy = np.linalg.norm(wse, axis=1) > bound
        if np.any(noisy):
            k = int(np.argmax(noisy))
            raise StepTooSmallError(
                f"gradient noise {np.linalg.norm(wse[k]):.3g} exceeds signal bound {bound[k]:.3g} at x={pts[k].tolist()} "
                f"(h={h[k]:.3g}); increase the step or the path count"
            )
    return ValueSlice(
        float(t),
        pts,
        res["values"][0],
        res["se"][0],
        res["wgrad"][0],
        wse,
        meta={"fd_step": h.tolist(), "paths": mc.paths, "dt": mc.dt, "seed": mc.seed},
    )


@dataclass
class CTEstimate:
    """Empirical gradient constant with its measurement record.

    Unpacks as ``C_T, profile``.
    """

    C_T: float
    t_grid: np.ndarray
    profile: np.ndarray
    sup_wgrad: dict
    T: float
    meta: dict = field(default_factory=dict)

    @property
    def inflated(self) -> float:
        return 1.1 * self.C_T

    def __iter__(self):
        return iter((self.C_T, self.profile))

    def to_dict(self) -> dict:
        return {
            "C_T": self.C_T,
            "C_T_inflated": self.inflated,
            "T": self.T,
            "t": self.t_grid.tolist(),
            "profile": self.profile.tolist(),
            "sup_wgrad": {k: list(map(float, v)) for k, v in self.sup_wgrad.items()},
            "meta": self.meta,
        }


def estimate_CT(
    field: CoefficientField,
    phi_set,
    T: float,
    t_grid,
    domain,
    mc: MCConfig,
    workers: int = 1,
) -> CTEstimate:
    """Empirical sup of t^{1/2} |G grad S(t)phi| / ||phi|| over t_grid, domain and phi_set.

    All functions and times share one path sample per start point. Work is
    split over ``workers`` threads by chunks of start points; every chunk
    regenerates the same increments, so the result does not depend on the
    worker count.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if len(phi_set) == 0:
        raise ValueError("phi_set must be nonempty")
    if t_grid[0] <= 0 or t_grid[-1] > T * (1 + 1e-12):
        raise ValueError("t_grid must lie in (0, T]")
    pts = as_points(domain, field.dim)
    chunks = np.array_split(np.arange(len(pts)), max(1, min(workers, len(pts))))

    def job(idx):
        return _gradient_core(field, phi_set, t_grid, pts[idx], mc, ("ct",))

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    sups = parts[0][2]
    sup_wgrad = {}
    profile = np.zeros(len(t_grid))
    for i, phi in enumerate(phi_set):
        wg = np.concatenate([p[0][i]["wgrad"] for p in parts], axis=1)
        norm = np.linalg.norm(wg, axis=2).max(axis=1)
        name = getattr(phi, "name", f"phi{i}")
        sup_wgrad[name] = norm
        if sups[i] > 0:
            profile = np.maximum(profile, np.sqrt(t_grid) * norm / sups[i])
    steps = np.concatenate([p[1] for p in parts])
    return CTEstimate(
        C_T=float(profile.max()),
        t_grid=t_grid,
        profile=profile,
        sup_wgrad=sup_wgrad,
        T=float(T),
        meta={
            "paths": mc.paths,
            "dt": mc.dt,
            "seed": mc.seed,
            "points": int(len(pts)),
            "fd_step_range": [float(steps.min()), float(steps.max())],
            "phi_set": list(sup_wgrad),
        },
    )


def loglog_slope(t, y) -> float:
    """Least-squares slope of log y against log t."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(t), np.log(y), 1)[0])
