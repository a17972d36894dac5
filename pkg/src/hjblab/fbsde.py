"""Forward-backward SDE diagnostics.

Along forward paths X, the pair Y = v(s, X_s), Z = G grad v(s, X_s) should
solve dY = psi(X, Z) ds + Z dW with Y_T = phi(X_T). This module builds
(Y, Z) from a solution, measures how well the discrete backward equation
holds, and provides a regression solver that never looks at v.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientField
from .errors import ExtrapolationError, IllConditionedBasisError
from .sde import PathEnsemble


@dataclass(eq=False)
class FbsdeSolution:
    ensemble: PathEnsemble
    Y: np.ndarray  # (M, K+1)
    Z: np.ndarray  # (M, K, N)
    construction: str
    terminal_mismatch: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def build_yz(v, ensemble: PathEnsemble, field: CoefficientField | None = None, exit_tolerance: float = 1e-3) -> FbsdeSolution:
    """Y_k = v(t_k, X_k) and Z_k = (G grad v)(t_k, X_k) along every path.

    States outside the grid box are clamped onto it; if more than
    ``exit_tolerance`` of all states leave the box, ExtrapolationError is
    raised with the observed fraction.
    """
    times = ensemble.times
    if times[0] < v.times[0] - 1e-12 or times[-1] > v.times[-1] + 1e-12:
        raise ValueError("ensemble times must lie inside the solution's time range")
    M, K1, N = ensemble.paths.shape
    flat = ensemble.paths.reshape(-1, N)
    outside = 1.0 - float(np.mean(v.grid.contains(flat)))
    if outside > exit_tolerance:
        raise ExtrapolationError(f"{outside:.2%} of path states leave the evaluation grid (tolerance {exit_tolerance:.2%})")
    Y = np.empty((M, K1))
    Z = np.empty((M, K1 - 1, N))
    for k, t in enumerate(times):
        vals, wg = v.evaluate(t, ensemble.paths[:, k])
        Y[:, k] = vals
        if k < K1 - 1:
            Z[:, k] = wg
    return FbsdeSolution(ensemble, Y, Z, "identification", meta={"exit_fraction": outside})


def backward_residual(sol: FbsdeSolution, ham, phi) -> dict:
    """Step residuals rho_k = Y_{k+1} - Y_k - psi(X_k, Z_k) dt_k - Z_k . dW_k.

    The last step is reported separately (Z blows up near T for rough data)
    and left out of the main statistics.
    """
    ens = sol.ensemble
    M, K1, N = ens.paths.shape
    K = K1 - 1
    dts = ens.dt
    rho = np.empty((M, K))
    for k in range(K):
        drive = ham(ens.paths[:, k], sol.Z[:, k])
        rho[:, k] = sol.Y[:, k + 1] - sol.Y[:, k] - drive * dts[k] - np.sum(sol.Z[:, k] * ens.increments[:, k], axis=1)
    term = sol.Y[:, -1] - np.asarray(phi(ens.paths[:, -1]), float)
    main = rho[:, :-1] if K > 1 else rho
    se_term = float(np.std(term, ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return {
        "dt": float(np.max(dts)),
        "steps": K,
        "rms": float(np.sqrt(np.mean(main**2))),
        "mean": float(np.mean(main)),
        "max": float(np.max(np.abs(main))),
        "last_step_rms": float(np.sqrt(np.mean(rho[:, -1] ** 2))),
        "cumulative_rms": float(np.sqrt(np.mean(np.sum(main, axis=1) ** 2))),
        "terminal_mean": float(np.mean(term)),
        "terminal_se": se_term,
        "terminal_max": float(np.max(np.abs(term))),
    }


def martingale_check(sol: FbsdeSolution, sigmas: float = 4.0) -> dict:
    """Zero mean of I_k = sum_{j<k} Y_j Z_j . dW_j and the discrete Ito isometry.

    The isometry test uses the per-path difference
    D = I_K^2 - sum_j |Y_j Z_j|^2 dt_j, whose mean is exactly zero for
    increments independent of the past.
    """
    ens = sol.ensemble
    M = ens.M
    YZ = sol.Y[:, :-1, None] * sol.Z
    dI = np.sum(YZ * ens.increments, axis=2)
    I = np.cumsum(dI, axis=1)
    mean = I.mean(axis=0)
    se = I.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.zeros(I.shape[1])
    zero_se = se == 0
    z = np.where(zero_se, 0.0, np.abs(mean) / np.where(zero_se, 1.0, se))
    mean_ok = bool(np.all(np.where(zero_se, np.abs(mean) == 0, z <= sigmas)))
    quad = np.sum(np.sum(YZ**2, axis=2) * ens.dt[None, :], axis=1)
    D = I[:, -1] ** 2 - quad
    d_se = float(np.std(D, ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    denom = float(np.mean(quad))
    ratio = float(np.mean(I[:, -1] ** 2) / denom) if denom > 0 else 1.0
    ratio_sigma = d_se / denom if denom > 0 else 0.0
    iso_ok = bool(abs(np.mean(D)) <= sigmas * d_se) if d_se > 0 else bool(np.all(D == 0))
    return {
        "max_abs_z": float(np.max(z)),
        "mean_zero": mean_ok,
        "terminal_mean": float(mean[-1]),
        "terminal_se": float(se[-1]),
        "isometry_ratio": ratio,
        "isometry_sigma": ratio_sigma,
        "isometry_ok": iso_ok,
        "sigmas": sigmas,
    }


def _exponents(dim: int, degree: int) -> list:
    return [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]


@dataclass(frozen=True)
class BasisConfig:
    degree: int = 3
    ridge: float = 1e-8
    max_condition: float = 1e12


def _design(X: np.ndarray, exps: list, centre, scale) -> np.ndarray:
    U = (X - centre) / scale
    return np.stack([np.prod(U ** np.array(e)[None, :], axis=1) for e in exps], axis=1)


def _ridge_fit(A: np.ndarray, b: np.ndarray, cfg: BasisConfig) -> np.ndarray:
    G = A.T @ A
    lam = cfg.ridge * np.trace(G) / len(G)
    G = G + lam * np.eye(len(G))
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cfg.max_condition:
        raise IllConditionedBasisError(f"regression matrix condition number {cond:.3g} exceeds {cfg.max_condition:.3g}")
    return A @ np.linalg.solve(G, A.T @ b)


def regression_backward_solve(ensemble: PathEnsemble, ham, phi, basis: BasisConfig = BasisConfig()) -> FbsdeSolution:
    """Least-squares backward induction on polynomial features of X_k.

    Z_k regresses (Y_{k+1} - E[Y_{k+1} | X_k]) dW_k / dt_k, the conditional
    mean being fitted first; Y_k regresses Y_{k+1} - psi(X_k, Z_k) dt_k.
    When all paths sit at one point (k = 0 from a fixed start) the
    regression collapses to the sample mean.
    """
    M, K1, N = ensemble.paths.shape
    K = K1 - 1
    dts = ensemble.dt
    exps = _exponents(N, basis.degree)
    Y = np.empty((M, K1))
    Z = np.empty((M, K, N))
    Y[:, K] = np.asarray(phi(ensemble.paths[:, K]), float)
    for k in range(K - 1, -1, -1):
        X = ensemble.paths[:, k]
        spread = X.std(axis=0)
        if np.all(spread < 1e-12):
            fit = lambda b: np.broadcast_to(b.mean(axis=0), b.shape).copy()  # noqa: E731
        else:
            A = _design(X, exps, X.mean(axis=0), np.where(spread > 0, spread, 1.0))
            fit = lambda b: _ridge_fit(A, b, basis)  # noqa: E731
        # subtracting the fitted E[Y_{k+1} | X_k] leaves the target's mean unchanged
        # (dW_k is independent of X_k) and removes most of its variance
        centred = Y[:, k + 1] - fit(Y[:, k + 1])
        Z[:, k] = fit(centred[:, None] * ensemble.increments[:, k] / dts[k])
        target = Y[:, k + 1] - ham(X, Z[:, k]) * dts[k]
        Y[:, k] = fit(target)
    # Y_0 is in effect a sample mean of phi(X_K) - sum psi dt; the spread of
    # that pathwise quantity is the honest standard error (the k = 0 target
    # alone is nearly deterministic and would understate it)
    drive = sum(ham(ensemble.paths[:, k], Z[:, k]) * dts[k] for k in range(K))
    pathwise = Y[:, K] - drive
    se0 = float(np.std(pathwise, ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return FbsdeSolution(ensemble, Y, Z, "regression", meta={"Y0_se": se0, "degree": basis.degree})


def cross_oracle_gap(ident: FbsdeSolution, regr: FbsdeSolution, slack: float = 1e-2) -> dict:
    """|Y_0(regression) - Y_0(identification)| against 3 SE + slack."""
    y_id = float(np.mean(ident.Y[:, 0]))
    y_rg = float(np.mean(regr.Y[:, 0]))
    se = regr.meta.get("Y0_se", 0.0)
    budget = 3 * se + slack
    return {"Y0_identification": y_id, "Y0_regression": y_rg, "gap": abs(y_id - y_rg), "budget": budget, "ok": abs(y_id - y_rg) <= budget}


def z_energy(sol: FbsdeSolution) -> float:
    """E sum_k |Z_k|^2 dt_k."""
    return float(np.mean(np.sum(np.sum(sol.Z**2, axis=2) * sol.ensemble.dt[None, :], axis=1)))


def z_distance(a: FbsdeSolution, b: FbsdeSolution) -> float:
    """E sum_k |Z^a_k - Z^b_k|^2 dt_k on a shared ensemble."""
    return float(np.mean(np.sum(np.sum((a.Z - b.Z) ** 2, axis=2) * a.ensemble.dt[None, :], axis=1)))
