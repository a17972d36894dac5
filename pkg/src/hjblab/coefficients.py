"""Coefficient fields of the operator A = 1/2 Tr[Q D^2] + <B, grad>.

Every evaluator is vectorised over a batch of points ``x`` of shape
``(n, N)`` and returns arrays with the batch axis first:

    Q, G, DB : (n, N, N)        DB[., i, j] = d_j B_i
    B        : (n, N)
    DG       : (n, N, N, N)     DG[., k, l, m] = d_k G_lm
    D2G      : (n, N, N, N, N)  D2G[., i, j, l, m] = d_i d_j G_lm
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import AdmissibilityError, SingularDiffusionError

Array = np.ndarray
Evaluator = Callable[[Array], Array]

FD_REL_STEP = 1e-4
SAFETY = 1.1
COND_LIMIT = 1e12


def as_points(x, dim: int) -> Array:
    """Coerce ``x`` to a float array of shape ``(n, dim)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == dim else x.reshape(-1, 1)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def sqrtm_psd(Q: Array) -> Array:
    """Principal square root of a batch of symmetric PSD matrices."""
    w, V = np.linalg.eigh(0.5 * (Q + np.swapaxes(Q, -1, -2)))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def _fd_step(x: Array) -> Array:
    return FD_REL_STEP * (1.0 + np.linalg.norm(x, axis=-1))


def central_jacobian(fn: Evaluator, x: Array) -> Array:
    """Central-difference derivative; output gets a trailing-to-leading axis ``k``.

    For ``fn(x)`` of shape ``(n, *S)`` returns ``(n, N, *S)`` with
    entry ``[., k, ...] = d_k fn``.
    """
    n, N = x.shape
    h = _fd_step(x)
    out = []
    for k in range(N):
        e = np.zeros(N)
        e[k] = 1.0
        shift = h[:, None] * e
        diff = fn(x + shift) - fn(x - shift)
        out.append(diff / (2.0 * h.reshape((n,) + (1,) * (diff.ndim - 1))))
    return np.stack(out, axis=1)


def central_hessian(fn: Evaluator, x: Array) -> Array:
    """Second central differences, ``(n, N, N, *S)``."""
    n, N = x.shape
    h = _fd_step(x)
    f0 = fn(x)
    hh = h.reshape((n,) + (1,) * (f0.ndim - 1))
    eye = np.eye(N)
    out = np.empty((n, N, N) + f0.shape[1:])
    for i in range(N):
        si = h[:, None] * eye[i]
        out[:, i, i] = (fn(x + si) - 2.0 * f0 + fn(x - si)) / hh**2
        for j in range(i + 1, N):
            sj = h[:, None] * eye[j]
            val = (fn(x + si + sj) - fn(x + si - sj) - fn(x - si + sj) + fn(x - si - sj)) / (4.0 * hh**2)
            out[:, i, j] = val
            out[:, j, i] = val
    return out


@dataclass(frozen=True)
class CoefficientField:
    """Drift, diffusion and their derivatives for one operator A.

    Use :func:`make_field` to build one from ``B`` and ``Q`` (or ``G``);
    missing derivatives are filled by central differences with step
    ``1e-4 (1 + |x|)``.
    """

    dim: int
    Q: Evaluator
    G: Evaluator
    B: Evaluator
    DG: Evaluator
    D2G: Evaluator
    DB: Evaluator
    nu: Evaluator
    b_fn: Evaluator
    derivative_mode: str = "analytic"
    name: str = "custom"
    analytic: dict = field(default_factory=dict, compare=False, repr=False)

    def M(self, x: Array) -> Array:
        """G (DB) G^{-1} - sum_ij Q_ij (D_ij G) G^{-1} - sum_j B_j (D_j G) G^{-1}."""
        x = as_points(x, self.dim)
        G = self.G(x)
        Ginv = np.linalg.inv(G)
        Q = self.Q(x)
        second = np.einsum("nij,nijlm->nlm", Q, self.D2G(x))
        first = np.einsum("nj,njlm->nlm", self.B(x), self.DG(x))
        return G @ self.DB(x) @ Ginv - second @ Ginv - first @ Ginv

    def generator(self, x: Array, grad: Array, hess: Array) -> Array:
        """A f at ``x`` given ``grad f`` (n, N) and ``D^2 f`` (n, N, N)."""
        x = as_points(x, self.dim)
        return 0.5 * np.einsum("nij,nij->n", self.Q(x), hess) + np.einsum("ni,ni->n", self.B(x), grad)


def _lambda_min_Q(Qfn: Evaluator) -> Evaluator:
    return lambda x: np.linalg.eigvalsh(Qfn(x))[..., 0]


def _b_from_M(fld_ref: list) -> Evaluator:
    def b(x):
        M = fld_ref[0].M(x)
        S = -0.5 * (M + np.swapaxes(M, -1, -2))
        return np.linalg.eigvalsh(S)[..., 0]

    return b


def make_field(
    dim: int,
    B: Evaluator,
    Q: Evaluator | None = None,
    G: Evaluator | None = None,
    DB: Evaluator | None = None,
    DG: Evaluator | None = None,
    D2G: Evaluator | None = None,
    nu: Evaluator | None = None,
    b_fn: Evaluator | None = None,
    name: str = "custom",
) -> CoefficientField:
    """Assemble a :class:`CoefficientField`, differentiating numerically where needed."""
    if Q is None and G is None:
        raise ValueError("supply Q or G")
    if G is None:
        G = lambda x, _Q=Q: sqrtm_psd(_Q(x))  # noqa: E731
    if Q is None:
        Q = lambda x, _G=G: _G(x) @ _G(x)  # noqa: E731
    analytic = DB is not None and DG is not None and D2G is not None
    if DB is None:
        DB = lambda x, _B=B: np.swapaxes(central_jacobian(_B, x), 1, 2)  # noqa: E731
    if DG is None:
        DG = lambda x, _G=G: central_jacobian(_G, x)  # noqa: E731
    if D2G is None:
        D2G = lambda x, _G=G: central_hessian(_G, x)  # noqa: E731
    ref: list = []
    fld = CoefficientField(
        dim=dim,
        Q=Q,
        G=G,
        B=B,
        DG=DG,
        D2G=D2G,
        DB=DB,
        nu=nu if nu is not None else _lambda_min_Q(Q),
        b_fn=b_fn if b_fn is not None else _b_from_M(ref),
        derivative_mode="analytic" if analytic else f"central-difference(h={FD_REL_STEP}(1+|x|))",
        name=name,
    )
    ref.append(fld)
    return fld


def ou_field(dim: int = 1, rate: float = 1.0, sigma: float = 1.0) -> CoefficientField:
    """Ornstein-Uhlenbeck operator: B(x) = -rate x, G = sigma I."""
    eye = np.eye(dim)

    def const(mat):
        return lambda x: np.broadcast_to(mat, (len(x),) + mat.shape).copy()

    return make_field(
        dim,
        B=lambda x: -rate * x,
        Q=const(sigma**2 * eye),
        G=const(sigma * eye),
        DB=const(-rate * eye),
        DG=const(np.zeros((dim, dim, dim))),
        D2G=const(np.zeros((dim,) * 4)),
        name="ou",
    )


def brownian_field(dim: int = 1) -> CoefficientField:
    """B = 0, G = I. Violates the M-negativity condition (M = 0)."""
    eye = np.eye(dim)

    def const(mat):
        return lambda x: np.broadcast_to(mat, (len(x),) + mat.shape).copy()

    return make_field(
        dim,
        B=lambda x: np.zeros_like(x),
        Q=const(eye),
        G=const(eye),
        DB=const(np.zeros((dim, dim))),
        DG=const(np.zeros((dim,) * 3)),
        D2G=const(np.zeros((dim,) * 4)),
        name="brownian",
    )


@dataclass(frozen=True)
class ExampleFamilyParams:
    """Q_ij = q_ij (1+|x|^2)^m,  B_i = -b_i x_i (1+|x|^2)^p."""

    dim: int
    m: float
    p: float
    b_coeffs: tuple
    q: tuple

    def __post_init__(self):
        object.__setattr__(self, "b_coeffs", tuple(float(v) for v in np.ravel(self.b_coeffs)))
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        object.__setattr__(self, "q", tuple(map(tuple, q)))

    @property
    def q_matrix(self) -> Array:
        return np.array(self.q, dtype=float)

    def admissibility_violation(self) -> str | None:
        """Return a description of the first violated inequality, or None."""
        N, m, p = self.dim, self.m, self.p
        b = np.array(self.b_coeffs)
        q = self.q_matrix
        if b.shape != (N,):
            return f"b_coeffs must have length N={N}, got {b.shape[0]}"
        if q.shape != (N, N):
            return f"q must be {N}x{N}, got {q.shape}"
        if m < 0 or p < 0:
            return f"exponents must be nonnegative (m={m}, p={p})"
        if np.any(b <= 0):
            return "b_coeffs must be positive"
        if not np.allclose(q, q.T) or np.linalg.eigvalsh(q)[0] <= 0:
            return "q must be symmetric positive definite"
        if N >= 2:
            ratio = b.min() / b.max()
            if m > ratio:
                return f"m <= min(b)/max(b) violated: m={m} > {ratio:.6g}"
        elif not 2 * p + 1 > m:
            return f"2p + 1 > m violated: 2p+1={2 * p + 1:.6g} <= m={m}"
        return None


def make_example_family(params: ExampleFamilyParams) -> CoefficientField:
    """Analytic field for the polynomial-growth family.

    Raises
    ------
    AdmissibilityError
        When ``m > min(b)/max(b)`` (N >= 2) or ``2p + 1 <= m`` (N = 1).
    """
    msg = params.admissibility_violation()
    if msg is not None:
        raise AdmissibilityError(msg)
    return example_field_unchecked(params)


def example_field_unchecked(params: ExampleFamilyParams) -> CoefficientField:
    """Same field without the admissibility gate (for probing the checker)."""
    N, m, p = params.dim, params.m, params.p
    bvec = np.array(params.b_coeffs)
    q = params.q_matrix
    sq = sqrtm_psd(q[None])[0]
    eye = np.eye(N)

    def s(x):
        return 1.0 + np.sum(x * x, axis=-1)

    def Q(x):
        return q[None] * s(x)[:, None, None] ** m

    def G(x):
        return sq[None] * s(x)[:, None, None] ** (m / 2)

    def B(x):
        return -bvec * x * s(x)[:, None] ** p

    def DB(x):
        sx = s(x)[:, None, None]
        outer = x[:, :, None] * x[:, None, :]
        return -bvec[None, :, None] * (eye * sx**p + 2 * p * outer * sx ** (p - 1))

    def DG(x):
        coef = m * x * s(x)[:, None] ** (m / 2 - 1)
        return coef[:, :, None, None] * sq[None, None]

    def D2G(x):
        sx = s(x)[:, None, None]
        outer = x[:, :, None] * x[:, None, :]
        coef = m * (eye * sx ** (m / 2 - 1) + (m - 2) * outer * sx ** (m / 2 - 2))
        return coef[:, :, :, None, None] * sq[None, None, None]

    return make_field(N, B=B, Q=Q, G=G, DB=DB, DG=DG, D2G=D2G, name="example_family")


# ----------------------------------------------------------------------------
# cutoff


def cutoff_profile(t: Array) -> tuple[Array, Array, Array]:
    """The radial profile eta(t) with its first two derivatives."""
    t = np.asarray(t, dtype=float)
    val = np.where(t <= 0.5, 1.0, 0.0)
    d1 = np.zeros_like(t)
    d2 = np.zeros_like(t)
    mid = (t > 0.5) & (t < 0.75)
    s = 4.0 * t[mid] - 2.0
    den = 1.0 - s**3
    e = np.exp(1.0 - 1.0 / den)
    g = 12.0 * s**2 / den**2
    dg = 96.0 * s / den**2 + 288.0 * s**4 / den**3
    val[mid] = e
    d1[mid] = -g * e
    d2[mid] = (g * g - dg) * e
    return val, d1, d2


def eval_cutoff(R: float, x) -> tuple[Array, Array, Array]:
    """eta_R(x) = eta(|x|/R), its gradient and Hessian.

    Single points return ``(scalar, (N,), (N, N))``; batches of shape
    ``(n, N)`` return batched arrays.
    """
    if R < 1:
        raise ValueError("cutoff radius must be >= 1")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    N = X.shape[1]
    r = np.linalg.norm(X, axis=1)
    val, d1, d2 = cutoff_profile(r / R)
    safe_r = np.where(r > 0, r, 1.0)
    unit = X / safe_r[:, None]
    grad = (d1 / R)[:, None] * unit
    uu = unit[:, :, None] * unit[:, None, :]
    hess = (d2 / R**2)[:, None, None] * uu + (d1 / (R * safe_r))[:, None, None] * (np.eye(N) - uu)
    if single:
        return float(val[0]), grad[0], hess[0]
    return val, grad, hess


def cutoff_gradient_closed_form(R: float, x: Array) -> Array:
    """D_i eta_R = -(x_i / (|x| R)) 1_{[1/2,3/4)} 12 s^2 / (1 - s^3)^2 eta_R, s = 4|x|/R - 2."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(X, axis=1)
    t = r / R
    ind = (t >= 0.5) & (t < 0.75)
    s = 4.0 * t - 2.0
    eta = cutoff_profile(t)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(ind, 12.0 * s**2 / (1.0 - s**3) ** 2 * eta / (np.where(r > 0, r, 1.0) * R), 0.0)
    return -X * fac[:, None]


# ----------------------------------------------------------------------------
# auxiliary functions


def auxiliary_functions(field: CoefficientField, x, R: float, gamma: float):
    """Return ``(f, h_gamma, lR)`` at the points ``x``.

    ``f_i = |sum_j Q_ij (D_j G) G^{-1}|`` (spectral norm),
    ``h^gamma = sum |G_jk D_k G_lm|^gamma`` and
    ``l^i_R = |(Q x)_i| / (1 + R^2)``.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    single = np.asarray(x).ndim < 2 and np.size(x) == field.dim
    X = as_points(x, field.dim)
    G = field.G(X)
    cond = np.linalg.cond(G)
    if np.any(~np.isfinite(cond)) or np.any(cond > COND_LIMIT):
        k = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise SingularDiffusionError(f"G(x) numerically singular at x={X[k].tolist()} (cond={cond[k]:.3g})")
    Ginv = np.linalg.inv(G)
    Q = field.Q(X)
    DG = field.DG(X)
    mats = np.einsum("nij,njlm->nilm", Q, DG) @ Ginv[:, None]
    f = np.linalg.norm(mats, ord=2, axis=(-2, -1))
    GDG = np.einsum("njk,nklm->njklm", G, DG)
    h_gamma = np.sum(np.abs(GDG) ** gamma, axis=(1, 2, 3, 4))
    h_gamma = np.where(np.all(GDG == 0, axis=(1, 2, 3, 4)), 0.0, h_gamma)
    lR = np.abs(np.einsum("nij,nj->ni", Q, X)) / (1.0 + R * R)
    if single:
        return f[0], float(h_gamma[0]), lR[0]
    return f, h_gamma, lR


def _f_and_h(field: CoefficientField, X: Array) -> tuple[Array, Array]:
    """f_i and the unpowered entries |G_jk D_k G_lm| flattened per point."""
    G = field.G(X)
    Ginv = np.linalg.inv(G)
    DG = field.DG(X)
    mats = np.einsum("nij,njlm->nilm", field.Q(X), DG) @ Ginv[:, None]
    f = np.linalg.norm(mats, ord=2, axis=(-2, -1))
    entries = np.abs(np.einsum("njk,nklm->njklm", G, DG)).reshape(len(X), -1)
    return f, entries


def _power_sum(entries: Array, gamma: float) -> Array:
    if gamma == 0:
        return np.sum(entries > 0, axis=-1).astype(float)
    return np.sum(entries**gamma, axis=-1)


def _pow(v: Array, e: float) -> Array:
    # 0**0 taken as 0: a vanishing coefficient contributes nothing.
    return np.where(v > 0, np.abs(v) ** e, 0.0)


# ----------------------------------------------------------------------------
# hypothesis checker


@dataclass
class ConditionRecord:
    name: str
    clause: str
    holds: bool
    witness_constant: float | None
    worst_point: list | None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "clause": self.clause,
            "holds": bool(self.holds),
            "witness_constant": self.witness_constant,
            "worst_point": self.worst_point,
            "detail": self.detail,
        }


@dataclass
class HypothesisReport:
    """Per-condition verdicts with the witnessing constants found by sampling."""

    conditions: list
    constants: dict
    delta: float | None
    alpha: float | None
    beta: float | None
    sampling: dict
    notes: list = field(default_factory=list)

    def condition(self, name: str) -> ConditionRecord:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.conditions)

    def failed(self) -> list:
        return [c.name for c in self.conditions if not c.holds]

    def to_dict(self) -> dict:
        return {
            "all_hold": self.all_hold,
            "conditions": [c.to_dict() for c in self.conditions],
            "constants": self.constants,
            "delta": self.delta,
            "alpha": self.alpha,
            "beta": self.beta,
            "sampling": self.sampling,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _witness(sup: float) -> float:
    return float(max(sup + (SAFETY - 1.0) * abs(sup), 0.0))


def sample_points(dim: int, radius: float, samples: int, seed: int) -> Array:
    """Scrambled Halton points in the closed ball of ``radius`` (origin included)."""
    eng = qmc.Halton(d=dim, scramble=True, seed=seed)
    pts = [np.zeros((1, dim))]
    have = 1
    while have < samples:
        y = 2.0 * eng.random(max(2 * samples, 16) * 2**dim) - 1.0
        y = y[np.linalg.norm(y, axis=1) <= 1.0]
        pts.append(radius * y)
        have += len(y)
    return np.concatenate(pts)[:samples]


def ray_directions(dim: int, seed: int, n_random: int = 4) -> Array:
    eye = np.eye(dim)
    dirs = [eye, -eye]
    if dim > 1:
        ones = np.ones(dim) / math.sqrt(dim)
        alt = np.array([(-1.0) ** k for k in range(dim)]) / math.sqrt(dim)
        dirs.append(np.stack([ones, -ones, alt]))
        rng = np.random.default_rng(seed)
        rnd = rng.standard_normal((n_random, dim))
        dirs.append(rnd / np.linalg.norm(rnd, axis=1, keepdims=True))
    return np.concatenate(dirs)


def _tail_grows(V: Array, radii: Array, tol_slope: float = 0.05) -> Array:
    """Rays along which ``V`` is still increasing polynomially at the far end."""
    a, b, c = V[:, -3], V[:, -2], V[:, -1]
    mono = (c > b) & (b > a) & (c > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(a > 0, np.log(c / a) / np.log(radii[-1] / radii[-3]), np.inf)
    return mono & (slope > tol_slope)


def _tail_decays(V: Array, radii: Array, tol_slope: float = 0.05) -> Array:
    a, b, c = V[:, -3], V[:, -2], V[:, -1]
    mono = (c < b) & (b < a) & (a > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(c > 0, np.log(c / a) / np.log(radii[-1] / radii[-3]), -np.inf)
    return mono & (slope < -tol_slope)


class _Evaluation:
    """All pointwise quantities the checker needs, on ball + ray samples."""

    def __init__(self, field: CoefficientField, ball: Array, rays: Array, radii: Array):
        self.field = field
        self.ball = ball
        self.n_dirs = len(rays)
        self.radii = radii
        ray_pts = (rays[:, None, :] * radii[None, :, None]).reshape(-1, field.dim)
        self.X = np.concatenate([ball, ray_pts])
        self.n_ball = len(ball)
        X = self.X
        self.Q = field.Q(X)
        self.B = field.B(X)
        self.DB = field.DB(X)
        self.nu = field.nu(X)
        self.b = field.b_fn(X)
        self.f, self.h_entries = _f_and_h(field, X)
        self.r2 = np.sum(X * X, axis=1)
        self.Qx = np.einsum("nij,nj->ni", self.Q, X)

    def split(self, v: Array) -> tuple[Array, Array]:
        return v[: self.n_ball], v[self.n_ball :].reshape(self.n_dirs, len(self.radii))

    def point(self, k: int) -> list:
        return self.X[k].tolist()


def _bounded_record(ev: _Evaluation, name, clause, values, detail=None) -> ConditionRecord:
    """Upper-boundedness verdict for ``values`` (ball sup + ray growth)."""
    ball_v, ray_v = ev.split(values)
    grows = _tail_grows(ray_v, ev.radii)
    finite = np.all(np.isfinite(values))
    k = int(np.nanargmax(np.where(np.isfinite(values), values, np.inf)))
    sup = float(values[k]) if finite else math.inf
    holds = bool(finite and not grows.any())
    worst = ev.point(k)
    if grows.any():
        d = int(np.argmax(grows))
        worst = ev.point(ev.n_ball + d * len(ev.radii) + len(ev.radii) - 1)
    det = {"sup_sampled": sup}
    det.update(detail or {})
    return ConditionRecord(name, clause, holds, _witness(sup) if finite else None, worst, det)


def _regularity(field: CoefficientField, X: Array) -> ConditionRecord:
    """Analytic derivatives against central differences (or h vs h/2 consistency)."""
    errs = {}
    worst_pt, worst = None, 0.0
    checks = [
        ("DB", field.DB, lambda x: np.swapaxes(central_jacobian(field.B, x), 1, 2)),
        ("DG", field.DG, lambda x: central_jacobian(field.G, x)),
        ("D2G", field.D2G, lambda x: central_jacobian(field.DG, x)),
    ]
    for label, exact, approx in checks:
        a = exact(X)
        b = approx(X)
        scale = np.maximum(np.abs(a).reshape(len(X), -1).max(axis=1), 1.0)
        rel = np.abs(a - b).reshape(len(X), -1).max(axis=1) / scale
        errs[label] = float(rel.max())
        if rel.max() > worst:
            worst = float(rel.max())
            worst_pt = X[int(np.argmax(rel))].tolist()
    return ConditionRecord(
        "regularity",
        "i",
        worst <= 1e-4,
        worst,
        worst_pt,
        {"max_rel_derivative_mismatch": errs, "mode": field.derivative_mode},
    )


def _cutoff_constants(field: CoefficientField, dirs: Array, radii_R=(1, 2, 4, 8, 16, 32, 64, 128)) -> tuple:
    """Empirical K8, K9 over annulus samples, one sup per cutoff radius."""
    ts = np.linspace(0.5, 0.75, 26)[1:-1]
    k8_by_R, k9_by_R = [], []
    best8 = (0.0, None)
    best9 = (0.0, None)
    for R in radii_R:
        X = (dirs[:, None, :] * (ts * R)[None, :, None]).reshape(-1, field.dim)
        eta, grad, hess = eval_cutoff(R, X)
        Q = field.Q(X)
        Qgrad = np.abs(np.einsum("nij,ni->nj", Q, grad))
        lR = np.abs(np.einsum("nij,ni->nj", Q, X)) / (1.0 + R * R)
        den8 = lR * eta[:, None] ** (1.0 / 3.0)
        ok = (den8 > 1e-300) & (Qgrad > 0)
        r8 = np.where(ok, Qgrad / np.where(ok, den8, 1.0), 0.0)
        r2 = np.sum(X * X, axis=1)
        den9 = np.einsum("nij,ni,nj->n", Q, X, X) / (1.0 + r2**2) + np.abs(np.trace(Q, axis1=1, axis2=2)) / (1.0 + r2)
        num9 = np.abs(np.einsum("nij,nij->n", Q, hess))
        r9 = np.where(den9 > 0, num9 / np.where(den9 > 0, den9, 1.0), 0.0)
        k8_by_R.append(float(r8.max()))
        k9_by_R.append(float(r9.max()))
        if r8.max() >= best8[0]:
            best8 = (float(r8.max()), X[np.unravel_index(np.argmax(r8), r8.shape)[0]].tolist())
        if r9.max() >= best9[0]:
            best9 = (float(r9.max()), X[int(np.argmax(r9))].tolist())
    radii = np.asarray(radii_R, dtype=float)
    g8 = _tail_grows(np.array([k8_by_R]), radii)[0]
    g9 = _tail_grows(np.array([k9_by_R]), radii)[0]
    rec8 = ConditionRecord("cutoff_gradient", "cutoff", not g8, _witness(best8[0]), best8[1], {"sup_by_R": k8_by_R})
    rec9 = ConditionRecord("cutoff_hessian", "cutoff", not g9, _witness(best9[0]), best9[1], {"sup_by_R": k9_by_R})
    return rec8, rec9


def check_hypotheses(
    field: CoefficientField,
    radius: float = 5.0,
    samples: int = 256,
    seed: int = 0,
    ray_decades: int = 3,
) -> HypothesisReport:
    """Sample-based verdicts on ellipticity, dissipativity and the growth conditions.

    Inequalities stated "for all x" are certified on scrambled Halton points
    in the ball of ``radius`` plus geometric ray points out to
    ``radius * 10**ray_decades``; a quantity that must be bounded is declared
    unbounded when it is still growing polynomially at the far end of a ray.
    Witness constants are the sampled extremes inflated by 10%.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    N = field.dim
    ball = sample_points(N, radius, samples, seed)
    dirs = ray_directions(N, seed)
    radii = radius * np.logspace(0, ray_decades, 3 * ray_decades + 1)
    ev = _Evaluation(field, ball, dirs, radii)
    conds = []
    consts = {}

    conds.append(_regularity(field, ball[: min(len(ball), 64)]))

    # (ii) ellipticity
    lam = np.linalg.eigvalsh(ev.Q)[:, 0]
    nu_ok = np.all(lam >= ev.nu * (1 - 1e-10) - 1e-14)
    nu0 = float(ev.nu.min())
    _, nu_rays = ev.split(ev.nu)
    decays = _tail_decays(nu_rays, radii)
    k = int(np.argmin(ev.nu)) if nu_ok else int(np.argmin(lam - ev.nu))
    conds.append(
        ConditionRecord(
            "ellipticity",
            "ii",
            bool(nu_ok and nu0 > 0 and not decays.any()),
            nu0,
            ev.point(k),
            {"nu_is_lower_envelope": bool(nu_ok)},
        )
    )
    consts["nu0"] = nu0

    # (ii) dissipativity, Jacobian reading and radial reading
    sym = 0.5 * (ev.DB + np.swapaxes(ev.DB, 1, 2))
    top = np.linalg.eigvalsh(sym)[:, -1]
    scale = np.maximum(1.0, np.abs(ev.DB).reshape(len(ev.X), -1).max(axis=1))
    k = int(np.argmax(top / scale))
    conds.append(
        ConditionRecord(
            "dissipativity",
            "ii",
            bool(np.all(top <= 1e-10 * scale)),
            float(top.max()),
            ev.point(k),
            {"reading": "<DB(x) xi, xi> <= 0 for all xi"},
        )
    )
    radial = np.einsum("ni,ni->n", ev.B, ev.X)
    k = int(np.argmax(radial))
    conds.append(
        ConditionRecord(
            "dissipativity_radial",
            "ii",
            bool(np.all(radial <= 1e-10 * np.maximum(1.0, np.abs(ev.B).sum(axis=1) * np.sqrt(ev.r2)))),
            float(radial.max()),
            ev.point(k),
            {"reading": "<B(x), x> <= 0 (alternative reading, reported alongside)"},
        )
    )

    # (iii) -M >= b >= b0 > 0
    b0 = float(np.min(ev.b))
    _, b_rays = ev.split(ev.b)
    tol_b = 1e-10
    bad = ev.b <= tol_b
    k = int(np.argmin(ev.b))
    holds_iii = bool(not bad.any() and not _tail_decays(b_rays, radii).any())
    conds.append(
        ConditionRecord(
            "M_negativity",
            "iii",
            holds_iii,
            b0 if holds_iii else None,
            ev.point(k),
            {"b_min_sampled": b0, "counterexamples": int(bad.sum())},
        )
    )
    consts["b0"] = b0

    # (iv) growth of Q: pick the largest admissible delta
    delta = None
    q_growth = np.abs(ev.Qx).max(axis=1)
    for cand in (1.5, 1.25, 1.0, 0.75, 0.5, 0.25, 0.0):
        vals = _pow(q_growth, cand) / ((1.0 + ev.r2) ** cand * ev.nu)
        rec = _bounded_record(ev, "growth_Q", "iv", vals, {"delta": cand})
        if rec.holds:
            delta = cand
            break
    conds.append(rec)
    consts["K1"] = rec.witness_constant

    d = delta if delta is not None else 1.5
    # growth of B with K2 fixed to 1 and l_R evaluated at R = max(1, |x|)
    Rx = np.maximum(1.0, np.sqrt(ev.r2))
    lR = np.abs(ev.Qx) / (1.0 + Rx**2)[:, None]
    K2 = 1.0
    term = K2 * np.einsum("nij,nj->ni", np.abs(ev.Q * ev.X[:, :, None]), _pow(lR, 3 - 2 * d))
    lhs = term + 4.0 * np.abs(ev.X) * ev.f + ev.X * ev.B
    rec = _bounded_record(ev, "growth_B", "iv", (lhs / (1.0 + ev.r2)[:, None]).max(axis=1), {"K2": K2})
    conds.append(rec)
    consts["K2"] = K2
    consts["K3"] = rec.witness_constant

    K4 = 1.0
    trQ = np.trace(ev.Q, axis1=1, axis2=2)
    qxx = np.einsum("ni,ni->n", ev.Qx, ev.X)
    vals = K4 * ((qxx / (1.0 + ev.r2**2)) ** 2 + (trQ / (1.0 + ev.r2)) ** 2) - ev.b
    rec = _bounded_record(ev, "growth_trace", "iv", vals, {"K4": K4})
    conds.append(rec)
    consts["K4"] = K4
    consts["K5"] = rec.witness_constant

    grid = np.linspace(0.0, 2.0, 9)
    chosen = None
    for a in grid:
        for bb in grid:
            fa = np.sum(_pow(ev.f, a), axis=1)
            hb = _power_sum(ev.h_entries, bb)
            recs = [
                _bounded_record(ev, f"C_{n}", "iv", n * (fa + hb) - ev.b) for n in (1, 10, 100, 1000)
            ]
            k6 = _bounded_record(ev, "K6", "iv", (_pow(ev.f, 2 - a) / ev.nu[:, None]).max(axis=1))
            k7 = _bounded_record(ev, "K7", "iv", _power_sum(ev.h_entries, 2 - bb) / ev.nu)
            if all(r.holds for r in recs) and k6.holds and k7.holds:
                chosen = (a, bb, recs, k6, k7)
                break
        if chosen:
            break
    if chosen:
        a, bb, recs, k6, k7 = chosen
        conds.append(
            ConditionRecord(
                "growth_f_h",
                "iv",
                True,
                k6.witness_constant,
                None,
                {
                    "alpha": a,
                    "beta": bb,
                    "C_n": {r.name: r.witness_constant for r in recs},
                    "K6": k6.witness_constant,
                    "K7": k7.witness_constant,
                },
            )
        )
        consts.update({"K6": k6.witness_constant, "K7": k7.witness_constant})
        consts.update({r.name: r.witness_constant for r in recs})
        alpha, beta = float(a), float(bb)
    else:
        k = int(np.argmax(np.sum(ev.f, axis=1) + ev.h_entries.sum(axis=1) - ev.b))
        conds.append(ConditionRecord("growth_f_h", "iv", False, None, ev.point(k), {"searched_grid": grid.tolist()}))
        alpha = beta = None

    rec8, rec9 = _cutoff_constants(field, dirs)
    conds.extend([rec8, rec9])
    consts["K8"] = rec8.witness_constant
    consts["K9"] = rec9.witness_constant

    return HypothesisReport(
        conditions=conds,
        constants=consts,
        delta=delta,
        alpha=alpha,
        beta=beta,
        sampling={
            "radius": radius,
            "samples": int(len(ball)),
            "seed": seed,
            "ray_directions": int(len(dirs)),
            "ray_radii": [float(r) for r in radii],
        },
        notes=[
            "dissipativity is checked in the Jacobian form; the radial form <B(x),x> <= 0 is reported separately",
            "K2 and K4 are fixed to 1 and K3, K5 fitted under that choice; l_R taken at R = max(1, |x|)",
        ],
    )
