"""Tensor grids in one or two dimensions and the finite-difference generator on them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .coefficients import CoefficientField
from .errors import DimensionError


@dataclass(frozen=True)
class GridConfig:
    """Uniform tensor grid on the box ``[lo, hi]^N`` with ``n`` nodes per axis."""

    lo: float = -6.0
    hi: float = 6.0
    n: int = 241

    def build(self, dim: int) -> "TensorGrid":
        return TensorGrid.uniform(dim, self.lo, self.hi, self.n)


@dataclass(frozen=True, eq=False)
class TensorGrid:
    axes: tuple

    @classmethod
    def uniform(cls, dim: int, lo: float, hi: float, n: int) -> "TensorGrid":
        if dim > 2:
            raise DimensionError(f"tensor grids are limited to N <= 2 (got N={dim})")
        if n < 5:
            raise ValueError("need at least 5 nodes per axis")
        ax = np.linspace(lo, hi, n)
        return cls(tuple(ax for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def contains(self, X: np.ndarray) -> np.ndarray:
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        return np.all((X >= lo - 1e-12) & (X <= hi + 1e-12), axis=1)

    def interpolator(self, values: np.ndarray, kind: str = "cubic"):
        """Callable evaluating grid data (``(size,)`` or ``(size, k)``) at ``(n, N)`` points.

        Points outside the box are clamped to it.
        """
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        trailing = values.shape[1:]
        if self.dim == 1 and kind == "cubic":
            spl = CubicSpline(self.axes[0], values, axis=0)

            def f1(X):
                return spl(np.clip(X[:, 0], lo[0], hi[0]))

            return f1
        method = "cubic" if kind == "cubic" else "linear"
        rgi = RegularGridInterpolator(self.axes, values.reshape(*self.shape, *trailing), method=method)

        def f(X):
            return rgi(np.clip(X, lo, hi))

        return f

    def difference_matrices(self) -> list:
        """Sparse first-derivative matrices per axis (central inside, one-sided at the edges)."""
        mats = []
        for k, ax in enumerate(self.axes):
            n = len(ax)
            h = ax[1] - ax[0]
            d = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="lil") / (2 * h)
            d[0, 0], d[0, 1] = -1 / h, 1 / h
            d[n - 1, n - 2], d[n - 1, n - 1] = -1 / h, 1 / h
            d = d.tocsr()
            mats.append(_lift(d, k, self.shape))
        return mats


def _lift(d1: sp.spmatrix, axis: int, shape: tuple) -> sp.csr_matrix:
    """Apply a one-axis operator along ``axis`` of a C-ordered tensor grid."""
    ops = [sp.identity(n, format="csr") for n in shape]
    ops[axis] = d1
    out = ops[0]
    for op in ops[1:]:
        out = sp.kron(out, op, format="csr")
    return out.tocsr()


def generator_matrix(field: CoefficientField, grid: TensorGrid, boundary: str = "reflect", inside=None) -> sp.csr_matrix:
    """Sparse matrix of A = 1/2 tr(Q D^2) + B . grad on the grid.

    Each axis uses central differences for the drift while the cell Peclet
    number allows it and first-order upwinding otherwise, so off-diagonal
    entries of the pure-axis part are nonnegative. Mixed derivatives (only
    present when Q has off-diagonal entries) use the standard four-point
    stencil.

    ``boundary="reflect"`` mirrors missing neighbours back onto the node,
    which keeps every row sum zero. ``boundary="dirichlet"`` drops nodes
    where ``inside`` is false and treats them as zero.
    """
    X = grid.points
    n_pts = grid.size
    shape = grid.shape
    Q = field.Q(X)
    Bv = field.B(X)
    idx = np.arange(n_pts).reshape(shape)
    rows, cols, vals = [], [], []

    def neighbour(k, step):
        sl = np.roll(idx, -step, axis=k)
        # mark out-of-range with -1
        edge = [slice(None)] * grid.dim
        edge[k] = slice(-1, None) if step > 0 else slice(0, 1)
        sl = sl.copy()
        sl[tuple(edge)] = -1
        return sl.ravel()

    for k in range(grid.dim):
        h = grid.spacing[k]
        a = 0.5 * Q[:, k, k]
        b = Bv[:, k]
        central = np.abs(b) * h <= 2 * a
        up = np.where(central, a / h**2 + b / (2 * h), a / h**2 + np.maximum(b, 0) / h)
        lo = np.where(central, a / h**2 - b / (2 * h), a / h**2 + np.maximum(-b, 0) / h)
        for coef, step in ((up, 1), (lo, -1)):
            nb = neighbour(k, step)
            miss = nb < 0
            if boundary == "reflect":
                nb = np.where(miss, np.arange(n_pts), nb)
                rows += [np.arange(n_pts)]
                cols += [nb]
                vals += [coef]
            else:
                ok = ~miss
                rows += [np.arange(n_pts)[ok]]
                cols += [nb[ok]]
                vals += [coef[ok]]
            rows += [np.arange(n_pts)]
            cols += [np.arange(n_pts)]
            vals += [-coef]
    if grid.dim == 2:
        q01 = Q[:, 0, 1]
        if np.any(q01 != 0):
            h0, h1 = grid.spacing
            c = q01 / (4 * h0 * h1)
            I = idx
            n0, n1 = shape
            for s0, s1, sgn in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
                i0 = np.arange(n0)[:, None] + s0
                i1 = np.arange(n1)[None, :] + s1
                if boundary == "reflect":
                    i0 = np.clip(i0, 0, n0 - 1)
                    i1 = np.clip(i1, 0, n1 - 1)
                    nb = I[np.broadcast_to(i0, shape), np.broadcast_to(i1, shape)].ravel()
                    rows += [np.arange(n_pts)]
                    cols += [nb]
                    vals += [sgn * c]
                else:
                    ok = ((i0 >= 0) & (i0 < n0) & (i1 >= 0) & (i1 < n1)).ravel()
                    nb = I[np.broadcast_to(np.clip(i0, 0, n0 - 1), shape), np.broadcast_to(np.clip(i1, 0, n1 - 1), shape)].ravel()
                    rows += [np.arange(n_pts)[ok]]
                    cols += [nb[ok]]
                    vals += [sgn * c[ok]]
    L = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_pts, n_pts)
    )
    L.sum_duplicates()
    if boundary == "dirichlet" and inside is not None:
        keep = np.flatnonzero(inside)
        L = L[keep][:, keep]
    return L.tocsr()
