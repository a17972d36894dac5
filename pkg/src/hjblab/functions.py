"""Bounded test functions used as terminal data.

Each carries its sup norm so estimators never have to guess it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TestFunction:
    """A scalar function on R^N, evaluated on ``(n, N)`` batches."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    sup: float
    params: tuple = ()

    __test__ = False  # keep pytest from collecting this class

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return self.fn(x)


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction(f"const({c})", lambda x: np.full(len(x), float(c)), abs(float(c)), (c,))


def cosine(freq: float = 1.0) -> TestFunction:
    """cos(freq * x_1)."""
    return TestFunction("cos" if freq == 1.0 else f"cos({freq})", lambda x: np.cos(freq * x[:, 0]), 1.0, (freq,))


def sine(freq: float = 1.0) -> TestFunction:
    return TestFunction("sin" if freq == 1.0 else f"sin({freq})", lambda x: np.sin(freq * x[:, 0]), 1.0, (freq,))


def tanh(scale: float = 1.0) -> TestFunction:
    """tanh(scale * x_1); large ``scale`` gives a near-discontinuous step."""
    return TestFunction(f"tanh({scale})", lambda x: np.tanh(scale * x[:, 0]), 1.0, (scale,))


def sign() -> TestFunction:
    return TestFunction("sign", lambda x: np.sign(x[:, 0]), 1.0)


def gaussian_bump(width: float = 1.0) -> TestFunction:
    return TestFunction(
        f"bump({width})", lambda x: np.exp(-np.sum(x * x, axis=1) / (2 * width**2)), 1.0, (width,)
    )


REGISTRY = {
    "const": constant,
    "cos": cosine,
    "sin": sine,
    "tanh": tanh,
    "sign": sign,
    "bump": gaussian_bump,
}


def from_spec(spec) -> TestFunction:
    """Build from ``"cos"``, ``{"name": "tanh", "scale": 50}`` or similar."""
    if isinstance(spec, TestFunction):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name")
    if name not in REGISTRY:
        raise KeyError(f"unknown test function {name!r}; choose from {sorted(REGISTRY)}")
    return REGISTRY[name](**spec)


def sup_norm(phi, samples: np.ndarray | None = None) -> float:
    """Known sup norm, or the max of |phi| over ``samples``."""
    sup = getattr(phi, "sup", None)
    if sup is not None:
        return float(sup)
    if samples is None:
        raise ValueError("phi has no known sup norm; pass sample points")
    return float(np.max(np.abs(phi(samples))))
