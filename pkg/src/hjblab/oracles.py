"""Closed forms for the one-dimensional Ornstein-Uhlenbeck process dX = -X dt + dW.

X_t | X_0 = x  ~  N(x e^{-t}, (1 - e^{-2t}) / 2).
"""

import numpy as np


def ou_mean(x, t):
    return np.asarray(x, dtype=float) * np.exp(-t)


def ou_var(t):
    return 0.5 * (1.0 - np.exp(-2.0 * t))


def ou_cos(x, t):
    """E cos(X_t) started at x."""
    return np.cos(ou_mean(x, t)) * np.exp(-0.5 * ou_var(t))


def ou_cos_grad(x, t):
    """d/dx E cos(X_t) (G = 1, so also the weighted gradient)."""
    return -np.exp(-t) * np.sin(ou_mean(x, t)) * np.exp(-0.5 * ou_var(t))


def ou_shifted_mean(x, t, u0):
    """Mean of dX = (-X + u0) dt + dW."""
    return x * np.exp(-t) + u0 * (1.0 - np.exp(-t))
