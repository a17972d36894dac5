"""Independent method-of-lines solutions used as frozen reference values in the tests.

Solves v_t + v_xx / 2 - x v_x + H(v_x) = 0, v(1, x) = cos x on [-10, 10]
with central differences and scipy's BDF integrator, for
  bench: H(z) = min_{|u| <= 1} (u^2 / 2 + z u)
  abs:   H(z) = -|z|
and prints v(t, x) for t in {0, 0.5}, x in {0, 0.5, 1}. Takes a few minutes.
"""

import argparse

import numpy as np
from scipy.integrate import solve_ivp


def rhs_factory(x, H):
    h = x[1] - x[0]

    def rhs(tau, v):
        vx = np.zeros_like(v)
        vxx = np.zeros_like(v)
        vx[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        vxx[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        return 0.5 * vxx - x * vx + H(vx)

    return rhs


HAMILTONIANS = {
    "bench": lambda z: np.where(np.abs(z) <= 1, -0.5 * z**2, 0.5 - np.abs(z)),
    "abs": lambda z: -np.abs(z),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=2001)
    args = ap.parse_args()
    x = np.linspace(-10, 10, args.nodes)
    for name, H in HAMILTONIANS.items():
        sol = solve_ivp(rhs_factory(x, H), (0, 1), np.cos(x), method="BDF", rtol=1e-9, atol=1e-11, t_eval=[0.5, 1.0])
        for j, tau in enumerate(sol.t):
            vals = [float(np.interp(p, x, sol.y[:, j])) for p in (0.0, 0.5, 1.0)]
            print(name, f"t={1 - tau:.1f}", vals)


if __name__ == "__main__":
    main()
