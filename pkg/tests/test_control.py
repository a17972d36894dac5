import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjblab import oracles
from hjblab.control import (
    ConstantPolicy,
    benchmark_problem,
    check_hamiltonian_lipschitz,
    cost,
    feedback_selector,
    girsanov_weight,
    hamiltonian,
    hjb_driver,
    path_costs,
    selector_identity_gap,
    simulate_controlled,
    verify_value_inequality,
)
from hjblab.errors import DegenerateWeightsError, MissingGradientError
from hjblab.sde import simulate_forward, uniform_grid

# Frozen benchmark value from the method-of-lines oracle
# (v_t + v_xx/2 - x v_x + min_{|u|<=1} (u^2/2 + u v_x) = 0, 2001 nodes, central differences)
BENCH_V0 = 0.7502002500050463


def continuous_hamiltonian(z):
    return np.where(np.abs(z) <= 1, -0.5 * z**2, 0.5 - np.abs(z))


@pytest.mark.parametrize("z,want", [(0.3, -0.045), (2.0, -1.5), (-2.0, -1.5), (0.0, 0.0), (0.31, -0.048)])
def test_hamiltonian_frozen_values(bench, z, want):
    # [DERIVED] enumeration over u = k/50 by hand: for z = 0.31 both u = -0.30 and -0.32 give -0.048
    val, _ = hamiltonian(bench, np.array([0.2]), np.array([z]))
    assert val == pytest.approx(want, abs=1e-14)


@given(st.floats(-5, 5))
def test_grid_hamiltonian_close_to_continuous_minimum(z):
    bench = benchmark_problem()
    val, u = hamiltonian(bench, np.array([0.0]), np.array([z]))
    # the grid minimum is above the continuous one by at most h^2/2 with h = 0.02
    assert continuous_hamiltonian(z) - 1e-12 <= val <= continuous_hamiltonian(z) + 2e-4
    assert 0.5 * u[0] ** 2 + z * u[0] == pytest.approx(val, abs=1e-14)


def test_refined_control_set_never_worse(bench):
    fine = bench.refined()
    Z = np.linspace(-3, 3, 301)[:, None]
    X = np.zeros_like(Z)
    coarse_v, _ = hamiltonian(bench, X, Z)
    fine_v, _ = hamiltonian(fine, X, Z)
    assert fine.n_controls == 201
    assert np.all(fine_v <= coarse_v + 1e-15)


def test_lipschitz_check_on_benchmark(bench):
    rep = check_hamiltonian_lipschitz(bench)
    assert rep["holds"]
    assert rep["c"] <= 1.0 + 1e-9
    assert rep["sup_psi_x0"] == 0.0


def test_driver_is_negated_hamiltonian(bench):
    drv = hjb_driver(bench)
    X = np.zeros((5, 1))
    Z = np.linspace(-2, 2, 5)[:, None]
    assert np.allclose(drv(X, Z), -hamiltonian(bench, X, Z)[0])
    assert drv.L == 1.0


def test_zero_action_matches_uncontrolled_paths(ou):
    bench = benchmark_problem(101)
    grid = uniform_grid(0, 1, 0.01)
    run = simulate_controlled(bench, ou, ConstantPolicy(50), [0.5], 0.0, grid, 64, seed=7)
    ens = simulate_forward(ou, [0.5], grid, 64, seed=7)
    assert bench.U[50, 0] == 0.0
    assert np.array_equal(run.ensemble.paths, ens.paths)


def test_constant_control_cost_matches_closed_form(ou, bench):
    # X_T ~ N(x0 e^{-1} + u0 (1 - e^{-1}), (1 - e^{-2})/2), running cost u0^2/2
    u0, x0 = 0.5, 0.5
    idx = int(np.argmin(np.abs(bench.U[:, 0] - u0)))
    run = simulate_controlled(bench, ou, ConstantPolicy(idx), [x0], 0.0, uniform_grid(0, 1, 2e-3), 20000, seed=1)
    J, se = cost(bench, run)
    m = oracles.ou_shifted_mean(x0, 1.0, u0)
    exact = 0.5 * u0**2 + math.cos(m) * math.exp(-0.5 * oracles.ou_var(1.0))
    assert abs(J - exact) <= max(4 * se, 5e-3)


def test_girsanov_reweighting_recovers_controlled_cost(ou, bench):
    idx = int(np.argmin(np.abs(bench.U[:, 0] - 0.4)))
    grid = uniform_grid(0, 1, 0.01)
    direct = cost(bench, simulate_controlled(bench, ou, ConstantPolicy(idx), [0.5], 0.0, grid, 20000, seed=2))
    ref = simulate_controlled(bench, ou, ConstantPolicy(idx), [0.5], 0.0, grid, 20000, seed=3, reference=True)
    J, se = cost(bench, ref, girsanov_weight(ref))
    assert abs(J - direct[0]) <= 4 * math.hypot(se, direct[1])


def test_degenerate_weights_raise(ou):
    from hjblab.control import ControlProblem

    big = ControlProblem(np.array([[8.0]]), lambda x, u: 0 * u[:, 0], lambda x, u: u.copy(), np.cos, 8.0)
    run = simulate_controlled(big, ou, ConstantPolicy(0), [0.0], 0.0, uniform_grid(0, 1, 0.05), 500, seed=0, reference=True)
    with pytest.raises(DegenerateWeightsError):
        girsanov_weight(run)


def test_selector_needs_gradient(bench):
    with pytest.raises(MissingGradientError):
        feedback_selector(bench, object())


def test_selector_gap_needs_feedback_run(ou, bench):
    run = simulate_controlled(bench, ou, ConstantPolicy(0), [0.0], 0.0, uniform_grid(0, 0.1, 0.05), 4, seed=0)
    with pytest.raises(MissingGradientError):
        selector_identity_gap(bench, run)


def test_benchmark_value_matches_method_of_lines(bench_solution):
    vals, _ = bench_solution.evaluate(0.0, np.array([0.5]))
    assert vals[0] == pytest.approx(BENCH_V0, abs=2e-3)


def test_path_costs_are_deterministic_given_seed(ou, bench, bench_solution):
    pol = feedback_selector(bench, bench_solution)
    grid = uniform_grid(0, 1, 0.02)
    a = path_costs(bench, simulate_controlled(bench, ou, pol, [0.5], 0.0, grid, 50, seed=4))
    b = path_costs(bench, simulate_controlled(bench, ou, pol, [0.5], 0.0, grid, 50, seed=4))
    assert np.array_equal(a, b)


def test_value_report_small_run(ou, bench, bench_solution):
    rep = verify_value_inequality(bench, ou, bench_solution, [0.5], 0.0, n_policies=16, M=500, seed=0, workers=2)
    assert rep.n_policies == 16 and len(rep.openloop_J) == 16
    assert rep.selector_gap == 0.0
    assert rep.to_dict()["dominance_holds"] == (not rep.violations)


def test_value_report_independent_of_worker_count(ou, bench, bench_solution):
    a = verify_value_inequality(bench, ou, bench_solution, [0.5], 0.0, n_policies=6, M=200, seed=5, workers=1)
    b = verify_value_inequality(bench, ou, bench_solution, [0.5], 0.0, n_policies=6, M=200, seed=5, workers=3)
    assert a.openloop_J == b.openloop_J and a.feedback_J == b.feedback_J
