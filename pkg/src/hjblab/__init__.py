"""Numerical toolkit for semilinear Kolmogorov/HJB equations with unbounded coefficients."""

__version__ = "0.1.0"

from .coefficients import (  # noqa: E402
    CoefficientField,
    ExampleFamilyParams,
    brownian_field,
    check_hypotheses,
    make_example_family,
    ou_field,
)
from .control import (  # noqa: E402
    ControlProblem,
    benchmark_problem,
    hamiltonian,
    hjb_driver,
    simulate_controlled,
    verify_value_inequality,
)
from .fbsde import backward_residual, build_yz, martingale_check, regression_backward_solve  # noqa: E402
from .fdsolve import fd_reference_solve  # noqa: E402
from .mild_solver import (  # noqa: E402
    HamiltonianSpec,
    SolverConfig,
    extend_to_full_interval,
    local_fixed_point,
    mollify,
    solve_mild,
)
from .semigroup import MCConfig, apply_semigroup, estimate_CT, weighted_gradient  # noqa: E402
from .sde import simulate_forward  # noqa: E402

__all__ = [
    "CoefficientField",
    "ControlProblem",
    "ExampleFamilyParams",
    "HamiltonianSpec",
    "MCConfig",
    "SolverConfig",
    "apply_semigroup",
    "backward_residual",
    "benchmark_problem",
    "brownian_field",
    "build_yz",
    "check_hypotheses",
    "estimate_CT",
    "extend_to_full_interval",
    "fd_reference_solve",
    "hamiltonian",
    "hjb_driver",
    "local_fixed_point",
    "make_example_family",
    "martingale_check",
    "mollify",
    "ou_field",
    "regression_backward_solve",
    "simulate_controlled",
    "simulate_forward",
    "solve_mild",
    "verify_value_inequality",
    "weighted_gradient",
]
