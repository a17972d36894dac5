import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjblab import oracles
from hjblab.coefficients import ExampleFamilyParams, make_example_family, ou_field
from hjblab.errors import BlowupError, StepTooSmallError
from hjblab.functions import from_spec
from hjblab.sde import simulate_forward, stream, uniform_grid
from hjblab.semigroup import MCConfig, apply_semigroup, estimate_CT, loglog_slope, weighted_gradient

# [DERIVED] E cos(X_t) for dX = -X dt + dW, by mpmath quadrature of the Gaussian law
FROZEN_OU_COS = {
    (0.1, 0.0): 0.955694180740824,
    (0.1, 1.0): 0.590440700136042,
    (0.5, 0.0): 0.853824047573928,
    (0.5, 1.0): 0.701527924584916,
    (1.0, 0.0): 0.805601416557762,
    (1.0, 1.0): 0.75170029788074,
}


@pytest.mark.parametrize("key", sorted(FROZEN_OU_COS))
def test_closed_form_oracle_matches_quadrature(key):
    t, x = key
    assert oracles.ou_cos(x, t) == pytest.approx(FROZEN_OU_COS[key], abs=1e-13)
    assert oracles.ou_cos(-x, t) == pytest.approx(FROZEN_OU_COS[key], abs=1e-13)


def test_stream_is_keyed_and_reproducible():
    a = stream(3, "forward", 1).standard_normal(4)
    b = stream(3, "forward", 1).standard_normal(4)
    c = stream(3, "forward", 2).standard_normal(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_forward_moments_match_ou_law(ou):
    ens = simulate_forward(ou, [0.7], uniform_grid(0, 1, 1e-3), 20000, seed=0)
    X = ens.paths[:, -1, 0]
    se = X.std() / np.sqrt(len(X))
    assert abs(X.mean() - oracles.ou_mean(0.7, 1.0)) < 4 * se + 1e-3
    assert X.var() == pytest.approx(oracles.ou_var(1.0), rel=0.05)


def test_forward_reuses_supplied_increments(ou):
    g = uniform_grid(0, 0.5, 0.1)
    a = simulate_forward(ou, [0.0], g, 50, seed=1)
    b = simulate_forward(ou, [0.0], g, 50, seed=99, increments=a.increments)
    assert np.array_equal(a.paths, b.paths)


def test_blowup_guard_raises():
    f = make_example_family(ExampleFamilyParams(1, 0.4, 3.0, (1.0,), ((1.0,),)))
    with pytest.raises(BlowupError):
        simulate_forward(f, [30.0], uniform_grid(0, 0.1, 0.05), 4, seed=0, guard_radius=1e3)


def test_tamed_scheme_survives_where_euler_explodes():
    f = make_example_family(ExampleFamilyParams(1, 0.4, 3.0, (1.0,), ((1.0,),)))
    ens = simulate_forward(f, [30.0], uniform_grid(0, 0.1, 0.05), 4, seed=0, scheme="tamed", guard_radius=1e3)
    assert np.all(np.isfinite(ens.paths))


def test_semigroup_is_identity_at_zero(ou):
    phi = from_spec("cos")
    sl = apply_semigroup(ou, phi, 0.0, np.array([0.0, 1.0]), MCConfig(paths=10))
    assert np.array_equal(sl.values, phi(np.array([0.0, 1.0])))


def test_semigroup_preserves_constants(ou):
    sl = apply_semigroup(ou, from_spec({"name": "const", "c": 2.5}), 0.7, np.array([-1.0, 3.0]), MCConfig(paths=100))
    assert np.allclose(sl.values, 2.5) and np.allclose(sl.se, 0.0)


@given(st.floats(-3, 3), st.floats(0.05, 1.0))
def test_semigroup_is_a_contraction(x, t):
    sl = apply_semigroup(ou_field(), from_spec({"name": "tanh", "scale": 3.0}), t, np.array([x]), MCConfig(paths=200, dt=0.01))
    assert np.all(np.abs(sl.values) <= 1.0)


def test_semigroup_matches_ou_oracle(ou):
    pts = np.array([-1.0, 0.0, 1.0])
    sl = apply_semigroup(ou, from_spec("cos"), 0.5, pts, MCConfig(paths=20000, dt=1e-3, seed=3))
    assert np.all(np.abs(sl.values - oracles.ou_cos(pts, 0.5)) <= np.maximum(3 * sl.se, 1e-2))


def test_weighted_gradient_matches_ou_oracle(ou):
    pts = np.array([-1.0, 0.0, 0.5, 1.0])
    sl = weighted_gradient(ou, from_spec("cos"), 0.5, pts, MCConfig(paths=20000, dt=1e-3, antithetic=True))
    want = oracles.ou_cos_grad(pts, 0.5)
    assert np.all(np.abs(sl.wgrad[:, 0] - want) <= np.maximum(4 * sl.wgrad_se[:, 0], 2e-2))


def test_weighted_gradient_rejects_noise_dominated_step(ou):
    # a jump in phi with h = 1e-5: only a handful of the 4000 path pairs straddle it,
    # and with this seed one does, so the gradient SE (25) exceeds 1/sqrt(t) = 10
    mc = MCConfig(paths=4000, dt=1e-3, fd_step=1e-5, seed=3)
    with pytest.raises(StepTooSmallError):
        weighted_gradient(ou, from_spec("sign"), 0.01, np.array([0.0]), mc)


def test_crn_difference_is_noise_free_for_smooth_data(ou):
    # additive noise moves the +h and -h paths in lockstep, so shrinking h does not inflate the SE
    se = [
        weighted_gradient(ou, from_spec("cos"), 0.5, np.array([0.3]), MCConfig(paths=200, dt=1e-2, fd_step=h)).wgrad_se[0, 0]
        for h in (1e-2, 1e-6)
    ]
    assert se[1] == pytest.approx(se[0], rel=1e-3)


def test_estimate_ct_independent_of_worker_count(ou):
    phis = [from_spec("cos"), from_spec({"name": "tanh", "scale": 10.0})]
    mc = MCConfig(paths=400, dt=1e-2, antithetic=True)
    a = estimate_CT(ou, phis, 1.0, np.logspace(-2, 0, 4), np.linspace(-1, 1, 6), mc, workers=1)
    b = estimate_CT(ou, phis, 1.0, np.logspace(-2, 0, 4), np.linspace(-1, 1, 6), mc, workers=3)
    assert a.C_T == b.C_T and np.array_equal(a.profile, b.profile)


def test_ou_constant_for_sign_like_data(ou):
    # [DERIVED] for a unit step, t^{1/2} sup |d/dx E sign(X_t)| -> 2 / sqrt(2 pi) * sqrt(2 t / (1 - e^{-2t}))
    # which is sqrt(2/pi) ~ 0.798 as t -> 0 and 0.98 at t = 1
    est = estimate_CT(ou, [from_spec({"name": "tanh", "scale": 50.0})], 1.0, np.logspace(-2, 0, 5), np.linspace(-0.5, 0.5, 11), MCConfig(paths=4000, dt=1e-3, antithetic=True))
    t = est.t_grid
    exact = np.sqrt(2 / np.pi) * np.sqrt(2 * t / (1 - np.exp(-2 * t))) * np.exp(-t)
    assert np.allclose(est.profile, exact, rtol=0.15)


def test_loglog_slope_recovers_power():
    t = np.logspace(-3, 0, 10)
    assert loglog_slope(t, 3 * t**-0.5) == pytest.approx(-0.5, abs=1e-12)


def test_estimate_ct_validates_inputs(ou):
    with pytest.raises(ValueError):
        estimate_CT(ou, [], 1.0, [0.5], [0.0], MCConfig(paths=10))
    with pytest.raises(ValueError):
        estimate_CT(ou, [from_spec("cos")], 1.0, [0.0, 0.5], [0.0], MCConfig(paths=10))
