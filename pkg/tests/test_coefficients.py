import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjblab.coefficients import (
    ExampleFamilyParams,
    auxiliary_functions,
    brownian_field,
    check_hypotheses,
    cutoff_gradient_closed_form,
    eval_cutoff,
    example_field_unchecked,
    make_example_family,
    make_field,
    ou_field,
)
from hjblab.errors import AdmissibilityError, SingularDiffusionError

coord = st.floats(-20, 20, allow_nan=False)


def example(dim=1, m=0.4, p=1.0, b=(1.0,), q=((1.0,),)):
    return make_example_family(ExampleFamilyParams(dim, m, p, b, q))


def test_example_family_closed_form_values():
    # [DERIVED] at x = 2: s = 1 + 4 = 5, Q = 5^0.4, B = -2 * 5
    f = example()
    x = np.array([[2.0]])
    assert f.Q(x)[0, 0, 0] == pytest.approx(5**0.4, rel=1e-14)
    assert f.G(x)[0, 0, 0] == pytest.approx(5**0.2, rel=1e-14)
    assert f.B(x)[0, 0] == pytest.approx(-10.0, rel=1e-14)


def test_analytic_derivatives_match_central_differences():
    f = example(2, 0.3, 0.5, (1.0, 2.0), ((2.0, 0.5), (0.5, 1.0)))
    g = make_field(2, B=f.B, Q=f.Q, G=f.G)
    X = np.random.default_rng(0).normal(size=(16, 2))
    assert np.allclose(f.DB(X), g.DB(X), atol=1e-6)
    assert np.allclose(f.DG(X), g.DG(X), atol=1e-6)
    assert np.allclose(f.D2G(X), g.D2G(X), atol=1e-4)


@given(st.lists(coord, min_size=2, max_size=2))
def test_generator_on_quadratic_matches_hand_computation(x):
    # A |x|^2 = Tr Q + 2 B . x
    f = example(2, 0.3, 0.5, (1.0, 2.0), ((2.0, 0.5), (0.5, 1.0)))
    X = np.array([x])
    got = f.generator(X, 2 * X, np.broadcast_to(2 * np.eye(2), (1, 2, 2)))
    want = np.trace(f.Q(X)[0]) + 2 * f.B(X)[0] @ X[0]
    assert got[0] == pytest.approx(want, rel=1e-12, abs=1e-12)


@given(st.lists(coord, min_size=1, max_size=3))
def test_G_squares_to_Q(x):
    f = example(len(x), 0.2, 0.5, tuple([1.0] * len(x)), tuple(tuple(float(i == j) for j in range(len(x))) for i in range(len(x))))
    X = np.array([x])
    G = f.G(X)[0]
    assert np.allclose(G @ G.T, f.Q(X)[0], rtol=1e-10)


def test_admissibility_gate_two_dimensions():
    with pytest.raises(AdmissibilityError, match="m <= min"):
        make_example_family(ExampleFamilyParams(2, 0.6, 1.0, (1.0, 2.0), ((1.0, 0.0), (0.0, 1.0))))


def test_admissibility_gate_one_dimension():
    with pytest.raises(AdmissibilityError, match="2p"):
        make_example_family(ExampleFamilyParams(1, 3.0, 0.5, (1.0,), ((1.0,),)))


def test_ou_hypotheses_all_hold():
    assert check_hypotheses(ou_field()).all_hold


def test_brownian_fails_only_M_negativity():
    rep = check_hypotheses(brownian_field())
    assert rep.failed() == ["M_negativity"]
    assert rep.condition("M_negativity").clause == "iii"


def test_unchecked_example_breaks_dissipativity_checks():
    f = example_field_unchecked(ExampleFamilyParams(2, 0.9, 0.0, (1.0, 2.0), ((1.0, 0.0), (0.0, 1.0))))
    assert not check_hypotheses(f).all_hold


def test_report_round_trips_to_json():
    import json

    rep = check_hypotheses(ou_field(), samples=32)
    d = json.loads(rep.to_json())
    assert d["all_hold"] is True and len(d["conditions"]) == len(rep.conditions)


@given(st.floats(1.0, 50.0), st.lists(st.floats(-100, 100), min_size=2, max_size=2))
def test_cutoff_gradient_matches_closed_form(R, x):
    _, grad, _ = eval_cutoff(R, np.array(x))
    assert np.allclose(grad, cutoff_gradient_closed_form(R, np.array(x))[0], atol=1e-12)


@given(st.floats(1.0, 50.0), st.lists(st.floats(-100, 100), min_size=2, max_size=2))
def test_cutoff_range_and_support(R, x):
    val, _, _ = eval_cutoff(R, np.array(x))
    r = np.linalg.norm(x)
    assert 0.0 <= val <= 1.0
    if r <= R / 2:
        assert val == 1.0
    if r >= 0.75 * R:
        assert val == 0.0


def test_cutoff_gradient_by_finite_differences():
    R, x, h = 4.0, np.array([2.3, 0.4]), 1e-6
    _, grad, hess = eval_cutoff(R, x)
    fd = np.array([(eval_cutoff(R, x + h * e)[0] - eval_cutoff(R, x - h * e)[0]) / (2 * h) for e in np.eye(2)])
    fdh = np.array([(eval_cutoff(R, x + h * e)[1] - eval_cutoff(R, x - h * e)[1]) / (2 * h) for e in np.eye(2)])
    assert np.allclose(grad, fd, atol=1e-6)
    assert np.allclose(hess, fdh, atol=1e-4)


def test_auxiliary_functions_vanish_for_constant_G():
    f, h, lR = auxiliary_functions(ou_field(2), np.array([1.0, -2.0]), R=3.0, gamma=1.5)
    assert np.all(f == 0) and h == 0.0
    assert np.allclose(lR, np.abs([1.0, -2.0]) / 10.0)


def test_auxiliary_functions_reject_singular_G():
    f = make_field(1, B=lambda x: -x, G=lambda x: np.zeros((len(x), 1, 1)))
    with pytest.raises(SingularDiffusionError):
        auxiliary_functions(f, np.array([0.5]), R=2.0, gamma=1.0)


@pytest.mark.parametrize("R,gamma", [(0.5, 1.0), (2.0, 0.0)])
def test_auxiliary_functions_validate_arguments(R, gamma):
    with pytest.raises(ValueError):
        auxiliary_functions(ou_field(), np.array([0.0]), R=R, gamma=gamma)
