"""Tests for the SQP step pieces: KKT solve, merit rules, stepsize."""

import numpy as np
import pytest

from dfssqp.exceptions import NumericalError, ValidationError
from dfssqp.regularization import (
    RegularizationBounds,
    regularize_hessian,
    regularize_jacobian,
)
from dfssqp.sqp import (
    KktStep,
    SqpParameters,
    model_reduction,
    select_stepsize,
    solve_kkt,
    update_lipschitz_estimates,
    update_nu,
    update_tau,
)


def random_step_instance(rng, d=None, m=None):
    """Regularized (B, G, g, c) quadruple plus the solved step."""
    d = d or int(rng.integers(2, 7))
    m = m or int(rng.integers(1, d))
    bounds = RegularizationBounds(kappa1_G=1e-2, kappa1_B=1e-2)
    G, _, _ = regularize_jacobian(rng.standard_normal((m, d)), bounds)
    A = rng.standard_normal((d, d))
    B, _, _ = regularize_hessian(A + A.T, G, bounds)
    g = 10.0 ** rng.uniform(-2, 1) * rng.standard_normal(d)
    lam = rng.standard_normal(m)
    c = 10.0 ** rng.uniform(-2, 1) * rng.standard_normal(m)
    step = solve_kkt(B, G, g + G.T @ lam, c)
    return B, G, g, c, step


# -- parameters -----------------------------------------------------------


def test_parameters_defaults_valid():
    p = SqpParameters()
    assert p.tau == p.nu == 1.0
    assert p.stepsize_mode == "upper"


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(tau=0.0),
        dict(nu=-1.0),
        dict(sigma=1.0),
        dict(epsilon=0.0),
        dict(psi=-0.1),
        dict(p=0.9),
        dict(kappa_grad_f=0.0),
        dict(stepsize_mode="midpoint"),
    ],
)
def test_parameters_validation(kwargs):
    with pytest.raises(ValidationError):
        SqpParameters(**kwargs)


# -- kkt solve ------------------------------------------------------------


def test_kkt_simple_system():
    step = solve_kkt(np.eye(2), np.array([[1.0, 0.0]]), np.array([1.0, 1.0]),
                     np.array([0.0]))
    assert isinstance(step, KktStep)
    assert np.allclose(step.dx, [0.0, -1.0], atol=1e-12)
    assert np.allclose(step.dlam, [-1.0], atol=1e-12)


def test_kkt_zero_rhs():
    step = solve_kkt(np.eye(2), np.array([[1.0, 0.0]]), np.zeros(2), np.zeros(1))
    assert np.count_nonzero(step.dx) == 0
    assert np.count_nonzero(step.dlam) == 0


def test_kkt_linearized_feasibility():
    G = np.array([[1.0, 0.0]])
    c = np.array([2.0])
    step = solve_kkt(np.eye(2), G, np.zeros(2), c)
    assert np.allclose(step.dx, [-2.0, 0.0], atol=1e-12)
    assert np.linalg.norm(G @ step.dx + c) <= 1e-10 * (1 + np.linalg.norm(c))


def test_kkt_singular_system_raises():
    with pytest.raises(NumericalError):
        solve_kkt(np.eye(2), np.zeros((1, 2)), np.ones(2), np.ones(1))


def test_kkt_randomized_residuals():
    rng = np.random.default_rng(11)
    for _ in range(300):
        B, G, g, c, step = random_step_instance(rng)
        assert step.solve_residual <= 1e-10 * (1 + np.linalg.norm(np.concatenate([g, c])))
        assert np.linalg.norm(G @ step.dx + c) <= 1e-10 * (1 + np.linalg.norm(c))


# -- model reduction ------------------------------------------------------


def test_model_reduction_zero_direction():
    dq = model_reduction(np.zeros(2), 1.0, np.ones(2), np.eye(2), np.array([3.0, 4.0]))
    assert dq == pytest.approx(5.0)


def test_model_reduction_arithmetic():
    d = np.array([1.0, 0.0])
    dq = model_reduction(d, 1.0, np.array([-1.0, 0.0]), np.eye(2), np.zeros(1))
    assert dq == pytest.approx(0.5)


def test_model_reduction_negative_curvature_clamped():
    d = np.array([1.0, 0.0])
    dq = model_reduction(d, 2.0, np.array([1.0, 0.0]), np.diag([-4.0, 1.0]),
                         np.array([1.0]))
    assert dq == pytest.approx(-1.0)  # may be negative before the merit update


def test_model_reduction_checks_linearization_when_given():
    with pytest.raises(ValidationError):
        model_reduction(np.array([1.0, 0.0]), 1.0, np.zeros(2), np.eye(2),
                        np.array([5.0]), G_tilde=np.array([[1.0, 0.0]]))


# -- merit and ratio updates ----------------------------------------------


def test_update_tau_nonpositive_denominator_keeps_tau():
    tau = update_tau(1.0, np.array([-1.0, 0.0]), np.array([1.0, 0.0]),
                     np.zeros((2, 2)), np.array([1.0]), 0.5, 0.1)
    assert tau == 1.0


def test_update_tau_decrease():
    g = np.array([1.0, 0.0])
    dx = np.array([1.0, 0.0])
    tau = update_tau(1.0, g, dx, np.zeros((2, 2)), np.array([1.0]), 0.5, 0.1)
    assert tau == pytest.approx(0.45)


def test_update_tau_no_decrease_needed():
    g = np.array([1.0, 0.0])
    dx = np.array([1.0, 0.0])
    tau = update_tau(0.4, g, dx, np.zeros((2, 2)), np.array([1.0]), 0.5, 0.1)
    assert tau == 0.4


def test_update_nu_cases():
    dx = np.array([1.0, 1.0])
    assert update_nu(0.4, 1.0, dx, 0.1) == 0.4
    assert update_nu(1.0, 1.0, dx, 0.1) == pytest.approx(0.45)
    assert update_nu(0.7, 1.0, np.zeros(2), 0.1) == 0.7


def test_reduction_bound_after_tau_update():
    # After the merit update the model reduction dominates
    # 0.5*tau*max(dx'B dx, 0) + sigma*||c||.
    rng = np.random.default_rng(23)
    sigma, epsilon = 0.5, 0.1
    for _ in range(500):
        B, G, g, c, step = random_step_instance(rng)
        tau_prev = 10.0 ** rng.uniform(-3, 1)
        tau = update_tau(tau_prev, g, step.dx, B, c, sigma, epsilon)
        assert tau <= tau_prev
        dq = model_reduction(step.dx, tau, g, B, c, G_tilde=G)
        curv = max(float(step.dx @ B @ step.dx), 0.0)
        assert dq >= 0.5 * tau * curv + sigma * np.linalg.norm(c) - 1e-10


def test_tau_nu_monotone_with_geometric_decrease():
    rng = np.random.default_rng(31)
    tau, nu = 1.0, 1.0
    epsilon = 0.1
    for _ in range(200):
        B, G, g, c, step = random_step_instance(rng, d=4, m=2)
        new_tau = update_tau(tau, g, step.dx, B, c, 0.5, epsilon)
        assert new_tau <= tau
        denom = float(g @ step.dx) + max(float(step.dx @ B @ step.dx), 0.0)
        if new_tau < tau and denom > 0:
            trial = 0.5 * np.linalg.norm(c) / denom
            assert new_tau <= (1 - epsilon) * trial + 1e-15
        tau = new_tau
        dq = model_reduction(step.dx, tau, g, B, c)
        new_nu = update_nu(nu, dq, step.dx, epsilon)
        assert new_nu <= nu
        if new_nu < nu:
            assert new_nu == pytest.approx((1 - epsilon) * dq / float(step.dx @ step.dx))
        nu = new_nu


# -- stepsize -------------------------------------------------------------


def test_stepsize_zero_gap_all_modes():
    for mode in ("lower", "upper", "uniform-random"):
        params = SqpParameters(psi=0.0, stepsize_mode=mode)
        out = select_stepsize(params, 0.1, 2.0, 0.5, np.random.default_rng(0))
        assert out == pytest.approx(0.5 * 0.1 / (2.0 + 1.0))


def test_stepsize_upper_mode_value():
    params = SqpParameters(psi=1.0, p=2.0, stepsize_mode="upper")
    assert select_stepsize(params, 0.1, 1.0, 1.0) == pytest.approx(0.06)


def test_stepsize_lower_mode_value():
    params = SqpParameters(psi=1.0, p=2.0, stepsize_mode="lower")
    assert select_stepsize(params, 0.1, 1.0, 1.0) == pytest.approx(0.05)


def test_stepsize_uniform_mode_stays_in_interval():
    params = SqpParameters(psi=1.0, p=2.0, stepsize_mode="uniform-random")
    rng = np.random.default_rng(3)
    draws = np.array([select_stepsize(params, 0.1, 1.0, 1.0, rng)
                      for _ in range(10_000)])
    assert np.all(draws >= 0.05)
    assert np.all(draws <= 0.06)
    assert draws.std() > 0


def test_stepsize_capped_at_one():
    params = SqpParameters()
    assert select_stepsize(params, 1.0, 1.0, 100.0) == 1.0


def test_stepsize_uniform_mode_requires_rng():
    params = SqpParameters(stepsize_mode="uniform-random")
    with pytest.raises(ValidationError):
        select_stepsize(params, 0.1, 1.0, 1.0)
    with pytest.raises(ValidationError):
        select_stepsize(params, 0.0, 1.0, 1.0)


# -- lipschitz tracking ---------------------------------------------------


def test_lipschitz_estimates_grow_to_secant_ratio():
    params = SqpParameters()
    x0, x1 = np.zeros(2), np.array([1.0, 0.0])
    g0, g1 = np.zeros(2), np.array([3.0, 0.0])
    J0, J1 = np.zeros((1, 2)), np.array([[2.0, 0.0]])
    update_lipschitz_estimates(params, x0, x1, g0, g1, J0, J1)
    assert params.kappa_grad_f == pytest.approx(3.0)
    assert params.kappa_grad_c == pytest.approx(2.0)
    # never shrinks, and a zero move is ignored
    update_lipschitz_estimates(params, x1, x1, g1, g1, J1, J1)
    update_lipschitz_estimates(params, x0, x1, g0, g1 / 10.0, J0, J1 / 10.0)
    assert params.kappa_grad_f == pytest.approx(3.0)
    assert params.kappa_grad_c == pytest.approx(2.0)
