"""Tests for the problem abstraction, noisy oracles, and benchmark library."""

import numpy as np
import pytest

from dfssqp import (
    CapabilityError,
    DomainError,
    NoiseModel,
    OracleSession,
    ProblemInstance,
    ValidationError,
    benchmark_suite,
    get_problem,
    noisy_gradient,
    noisy_hessian,
    noisy_value,
)

# Frozen reference values, computed by hand from the published problem
# definitions before the library was written.
FROZEN_VALUES = {
    # (problem, point-kind) -> objective value
    ("MARATOS", "x0"): -0.66,
    ("MARATOS", "xstar"): -1.0,
    ("BT1", "xstar"): -1.0,
    ("HS48", "x0"): 84.0,  # published starting objective value
    ("HS48", "xstar"): 0.0,
    ("HS51", "x0"): 8.5,  # published starting objective value
    ("HS51", "xstar"): 0.0,
    ("HS42", "xstar"): 28.0 - 10.0 * np.sqrt(2.0),
    ("BT9", "xstar"): -1.0,
    ("BYRDSPHR", "xstar"): -0.5 - 2.0 * np.sqrt(4.375),
}


def test_suite_has_eight_problems():
    suite = benchmark_suite()
    assert len(suite) == 8
    assert {p.name for p in suite} == {
        "MARATOS", "BT1", "HS48", "HS51", "HS42", "BT9", "BYRDSPHR", "BT12",
    }


@pytest.mark.parametrize("prob", benchmark_suite(), ids=lambda p: p.name)
def test_reference_solutions_validate(prob):
    xs, ls = prob.reference()
    assert np.linalg.norm(prob.constraints(xs)) <= 1e-10
    assert prob.kkt_residual(xs, ls) <= 1e-8


@pytest.mark.parametrize("prob", benchmark_suite(), ids=lambda p: p.name)
def test_shapes_and_finiteness(prob):
    c0 = prob.constraints(prob.x0)
    assert c0.shape == (prob.m,)
    g0 = prob.exact_gradient(prob.x0)
    G0 = prob.exact_jacobian(prob.x0)
    assert g0.shape == (prob.d,)
    assert G0.shape == (prob.m, prob.d)
    Hf, Hc = prob.exact_hessians(prob.x0)
    assert Hf.shape == (prob.d, prob.d)
    assert Hc.shape == (prob.m, prob.d, prob.d)
    assert np.allclose(Hf, Hf.T)


@pytest.mark.parametrize("key,expected", FROZEN_VALUES.items(),
                         ids=lambda v: str(v))
def test_frozen_objective_values(key, expected):
    name, kind = key
    prob = get_problem(name)
    x = prob.x0 if kind == "x0" else prob.reference()[0]
    assert float(prob.objective(x)) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("prob", benchmark_suite(), ids=lambda p: p.name)
def test_batched_evaluation_matches_pointwise(prob):
    rng = np.random.default_rng(7)
    pts = prob.x0 +  0.3 * rng.standard_normal((6, prob.d))
    fb = prob.objective(pts)
    cb = prob.constraints(pts)
    assert fb.shape == (6,)
    assert cb.shape == (6, prob.m)
    for i in range(6):
        assert fb[i] == pytest.approx(float(prob.objective(pts[i])), rel=1e-14)
        assert np.allclose(cb[i], prob.constraints(pts[i]), rtol=1e-14)


@pytest.mark.parametrize("prob", benchmark_suite(), ids=lambda p: p.name)
def test_exact_derivatives_match_finite_differences(prob):
    rng = np.random.default_rng(11)
    x = prob.x0 + 0.1 * rng.standard_normal(prob.d)
    h = 1e-6
    g_fd = np.zeros(prob.d)
    G_fd = np.zeros((prob.m, prob.d))
    for j in range(prob.d):
        e = np.zeros(prob.d)
        e[j] = h
        g_fd[j] = (prob.objective(x + e) - prob.objective(x - e)) / (2 * h)
        G_fd[:, j] = (prob.constraints(x + e) - prob.constraints(x - e)) / (2 * h)
    assert np.allclose(prob.exact_gradient(x), g_fd, atol=1e-5)
    assert np.allclose(prob.exact_jacobian(x), G_fd, atol=1e-5)
    Hf, Hc = prob.exact_hessians(x)
    for j in range(prob.d):
        e = np.zeros(prob.d)
        e[j] = h
        col = (prob.exact_gradient(x + e) - prob.exact_gradient(x - e)) / (2 * h)
        assert np.allclose(Hf[:, j], col, atol=1e-4)
        Jcol = (prob.exact_jacobian(x + e) - prob.exact_jacobian(x - e)) / (2 * h)
        assert np.allclose(Hc[:, :, j], Jcol, atol=1e-4)


@pytest.mark.parametrize("prob", benchmark_suite(), ids=lambda p: p.name)
def test_jacobian_full_rank_near_start(prob):
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = prob.x0 + rng.uniform(-0.5, 0.5, size=prob.d)
        sv = np.linalg.svd(prob.exact_jacobian(x), compute_uv=False)
        assert sv[-1] > 1e-8


def test_solver_default_bounds_inactive_at_solutions():
    # The solver-level regularization thresholds must not distort the KKT
    # system near any reference solution, otherwise the limit points and the
    # plug-in covariance would be biased.
    from dfssqp.solver import SOLVER_REGULARIZATION

    for prob in benchmark_suite():
        xs, ls = prob.reference()
        G = prob.exact_jacobian(xs)
        Hf, Hc = prob.exact_hessians(xs)
        H = Hf + np.tensordot(ls, Hc, axes=1)
        sv = np.linalg.svd(G, compute_uv=False)
        _, _, Vt = np.linalg.svd(G)
        Z = Vt[prob.m:].T
        lam_min = np.linalg.eigvalsh(Z.T @ H @ Z)[0]
        assert sv[-1] ** 2 > 2.0 * SOLVER_REGULARIZATION.kappa1_G, prob.name
        assert lam_min > 2.0 * SOLVER_REGULARIZATION.kappa1_B, prob.name


# -- noisy oracles -------------------------------------------------------


def test_noisy_value_zero_variance_is_exact():
    prob = get_problem("MARATOS")
    rng = np.random.default_rng(0)
    v = noisy_value(prob, prob.x0, NoiseModel(sigma2=0.0), rng)
    assert v == pytest.approx(-0.66, abs=1e-15)


def test_noisy_value_draws_differ():
    prob = get_problem("MARATOS")
    rng = np.random.default_rng(0)
    noise = NoiseModel(sigma2=1.0)
    a = noisy_value(prob, prob.x0, noise, rng)
    b = noisy_value(prob, prob.x0, noise, rng)
    assert a != b


def test_noisy_value_reproducible():
    prob = get_problem("BT9")
    noise = NoiseModel(sigma2=0.5)
    a = noisy_value(prob, prob.x0, noise, np.random.default_rng(42))
    b = noisy_value(prob, prob.x0, noise, np.random.default_rng(42))
    assert a == b


def test_noisy_value_rejects_nonfinite():
    bad = ProblemInstance(
        name="bad",
        d=2,
        m=1,
        objective=lambda x: np.where(x[..., 0] > 2, np.inf, x[..., 0]),
        constraints=lambda x: np.stack([x[..., 1]], axis=-1),
        x0=[0.0, 0.0],
    )
    with pytest.raises(DomainError):
        noisy_value(bad, np.array([3.0, 0.0]), NoiseModel(), np.random.default_rng(0))


def test_noisy_gradient_variance_d1_structure():
    # At d = 1 the covariance I + 11^T collapses to the scalar 2.
    prob = ProblemInstance(
        name="scalar-like",
        d=2,
        m=1,
        objective=lambda x: x[..., 0] ** 2,
        constraints=lambda x: np.stack([x[..., 1]], axis=-1),
        x0=[1.0, 0.0],
        exact_gradient=lambda x: np.array([2.0 * x[0], 0.0]),
        exact_jacobian=lambda x: np.array([[0.0, 1.0]]),
    )
    rng = np.random.default_rng(5)
    noise = NoiseModel(sigma2=1.0)
    draws = np.array(
        [noisy_gradient(prob, prob.x0, noise, rng) for _ in range(100_000)]
    )
    cov = np.cov(draws.T)
    # target covariance is I + 11^T
    target = np.eye(2) + 1.0
    assert np.allclose(cov, target, atol=0.2 * np.abs(target).max())
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - [2.0, 0.0]) < 5 * se)


def test_noisy_gradient_zero_variance():
    prob = get_problem("HS42")
    g = noisy_gradient(prob, prob.x0, NoiseModel(sigma2=0.0), np.random.default_rng(1))
    assert np.allclose(g, prob.exact_gradient(prob.x0))


def test_noisy_hessian_symmetry_and_variances():
    prob = get_problem("MARATOS")
    rng = np.random.default_rng(9)
    noise = NoiseModel(sigma2=1.0)
    draws = np.array(
        [noisy_hessian(prob, prob.x0, noise, rng) for _ in range(100_000)]
    )
    assert np.allclose(draws, np.swapaxes(draws, 1, 2))
    var = draws.var(axis=0)
    assert var[0, 0] == pytest.approx(1.0, rel=0.1)
    assert var[1, 1] == pytest.approx(1.0, rel=0.1)
    assert var[0, 1] == pytest.approx(0.5, rel=0.1)


def test_noisy_oracles_require_exact_maps():
    minimal = ProblemInstance(
        name="min",
        d=2,
        m=1,
        objective=lambda x: x[..., 0],
        constraints=lambda x: np.stack([x[..., 1]], axis=-1),
        x0=[0.0, 0.0],
    )
    rng = np.random.default_rng(0)
    with pytest.raises(CapabilityError):
        noisy_gradient(minimal, minimal.x0, NoiseModel(), rng)
    with pytest.raises(CapabilityError):
        noisy_hessian(minimal, minimal.x0, NoiseModel(), rng)


def test_reference_without_exact_derivatives_rejected():
    with pytest.raises(ValidationError):
        ProblemInstance(
            name="noexact",
            d=2,
            m=1,
            objective=lambda x: x[..., 0],
            constraints=lambda x: np.stack([x[..., 1]], axis=-1),
            x0=[0.0, 0.0],
            x_star=[0.0, 0.0],
        )


def test_infeasible_reference_rejected():
    with pytest.raises(ValidationError):
        ProblemInstance(
            name="infeas",
            d=2,
            m=1,
            objective=lambda x: x[..., 0] ** 2,
            constraints=lambda x: np.stack([x[..., 1] - 1.0], axis=-1),
            x0=[0.0, 1.0],
            exact_gradient=lambda x: np.array([2.0 * x[0], 0.0]),
            exact_jacobian=lambda x: np.array([[0.0, 1.0]]),
            x_star=[0.0, 0.0],
        )


def test_validation_rejects_bad_noise():
    with pytest.raises(ValidationError):
        NoiseModel(sigma2=-1.0)
    with pytest.raises(ValidationError):
        NoiseModel(value_noise_style="weird")


# -- oracle session ------------------------------------------------------


def test_session_counts_zero_order_calls():
    prob = get_problem("HS48")
    sess = OracleSession(prob, NoiseModel(sigma2=0.0), np.random.default_rng(0))
    pts = np.stack([prob.x0, prob.x0 + 0.1])
    sess.values(pts)
    sess.constraint_values(pts)
    assert sess.counters.objective_values == 2
    assert sess.counters.constraint_values == 2
    assert sess.counters.zero_order() == 4
    # the Newton residual is exact and intentionally not audited
    sess.residual(prob.x0)
    assert sess.counters.zero_order() == 4


def test_session_batch_noise_matches_variance():
    prob = get_problem("MARATOS")
    sess = OracleSession(prob, NoiseModel(sigma2=4.0), np.random.default_rng(3))
    pts = np.tile(prob.x0, (200_000, 1))
    vals = sess.values(pts)
    assert vals.std() == pytest.approx(2.0, rel=0.05)
    assert vals.mean() == pytest.approx(-0.66, abs=0.05)


def test_session_linear_noise_shared_within_iteration():
    prob = get_problem("MARATOS")
    noise = NoiseModel(sigma2=1.0, value_noise_style="linear")
    sess = OracleSession(prob, noise, np.random.default_rng(12))
    sess.begin_iteration()
    x = prob.x0
    # same point twice inside one iteration gives identical values
    v = sess.values(np.stack([x, x]))
    assert v[0] == v[1]
    before = v[0]
    sess.begin_iteration()
    after = sess.values(x[None, :])[0]
    assert after != before


def test_session_derivative_oracles_count():
    prob = get_problem("BT9")
    sess = OracleSession(prob, NoiseModel(sigma2=0.0), np.random.default_rng(0))
    sess.gradient(prob.x0)
    sess.jacobian(prob.x0)
    sess.lagrangian_hessian(prob.x0, prob.lambda0)
    assert sess.counters.gradient_draws == 1
    assert sess.counters.jacobian_evals == 1
    assert sess.counters.hessian_draws == 1
    assert sess.counters.zero_order() == 0


def test_session_lagrangian_hessian_combines_terms():
    prob = get_problem("BYRDSPHR")
    sess = OracleSession(prob, NoiseModel(sigma2=0.0), np.random.default_rng(0))
    lam = np.array([2.0, -1.0])
    H = sess.lagrangian_hessian(prob.reference()[0], lam)
    # objective Hessian is zero; constraint Hessians are both 2 I
    assert np.allclose(H, (2.0 * 2.0 - 1.0 * 2.0) * np.eye(3))


def test_get_problem_case_insensitive():
    assert get_problem("maratos").name == "MARATOS"
    with pytest.raises(ValidationError):
        get_problem("nope")
