"""One SQP step: KKT solve, merit model, parameter updates, stepsize.

All pieces operate on the regularized estimates, so the KKT matrix is
invertible by construction and the merit-parameter rule below yields the
sufficient-reduction inequality the convergence analysis needs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError, ValidationError

__all__ = [
    "KktStep",
    "SqpParameters",
    "model_reduction",
    "select_stepsize",
    "solve_kkt",
    "update_lipschitz_estimates",
    "update_nu",
    "update_tau",
]

_STEPSIZE_MODES = ("lower", "upper", "uniform-random")


@dataclass
class SqpParameters:
    """Tuning knobs plus the two monotone run parameters tau and nu.

    tau scales the objective model against feasibility in the merit
    function; nu tracks the worst observed reduction-to-steplength ratio.
    Both only ever decrease.  kappa_grad_f / kappa_grad_c stand in for
    the Lipschitz constants in the stepsize denominator (configured, or
    tracked online via update_lipschitz_estimates).

    psi sizes the adaptivity gap psi * alpha_k^p of the stepsize
    interval.  With p > 1 the gap is summable, so any psi keeps the
    asymptotics; the default keeps early steps usefully large even
    after tau and nu have ratcheted down on noisy estimates (both only
    ever decrease, so a noisy transient pins them permanently).
    """

    tau: float = 1.0
    nu: float = 1.0
    sigma: float = 0.5
    epsilon: float = 0.1
    psi: float = 4.0
    p: float = 1.5
    kappa_grad_f: float = 1.0
    kappa_grad_c: float = 1.0
    stepsize_mode: str = "upper"

    def __post_init__(self):
        if not (self.tau > 0 and self.nu > 0):
            raise ValidationError("tau and nu must be positive")
        if not (0 < self.sigma < 1 and 0 < self.epsilon < 1):
            raise ValidationError("sigma and epsilon must lie in (0, 1)")
        if self.psi < 0:
            raise ValidationError("psi must be nonnegative")
        if self.p < 1:
            raise ValidationError("p must be at least 1")
        if not (self.kappa_grad_f > 0 and self.kappa_grad_c > 0):
            raise ValidationError("Lipschitz surrogates must be positive")
        if self.stepsize_mode not in _STEPSIZE_MODES:
            raise ValidationError(
                f"stepsize_mode must be one of {_STEPSIZE_MODES}, "
                f"got {self.stepsize_mode!r}"
            )


@dataclass
class KktStep:
    """Primal-dual Newton step with its merit-model reduction."""

    dx: np.ndarray
    dlam: np.ndarray
    solve_residual: float
    dq: float = field(default=0.0)


def _dense_kkt_solve(W, rhs, d, m):
    """Direct solve with one refinement pass on an assembled system.

    Returns (sol, residual_norm); raises NumericalError if the system is
    singular or the residual stays above tolerance (which regularized
    inputs should make unreachable).
    """
    try:
        sol = np.linalg.solve(W, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular KKT system (d={d}, m={m}): {exc}") from exc
    resid = rhs - W @ sol
    tol = 1e-10 * (1.0 + math.sqrt(rhs @ rhs))
    residual = math.sqrt(resid @ resid)
    if residual > tol or residual != residual:
        sol = sol + np.linalg.solve(W, resid)
        resid = rhs - W @ sol
        residual = math.sqrt(resid @ resid)
    if not math.isfinite(residual) or residual > tol:
        raise NumericalError(
            f"KKT solve residual {residual:.3e} exceeds tolerance {tol:.3e} "
            f"(cond ~ {np.linalg.cond(W):.3e})"
        )
    return sol, residual


def solve_kkt(B_tilde, G_tilde, grad_L, c):
    """Solve [[B, G'], [G, 0]] (dx, dlam) = -(grad_L, c).

    Dense direct solve with one refinement pass; raises NumericalError if
    the system is singular or the residual stays above tolerance.
    """
    B_tilde = np.asarray(B_tilde, dtype=float)
    G_tilde = np.atleast_2d(np.asarray(G_tilde, dtype=float))
    grad_L = np.asarray(grad_L, dtype=float)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    d = grad_L.size
    m = c.size
    W = np.zeros((d + m, d + m))
    W[:d, :d] = B_tilde
    W[:d, d:] = G_tilde.T
    W[d:, :d] = G_tilde
    rhs = -np.concatenate([grad_L, c])
    sol, residual = _dense_kkt_solve(W, rhs, d, m)
    return KktStep(dx=sol[:d], dlam=sol[d:], solve_residual=residual)


def model_reduction(d, tau, g_bar, B_tilde, c, G_tilde=None):
    """Merit-model reduction -tau*(g'd + max(d'Bd, 0)/2) + ||c||.

    ``d`` must satisfy the linearized constraints; pass G_tilde to have
    that checked.  The value may be negative before the merit update.
    """
    d = np.asarray(d, dtype=float)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    c_norm = np.linalg.norm(c)
    if G_tilde is not None:
        lin = np.atleast_2d(G_tilde) @ d + c
        if np.linalg.norm(lin) > 1e-8 * (1.0 + c_norm):
            raise ValidationError(
                f"direction violates linearized constraints by "
                f"{np.linalg.norm(lin):.3e}"
            )
    curv = max(float(d @ B_tilde @ d), 0.0)
    return -tau * (float(g_bar @ d) + 0.5 * curv) + c_norm


def update_tau(tau_prev, g_bar, dx, B_tilde, c, sigma, epsilon):
    """Monotone merit-parameter rule; keeps tau at or below its trial value.

    At an exactly feasible iterate the KKT identity makes the denominator
    vanish in exact arithmetic, so its computed sign is rounding noise;
    treating c = 0 as the denom <= 0 branch keeps tau from collapsing to
    zero there (several benchmark starting points are feasible).
    """
    dx = np.asarray(dx, dtype=float)
    denom = float(g_bar @ dx) + max(float(dx @ B_tilde @ dx), 0.0)
    c_norm = np.linalg.norm(c)
    if denom <= 0.0 or c_norm == 0.0:
        return tau_prev
    tau_trial = (1.0 - sigma) * c_norm / denom
    if tau_prev <= tau_trial:
        return tau_prev
    return (1.0 - epsilon) * tau_trial


def update_nu(nu_prev, dq, dx, epsilon):
    """Monotone ratio-parameter rule nu <= dq / ||dx||^2.

    A zero step carries no ratio information, so nu is left unchanged.
    """
    sq = float(dx @ dx)
    if sq == 0.0:
        return nu_prev
    nu_trial = dq / sq
    if nu_prev <= nu_trial:
        return nu_prev
    return (1.0 - epsilon) * nu_trial


def select_stepsize(params, alpha_k, tau, nu, rng=None):
    """Pick the step from [L, L + psi*alpha_k^p], L = nu*a/(tau*kf + kc).

    Mode "upper" is the default elsewhere; "uniform-random" needs an rng.
    The result is capped at 1.0.
    """
    if alpha_k <= 0:
        raise ValidationError(f"alpha_k must be positive, got {alpha_k}")
    lo = nu * alpha_k / (tau * params.kappa_grad_f + params.kappa_grad_c)
    gap = params.psi * alpha_k**params.p
    if params.stepsize_mode == "lower":
        chosen = lo
    elif params.stepsize_mode == "upper":
        chosen = lo + gap
    else:
        if rng is None:
            raise ValidationError("uniform-random stepsize mode needs an rng")
        chosen = lo + gap * rng.uniform()
    return min(chosen, 1.0)


def _merit_and_ratio_update(params, gd, curv, c_norm, dx_sq):
    """Fused tau update, model reduction, and nu update on scalars.

    Arithmetic matches the composition update_tau -> model_reduction ->
    update_nu given gd = g'dx, curv = max(dx'B dx, 0), c_norm = ||c||,
    dx_sq = ||dx||^2.  Mutates params.tau / params.nu in place and
    returns (dq, tau_changed, nu_changed).
    """
    denom = gd + curv
    tau_changed = False
    if denom > 0.0 and c_norm != 0.0:
        trial = (1.0 - params.sigma) * c_norm / denom
        if params.tau > trial:
            params.tau = (1.0 - params.epsilon) * trial
            tau_changed = True
    dq = -params.tau * (gd + 0.5 * curv) + c_norm
    nu_changed = False
    if dx_sq != 0.0:
        trial = dq / dx_sq
        if params.nu > trial:
            params.nu = (1.0 - params.epsilon) * trial
            nu_changed = True
    return dq, tau_changed, nu_changed


def update_lipschitz_estimates(params, x_prev, x_new, g_prev, g_new,
                               jac_prev, jac_new):
    """Grow the Lipschitz surrogates to the largest observed secant ratio.

    Optional helper: tracks ||g_new - g_prev|| / ||x_new - x_prev|| (and
    the Jacobian analogue in the spectral norm) and never shrinks the
    surrogates, so the stepsize interval only becomes more conservative.
    """
    dx_norm = np.linalg.norm(np.asarray(x_new) - np.asarray(x_prev))
    if dx_norm == 0.0:
        return
    ratio_f = np.linalg.norm(np.asarray(g_new) - np.asarray(g_prev)) / dx_norm
    ratio_c = np.linalg.norm(np.asarray(jac_new) - np.asarray(jac_prev), 2) / dx_norm
    params.kappa_grad_f = max(params.kappa_grad_f, ratio_f)
    params.kappa_grad_c = max(params.kappa_grad_c, ratio_c)
