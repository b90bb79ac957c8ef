"""Problem abstraction and noisy oracles.

A :class:`ProblemInstance` bundles a deterministic objective f, deterministic
equality constraints c, optional exact derivatives (used by derivative-based
baselines and for validation), a starting point, and an optional reference
solution. Objectives and constraints are written so that the coordinate axis
is last; evaluating a batch of points of shape (n, d) in one call is
supported and is what the solver does internally.

The noisy oracles implement the experimental noise model: objective values
get independent Gaussian value noise, derivative-based baselines get
structured Gaussian noise on the gradient (covariance sigma^2 (I + 11^T)) and
entrywise Gaussian noise on the Hessian followed by symmetrization.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np

from .exceptions import CapabilityError, DomainError, ValidationError

Array = np.ndarray

_NOISE_STYLES = ("iid", "linear")


@dataclasses.dataclass(frozen=True)
class NoiseModel:
    """Noise settings for one experiment.

    sigma2 is the noise variance. The three flags switch noise on or off per
    oracle family. value_noise_style selects between independent draws per
    value evaluation ("iid", the benchmark default) and a smooth random
    linear perturbation xi^T x with xi redrawn once per solver iteration
    ("linear", used by inference calibration studies).
    """

    sigma2: float = 0.0
    value_noise: bool = True
    gradient_noise: bool = True
    hessian_noise: bool = True
    value_noise_style: str = "iid"

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValidationError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.value_noise_style not in _NOISE_STYLES:
            raise ValidationError(
                f"value_noise_style must be one of {_NOISE_STYLES}, "
                f"got {self.value_noise_style!r}"
            )


@dataclasses.dataclass(frozen=True)
class ProblemInstance:
    """An equality-constrained problem min f(x) s.t. c(x) = 0.

    Fields ending in _exact are optional; derivative-based baselines require
    them, derivative-free methods never touch them. exact_hessians returns
    the pair (objective Hessian of shape (d, d), constraint Hessians of
    shape (m, d, d)).
    """

    name: str
    d: int
    m: int
    objective: Callable[[Array], Array]
    constraints: Callable[[Array], Array]
    x0: Array
    lambda0: Optional[Array] = None
    exact_gradient: Optional[Callable[[Array], Array]] = None
    exact_jacobian: Optional[Callable[[Array], Array]] = None
    exact_hessians: Optional[Callable[[Array], tuple[Array, Array]]] = None
    x_star: Optional[Array] = None
    lambda_star: Optional[Array] = None
    description: str = ""

    def __post_init__(self):
        if not (0 < self.m < self.d):
            raise ValidationError(
                f"{self.name}: need 0 < m < d, got d={self.d}, m={self.m}"
            )
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.x0.shape != (self.d,):
            raise ValidationError(f"{self.name}: x0 must have shape ({self.d},)")
        lam0 = self.lambda0
        lam0 = np.zeros(self.m) if lam0 is None else np.asarray(lam0, dtype=float)
        if lam0.shape != (self.m,):
            raise ValidationError(f"{self.name}: lambda0 must have shape ({self.m},)")
        object.__setattr__(self, "lambda0", lam0)

        c0 = np.asarray(self.constraints(self.x0), dtype=float)
        if c0.shape != (self.m,):
            raise ValidationError(
                f"{self.name}: constraints returned shape {c0.shape}, "
                f"expected ({self.m},)"
            )
        f0 = float(self.objective(self.x0))
        if not np.isfinite(f0) or not np.all(np.isfinite(c0)):
            raise ValidationError(f"{self.name}: non-finite value at x0")

        if self.x_star is not None:
            object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float))
            self._validate_reference()

    def _validate_reference(self):
        if self.exact_gradient is None or self.exact_jacobian is None:
            raise ValidationError(
                f"{self.name}: a reference solution requires exact_gradient "
                "and exact_jacobian for validation"
            )
        xs = self.x_star
        g = np.asarray(self.exact_gradient(xs), dtype=float)
        G = np.asarray(self.exact_jacobian(xs), dtype=float)
        if g.shape != (self.d,) or G.shape != (self.m, self.d):
            raise ValidationError(f"{self.name}: exact derivative shape mismatch")
        c = np.asarray(self.constraints(xs), dtype=float)
        if np.linalg.norm(c) > 1e-10:
            raise ValidationError(
                f"{self.name}: reference solution infeasible, ||c|| = "
                f"{np.linalg.norm(c):.3e}"
            )
        sv = np.linalg.svd(G, compute_uv=False)
        if sv[-1] <= 1e-8:
            raise ValidationError(
                f"{self.name}: Jacobian at reference solution is rank deficient"
            )
        lam = self.lambda_star
        if lam is None:
            # LICQ holds, so the multiplier is unique; recover it by least
            # squares from the stationarity condition.
            lam = -np.linalg.solve(G @ G.T, G @ g)
        else:
            lam = np.asarray(lam, dtype=float)
        resid = np.linalg.norm(g + G.T @ lam) + np.linalg.norm(c)
        if resid > 1e-8:
            raise ValidationError(
                f"{self.name}: KKT residual at reference solution is "
                f"{resid:.3e} > 1e-8"
            )
        object.__setattr__(self, "lambda_star", lam)

    # -- diagnostics -----------------------------------------------------

    def kkt_residual(self, x: Array, lam: Array | None = None) -> float:
        """True KKT residual ||grad f + G^T lam|| + ||c||, exact derivatives.

        With lam=None the least-squares dual -(G G')^{-1} G grad f is
        substituted, so the residual measures the primal iterate alone.
        """
        if self.exact_gradient is None or self.exact_jacobian is None:
            raise CapabilityError(f"{self.name}: exact derivatives unavailable")
        g = self.exact_gradient(x)
        G = self.exact_jacobian(x)
        c = self.constraints(x)
        if lam is None:
            lam = -np.linalg.solve(G @ G.T, G @ g)
        return float(np.linalg.norm(g + G.T @ lam) + np.linalg.norm(c))

    def reference(self) -> tuple[Array, Array]:
        if self.x_star is None:
            raise CapabilityError(f"{self.name}: no reference solution recorded")
        return self.x_star, self.lambda_star


# -- noisy oracles -------------------------------------------------------


def noisy_value(prob: ProblemInstance, x, noise: NoiseModel, rng) -> float:
    """One objective value draw F(x) = f(x) + N(0, sigma2).

    Consumes exactly one Gaussian draw from rng regardless of sigma2 so that
    streams stay aligned across noise settings.
    """
    f = float(prob.objective(np.asarray(x, dtype=float)))
    if not math.isfinite(f):
        raise DomainError(f"{prob.name}: objective non-finite at {x}")
    z = rng.standard_normal()
    if noise.value_noise and noise.sigma2 > 0:
        f += math.sqrt(noise.sigma2) * z
    return f


def _gradient_noise_factor(d: int) -> float:
    # S = I + c 11^T with c = (sqrt(d+1)-1)/d satisfies S^2 = I + 11^T.
    return (math.sqrt(d + 1.0) - 1.0) / d


def noisy_gradient(prob: ProblemInstance, x, noise: NoiseModel, rng) -> Array:
    """Gradient draw with covariance sigma2 (I + 11^T)."""
    if prob.exact_gradient is None:
        raise CapabilityError(f"{prob.name}: exact gradient unavailable")
    g = np.asarray(prob.exact_gradient(np.asarray(x, dtype=float)), dtype=float)
    z = rng.standard_normal(prob.d)
    if noise.gradient_noise and noise.sigma2 > 0:
        s = z + _gradient_noise_factor(prob.d) * z.sum()
        g = g + math.sqrt(noise.sigma2) * s
    return g


def noisy_hessian(prob: ProblemInstance, x, noise: NoiseModel, rng) -> Array:
    """Objective Hessian draw: entrywise N(0, sigma2), then symmetrized."""
    if prob.exact_hessians is None:
        raise CapabilityError(f"{prob.name}: exact Hessians unavailable")
    H, _ = prob.exact_hessians(np.asarray(x, dtype=float))
    H = np.asarray(H, dtype=float)
    E = rng.standard_normal((prob.d, prob.d))
    if noise.hessian_noise and noise.sigma2 > 0:
        H = H + math.sqrt(noise.sigma2) * 0.5 * (E + E.T)
    return H


@dataclasses.dataclass
class EvalCounters:
    """Cumulative oracle call counts for one run."""

    objective_values: int = 0
    constraint_values: int = 0
    gradient_draws: int = 0
    jacobian_evals: int = 0
    hessian_draws: int = 0

    def zero_order(self) -> int:
        return self.objective_values + self.constraint_values


class OracleSession:
    """Stateful oracle wrapper for one solver run.

    Owns the value-noise RNG stream, the call counters, and, for the
    "linear" noise style, the per-iteration perturbation vector xi. Batched
    value evaluation draws one Gaussian per point in batch order, which
    keeps runs bit-reproducible for a given seed.
    """

    def __init__(self, prob: ProblemInstance, noise: NoiseModel, rng):
        self.prob = prob
        self.noise = noise
        self.rng = rng
        self.counters = EvalCounters()
        self._sigma = math.sqrt(noise.sigma2)
        self._xi = np.zeros(prob.d)

    def begin_iteration(self):
        """Refresh iteration-scoped noise state."""
        if self.noise.value_noise_style == "linear" and self.noise.value_noise:
            self._xi = self._sigma * self.rng.standard_normal(self.prob.d)

    def values(self, points: Array) -> Array:
        """Noisy objective values at points of shape (n, d)."""
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        f = np.asarray(self.prob.objective(points), dtype=float)
        # sum() is non-finite iff any entry is (these values never overflow)
        if not math.isfinite(float(f.sum())):
            raise DomainError(f"{self.prob.name}: objective non-finite")
        self.counters.objective_values += n
        if self.noise.value_noise and self.noise.sigma2 > 0:
            if self.noise.value_noise_style == "linear":
                f = f + points @ self._xi
            else:
                f = f + self._sigma * self.rng.standard_normal(n)
        return f

    def constraint_values(self, points: Array) -> Array:
        """Constraint vectors at points of shape (n, d); always exact."""
        points = np.asarray(points, dtype=float)
        c = np.asarray(self.prob.constraints(points), dtype=float)
        if not math.isfinite(float(c.sum())):
            raise DomainError(f"{self.prob.name}: constraints non-finite")
        self.counters.constraint_values += points.shape[0]
        return c

    def residual(self, x: Array) -> Array:
        """Exact c(x) for the Newton right-hand side; not audited."""
        return np.asarray(self.prob.constraints(x), dtype=float)

    def constraint_values_and_residual(self, points: Array, x: Array):
        """Constraints at the plan points plus exact c(x) in one batch.

        Equivalent to constraint_values(points) followed by residual(x)
        but with a single problem callback; only the plan rows count.
        """
        stacked = np.concatenate([points, x[None, :]], axis=0)
        c = np.asarray(self.prob.constraints(stacked), dtype=float)
        if not math.isfinite(float(c.sum())):
            raise DomainError(f"{self.prob.name}: constraints non-finite")
        self.counters.constraint_values += points.shape[0]
        return c[:-1], c[-1]

    # -- derivative oracles for the db baselines -------------------------

    def gradient(self, x: Array) -> Array:
        self.counters.gradient_draws += 1
        return noisy_gradient(self.prob, x, self.noise, self.rng)

    def jacobian(self, x: Array) -> Array:
        if self.prob.exact_jacobian is None:
            raise CapabilityError(f"{self.prob.name}: exact Jacobian unavailable")
        self.counters.jacobian_evals += 1
        return np.asarray(self.prob.exact_jacobian(x), dtype=float)

    def lagrangian_hessian(self, x: Array, lam: Array) -> Array:
        """Noisy objective Hessian plus exact constraint Hessian terms."""
        if self.prob.exact_hessians is None:
            raise CapabilityError(f"{self.prob.name}: exact Hessians unavailable")
        self.counters.hessian_draws += 1
        H = noisy_hessian(self.prob, x, self.noise, self.rng)
        Hc = np.asarray(self.prob.exact_hessians(np.asarray(x, dtype=float))[1],
                        dtype=float)
        return H + (lam @ Hc.reshape(len(lam), H.size)).reshape(H.shape)
