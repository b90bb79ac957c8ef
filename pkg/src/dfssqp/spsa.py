"""Simultaneous-perturbation zero-order estimators.

Single-draw estimators for objective gradients, constraint Jacobians, and
symmetrized Lagrangian-building Hessians, plus the per-iteration evaluation
plan. The estimators consume precomputed function values; all oracle calls
and value reuse happen in the solver loop so the per-iteration evaluation
budget (4 for first order, 8 for second order) is enforced structurally.
"""

from __future__ import annotations

import dataclasses
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import ValidationError

Array = np.ndarray

__all__ = [
    "DirectionDistribution",
    "EvaluationPlan",
    "oracle_evaluation_plan",
    "sample_direction",
    "spsa_gradient",
    "spsa_hessian",
    "spsa_jacobian",
]

_KINDS = ("rademacher", "scaled-symmetric-discrete")


@dataclasses.dataclass(frozen=True)
class DirectionDistribution:
    """Distribution of the random perturbation direction.

    "rademacher" draws independent +-1 entries. "scaled-symmetric-discrete"
    draws an independent sign and an independent magnitude uniform over
    {kappa1, kappa2} per entry, which keeps every entry symmetric about zero
    with magnitude in [kappa1, kappa2].
    """

    kind: str = "rademacher"
    kappa1: float = 1.0
    kappa2: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown direction kind {self.kind!r}")
        if not (0 < self.kappa1 <= self.kappa2):
            raise ValidationError("need 0 < kappa1 <= kappa2")
        if self.kappa1 < 1e-12:
            raise ValidationError("kappa1 below the reciprocal guard 1e-12")


def sample_direction(dist: DirectionDistribution, d: int, rng) -> Array:
    """One direction draw with independent symmetric entries."""
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    signs = rng.integers(0, 2, size=d) * 2.0 - 1.0
    if dist.kind == "rademacher":
        return signs
    mags = np.where(rng.integers(0, 2, size=d) == 1, dist.kappa2, dist.kappa1)
    return signs * mags


def spsa_gradient(f_plus: float, f_minus: float, b: float, delta: Array) -> Array:
    """Gradient estimate ((F+ - F-)/(2b)) * entrywise reciprocal of delta."""
    if b <= 0:
        raise ValidationError(f"perturbation radius must be positive, got {b}")
    return ((f_plus - f_minus) / (2.0 * b)) / delta


def spsa_jacobian(c_plus: Array, c_minus: Array, b: float, delta: Array) -> Array:
    """Jacobian estimate ((c+ - c-)/(2b)) outer (1/delta), shape (m, d)."""
    if b <= 0:
        raise ValidationError(f"perturbation radius must be positive, got {b}")
    c_plus = np.asarray(c_plus, dtype=float)
    c_minus = np.asarray(c_minus, dtype=float)
    if c_plus.shape != c_minus.shape or c_plus.ndim != 1:
        raise ValidationError("constraint value shape mismatch")
    return ((c_plus - c_minus) / (2.0 * b))[:, None] * (1.0 / delta)


def _symmetrized_outer(u: Array, v: Array) -> Array:
    A = u[:, None] * v
    A = A + A.T
    A *= 0.5
    return A


def spsa_hessian(
    evaluations: tuple,
    b: float,
    b_tilde: float,
    delta: Array,
    delta_tilde: Array,
) -> tuple[Array, Array]:
    """Symmetrized second-order estimates from the 8 zero-order values.

    `evaluations` is the tuple (f_plus, f_minus, f_plus_shift, f_minus_shift,
    c_plus, c_minus, c_plus_shift, c_minus_shift) where plus/minus refer to
    x +- b delta and the shifted points add b_tilde delta_tilde. Returns the
    objective Hessian estimate of shape (d, d) and the constraint Hessian
    estimates of shape (m, d, d); both exactly symmetric.

    The construction forms one-sided finite-difference gradients at the two
    perturbed points, differences them across the +-b delta pair, and
    symmetrizes the resulting outer-product form.
    """
    if b <= 0 or b_tilde <= 0:
        raise ValidationError("perturbation radii must be positive")
    f_p, f_m, f_ps, f_ms, c_p, c_m, c_ps, c_ms = evaluations
    inv_dt = 1.0 / delta_tilde
    inv_d = 1.0 / delta

    # ((F(x+bD+btDt) - F(x+bD)) - (F(x-bD+btDt) - F(x-bD))) / bt, along 1/Dt
    scale = 1.0 / (2.0 * b * b_tilde)
    u_f = (((f_ps - f_p) - (f_ms - f_m)) * scale) * inv_dt
    H_f = _symmetrized_outer(u_f, inv_d)

    c_p = np.asarray(c_p, dtype=float)
    m = c_p.shape[0]
    d = delta.shape[0]
    H_c = np.empty((m, d, d))
    dc = ((np.asarray(c_ps) - c_p) - (np.asarray(c_ms) - np.asarray(c_m))) * scale
    for i in range(m):
        H_c[i] = _symmetrized_outer(dc[i] * inv_dt, inv_d)
    return H_f, H_c


class EvaluationPlan(NamedTuple):
    """Concrete zero-order evaluation points for one iteration."""

    points: Array  # (n, d); objective and constraints evaluated at each
    objective_calls: int
    constraint_calls: int

    @property
    def total(self) -> int:
        return self.objective_calls + self.constraint_calls


def oracle_evaluation_plan(
    order: str,
    x: Array,
    b: float,
    delta: Array,
    b_tilde: Optional[float] = None,
    delta_tilde: Optional[Array] = None,
) -> EvaluationPlan:
    """Evaluation points for one iteration: 4 calls first order, 8 second.

    The counts are dimension independent: two base points x +- b delta, and
    for second order additionally both base points shifted by
    b_tilde delta_tilde. Each point costs one objective and one constraint
    evaluation.
    """
    if order not in ("first", "second"):
        raise ValidationError(f"order must be 'first' or 'second', got {order!r}")
    step = b * delta
    if order == "first":
        points = np.stack([x + step, x - step])
        return EvaluationPlan(points, 2, 2)
    if b_tilde is None or delta_tilde is None:
        raise ValidationError("second-order plan needs b_tilde and delta_tilde")
    shift = b_tilde * delta_tilde
    plus = x + step
    minus = x - step
    points = np.stack([plus, minus, plus + shift, minus + shift])
    return EvaluationPlan(points, 4, 4)
