"""Online averaging of stochastic derivative estimates and run schedules.

Fresh zero-order estimates are too noisy to drive a quasi-Newton step
directly, so each one is folded into an exponentially weighted average
with a decaying weight ``beta_k``.  With ``beta_k = 1`` the averages
degenerate to the latest raw estimate, which is exactly the
derivative-based baseline behaviour.

The Hessian average uses the same weight sequence as the gradient and
Jacobian.  Other weightings (for instance uniform 1/k averaging) would
work as well but are not implemented.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "EstimatorState",
    "ScheduleSet",
    "lagrangian_hessian_estimate",
    "schedule_eval",
    "update_average",
]


def update_average(prev, raw, beta):
    """Convex combination (1 - beta) * prev + beta * raw."""
    if not 0.0 <= beta <= 1.0:
        raise ValidationError(f"averaging weight must lie in [0, 1], got {beta}")
    prev = np.asarray(prev, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if prev.shape != raw.shape:
        raise ValidationError(
            f"shape mismatch in average update: {prev.shape} vs {raw.shape}"
        )
    return (1.0 - beta) * prev + beta * raw


def lagrangian_hessian_estimate(H_f, H_c, lam):
    """Hessian of the Lagrangian: H_f + sum_j lam[j] * H_c[j]."""
    H_f = np.asarray(H_f, dtype=float)
    H_c = np.asarray(H_c, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if H_c.shape != (lam.size, *H_f.shape):
        raise ValidationError(
            f"expected {lam.size} constraint Hessians of shape {H_f.shape}, "
            f"got array of shape {H_c.shape}"
        )
    if lam.size == 0:
        return H_f.copy()
    # One gemv on the flattened stack; much cheaper than tensordot here.
    return H_f + (lam @ H_c.reshape(lam.size, H_f.size)).reshape(H_f.shape)


class EstimatorState:
    """Running averages g_bar, G_bar, B_bar for one solver run.

    Initialized to zero gradient/Jacobian and identity Hessian; the first
    update with weight 1 replaces them outright.  ``k`` counts applied
    updates (-1 before the first).
    """

    def __init__(self, d, m):
        if d < 1 or m < 0:
            raise ValidationError(f"bad dimensions d={d}, m={m}")
        self.g_bar = np.zeros(d)
        self.G_bar = np.zeros((m, d))
        self.B_bar = np.eye(d)
        self.k = -1

    def update(self, g_hat, G_hat, B_hat, beta):
        """Fold one raw estimate triple in; B_hat=None leaves B_bar alone
        (first-order modes keep it pinned at the identity).

        Updates the stored arrays in place (bit-identical arithmetic to
        update_average); callers that keep references must copy.
        """
        if not 0.0 <= beta <= 1.0:
            raise ValidationError(f"averaging weight must lie in [0, 1], got {beta}")
        g_hat = np.asarray(g_hat, dtype=float)
        G_hat = np.asarray(G_hat, dtype=float)
        if g_hat.shape != self.g_bar.shape or G_hat.shape != self.G_bar.shape:
            raise ValidationError("estimate shape mismatch in state update")
        w = 1.0 - beta
        self.g_bar *= w
        self.g_bar += beta * g_hat
        self.G_bar *= w
        self.G_bar += beta * G_hat
        if B_hat is not None:
            B_hat = np.asarray(B_hat, dtype=float)
            if B_hat.shape != self.B_bar.shape:
                raise ValidationError("estimate shape mismatch in state update")
            self.B_bar *= w
            self.B_bar += beta * B_hat
        self.k += 1


@dataclass(frozen=True)
class ScheduleSet:
    """Power-law run schedules alpha_k, beta_k, b_k, b~_k.

    Each sequence is iota / (k+1)^p.  The defaults are the experimental
    choice used throughout the benchmark harness.  ``check`` selects how
    strictly the exponents are validated:

    - "none": only positivity.
    - "theory": exponent ranges that guarantee almost-sure convergence
      (p1 in (0.75, 1], p2 in (0.5, 2*p1 - 1), p3 > 0.5 - 0.5*p2).
    - "inference": additionally p3 > 0.25*p1 and
      p4 > 0.5*p3 + 0.25*(p1 - p2), needed for the asymptotic normality
      of the averaged iterates.
    """

    iota1: float = 1.0
    p1: float = 0.751
    iota2: float = 1.0
    p2: float = 0.501
    iota3: float = 1.0
    p3: float = 0.25
    iota4: float = 1.0
    p4: float = 0.25
    check: str = "inference"

    def __post_init__(self):
        if self.check not in ("none", "theory", "inference"):
            raise ValidationError(f"unknown schedule check mode {self.check!r}")
        for name in ("iota1", "iota2", "iota3", "iota4", "p1", "p2", "p3", "p4"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
        if self.check == "none":
            return
        if not 0.75 < self.p1 <= 1.0:
            raise ValidationError(f"p1 must lie in (0.75, 1], got {self.p1}")
        if not self.p2 < 2.0 * self.p1 - 1.0 or self.p2 <= 0.5:
            raise ValidationError(
                f"p2 must lie in (0.5, 2*p1 - 1) = (0.5, {2 * self.p1 - 1}), "
                f"got {self.p2}"
            )
        p3_floor = 0.5 - 0.5 * self.p2
        if self.check == "inference":
            p3_floor = max(p3_floor, 0.25 * self.p1)
        if not self.p3 > p3_floor:
            raise ValidationError(f"p3 must exceed {p3_floor}, got {self.p3}")
        if self.check == "inference":
            p4_floor = 0.5 * self.p3 + 0.25 * (self.p1 - self.p2)
            if not self.p4 > p4_floor:
                raise ValidationError(f"p4 must exceed {p4_floor}, got {self.p4}")


def schedule_eval(s, k):
    """Evaluate (alpha_k, beta_k, b_k, b~_k) at iteration k >= 0.

    The underlying time index is t = k + 1 so every sequence is finite at
    k = 0.  beta is clamped to 1 so the averaging weight stays admissible
    even for iota2 > 1.
    """
    if k < 0:
        raise ValidationError(f"iteration index must be >= 0, got {k}")
    t = float(k + 1)
    alpha = s.iota1 / t**s.p1
    beta = min(s.iota2 / t**s.p2, 1.0)
    b = s.iota3 / t**s.p3
    b_tilde = s.iota4 / t**s.p4
    return alpha, beta, b, b_tilde
