"""Jacobian and Hessian regularization for the stochastic SQP step.

Averaged derivative estimates carry no rank or curvature guarantees, so
before each KKT solve the Jacobian estimate is pushed to full row rank
with bounded singular values and the Lagrangian Hessian estimate is made
positive definite on the constraint null space with bounded norm.  Both
transforms report the perturbation they applied; along a convergent run
with benign geometry the perturbations vanish and the estimates pass
through untouched.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "DEFAULT_BOUNDS",
    "RegularizationBounds",
    "null_space_basis",
    "regularize_hessian",
    "regularize_jacobian",
]


@dataclass(frozen=True)
class RegularizationBounds:
    """Spectral bounds enforced on the regularized estimates.

    ``kappa1_G``/``kappa2_G`` bound the squared singular values of the
    Jacobian; ``kappa1_B`` bounds the reduced Hessian from below and
    ``kappa2_B`` bounds the Hessian norm.  ``margin`` is extra slack
    added when shifting so the lower bound holds strictly.
    """

    kappa1_G: float = 1e-8
    kappa2_G: float = 1e8
    kappa1_B: float = 1e-8
    kappa2_B: float = 1e8
    margin: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.kappa1_G < self.kappa2_G:
            raise ValidationError(
                f"need 0 < kappa1_G < kappa2_G, got {self.kappa1_G}, {self.kappa2_G}"
            )
        if not 0.0 < self.kappa1_B < self.kappa2_B:
            raise ValidationError(
                f"need 0 < kappa1_B < kappa2_B, got {self.kappa1_B}, {self.kappa2_B}"
            )
        if not self.margin > 0.0:
            raise ValidationError(f"margin must be positive, got {self.margin}")


DEFAULT_BOUNDS = RegularizationBounds()


def null_space_basis(G):
    """Orthonormal basis of the null space of G, one column per direction."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    m, d = G.shape
    if m >= d:
        raise ValidationError(f"expected a wide matrix, got shape {G.shape}")
    _, _, Vt = np.linalg.svd(G, full_matrices=True)
    return Vt[m:].T


# Read-only [I; 0]-shaped bases keyed by dimension, shared across runs.
_SHIFTED_EYE = {}


def _jacobian_clamp(G_bar, bounds):
    """SVD clamp sharing one decomposition with the null-space basis.

    Returns (G_tilde, active, Z).  The solver hot loop uses this to avoid
    a second SVD; the public wrapper below discards Z.  Single rows skip
    the SVD: the norm is the singular value and a Householder reflection
    taking the unit row to -e1 supplies the complement basis.
    """
    m, d = G_bar.shape
    if m > d:
        raise ValidationError(f"more constraints than variables: shape {G_bar.shape}")
    lo = np.sqrt(bounds.kappa1_G)
    hi = np.sqrt(bounds.kappa2_G)
    if m == 1 and d > 1:
        g = G_bar[0]
        s0 = math.sqrt(g @ g)
        if s0 > 0.0:
            u = g / s0
        else:
            u = np.zeros(d)
            u[0] = 1.0
        v = u.copy()
        v[0] += 1.0 if v[0] >= 0.0 else -1.0
        base = _SHIFTED_EYE.get(d)
        if base is None:
            base = _SHIFTED_EYE[d] = np.eye(d, d - 1, -1)
        Z = base - v[:, None] * ((2.0 / (v @ v)) * v[1:])
        tol = 1e-12 * max(1.0, s0)
        if lo - tol <= s0 <= hi + tol:
            return G_bar, False, Z
        return min(max(s0, lo), hi) * u[None, :], True, Z
    U, s, Vt = np.linalg.svd(G_bar, full_matrices=True)
    Z = Vt[m:].T
    tol = 1e-12 * max(1.0, s[0])
    if s[-1] >= lo - tol and s[0] <= hi + tol:
        return G_bar, False, Z
    G_tilde = (U * np.clip(s, lo, hi)) @ Vt[:m]
    return G_tilde, True, Z


def regularize_jacobian(G_bar, bounds=DEFAULT_BOUNDS):
    """Clamp the singular values of G_bar into [sqrt(k1G), sqrt(k2G)].

    Returns (G_tilde, delta, active).  Directions for exactly singular
    inputs come from the decomposition itself (left/right singular
    vectors in decomposition order), which keeps the construction
    deterministic.
    """
    G_bar = np.atleast_2d(np.asarray(G_bar, dtype=float))
    G_tilde, active, _ = _jacobian_clamp(G_bar, bounds)
    if not active:
        return G_bar, np.zeros_like(G_bar), False
    return G_tilde, G_tilde - G_bar, True


def _eig_clamp(w, V, hi):
    """Rebuild a symmetric matrix with eigenvalues clipped to [-hi, hi]."""
    M = (V * np.clip(w, -hi, hi)) @ V.T
    return 0.5 * (M + M.T)


def _hessian_with_basis(B_bar, G_tilde, Z, bounds):
    """Hessian regularization against a precomputed null-space basis."""
    k1, k2 = bounds.kappa1_B, bounds.kappa2_B
    red = Z.T @ B_bar @ Z
    if red.shape[0] == 1:
        red_min = red[0, 0]
    elif red.shape[0] == 2:
        half_tr = 0.5 * (red[0, 0] + red[1, 1])
        red_min = half_tr - math.hypot(0.5 * (red[0, 0] - red[1, 1]), red[0, 1])
    else:
        red_min = np.linalg.eigvalsh(red)[0]
    # Row-sum bound on the spectral norm; only fall back to the exact
    # eigenvalues when the cheap bound cannot certify norm <= kappa2_B.
    norm = np.abs(B_bar).sum(axis=0).max()
    if norm > k2:
        w = np.linalg.eigvalsh(B_bar)
        norm = max(-w[0], w[-1])
    tol = 1e-12 * max(1.0, norm)
    if red_min >= k1 - tol and norm <= k2 + tol:
        return B_bar, False

    shift = max(0.0, k1 + bounds.margin - red_min)
    B = B_bar + shift * np.eye(B_bar.shape[0]) if shift > 0.0 else B_bar
    w, V = np.linalg.eigh(B)
    if max(-w[0], w[-1]) > k2:
        B = _eig_clamp(w, V, k2)
        if np.linalg.eigvalsh(Z.T @ B @ Z)[0] < k1:
            # Guaranteed fallback: curvature kappa1_B on the null space,
            # delta large enough to dominate any row-space deficit.
            gamma_A = np.linalg.eigvalsh(G_tilde @ G_tilde.T)[0]
            delta = 3.5 * k1 / gamma_A
            B = k1 * np.eye(B_bar.shape[0]) + delta * (G_tilde.T @ G_tilde)
            w, V = np.linalg.eigh(B)
            if w[-1] > k2:
                B = _eig_clamp(w, V, k2)
    return B, True


def regularize_hessian(B_bar, G_tilde, bounds=DEFAULT_BOUNDS):
    """Make B_bar positive definite on the null space of G_tilde.

    First an identity shift lifts the reduced spectrum above kappa1_B,
    then eigenvalues beyond kappa2_B in absolute value are clipped.  If
    clipping destroys the reduced lower bound (it rarely can), the
    estimate is discarded for kappa1_B * I + delta * G~' G~, whose null
    space curvature is exactly kappa1_B by construction.
    """
    B_bar = np.asarray(B_bar, dtype=float)
    if B_bar.ndim != 2 or B_bar.shape[0] != B_bar.shape[1]:
        raise ValidationError(f"Hessian must be square, got shape {B_bar.shape}")
    Z = null_space_basis(G_tilde)
    B_tilde, active = _hessian_with_basis(B_bar, G_tilde, Z, bounds)
    if not active:
        return B_bar, np.zeros_like(B_bar), False
    return B_tilde, B_tilde - B_bar, True
