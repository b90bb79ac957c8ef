"""Post-run probes for estimator quality and merit-parameter behavior.

Three read-only utilities over finished runs or standalone test functions:

* ``estimator_error_trace`` extracts the recorded gradient / Jacobian /
  Hessian estimation errors from a run that was executed with
  ``trace_estimators=True``, as evidence that the running averages track
  the exact derivatives along the trajectory.
* ``detect_stabilization`` reports when the merit parameter tau and the
  ratio parameter nu last changed.  Both only ever decrease and are
  expected to settle after finitely many iterations; a run counts as
  stabilized when neither moved during its second half.
* ``bias_slope_fit`` measures the systematic (noise-free) error of the
  simultaneous-perturbation estimators as a function of the perturbation
  radius b and fits a log-log slope.  Central differencing makes the
  gradient bias quadratic in b, which the fit recovers; quadratic
  objectives have no bias at all and are flagged instead of fitted.

None of these touch solver state: running them, or enabling the trace
flag that feeds the first one, never changes an iterate sequence.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import CapabilityError, ValidationError
from .spsa import DirectionDistribution

Array = np.ndarray

__all__ = [
    "BiasSlopeFit",
    "StabilizationReport",
    "bias_slope_fit",
    "detect_stabilization",
    "estimator_error_trace",
]


# -- estimator error traces -------------------------------------------------


def estimator_error_trace(result) -> Array:
    """Per-record estimator errors as an array of rows (k, g, G, B).

    The columns are the iteration index and the norms ||g_bar - grad f||,
    ||G_bar - G|| and ||B_bar - hessian of the Lagrangian||, all against
    exact derivatives at the recorded iterate.  Requires the run to have
    been executed with ``trace_estimators=True`` on a problem that
    provides exact derivatives; otherwise the history carries no error
    columns and a CapabilityError is raised.
    """
    rows = []
    for rec in result.history:
        if rec.g_err is None or rec.G_err is None or rec.B_err is None:
            raise CapabilityError(
                "history carries no estimator traces; rerun with "
                "trace_estimators=True on a problem with exact derivatives")
        rows.append((rec.k, rec.g_err, rec.G_err, rec.B_err))
    return np.array(rows, dtype=float).reshape(len(rows), 4)


# -- merit parameter stabilization -------------------------------------------


@dataclass(frozen=True)
class StabilizationReport:
    """When tau and nu last moved, and whether that was early enough."""

    tau_final: float
    nu_final: float
    tau_last_change: int
    nu_last_change: int
    stabilized: bool

    @property
    def last_change(self) -> int:
        return max(self.tau_last_change, self.nu_last_change)


def detect_stabilization(history, max_iters: int | None = None):
    """Scan a recorded history for the last tau / nu change.

    A parameter "changes at k" when record k carries a different value
    than the preceding record; constant histories report 0.  The run is
    stabilized when the later of the two change points lies in the first
    half of the run.  ``max_iters`` defaults to the final recorded
    iteration + 1 (the final iteration is always recorded).
    """
    if not history:
        raise ValidationError("cannot assess stabilization of an empty history")
    if max_iters is None:
        max_iters = history[-1].k + 1
    tau_last = nu_last = 0
    prev = history[0]
    for rec in history[1:]:
        if rec.tau != prev.tau:
            tau_last = rec.k
        if rec.nu != prev.nu:
            nu_last = rec.k
        prev = rec
    return StabilizationReport(
        tau_final=history[-1].tau,
        nu_final=history[-1].nu,
        tau_last_change=tau_last,
        nu_last_change=nu_last,
        stabilized=max(tau_last, nu_last) < max_iters / 2,
    )


# -- finite-difference bias order ---------------------------------------------


@dataclass(frozen=True)
class BiasSlopeFit:
    """Least-squares slope of log ||bias|| against log b."""

    b_grid: Array
    bias_norms: Array
    slope: float | None
    exact: bool
    estimator: str


def _rademacher_like(dist: DirectionDistribution, n: int, d: int, rng) -> Array:
    signs = rng.integers(0, 2, size=(n, d)) * 2.0 - 1.0
    if dist.kind == "rademacher":
        return signs
    mags = np.where(rng.integers(0, 2, size=(n, d)) == 1,
                    dist.kappa2, dist.kappa1)
    return signs * mags


def bias_slope_fit(
    f,
    exact,
    x: Array,
    b_grid,
    samples: int = 100_000,
    estimator: str = "gradient",
    b_tilde: float = 0.1,
    direction: DirectionDistribution | None = None,
    seed: int = 0,
    exact_tol: float = 1e-8,
) -> BiasSlopeFit:
    """Monte-Carlo bias of a perturbation estimator across a b grid.

    ``f`` is a noiseless batch-capable objective, ``exact`` the true
    gradient vector (estimator="gradient") or Hessian matrix
    (estimator="hessian") at ``x``.  For each b the estimator mean over
    ``samples`` direction draws is compared against ``exact`` and the
    resulting log bias norms are fitted against log b.  When every bias
    is below ``exact_tol`` the estimator is unbiased on this function
    (quadratics under central differences) and no slope is fitted.
    """
    if estimator not in ("gradient", "hessian"):
        raise ValidationError(f"unknown estimator {estimator!r}")
    b_grid = np.asarray(b_grid, dtype=float)
    if b_grid.ndim != 1 or b_grid.size < 3:
        raise ValidationError("need a grid of at least 3 perturbation radii")
    if np.any(b_grid <= 0) or np.unique(b_grid).size != b_grid.size:
        raise ValidationError("perturbation radii must be positive and distinct")
    if samples < 1:
        raise ValidationError("need at least one sample")
    if estimator == "hessian" and b_tilde <= 0:
        raise ValidationError("b_tilde must be positive")
    direction = direction or DirectionDistribution()
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    exact = np.asarray(exact, dtype=float)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    D = _rademacher_like(direction, samples, d, rng)
    inv_D = 1.0 / D
    if estimator == "hessian":
        Dt = _rademacher_like(direction, samples, d, rng)
        inv_Dt = 1.0 / Dt

    norms = np.empty(b_grid.size)
    for i, b in enumerate(b_grid):
        if estimator == "gradient":
            diff = f(x + b * D) - f(x - b * D)
            g_mean = (diff / (2.0 * b)) @ inv_D / samples
            norms[i] = float(np.linalg.norm(g_mean - exact))
        else:
            f_p = f(x + b * D)
            f_m = f(x - b * D)
            f_ps = f(x + b * D + b_tilde * Dt)
            f_ms = f(x - b * D + b_tilde * Dt)
            u = ((f_ps - f_p) - (f_ms - f_m)) / (2.0 * b * b_tilde)
            A = (u[:, None] * inv_Dt).T @ inv_D / samples
            H_mean = 0.5 * (A + A.T)
            norms[i] = float(np.linalg.norm(H_mean - exact))

    if np.max(norms) <= exact_tol:
        return BiasSlopeFit(b_grid=b_grid, bias_norms=norms, slope=None,
                            exact=True, estimator=estimator)
    slope = float(np.polyfit(np.log(b_grid), np.log(norms), 1)[0])
    return BiasSlopeFit(b_grid=b_grid, bias_norms=norms, slope=slope,
                        exact=False, estimator=estimator)
