"""Derivative-free stochastic SQP with online statistical inference."""

from .bench import (
    CSV_HEADER,
    AggregateReport,
    CellAggregate,
    ExperimentConfig,
    coverage_metric,
    emit_outputs,
    run_experiment,
)
from .debias import (
    EstimatorState,
    ScheduleSet,
    lagrangian_hessian_estimate,
    schedule_eval,
    update_average,
)
from .diagnostics import (
    BiasSlopeFit,
    StabilizationReport,
    bias_slope_fit,
    detect_stabilization,
    estimator_error_trace,
)
from .exceptions import (
    CapabilityError,
    DfssqpError,
    DomainError,
    NumericalError,
    ValidationError,
)
from .inference import (
    CovarianceEstimate,
    InferenceSnapshot,
    build_snapshot,
    confidence_interval,
    dual_ls_estimate,
    kkt_residual,
    omega_scaling,
    plugin_covariance,
    theoretical_covariances,
)
from .problems import (
    EvalCounters,
    NoiseModel,
    OracleSession,
    ProblemInstance,
    noisy_gradient,
    noisy_hessian,
    noisy_value,
)
from .regularization import (
    RegularizationBounds,
    null_space_basis,
    regularize_hessian,
    regularize_jacobian,
)
from .solver import (
    METHODS,
    SOLVER_REGULARIZATION,
    AuditReport,
    IterationRecord,
    RunResult,
    SolverConfig,
    flop_estimate_model,
    oracle_call_audit,
    run,
)
from .spsa import (
    DirectionDistribution,
    oracle_evaluation_plan,
    sample_direction,
    spsa_gradient,
    spsa_hessian,
    spsa_jacobian,
)
from .sqp import (
    KktStep,
    SqpParameters,
    model_reduction,
    select_stepsize,
    solve_kkt,
    update_nu,
    update_tau,
)
from .suite import SUITE_ORDER, benchmark_suite, get_problem

__version__ = "0.1.0"

__all__ = [
    "CapabilityError",
    "DfssqpError",
    "DomainError",
    "NumericalError",
    "ValidationError",
    "EvalCounters",
    "NoiseModel",
    "OracleSession",
    "ProblemInstance",
    "noisy_gradient",
    "noisy_hessian",
    "noisy_value",
    "SUITE_ORDER",
    "benchmark_suite",
    "get_problem",
    "DirectionDistribution",
    "oracle_evaluation_plan",
    "sample_direction",
    "spsa_gradient",
    "spsa_hessian",
    "spsa_jacobian",
    "EstimatorState",
    "ScheduleSet",
    "lagrangian_hessian_estimate",
    "schedule_eval",
    "update_average",
    "RegularizationBounds",
    "null_space_basis",
    "regularize_hessian",
    "regularize_jacobian",
    "KktStep",
    "SqpParameters",
    "model_reduction",
    "select_stepsize",
    "solve_kkt",
    "update_nu",
    "update_tau",
    "METHODS",
    "SOLVER_REGULARIZATION",
    "AuditReport",
    "IterationRecord",
    "RunResult",
    "SolverConfig",
    "flop_estimate_model",
    "oracle_call_audit",
    "run",
    "CovarianceEstimate",
    "InferenceSnapshot",
    "build_snapshot",
    "confidence_interval",
    "dual_ls_estimate",
    "kkt_residual",
    "omega_scaling",
    "plugin_covariance",
    "theoretical_covariances",
    "BiasSlopeFit",
    "StabilizationReport",
    "bias_slope_fit",
    "detect_stabilization",
    "estimator_error_trace",
    "CSV_HEADER",
    "AggregateReport",
    "CellAggregate",
    "ExperimentConfig",
    "coverage_metric",
    "emit_outputs",
    "run_experiment",
    "__version__",
]
