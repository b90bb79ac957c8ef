"""Command-line interface: benchmark grids, single runs, diagnostics.

Exit codes: 0 on success, 2 on configuration errors (bad names, invalid
values, missing capabilities), 3 when a benchmark experiment produced no
successful run at all.
"""

import sys

import click
import numpy as np

from .bench import ExperimentConfig, run_experiment
from .diagnostics import bias_slope_fit, detect_stabilization, \
    estimator_error_trace
from .exceptions import CapabilityError, ValidationError
from .problems import NoiseModel
from .solver import METHODS, SolverConfig, run
from .sqp import SqpParameters
from .suite import SUITE_ORDER, benchmark_suite, get_problem

_ALPHA_MODES = click.Choice(["lower", "upper", "random"])


def _csv_list(value):
    return tuple(part.strip() for part in value.split(",") if part.strip())


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(2)


@click.group()
def main():
    """Derivative-free stochastic SQP benchmark and diagnostic suite."""


@main.command("list-problems")
def list_problems():
    """Print the benchmark problem registry."""
    for prob in benchmark_suite():
        click.echo(f"{prob.name:10s} d={prob.d} m={prob.m}  {prob.description}")


@main.command()
@click.option("--problems", default="all",
              help="Comma-separated problem names, or 'all'.")
@click.option("--methods", default=",".join(METHODS),
              help=f"Comma-separated subset of {{{', '.join(METHODS)}}}.")
@click.option("--sigma2", default="1e-4,1e-2,1e-1,1",
              help="Comma-separated noise variances.")
@click.option("--runs", default=50, show_default=True,
              help="Replications per cell.")
@click.option("--iters", default=100_000, show_default=True,
              help="Iterations per run.")
@click.option("--seed", default=0, show_default=True,
              help="Base seed; run r uses seed + r.")
@click.option("--phi", default=0.05, show_default=True,
              help="CI miscoverage level (0.05 gives 95% intervals).")
@click.option("--alpha-mode", default="upper", type=_ALPHA_MODES,
              show_default=True, help="Stepsize selection within the "
              "adaptive interval.")
@click.option("--out", default="./results", show_default=True,
              type=click.Path(), help="Output directory.")
@click.option("--workers", default=1, show_default=True,
              help="Thread parallelism (capped by DFSSQP_THREADS).")
@click.option("--fast", is_flag=True,
              help="CI profile: 1e4 iterations, 20 runs per cell.")
def bench(problems, methods, sigma2, runs, iters, seed, phi, alpha_mode,
          out, workers, fast):
    """Run a Monte-Carlo benchmark grid and write summary artifacts."""
    if fast:
        iters, runs = 10_000, 20
    try:
        sig = tuple(float(s) for s in _csv_list(sigma2))
    except ValueError as exc:
        _fail(f"bad sigma2 list: {exc}")
    try:
        cfg = ExperimentConfig(
            problems=_csv_list(problems), methods=_csv_list(methods),
            sigma2=sig, runs=runs, max_iters=iters, base_seed=seed, phi=phi,
            out=out, workers=workers, alpha_mode=alpha_mode)
        report = run_experiment(cfg)
    except (ValidationError, CapabilityError) as exc:
        _fail(exc)
    for cell in report.cells:
        err = "/" if cell.err_mean is None else f"{cell.err_mean:.3e}"
        cov = "/" if cell.cov is None else f"{100.0 * cell.cov:.1f}%"
        click.echo(f"{cell.problem:10s} {cell.method:10s} "
                   f"s2={cell.sigma2:<8g} err={err:>10s} cov={cov:>7s} "
                   f"failures={cell.failures}/{cell.runs}")
    click.echo(f"artifacts written to {out}")
    if report.all_failed:
        click.echo("error: every run failed", err=True)
        sys.exit(3)


@main.command()
@click.option("--problem", required=True, help="Benchmark problem name.")
@click.option("--method", default="df-second", type=click.Choice(METHODS),
              show_default=True)
@click.option("--sigma2", default=1e-2, show_default=True,
              help="Noise variance.")
@click.option("--iters", default=100_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--phi", default=0.05, show_default=True,
              help="CI miscoverage level.")
@click.option("--alpha-mode", default="upper", type=_ALPHA_MODES,
              show_default=True)
def solve(problem, method, sigma2, iters, seed, phi, alpha_mode):
    """Run a single trajectory and print the inference snapshot."""
    try:
        prob = get_problem(problem)
        cfg = SolverConfig(method=method, max_iters=iters, seed=seed,
                           noise=NoiseModel(sigma2=sigma2),
                           params=SqpParameters(stepsize_mode=alpha_mode))
        res = run(prob, cfg)
    except (ValidationError, CapabilityError) as exc:
        _fail(exc)
    click.echo(f"{prob.name}: {method}, sigma2={sigma2:g}, "
               f"{res.iterations} iterations, status={res.status}")
    if res.abort_reason:
        click.echo(f"abort: {res.abort_reason}")
    with np.printoptions(precision=6, suppress=True):
        click.echo(f"x      = {res.x}")
        click.echo(f"lambda = {res.lam}")
    if res.history:
        click.echo(f"kkt residual = {res.history[-1].kkt_residual:.3e}")
    if prob.x_star is not None:
        click.echo(f"primal error = {np.linalg.norm(res.x - prob.x_star):.3e}")
    snap = res.inference
    if snap is None or snap.omega is None:
        click.echo("no inference snapshot available")
        return
    level = 100.0 * (1.0 - phi)
    click.echo(f"{level:g}% confidence intervals "
               f"(omega={snap.omega:g}, stable={snap.stable}):")
    ivals = snap.primal_intervals(phi)
    for i, (lo, hi) in enumerate(ivals):
        click.echo(f"  x[{i}] in [{lo: .6f}, {hi: .6f}]")


@main.command()
@click.option("--probe", required=True,
              type=click.Choice(["bias-slope", "estimator-trace",
                                 "stabilization"]))
@click.option("--problem", default="MARATOS", show_default=True)
@click.option("--method", default="df-second", type=click.Choice(METHODS),
              show_default=True)
@click.option("--iters", default=10_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sigma2", default=0.0, show_default=True)
@click.option("--samples", default=100_000, show_default=True,
              help="Monte-Carlo samples for the bias-slope probe.")
def diagnose(probe, problem, method, iters, seed, sigma2, samples):
    """Estimator and merit-parameter probes on a benchmark problem."""
    try:
        if probe == "bias-slope":
            fit = bias_slope_fit(lambda x: x[..., 0] ** 3, np.array([3.0]),
                                 np.array([1.0]), [0.2, 0.1, 0.05],
                                 samples=samples, seed=seed)
            click.echo("gradient bias on f(x) = x^3 at x = 1:")
            for b, n in zip(fit.b_grid, fit.bias_norms):
                click.echo(f"  b={b:<6g} ||bias||={n:.6e}")
            click.echo(f"fitted slope = {fit.slope:.4f} (expected 2: "
                       "central differences are second order)")
            return
        prob = get_problem(problem)
        cfg = SolverConfig(
            method=method, max_iters=iters, seed=seed,
            noise=NoiseModel(sigma2=sigma2),
            record_every=max(1, iters // 20),
            trace_estimators=probe == "estimator-trace",
            frozen_iterate=probe == "estimator-trace")
        res = run(prob, cfg)
        if probe == "estimator-trace":
            click.echo(f"{prob.name}: estimator errors at the frozen start "
                       f"point ({method}, sigma2={sigma2:g})")
            click.echo(f"{'k':>8s} {'grad':>12s} {'jacobian':>12s} "
                       f"{'hessian':>12s}")
            for k, ge, Ge, Be in estimator_error_trace(res):
                click.echo(f"{int(k):8d} {ge:12.4e} {Ge:12.4e} {Be:12.4e}")
        else:
            rep = detect_stabilization(res.history, max_iters=iters)
            click.echo(f"{prob.name}: tau={rep.tau_final:g} "
                       f"(last change k={rep.tau_last_change}), "
                       f"nu={rep.nu_final:g} "
                       f"(last change k={rep.nu_last_change})")
            click.echo("stabilized in the first half: "
                       f"{'yes' if rep.stabilized else 'no'}")
    except (ValidationError, CapabilityError) as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
