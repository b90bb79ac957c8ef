"""Monte-Carlo benchmark harness over the problem suite.

Replicates solver runs across a (problem, method, noise level) grid,
aggregates final-iterate metrics per cell, and writes machine-readable
artifacts: a fixed-format ``summary.csv``, per-run ``runs.jsonl``, and a
``config.json`` echo.  Aggregation is a deterministic reduction keyed by
run index, so serial and thread-parallel executions of the same
configuration produce byte-identical summaries.

Two conventions worth calling out:

* A run fails when it aborts or when its final primal error exceeds 1;
  failed runs are excluded from the error / coverage / length means and
  show up in the failure count instead.  Cells where every run failed
  render as "/" in the CSV.
* ``wall_ms`` is a cost model (per-iteration flop estimate times
  iteration count at 1 ns per flop unit), not a stopwatch reading, so
  that outputs stay reproducible across hosts and thread counts.
"""

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .problems import NoiseModel
from .solver import METHODS, SolverConfig, flop_estimate_model, run
from .sqp import SqpParameters
from .suite import SUITE_ORDER, get_problem

__all__ = [
    "CSV_HEADER",
    "AggregateReport",
    "CellAggregate",
    "ExperimentConfig",
    "coverage_metric",
    "emit_outputs",
    "run_experiment",
]

CSV_HEADER = ("problem", "method", "sigma2", "err_mean", "cov", "len_mean",
              "flops", "wall_ms", "failures")

DEFAULT_SIGMA2 = (1e-4, 1e-2, 1e-1, 1.0)

NS_PER_FLOP = 1.0  # wall-time model: 1 ns per flop unit, reported in ms


@dataclass
class ExperimentConfig:
    """Grid definition plus execution settings for one experiment."""

    problems: tuple = ("all",)
    methods: tuple = tuple(METHODS)
    sigma2: tuple = DEFAULT_SIGMA2
    runs: int = 50
    max_iters: int = 100_000
    base_seed: int = 0
    phi: float = 0.05
    out: str | None = None
    workers: int = 1
    alpha_mode: str = "upper"

    def __post_init__(self):
        self.problems = tuple(self.problems)
        self.methods = tuple(self.methods)
        self.sigma2 = tuple(float(s) for s in self.sigma2)
        if self.runs < 1:
            raise ValidationError(f"runs must be >= 1, got {self.runs}")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if any(s < 0 for s in self.sigma2) or not self.sigma2:
            raise ValidationError("sigma2 values must be >= 0 and non-empty")
        if not 0.0 < self.phi < 1.0:
            raise ValidationError(f"phi must lie in (0, 1), got {self.phi}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        for mth in self.methods:
            if mth not in METHODS:
                raise ValidationError(
                    f"unknown method {mth!r}; known methods: {METHODS}")
        if not self.methods:
            raise ValidationError("need at least one method")
        names = []
        for name in self.problems:
            if name.strip().lower() == "all":
                names.extend(SUITE_ORDER)
            else:
                names.append(get_problem(name).name)
        if not names:
            raise ValidationError("need at least one problem")
        self.problems = tuple(names)

    def resolved_workers(self) -> int:
        cap = os.environ.get("DFSSQP_THREADS")
        if cap is not None:
            try:
                cap = int(cap)
            except ValueError:
                raise ValidationError(
                    f"DFSSQP_THREADS must be an integer, got {cap!r}")
            if cap < 1:
                raise ValidationError("DFSSQP_THREADS must be >= 1")
            return min(self.workers, cap)
        return self.workers


@dataclass
class CellAggregate:
    """Aggregated metrics for one (problem, method, sigma2) cell.

    Metric fields are None when every run in the cell failed; such cells
    render as "/" in the CSV, mirroring the failure convention of the
    result tables this harness reproduces.
    """

    problem: str
    method: str
    sigma2: float
    runs: int
    failures: int
    err_mean: float | None
    err_median: float | None
    kkt_mean: float | None
    kkt_median: float | None
    cov: float | None
    len_mean: float | None
    flops: float
    wall_ms: float | None


@dataclass
class AggregateReport:
    """All cells of one experiment plus the per-run records behind them."""

    config: ExperimentConfig
    cells: list
    run_records: list = field(default_factory=list)

    @property
    def total_failures(self) -> int:
        return sum(cell.failures for cell in self.cells)

    @property
    def all_failed(self) -> bool:
        return all(cell.failures == cell.runs for cell in self.cells)

    def cell(self, problem: str, method: str, sigma2: float) -> CellAggregate:
        for c in self.cells:
            if (c.problem == problem.upper() and c.method == method
                    and c.sigma2 == float(sigma2)):
                return c
        raise ValidationError(
            f"no cell ({problem}, {method}, {sigma2}) in this report")


def coverage_metric(results, x_star, phi: float = 0.05) -> float:
    """Grand mean of per-coordinate CI coverage of x_star over runs.

    Runs without a usable inference snapshot are excluded; nan when no
    run carries one.
    """
    x_star = np.asarray(x_star, dtype=float)
    rates = []
    for res in results:
        snap = res.inference
        if snap is None or snap.omega is None:
            continue
        ivals = snap.primal_intervals(phi)
        covered = (ivals[:, 0] <= x_star) & (x_star <= ivals[:, 1])
        rates.append(float(np.mean(covered)))
    return float(np.mean(rates)) if rates else math.nan


def _single_run(problem_name, method, sigma2, seed, cfg):
    prob = get_problem(problem_name)
    res = run(prob, SolverConfig(
        method=method, max_iters=cfg.max_iters, seed=seed,
        noise=NoiseModel(sigma2=sigma2),
        params=SqpParameters(stepsize_mode=cfg.alpha_mode),
    ))
    rec = {
        "problem": prob.name,
        "method": method,
        "sigma2": sigma2,
        "seed": seed,
        "status": res.status,
        "abort_reason": res.abort_reason,
        "iterations": res.iterations,
        "x": res.x.tolist(),
        "lam": res.lam.tolist(),
        "wall_ms": flop_estimate_model(prob.d, prob.m, method)
        * res.iterations * NS_PER_FLOP * 1e-6,
        "kkt": res.history[-1].kkt_residual if res.history else math.nan,
        "err": None,
        "primal_err": None,
        "covered": None,
        "ci_len": None,
    }
    failed = res.status != "ok"
    if prob.x_star is not None:
        primal_err = float(np.linalg.norm(res.x - prob.x_star))
        rec["primal_err"] = primal_err
        failed = failed or primal_err > 1.0
        if prob.lambda_star is not None:
            rec["err"] = float(math.hypot(
                primal_err, np.linalg.norm(res.lam - prob.lambda_star)))
    snap = res.inference
    if not failed and snap is not None and snap.omega is not None:
        ivals = snap.primal_intervals(cfg.phi)
        rec["ci_len"] = float(np.mean(ivals[:, 1] - ivals[:, 0]))
        if prob.x_star is not None:
            covered = ((ivals[:, 0] <= prob.x_star)
                       & (prob.x_star <= ivals[:, 1]))
            rec["covered"] = float(np.mean(covered))
    rec["failed"] = failed
    return rec


def _aggregate_cell(problem_name, method, sigma2, recs):
    prob = get_problem(problem_name)
    ok = [r for r in recs if not r["failed"]]

    def mean_of(key):
        vals = [r[key] for r in ok if r[key] is not None]
        return float(np.mean(vals)) if vals else None

    def median_of(key):
        vals = [r[key] for r in ok if r[key] is not None]
        return float(np.median(vals)) if vals else None

    return CellAggregate(
        problem=prob.name, method=method, sigma2=sigma2,
        runs=len(recs), failures=len(recs) - len(ok),
        err_mean=mean_of("err"), err_median=median_of("err"),
        kkt_mean=mean_of("kkt"), kkt_median=median_of("kkt"),
        cov=mean_of("covered"), len_mean=mean_of("ci_len"),
        flops=flop_estimate_model(prob.d, prob.m, method),
        wall_ms=mean_of("wall_ms"),
    )


def run_experiment(cfg: ExperimentConfig) -> AggregateReport:
    """Execute the full grid and aggregate; writes artifacts when cfg.out
    is set.  Deterministic given cfg: run seeds are base_seed + run index
    and aggregation order never depends on completion order."""
    cells_spec = [(p, mth, s2) for p in cfg.problems for mth in cfg.methods
                  for s2 in cfg.sigma2]
    tasks = [(p, mth, s2, r) for (p, mth, s2) in cells_spec
             for r in range(cfg.runs)]
    results = {}
    workers = cfg.resolved_workers()
    if workers == 1:
        for p, mth, s2, r in tasks:
            results[(p, mth, s2, r)] = _single_run(p, mth, s2,
                                                   cfg.base_seed + r, cfg)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                key: pool.submit(_single_run, key[0], key[1], key[2],
                                 cfg.base_seed + key[3], cfg)
                for key in tasks
            }
            results = {key: fut.result() for key, fut in futures.items()}

    cells, run_records = [], []
    for p, mth, s2 in cells_spec:
        recs = [results[(p, mth, s2, r)] for r in range(cfg.runs)]
        run_records.extend(recs)
        cells.append(_aggregate_cell(p, mth, s2, recs))
    report = AggregateReport(config=cfg, cells=cells, run_records=run_records)
    if cfg.out is not None:
        emit_outputs(report, cfg.out)
    return report


def _fmt(value) -> str:
    if value is None:
        return "/"
    if isinstance(value, float) and math.isnan(value):
        return "/"
    return f"{value:.6g}"


def emit_outputs(report: AggregateReport, path) -> dict:
    """Write summary.csv, runs.jsonl and config.json under path.

    CSV values carry 6 significant digits; the JSON artifacts keep full
    double precision so final iterates round-trip bit-exactly.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "summary.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for cell in report.cells:
            writer.writerow([
                cell.problem, cell.method, _fmt(cell.sigma2),
                _fmt(cell.err_mean), _fmt(cell.cov), _fmt(cell.len_mean),
                _fmt(cell.flops), _fmt(cell.wall_ms), cell.failures,
            ])
    jsonl_path = out / "runs.jsonl"
    with open(jsonl_path, "w") as fh:
        for rec in report.run_records:
            fh.write(json.dumps(rec) + "\n")
    cfg_path = out / "config.json"
    with open(cfg_path, "w") as fh:
        json.dump(asdict(report.config), fh, indent=2)
        fh.write("\n")
    return {"summary": csv_path, "runs": jsonl_path, "config": cfg_path}
