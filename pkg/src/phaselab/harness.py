"""Experiment runner: single trials, Monte-Carlo phase-transition sweeps,
and theory-vs-initializer comparison tables.

A trial = generate instance, build an initializer, run a solver, score the
recovery.  Per-trial randomness derives from (base_seed, alpha-key,
trial-index) so regridding or reordering never perturbs existing trials,
and parallel execution is bit-identical to serial.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rdt
from .core import (Instance, InvalidArgumentError, NumericFailureError,
                   RngStream, generate_instance, overlap, success_check)
from .dpr import DprConfig, gradplain, hybrid, scale_to_objective
from .quadrature import QuadratureSpec
from .rdt import OptimizerSpec, manifold_curve, write_curve_sidecar, write_manifold_csv
from .spectral import (PreprocessSpec, PREPROCESS_IDENTITY, PREPROCESS_OPTIMAL,
                       optspin_init, overlap_curve, solve_gamma_hat,
                       write_overlap_curve_csv)

SOLVER_GRADPLAIN = "gradplain"
SOLVER_HYBRID = "hybrid"

INIT_OPTSPIN = "optspin"
INIT_IDENTITY = "identity_spectral"
INIT_RANDOM = "random_unit"


@dataclass(frozen=True)
class SweepConfig:
    n: int = 300
    alpha_grid: tuple = tuple(round(1.0 + 0.1 * k, 10) for k in range(13))
    trials_per_alpha: int = 20
    solver: str = SOLVER_HYBRID
    initializer: str = INIT_OPTSPIN
    eps_success: float = 1e-5
    base_seed: int = 1
    parallelism: int = 1
    dpr: DprConfig = field(default_factory=DprConfig)
    clip_low: float = -50.0
    # eigensolver stopping: absolute residual = spectral_tol_scale * m
    spectral_tol_scale: float = 1e-6
    spectral_max_iter: int = 60000
    gradplain_iters: int = 20000   # iteration budget when solver=gradplain

    def __post_init__(self):
        if self.trials_per_alpha < 1:
            raise InvalidArgumentError("trials_per_alpha must be >= 1")
        grid = tuple(float(a) for a in self.alpha_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidArgumentError("alpha_grid must be strictly increasing")
        if self.solver not in (SOLVER_GRADPLAIN, SOLVER_HYBRID):
            raise InvalidArgumentError(f"unknown solver {self.solver!r}")
        if self.initializer not in (INIT_OPTSPIN, INIT_IDENTITY, INIT_RANDOM):
            raise InvalidArgumentError(f"unknown initializer {self.initializer!r}")


@dataclass(frozen=True)
class TrialResult:
    alpha: float
    trial_index: int
    init_overlap: float
    final_overlap: float
    success: bool
    iters: int
    wall_time: float
    error: str | None = None


@dataclass(frozen=True)
class AlphaRow:
    alpha: float
    successes: int
    trials: int
    success_rate: float
    mean_init_overlap: float
    mean_final_overlap: float
    failed_trials: int           # component failures, not unsuccessful recoveries


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list                   # AlphaRow per grid point
    trials: list                 # all TrialResult, ordered (alpha, trial)
    estimated_transition: float | None


def _alpha_key(alpha: float) -> int:
    # stable across regridding: keyed by the value, not the grid position
    return int(round(alpha * 10000))


def build_initializer(instance: Instance, initializer: str, cfg: SweepConfig,
                      stream: RngStream):
    """Returns (x0, init_overlap). Spectral initializers are scaled to the
    objective-optimal multiple before the solver runs."""
    if initializer == INIT_RANDOM:
        gen = stream.generator()
        x0 = gen.standard_normal(instance.n)
        x0 /= np.linalg.norm(x0)
        return x0, abs(overlap(x0, instance.x_true))
    kind = PREPROCESS_OPTIMAL if initializer == INIT_OPTSPIN else PREPROCESS_IDENTITY
    spec = PreprocessSpec(kind=kind, clip_low=cfg.clip_low)
    res = optspin_init(instance, spec, tol=cfg.spectral_tol_scale * instance.m,
                       max_iter=cfg.spectral_max_iter, rng=stream)
    return res.x_spec, res.overlap_abs


def run_trial(n: int, alpha: float, solver: str, initializer: str,
              cfg: SweepConfig, stream: RngStream, trial_index: int = 0) -> TrialResult:
    """One seeded trial.  Component failures are recorded, not raised."""
    t_start = time.perf_counter()
    try:
        instance = generate_instance(n, alpha, stream.substream(0))
        x0, init_ov = build_initializer(instance, initializer, cfg, stream.substream(1))
        if solver == SOLVER_HYBRID:
            record = hybrid(instance, x0, cfg.dpr, stream.substream(2))
        else:
            record = gradplain(instance, scale_to_objective(instance, x0),
                               cfg.dpr, stream.substream(2),
                               max_iters=cfg.gradplain_iters, record=False)
        final_ov = abs(overlap(record.final_x, instance.x_true))
        ok = success_check(record.final_x, instance.x_true, cfg.eps_success) \
            or final_ov >= 1.0 - 1e-6
        return TrialResult(alpha=alpha, trial_index=trial_index,
                           init_overlap=init_ov, final_overlap=final_ov,
                           success=ok, iters=record.total_iters,
                           wall_time=time.perf_counter() - t_start)
    except (InvalidArgumentError, NumericFailureError) as exc:
        return TrialResult(alpha=alpha, trial_index=trial_index,
                           init_overlap=float("nan"), final_overlap=float("nan"),
                           success=False, iters=0,
                           wall_time=time.perf_counter() - t_start, error=str(exc))


def _trial_task(args):
    cfg, alpha, trial_ix = args
    stream = RngStream(cfg.base_seed).substream(_alpha_key(alpha), trial_ix)
    return run_trial(cfg.n, alpha, cfg.solver, cfg.initializer, cfg, stream, trial_ix)


def estimate_transition(alphas, rates) -> float | None:
    """Linear interpolation of the first upward 50%-success crossing."""
    for (a0, r0), (a1, r1) in zip(zip(alphas, rates), list(zip(alphas, rates))[1:]):
        if r0 < 0.5 <= r1:
            return a0 + (0.5 - r0) * (a1 - a0) / (r1 - r0)
    return None


def sweep_phase_transition(cfg: SweepConfig) -> SweepResult:
    """Run the full grid; aggregation is a deterministic fold over the
    ordered trial list regardless of executor scheduling."""
    tasks = [(cfg, float(a), t)
             for a in cfg.alpha_grid for t in range(cfg.trials_per_alpha)]
    if cfg.parallelism > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            trials = list(pool.map(_trial_task, tasks, chunksize=1))
    else:
        trials = [_trial_task(t) for t in tasks]
    rows = []
    for i, a in enumerate(cfg.alpha_grid):
        chunk = trials[i * cfg.trials_per_alpha:(i + 1) * cfg.trials_per_alpha]
        clean = [t for t in chunk if t.error is None]
        succ = sum(t.success for t in clean)
        rows.append(AlphaRow(
            alpha=float(a), successes=succ, trials=len(chunk),
            success_rate=succ / len(chunk),
            mean_init_overlap=float(np.mean([t.init_overlap for t in clean])) if clean else float("nan"),
            mean_final_overlap=float(np.mean([t.final_overlap for t in clean])) if clean else float("nan"),
            failed_trials=len(chunk) - len(clean)))
    transition = estimate_transition([r.alpha for r in rows],
                                     [r.success_rate for r in rows])
    return SweepResult(config=cfg, rows=rows, trials=trials,
                       estimated_transition=transition)


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("alpha,successes,trials,success_rate,mean_init_overlap,"
                 "mean_final_overlap,failed_trials\n")
        for r in result.rows:
            fh.write(f"{r.alpha:.17g},{r.successes},{r.trials},{r.success_rate:.17g},"
                     f"{r.mean_init_overlap:.17g},{r.mean_final_overlap:.17g},"
                     f"{r.failed_trials}\n")


def write_trials_csv(result: SweepResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("alpha,trial,init_overlap,final_overlap,success,iters,wall_time,error\n")
        for t in result.trials:
            err = (t.error or "").replace(",", ";").replace("\n", " ")
            fh.write(f"{t.alpha:.17g},{t.trial_index},{t.init_overlap:.17g},"
                     f"{t.final_overlap:.17g},{int(t.success)},{t.iters},"
                     f"{t.wall_time:.6g},{err}\n")


def write_sweep_summary(result: SweepResult, path) -> None:
    with open(path, "w") as fh:
        c = result.config
        fh.write(f"solver = {c.solver}\ninitializer = {c.initializer}\n"
                 f"n = {c.n}\ntrials_per_alpha = {c.trials_per_alpha}\n"
                 f"base_seed = {c.base_seed}\n")
        if result.estimated_transition is None:
            fh.write("estimated_transition = none\n")
        else:
            fh.write(f"estimated_transition = {result.estimated_transition:.6g}\n")
        for r in result.rows:
            fh.write(f"alpha {r.alpha:.4g}: {r.successes}/{r.trials} "
                     f"({r.success_rate:.2f}), init overlap {r.mean_init_overlap:.4f}, "
                     f"final overlap {r.mean_final_overlap:.4f}\n")


def emit_theory_tables(alpha_list, c, x_grid, variants, levels, out_dir,
                       quad: QuadratureSpec | None = None,
                       opt: OptimizerSpec | None = None,
                       flat_tol: float = 1e-3,
                       cross_term: str = rdt.CROSS_LITERAL) -> dict:
    """Overlap curve, manifold curves, and the superposition report.

    For each alpha the report records the optimal-initializer overlap and
    whether it lands inside the flat region annotated on each lifted curve.
    Returns {path-name: Path} of everything written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    quad = quad or QuadratureSpec()
    opt = opt or OptimizerSpec()
    written = {}

    points = overlap_curve(sorted(set(float(a) for a in alpha_list)))
    p = out_dir / "overlap_curve.csv"
    write_overlap_curve_csv(points, p)
    written["overlap_curve"] = p
    by_alpha = {pt.alpha: pt for pt in points}

    report_lines = []
    for a in alpha_list:
        a = float(a)
        xhat = by_alpha[a].overlap_hat
        for variant in variants:
            for level in levels:
                table = manifold_curve(a, c, x_grid, variant, level, quad, opt,
                                       flat_tol=flat_tol, cross_term=cross_term)
                stem = f"rdt_curve_alpha{a:g}_{variant}_{level}"
                write_manifold_csv(table, out_dir / f"{stem}.csv")
                write_curve_sidecar(table, out_dir / f"{stem}.meta.txt")
                written[stem] = out_dir / f"{stem}.csv"
                if level == rdt.LEVEL_LIFTED:
                    edge = table.flat_edge
                    verdict = "inside" if (edge is not None and xhat <= edge) \
                        else "outside"
                    report_lines.append(
                        f"alpha={a:g} variant={variant} optspin_overlap={xhat:.6f} "
                        f"flat_edge={'none' if edge is None else f'{edge:g}'} "
                        f"verdict={verdict}")
    p = out_dir / "superposition.txt"
    with open(p, "w") as fh:
        fh.write("\n".join(report_lines) + ("\n" if report_lines else ""))
    written["superposition"] = p
    return written
