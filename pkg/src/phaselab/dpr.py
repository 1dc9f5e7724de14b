"""Descending phase-retrieval solvers.

Everything minimizes the squared-magnitudes residual
f_plain(x) = sum_i (y_i - (A x)_i^2)^2, either directly (gradplain) or
through the log-barrier composite (gradbar) that confines iterates to the
open unit ball.  The hybrid alternates the two with sign reshuffles in
between and grows the barrier weight t0 each round, finishing with a plain
polish so the unit-norm solution is reachable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (BarrierDomainError, Instance, InvalidArgumentError,
                   NumericFailureError, RngStream, overlap, success_check)

STEP_BACKTRACKING = "backtracking"
STEP_FIXED = "fixed"

BARRIER_STANDARD = "standard"        # t0 f_plain - log(1 - |x|^2), minimized
BARRIER_PAPER_LITERAL = "paper_literal"  # t0 f_plain + log(1 - |x|^2)

TERM_GRAD_TOL = "grad_tol"
TERM_MAX_ITERS = "max_iters"
TERM_OBJECTIVE_FLOOR = "objective_floor"
TERM_STEP_COLLAPSE = "step_collapse"


@dataclass(frozen=True)
class DprConfig:
    step_rule: str = STEP_BACKTRACKING
    armijo_c: float = 1e-4
    shrink: float = 0.5
    fixed_step: float = 1e-3
    max_iters: int = 5000          # per gradbar phase / standalone default
    plain_iters: int = 10000       # per gradplain phase inside hybrid
    polish_iters: int = 20000      # final plain polish of hybrid
    grad_tol: float = 1e-10        # relative: |grad| <= grad_tol * (1 + f)
    f_floor: float = 1e-22         # early exit once f_plain is numerically zero
    t0_init: float = 10.0
    t0_growth: float = 10.0
    t0_relative: bool = True       # scale t0 by 1/f_plain(start); see notes
    outer_rounds: int = 5
    reshuffle_fraction: float = 0.05
    reshuffle_attempts: int = 10
    barrier_sign: str = BARRIER_STANDARD
    record_every: int = 50         # trajectory stride inside long phases
    scale_start: bool = True       # optimize |s| of s*x0 against f_plain first

    def __post_init__(self):
        if self.step_rule not in (STEP_BACKTRACKING, STEP_FIXED):
            raise InvalidArgumentError(f"unknown step rule {self.step_rule!r}")
        if self.barrier_sign not in (BARRIER_STANDARD, BARRIER_PAPER_LITERAL):
            raise InvalidArgumentError(f"unknown barrier sign {self.barrier_sign!r}")
        if not (0.0 < self.reshuffle_fraction <= 0.2):
            raise InvalidArgumentError("reshuffle_fraction must lie in (0, 0.2]")
        if not (1 <= self.reshuffle_attempts <= 10):
            raise InvalidArgumentError("reshuffle_attempts must lie in [1, 10]")


@dataclass
class PhaseRecord:
    kind: str                      # "gradplain" / "gradbar" / "reshuffle"
    start: int                     # first trajectory row of the phase
    stop: int                      # one past the last row
    phase_objective: list = field(default_factory=list)  # line-search objective
    t0: float | None = None


@dataclass
class RunRecord:
    trajectory: list               # rows (iter, f_plain, |x|, overlap_abs)
    phases: list                   # PhaseRecord per phase
    final_x: np.ndarray | None = None
    success: bool = False
    termination: str = TERM_MAX_ITERS
    total_iters: int = 0
    wall_time: float = 0.0

    def write_trajectory_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,objective,norm,overlap_abs\n")
            for it, obj, nrm, ov in self.trajectory:
                fh.write(f"{it},{obj:.17g},{nrm:.17g},{ov:.17g}\n")


def f_plain_sq(instance: Instance, x: np.ndarray, Ax: np.ndarray | None = None) -> float:
    """sum_i (y_i - (A x)_i^2)^2"""
    if Ax is None:
        Ax = instance.A @ x
    d = instance.y - Ax * Ax
    return float(d @ d)


def grad_f_plain_sq(instance: Instance, x: np.ndarray,
                    Ax: np.ndarray | None = None) -> np.ndarray:
    if Ax is None:
        Ax = instance.A @ x
    return 4.0 * (instance.A.T @ ((Ax * Ax - instance.y) * Ax))


def f_bar(instance: Instance, x: np.ndarray, t0: float,
          barrier_sign: str = BARRIER_STANDARD, Ax: np.ndarray | None = None) -> float:
    """Barrier composite.  standard: t0 f_plain - log(1 - |x|^2); the
    paper_literal mode flips the log sign (attracts to the boundary when
    minimized; kept for fidelity experiments)."""
    nx2 = float(x @ x)
    if nx2 >= 1.0:
        raise BarrierDomainError(f"barrier requires |x| < 1, got |x|^2 = {nx2}")
    log_term = np.log1p(-nx2)
    fp = f_plain_sq(instance, x, Ax)
    if barrier_sign == BARRIER_STANDARD:
        return t0 * fp - log_term
    return t0 * fp + log_term


def grad_f_bar(instance: Instance, x: np.ndarray, t0: float,
               barrier_sign: str = BARRIER_STANDARD,
               Ax: np.ndarray | None = None) -> np.ndarray:
    nx2 = float(x @ x)
    if nx2 >= 1.0:
        raise BarrierDomainError(f"barrier requires |x| < 1, got |x|^2 = {nx2}")
    g = t0 * grad_f_plain_sq(instance, x, Ax)
    if barrier_sign == BARRIER_STANDARD:
        return g + 2.0 * x / (1.0 - nx2)
    return g - 2.0 * x / (1.0 - nx2)


def scale_to_objective(instance: Instance, x: np.ndarray) -> np.ndarray:
    """Rescale x to argmin_s f_plain(s x); closed form from the quartic in s."""
    Ax = instance.A @ x
    a2 = Ax * Ax
    c2 = float(a2 @ a2)
    if c2 == 0.0:
        return x.copy()
    s2 = max(float(instance.y @ a2) / c2, 0.0)
    return np.sqrt(s2) * x


def _descend(instance, x0, cfg, objective, gradient, feasible, max_iters, record):
    """Shared backtracking/fixed-step descent loop.

    `objective`/`gradient` close over the phase parameters; `feasible`
    rejects trial points outside the phase domain.  Returns the final
    iterate, its objective, and the termination reason.
    """
    x = x0.copy()
    Ax = instance.A @ x
    f = objective(x, Ax)
    record(0, x, Ax, f)
    step = cfg.fixed_step if cfg.step_rule == STEP_FIXED else 1.0
    termination = TERM_MAX_ITERS
    it = 0
    for it in range(1, max_iters + 1):
        g = gradient(x, Ax)
        gn2 = float(g @ g)
        if np.sqrt(gn2) <= cfg.grad_tol * (1.0 + abs(f)):
            termination = TERM_GRAD_TOL
            break
        if f_plain_sq(instance, x, Ax) < cfg.f_floor:
            termination = TERM_OBJECTIVE_FLOOR
            break
        if cfg.step_rule == STEP_FIXED:
            xn = x - step * g
            if not feasible(xn):
                termination = TERM_STEP_COLLAPSE
                break
            Axn = instance.A @ xn
            fn = objective(xn, Axn)
            if not np.isfinite(fn):
                raise NumericFailureError("objective became non-finite")
        else:
            step = min(step * 2.0, 1e12)
            while True:
                xn = x - step * g
                if feasible(xn):
                    Axn = instance.A @ xn
                    fn = objective(xn, Axn)
                    if np.isfinite(fn) and fn <= f - cfg.armijo_c * step * gn2:
                        break
                step *= cfg.shrink
                if step <= 1e-20:
                    break
            if step <= 1e-20:
                termination = TERM_STEP_COLLAPSE
                break
        x, Ax, f = xn, Axn, fn
        record(it, x, Ax, f)
    return x, f, termination, it


def _make_recorder(instance, record, trajectory, phase, stride):
    def rec(it, x, Ax, f_phase):
        phase.phase_objective.append(f_phase)
        if it % stride == 0 or it == 0:
            fp = f_plain_sq(instance, x, Ax)
            ov = abs(overlap(x, instance.x_true)) if np.linalg.norm(x) > 0 else 0.0
            trajectory.append((len(trajectory), fp, float(np.linalg.norm(x)), ov))
    return rec if record else (lambda *a: phase.phase_objective.append(a[3]))


def gradplain(instance: Instance, x0: np.ndarray, cfg: DprConfig | None = None,
              rng: RngStream | None = None, max_iters: int | None = None,
              record: bool = True) -> RunRecord:
    """Gradient descent on f_plain with the configured step rule."""
    cfg = cfg or DprConfig()
    t_start = time.perf_counter()
    trajectory: list = []
    phase = PhaseRecord("gradplain", 0, 0)
    rec = _make_recorder(instance, record, trajectory, phase, cfg.record_every)
    x, f, termination, iters = _descend(
        instance, np.asarray(x0, dtype=float), cfg,
        objective=lambda x, Ax: f_plain_sq(instance, x, Ax),
        gradient=lambda x, Ax: grad_f_plain_sq(instance, x, Ax),
        feasible=lambda x: True,
        max_iters=cfg.max_iters if max_iters is None else max_iters,
        record=rec)
    phase.stop = len(trajectory)
    ok = success_check(x, instance.x_true)
    return RunRecord(trajectory=trajectory, phases=[phase], final_x=x,
                     success=ok, termination=termination, total_iters=iters,
                     wall_time=time.perf_counter() - t_start)


def gradbar(instance: Instance, x0: np.ndarray, cfg: DprConfig | None = None,
            rng: RngStream | None = None, t0: float | None = None,
            max_iters: int | None = None, record: bool = True) -> RunRecord:
    """Gradient descent on the barrier composite with t0 fixed.

    Starting points on or outside the unit sphere are rescaled to norm 0.99
    (recorded in the trajectory); backtracking rejects steps that leave the
    open unit ball.
    """
    cfg = cfg or DprConfig()
    t_start = time.perf_counter()
    t0 = cfg.t0_init if t0 is None else t0
    x0 = np.asarray(x0, dtype=float)
    nx = np.linalg.norm(x0)
    if nx >= 1.0:
        x0 = x0 * (0.99 / nx)
    trajectory: list = []
    phase = PhaseRecord("gradbar", 0, 0, t0=t0)
    rec = _make_recorder(instance, record, trajectory, phase, cfg.record_every)
    x, f, termination, iters = _descend(
        instance, x0, cfg,
        objective=lambda x, Ax: f_bar(instance, x, t0, cfg.barrier_sign, Ax),
        gradient=lambda x, Ax: grad_f_bar(instance, x, t0, cfg.barrier_sign, Ax),
        feasible=lambda x: float(x @ x) < 1.0,
        max_iters=cfg.max_iters if max_iters is None else max_iters,
        record=rec)
    phase.stop = len(trajectory)
    ok = success_check(x, instance.x_true)
    return RunRecord(trajectory=trajectory, phases=[phase], final_x=x,
                     success=ok, termination=termination, total_iters=iters,
                     wall_time=time.perf_counter() - t_start)


def reshuffle(instance: Instance, x: np.ndarray, cfg: DprConfig | None = None,
              rng: RngStream | None = None) -> np.ndarray:
    """Sign-flip perturbation: up to reshuffle_attempts times, flip a random
    subset of round(fraction*n) coordinates and keep the flip iff f_plain
    decreases.  Never increases the objective."""
    cfg = cfg or DprConfig()
    gen = (rng or RngStream(0)).generator()
    k = int(round(cfg.reshuffle_fraction * instance.n))
    if k == 0:
        return np.asarray(x, dtype=float).copy()
    best = np.asarray(x, dtype=float).copy()
    fbest = f_plain_sq(instance, best)
    for _ in range(cfg.reshuffle_attempts):
        idx = gen.choice(instance.n, size=k, replace=False)
        trial = best.copy()
        trial[idx] = -trial[idx]
        ft = f_plain_sq(instance, trial)
        if ft < fbest:
            best, fbest = trial, ft
    return best


def hybrid(instance: Instance, x0: np.ndarray, cfg: DprConfig | None = None,
           rng: RngStream | None = None) -> RunRecord:
    """Alternation  a <- reshuffle(gradplain(reshuffle(gradbar(a))))  with a
    growing barrier weight, then a final plain polish.

    t0 is scaled by 1/f_plain(start) when cfg.t0_relative is set: the raw
    residual at n=300 scales like the number of measurements, which would
    otherwise make the barrier term negligible from the first round.
    """
    cfg = cfg or DprConfig()
    rng = rng or RngStream(0)
    t_start = time.perf_counter()
    a = np.asarray(x0, dtype=float)
    if cfg.scale_start:
        a = scale_to_objective(instance, a)
    t0 = cfg.t0_init
    if cfg.t0_relative:
        t0 /= max(f_plain_sq(instance, a), 1e-12)
    trajectory: list = []
    phases: list = []
    total = 0
    termination = TERM_MAX_ITERS

    def absorb(rr: RunRecord):
        nonlocal total
        offset = len(trajectory)
        for row in rr.trajectory:
            trajectory.append((len(trajectory), row[1], row[2], row[3]))
        for ph in rr.phases:
            phases.append(PhaseRecord(ph.kind, ph.start + offset, ph.stop + offset,
                                      ph.phase_objective, ph.t0))
        total += rr.total_iters
        return rr.final_x, rr.termination

    for rnd in range(cfg.outer_rounds):
        sub = rng.substream(rnd)
        rr = gradbar(instance, a, cfg, sub.substream(0), t0=t0)
        a, termination = absorb(rr)
        a = reshuffle(instance, a, cfg, sub.substream(1))
        rr = gradplain(instance, a, cfg, sub.substream(2), max_iters=cfg.plain_iters)
        a, termination = absorb(rr)
        if f_plain_sq(instance, a) < cfg.f_floor:
            break
        a = reshuffle(instance, a, cfg, sub.substream(3))
        t0 *= cfg.t0_growth
    rr = gradplain(instance, a, cfg, rng.substream(cfg.outer_rounds),
                   max_iters=cfg.polish_iters)
    a, termination = absorb(rr)
    ok = success_check(a, instance.x_true) or \
        abs(overlap(a, instance.x_true)) >= 1.0 - 1e-6
    return RunRecord(trajectory=trajectory, phases=phases, final_x=a,
                     success=ok, termination=termination, total_iters=total,
                     wall_time=time.perf_counter() - t_start)
