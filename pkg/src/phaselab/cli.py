"""Command-line interface.

Subcommands: overlap-curve, gamma-solve, rdt-curve, spectral-init, solve,
sweep, compare.  Exit codes: 0 on success, 1 on usage errors, 2 on numeric
failures.  A JSON --config file can override sweep / dpr / quadrature /
optimizer fields; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import dpr, harness, rdt, spectral
from .core import (InvalidArgumentError, NumericFailureError, RngStream,
                   generate_instance, overlap, success_check)
from .quadrature import QuadratureSpec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1 (argparse defaults to 2, which we reserve
    # for numeric failures)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_grid(text: str) -> list[float]:
    """Accepts 'a:b:step' or a comma-separated list."""
    if ":" in text:
        lo, hi, step = (float(t) for t in text.split(":"))
        count = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 12) for i in range(count)]
    return [float(t) for t in text.split(",")]


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _build(cls, section: dict, **overrides):
    known = {f.name for f in dataclasses.fields(cls)}
    bad = set(section) - known
    if bad:
        raise InvalidArgumentError(f"unknown {cls.__name__} fields: {sorted(bad)}")
    merged = {**section, **{k: v for k, v in overrides.items() if v is not None}}
    return cls(**merged)


def _quad_opt(cfg: dict):
    quad = _build(QuadratureSpec, cfg.get("quadrature", {}))
    opt = _build(rdt.OptimizerSpec, cfg.get("optimizer", {}))
    return quad, opt


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=1, help="base RNG seed (u64)")
    p.add_argument("--out", type=str, default=None, help="output path or directory")
    p.add_argument("--config", type=str, default=None,
                   help="JSON config (sweep/dpr/quadrature/optimizer sections)")
    p.add_argument("--parallelism", type=int, default=None,
                   help="max concurrent trials")


def cmd_overlap_curve(args) -> int:
    grid = _parse_grid(args.alphas)
    points = spectral.overlap_curve(grid, tol=args.tol)
    if args.out:
        spectral.write_overlap_curve_csv(points, args.out)
        print(f"wrote {args.out}")
    else:
        print("alpha,gamma_hat,d_hat,overlap_hat")
        for p in points:
            print(f"{p.alpha:.17g},{p.gamma_hat:.17g},{p.d_hat:.17g},{p.overlap_hat:.17g}")
    return EXIT_OK


def cmd_gamma_solve(args) -> int:
    p = spectral.solve_gamma_hat(args.alpha, tol=args.tol)
    print(f"alpha = {p.alpha:.17g}")
    print(f"gamma_hat = {p.gamma_hat:.17g}")
    print(f"d_hat = {p.d_hat:.17g}")
    print(f"overlap_hat = {p.overlap_hat:.17g}")
    if args.out:
        spectral.write_overlap_curve_csv([p], args.out)
    return EXIT_OK


def cmd_rdt_curve(args) -> int:
    cfg = _load_config(args.config)
    quad, opt = _quad_opt(cfg)
    xs = _parse_grid(args.x_grid)
    table = rdt.manifold_curve(args.alpha, args.c, xs, args.variant, args.level,
                               quad, opt, flat_tol=args.flat_tol,
                               cross_term=args.cross_term,
                               cubic_formula=args.cubic_formula)
    out = Path(args.out or f"rdt_curve_alpha{args.alpha:g}_{args.variant}_{args.level}.csv")
    rdt.write_manifold_csv(table, out)
    rdt.write_curve_sidecar(table, out.with_suffix(".meta.txt"))
    n_fail = sum(e is not None for e in table.errors)
    print(f"wrote {out} ({len(table.rows) - n_fail}/{len(table.rows)} points, "
          f"flat edge {table.flat_edge})")
    if n_fail:
        print(f"{n_fail} points failed; see sidecar", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_spectral_init(args) -> int:
    stream = RngStream(args.seed)
    instance = generate_instance(args.n, args.alpha, stream.substream(0))
    spec = spectral.PreprocessSpec(kind=args.preprocess, clip_low=args.clip_low)
    res = spectral.optspin_init(instance, spec, tol=args.tol * instance.m,
                                max_iter=args.max_iter, rng=stream.substream(1))
    print(f"n = {instance.n}, m = {instance.m}, alpha = {instance.alpha:g}")
    print(f"preprocess = {args.preprocess}")
    print(f"overlap_abs = {res.overlap_abs:.6f}")
    print(f"lambda_spec = {res.lambda_spec:.8g}")
    print(f"iterations = {res.iterations}")
    print(f"residual = {res.residual:.3g}")
    if args.out:
        instance.save(args.out)
        print(f"instance saved to {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg_json = _load_config(args.config)
    dpr_cfg = _build(dpr.DprConfig, cfg_json.get("dpr", {}))
    sweep_cfg = _build(harness.SweepConfig, cfg_json.get("sweep", {}),
                       n=args.n, solver=args.solver, initializer=args.init,
                       base_seed=args.seed, dpr=dpr_cfg)
    stream = RngStream(args.seed).substream(harness._alpha_key(args.alpha), 0)
    trial = harness.run_trial(args.n, args.alpha, args.solver, args.init,
                              sweep_cfg, stream)
    if trial.error:
        print(f"trial failed: {trial.error}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"success = {trial.success}")
    print(f"init_overlap = {trial.init_overlap:.6f}")
    print(f"final_overlap = {trial.final_overlap:.6f}")
    print(f"iterations = {trial.iters}")
    print(f"wall_time = {trial.wall_time:.2f}s")
    if args.out:
        # rerun with trajectory recording for the export
        instance = generate_instance(args.n, args.alpha, stream.substream(0))
        x0, _ = harness.build_initializer(instance, args.init, sweep_cfg,
                                          stream.substream(1))
        if args.solver == harness.SOLVER_HYBRID:
            record = dpr.hybrid(instance, x0, dpr_cfg, stream.substream(2))
        else:
            record = dpr.gradplain(instance, dpr.scale_to_objective(instance, x0),
                                   dpr_cfg, stream.substream(2),
                                   max_iters=sweep_cfg.gradplain_iters)
        record.write_trajectory_csv(args.out)
        print(f"trajectory written to {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg_json = _load_config(args.config)
    dpr_cfg = _build(dpr.DprConfig, cfg_json.get("dpr", {}))
    overrides = dict(base_seed=args.seed, dpr=dpr_cfg, parallelism=args.parallelism)
    if args.n is not None:
        overrides["n"] = args.n
    if args.alphas:
        overrides["alpha_grid"] = tuple(_parse_grid(args.alphas))
    if args.trials is not None:
        overrides["trials_per_alpha"] = args.trials
    if args.solver:
        overrides["solver"] = args.solver
    if args.init:
        overrides["initializer"] = args.init
    cfg = _build(harness.SweepConfig, cfg_json.get("sweep", {}), **overrides)
    result = harness.sweep_phase_transition(cfg)
    out = Path(args.out or "sweep")
    out.mkdir(parents=True, exist_ok=True)
    harness.write_sweep_csv(result, out / "sweep.csv")
    harness.write_trials_csv(result, out / "trials.csv")
    harness.write_sweep_summary(result, out / "summary.txt")
    print((out / "summary.txt").read_text(), end="")
    print(f"wrote {out}/sweep.csv, trials.csv, summary.txt")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg_json = _load_config(args.config)
    quad, opt = _quad_opt(cfg_json)
    alphas = _parse_grid(args.alphas)
    xs = _parse_grid(args.x_grid)
    written = harness.emit_theory_tables(
        alphas, args.c, xs, args.variants.split(","), args.levels.split(","),
        args.out or "theory", quad=quad, opt=opt, flat_tol=args.flat_tol,
        cross_term=args.cross_term)
    print((written["superposition"]).read_text(), end="")
    print(f"wrote {len(written)} files under {args.out or 'theory'}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="phaselab",
                     description="Phase retrieval lab: spectral initializers, "
                                 "descent solvers, theory curves")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("overlap-curve", parents=[], help="optimal-overlap theory curve")
    p.add_argument("--alphas", default="0.6:3.0:0.2",
                   help="grid 'lo:hi:step' or comma list")
    p.add_argument("--tol", type=float, default=1e-12)
    _add_common(p)
    p.set_defaults(func=cmd_overlap_curve)

    p = sub.add_parser("gamma-solve", help="solve the overlap equation at one alpha")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-12)
    _add_common(p)
    p.set_defaults(func=cmd_gamma_solve)

    p = sub.add_parser("rdt-curve", help="parametric-manifold estimate along an x grid")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--x-grid", default="0.05:0.95:0.05")
    p.add_argument("--variant", choices=[rdt.VARIANT_NONSQUARED, rdt.VARIANT_SQUARED],
                   default=rdt.VARIANT_NONSQUARED)
    p.add_argument("--level", choices=[rdt.LEVEL_PLAIN, rdt.LEVEL_LIFTED],
                   default=rdt.LEVEL_LIFTED)
    p.add_argument("--flat-tol", type=float, default=1e-3)
    p.add_argument("--cross-term", choices=[rdt.CROSS_LITERAL, rdt.CROSS_CORRECTED],
                   default=rdt.CROSS_LITERAL)
    p.add_argument("--cubic-formula", choices=[rdt.CUBIC_CORRECTED, rdt.CUBIC_LITERAL],
                   default=rdt.CUBIC_CORRECTED)
    _add_common(p)
    p.set_defaults(func=cmd_rdt_curve)

    p = sub.add_parser("spectral-init", help="run a spectral initializer on a fresh instance")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--preprocess", choices=[spectral.PREPROCESS_OPTIMAL,
                                            spectral.PREPROCESS_IDENTITY],
                   default=spectral.PREPROCESS_OPTIMAL)
    p.add_argument("--clip-low", type=float, default=-50.0)
    p.add_argument("--tol", type=float, default=1e-6,
                   help="eigensolver residual per measurement")
    p.add_argument("--max-iter", type=int, default=60000)
    _add_common(p)
    p.set_defaults(func=cmd_spectral_init)

    p = sub.add_parser("solve", help="single-instance solve")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--solver", choices=[harness.SOLVER_HYBRID, harness.SOLVER_GRADPLAIN],
                   default=harness.SOLVER_HYBRID)
    p.add_argument("--init", choices=[harness.INIT_OPTSPIN, harness.INIT_IDENTITY,
                                      harness.INIT_RANDOM],
                   default=harness.INIT_OPTSPIN)
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="Monte-Carlo phase-transition sweep")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--alphas", default=None, help="grid 'lo:hi:step' or comma list")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--solver", choices=[harness.SOLVER_HYBRID, harness.SOLVER_GRADPLAIN],
                   default=None)
    p.add_argument("--init", choices=[harness.INIT_OPTSPIN, harness.INIT_IDENTITY,
                                      harness.INIT_RANDOM], default=None)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="theory curves + initializer superposition report")
    p.add_argument("--alphas", default="1.4,1.6")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--x-grid", default="0.05:0.95:0.05")
    p.add_argument("--variants", default=rdt.VARIANT_NONSQUARED,
                   help="comma list of variants")
    p.add_argument("--levels", default=f"{rdt.LEVEL_PLAIN},{rdt.LEVEL_LIFTED}")
    p.add_argument("--flat-tol", type=float, default=1e-3)
    p.add_argument("--cross-term", choices=[rdt.CROSS_LITERAL, rdt.CROSS_CORRECTED],
                   default=rdt.CROSS_LITERAL)
    _add_common(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailureError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
