"""Command-line entry point: solve / sweep / optimize / simulate / verify.

Every command writes its primary output file plus a ``.manifest.json``
sidecar recording the exact parameter set, seed, tool version and
timestamp; re-running a command with the manifest's parameters
reproduces the output file byte for byte (timestamps live only in the
manifest).

Exit codes: 0 success, 2 usage error, 3 solver non-convergence,
4 infeasible instance, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from typing import Any, Sequence

from . import __version__
from .equilibrium import (
    EquilibriumResult,
    SolveConfig,
    result_from_json,
    result_to_dict,
    solve,
)
from .metrics import SimulationConfig, simulate, social_cost
from .model import ConvergenceError, InfeasibleError, ModelParams, ScheduleError
from .optimizer import (
    DEConfig,
    DEFAULT_GAMMAS,
    SweepSpec,
    best_equal_spacing,
    optimize_de,
    sweep_equal_spacing,
    write_sweep_csv,
)
from .verify import verify_equilibrium
from .waiting import Schedule

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_INFEASIBLE = 4
EXIT_IO = 5

OUT_DIR_ENV = "WALKINQ_OUT"


def _round12(value: Any) -> Any:
    if isinstance(value, float):
        # non-finite values (e.g. a CI with a single batch) have no JSON form
        return float(f"{value:.12g}") if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _round12(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round12(v) for v in value]
    return value


def _resolve_out(path: str | None, default_name: str) -> str:
    if path:
        return path
    return os.path.join(os.environ.get(OUT_DIR_ENV, "."), default_name)


def _write_json(path: str, doc: dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(_round12(doc), fh, indent=1)
        fh.write("\n")


def _write_manifest(out_path: str, command: str, params: dict[str, Any],
                    inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "parameters": params,
        "inputs": inputs,
        "outputs": outputs,
    }
    _write_json(out_path + ".manifest.json", manifest)


def _model_params(args: argparse.Namespace) -> ModelParams:
    return ModelParams(
        lam=args.lam,
        mu=args.mu,
        horizon=args.horizon,
        delta=args.delta,
        trunc_mass=args.trunc_mass,
    )


def _solve_config(args: argparse.Namespace) -> SolveConfig:
    return SolveConfig(
        atom_bisect_tol=args.atom_tol,
        cdf_tol=args.cdf_tol,
        max_outer_iters=args.max_outer_iters,
    )


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="mean walk-in population per day")
    p.add_argument("--mu", type=float, default=1.0, help="service rate")
    p.add_argument("--horizon", type=float, default=5.0, help="closing time T")
    p.add_argument("--delta", type=float, default=0.01, help="integration step")
    p.add_argument("--trunc-mass", type=float, default=0.999,
                   help="Poisson mass captured by the population truncation")
    p.add_argument("--cdf-tol", type=float, default=SolveConfig.cdf_tol,
                   help="acceptance band for |F(T)-1|")
    p.add_argument("--atom-tol", type=float, default=SolveConfig.atom_bisect_tol,
                   help="atom bisection width tolerance")
    p.add_argument("--max-outer-iters", type=int, default=SolveConfig.max_outer_iters)
    p.add_argument("--threads", type=int, default=0,
                   help="cap compute threads (results are unaffected)")


def _apply_threads(args: argparse.Namespace) -> None:
    if getattr(args, "threads", 0) and args.threads > 0:
        try:
            import numba

            numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
        except (ImportError, ValueError):
            pass


def _breakdown_doc(breakdown, gammas: Sequence[float]) -> dict[str, Any]:
    return {
        "phi_s": breakdown.phi_s,
        "per_customer": list(breakdown.per_customer),
        "e_w": breakdown.e_w,
        "e_i": breakdown.e_i,
        "lambda": breakdown.lam,
        "phi": {format(g, "g"): social_cost(breakdown, g) for g in gammas},
        "ci_halfwidths": dict(breakdown.ci_halfwidths),
        "diagnostics": dict(breakdown.diagnostics),
    }


def cmd_solve(args: argparse.Namespace) -> int:
    _apply_threads(args)
    params = _model_params(args)
    schedule = Schedule.parse(args.schedule, params.horizon)
    result = solve(schedule, params, _solve_config(args), early=args.early_arrivals)
    report = verify_equilibrium(result)
    out = _resolve_out(args.out, "equilibrium.json")
    _write_json(out, result_to_dict(result))
    report_path = out + ".verify.json"
    _write_json(report_path, dataclasses.asdict(report))
    _write_manifest(
        out,
        "solve",
        {
            "schedule": args.schedule,
            "lambda": args.lam,
            "mu": args.mu,
            "horizon": args.horizon,
            "delta": args.delta,
            "trunc_mass": args.trunc_mass,
            "early_arrivals": args.early_arrivals,
            "cdf_tol": args.cdf_tol,
            "atom_tol": args.atom_tol,
        },
        inputs=[],
        outputs=[out, report_path],
    )
    print(f"p_e={result.p_e:.6g} t0={result.t0:.6g} E_w={result.e_w:.6g} "
          f"F(T)={result.cdf_terminal:.6g} -> {out}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    _apply_threads(args)
    params = _model_params(args)
    try:
        start, stop, step = (float(x) for x in args.delta_grid.split(":"))
    except ValueError as exc:
        raise ScheduleError(f"bad --delta-grid {args.delta_grid!r}") from exc
    gammas = tuple(float(g) for g in args.gamma.split(",") if g) or DEFAULT_GAMMAS
    spec = SweepSpec(
        pattern=args.pattern,
        delta_start=start,
        delta_stop=stop,
        delta_step=step,
        gammas=gammas,
    )
    sim = SimulationConfig(replications=args.replications, seed=args.seed)
    rows = sweep_equal_spacing(spec, params, sim, _solve_config(args))
    out = _resolve_out(args.out, "sweep.csv")
    write_sweep_csv(rows, gammas, out)
    _write_manifest(
        out,
        "sweep",
        {
            "pattern": args.pattern,
            "delta_grid": args.delta_grid,
            "gammas": list(gammas),
            "lambda": args.lam,
            "mu": args.mu,
            "horizon": args.horizon,
            "delta": args.delta,
            "trunc_mass": args.trunc_mass,
            "replications": args.replications,
            "seed": args.seed,
        },
        inputs=[],
        outputs=[out],
    )
    failures = [r for r in rows if r.error]
    print(f"{len(rows)} rows ({len(failures)} failed) -> {out}")
    for r in failures:
        print(f"  failed {r.pattern} delta={r.delta}: {r.error}", file=sys.stderr)
    return EXIT_NO_CONVERGENCE if failures else EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    _apply_threads(args)
    params = _model_params(args)
    gammas = (args.gamma,)
    sim = SimulationConfig(replications=args.replications, seed=args.seed)
    spec = SweepSpec(gammas=gammas)
    out = _resolve_out(args.out, "optimize.json")
    if args.method == "grid":
        rows = sweep_equal_spacing(spec, params, sim, _solve_config(args))
        best, phi = best_equal_spacing(rows, args.gamma)
        doc = {
            "method": "grid",
            "lambda": args.lam,
            "gamma": args.gamma,
            "best_schedule": list(best.times),
            "phi_star": phi,
            "rows_evaluated": len(rows),
        }
    else:
        config = DEConfig(
            m=args.m,
            population=args.population,
            max_iters=args.max_iters,
            window=args.window,
            seed=args.seed,
            inloop_replications=args.inloop_replications,
            final_replications=args.replications,
        )
        seeds: list[tuple[float, ...]] = []
        if args.grid_seed:
            rows = sweep_equal_spacing(
                spec,
                params,
                SimulationConfig(replications=config.inloop_replications, seed=args.seed),
                _solve_config(args),
            )
            best, _ = best_equal_spacing(rows, args.gamma)
            seeds.append(best.times)
        de = optimize_de(params, args.gamma, config, seeds, _solve_config(args))
        doc = {
            "method": "de",
            "lambda": args.lam,
            "gamma": args.gamma,
            "config": {
                "population": config.pop_size(),
                "weight": config.weight,
                "crossover": config.crossover,
                "max_iters": config.max_iters,
                "window": config.window,
                "objective_tol": config.objective_tol,
                "seed": config.seed,
                "inloop_replications": config.inloop_replications,
                "final_replications": config.final_replications,
            },
            "best_schedule": list(de.best_schedule),
            "phi_star": de.phi_star,
            "iterations": de.iterations,
            "converged": de.converged,
            "trace": de.trace,
            "evaluations": de.evaluations,
        }
    _write_json(out, doc)
    _write_manifest(
        out,
        "optimize",
        {
            "method": args.method,
            "lambda": args.lam,
            "gamma": args.gamma,
            "mu": args.mu,
            "horizon": args.horizon,
            "delta": args.delta,
            "trunc_mass": args.trunc_mass,
            "replications": args.replications,
            "seed": args.seed,
        },
        inputs=[],
        outputs=[out],
    )
    print(f"best={doc['best_schedule']} phi={doc['phi_star']:.6g} -> {out}")
    return EXIT_OK


def _load_result(path: str) -> EquilibriumResult:
    with open(path) as fh:
        return result_from_json(fh.read())


def cmd_simulate(args: argparse.Namespace) -> int:
    _apply_threads(args)
    result = _load_result(args.input)
    config = SimulationConfig(replications=args.replications, seed=args.seed)
    breakdown = simulate(result, config=config)
    out = _resolve_out(args.out, "costs.json")
    _write_json(out, _breakdown_doc(breakdown, DEFAULT_GAMMAS))
    _write_manifest(
        out,
        "simulate",
        {"input": args.input, "replications": args.replications, "seed": args.seed},
        inputs=[args.input],
        outputs=[out],
    )
    print(f"E_w={breakdown.e_w:.6g} E_I={breakdown.e_i:.6g} Phi_s={breakdown.phi_s:.6g} -> {out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    result = _load_result(args.input)
    report = verify_equilibrium(result)
    out = _resolve_out(args.out, "verify.json")
    _write_json(out, dataclasses.asdict(report))
    _write_manifest(
        out, "verify", {"input": args.input}, inputs=[args.input], outputs=[out]
    )
    print(
        f"on-support dev={report.max_on_support_rel_dev:.4g} "
        f"off-support margin={report.min_off_support_margin:.4g} "
        f"structure_ok={report.structure_ok()} -> {out}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="walkinq",
        description="Equilibrium walk-in arrival distributions for a scheduled "
        "single-server queue, with cost evaluation and schedule search.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one equilibrium and verify it")
    _add_model_args(p)
    p.add_argument("--schedule", required=True,
                   help='comma-separated appointment instants, e.g. "1,3,5"')
    p.add_argument("--early-arrivals", action="store_true",
                   help="allow walk-ins to queue before opening")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="price equal-spacing schedule patterns")
    _add_model_args(p)
    p.add_argument("--pattern", choices=("front", "back", "both"), default="both")
    p.add_argument("--delta-grid", default="0.1:5:0.1", help="start:stop:step")
    p.add_argument("--gamma", default="0.1,0.5,0.9",
                   help="comma-separated cost weights (empty = defaults)")
    p.add_argument("--replications", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=20240)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="search schedules for minimal social cost")
    _add_model_args(p)
    p.add_argument("--method", choices=("de", "grid"), default="de")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--m", type=int, default=3, help="number of appointments")
    p.add_argument("--population", type=int, default=0, help="0 = 15 per dimension")
    p.add_argument("--max-iters", type=int, default=60)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--inloop-replications", type=int, default=10_000)
    p.add_argument("--replications", type=int, default=1_000_000,
                   help="final re-evaluation replications")
    p.add_argument("--seed", type=int, default=424242)
    p.add_argument("--grid-seed", action=argparse.BooleanOptionalAction, default=True,
                   help="seed the population with the best equal-spacing schedule")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="Monte-Carlo costs for a solved equilibrium")
    p.add_argument("--input", required=True, help="equilibrium JSON from solve")
    p.add_argument("--replications", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=20240)
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="equilibrium self-check report")
    p.add_argument("--input", required=True, help="equilibrium JSON from solve")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScheduleError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
