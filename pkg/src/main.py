"""
================================================================================
                    q-DRO SMOOTHING COMMAND LINE
================================================================================

MODULE: Command-line entry point

DESCRIPTION:
    Wires instances, the robust solver, the axiom suite, certification and
    experiment reproduction into one command.

SUBCOMMANDS:
    solve     solve one instance, write solution.json
    laplace   add-c smoothing of one instance, write laplace.json
    axioms    axiom suite for a q-DRO, Laplace or given estimate (or a CSV batch)
    certify   KKT residuals + duality gap for a solution file or inline instance
    repro     reproduce every reference experiment and check golden values
    sweep     ε sweep for one p̂, write sweep.{json,csv,svg}

EXIT CODES:
    0 success · 1 input error · 2 non-convergence · 3 certification failure
    4 reproduction mismatch

USAGE:
    python -m src.main solve --p-hat 0.0,0.15,0.15,0.30,0.40 --eps 0.2 --q 2
    python -m src.main certify --solution results/solution.json
    python -m src.main repro --out-dir results --format json,csv

================================================================================
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from src import constants
from src.axioms import format_axiom_table, run_axiom_suite
from src.core import (
    Instance,
    InvalidInstanceError,
    MaxIterationsError,
    QdroError,
    QExponent,
    ReportWriteError,
    SolverStatus,
    validate_distribution,
)
from src.data.instance_io import (
    axiom_report_to_dict,
    certificate_to_dict,
    instance_from_dict,
    instance_to_dict,
    load_batch_csv,
    load_json,
    load_solution,
    parse_vector,
    rounded,
    solution_to_dict,
)
from src.data.reports import write_json
from src.experiments import emit_report, reproduce, run_sensitivity
from src.laplace import Pseudocount, laplace_quotient, laplace_smooth
from src.solver import SolverSettings, certify_solution, solve_full_problem, solve_qdro

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_CERTIFICATION = 3
EXIT_REPRO = 4

# flag name -> key in an instance/settings JSON file
_FILE_KEYS = {
    "p_hat": "p_hat",
    "counts": "counts",
    "eps": "epsilon",
    "q": "q",
    "out_dir": "out_dir",
    "format": "format",
    "max_iterations": "max_iterations",
    "seed": "seed",
    "c": "c",
    "eps_grid": "eps_grid",
}


class CliInputError(QdroError, ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        raise CliInputError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    source = common.add_mutually_exclusive_group()
    source.add_argument("--p-hat", type=str, help="Empirical distribution, comma separated")
    source.add_argument("--counts", type=str, help="Category counts, comma separated")
    common.add_argument("--instance", type=str, help="Instance/settings JSON file")
    common.add_argument("--eps", type=float, help="Robustness radius epsilon")
    common.add_argument("--q", type=str, help="Norm exponent in [1, inf]; 'inf' accepted")
    common.add_argument("--out-dir", type=str, help=f"Output directory (default ${{QDRO_OUTPUT_DIR}} or {constants.OUTPUT_DIR})")
    common.add_argument("--format", type=str, help="Comma list of json,csv,svg")
    common.add_argument("--max-iterations", type=int, help="Solver iteration cap")
    common.add_argument("--no-symmetrize", action="store_true", help="Skip averaging over equal p_hat values")
    common.add_argument("--seed", type=int, help="Seed for randomized components")
    common.add_argument("--full", action="store_true", help="Solve over (x, lambda, beta) with the projected (sub)gradient method")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="INFO logging")
    verbosity.add_argument("--debug", action="store_true", help="DEBUG logging")

    parser = _Parser(
        prog="qdro",
        description="q-norm distributionally robust probability smoothing",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("solve", parents=[common], help="Solve one instance")
    laplace = sub.add_parser("laplace", parents=[common], help="Add-c smoothing")
    laplace.add_argument("--c", type=float, help="Pseudocount (default 1)")
    axioms = sub.add_parser("axioms", parents=[common], help="Axiom suite")
    axioms.add_argument("--estimator", choices=["qdro", "laplace"], default="qdro")
    axioms.add_argument("--x", type=str, help="Check this estimate instead of computing one")
    axioms.add_argument("--c", type=float, help="Pseudocount for --estimator laplace")
    axioms.add_argument("--batch", type=str, help="CSV with p_hat[,x] columns (';'-separated vectors)")
    certify = sub.add_parser("certify", parents=[common], help="Certify a solution")
    certify.add_argument("--solution", type=str, help="Solution JSON file")
    sub.add_parser("repro", parents=[common], help="Reproduce the reference experiments")
    sweep = sub.add_parser("sweep", parents=[common], help="Epsilon sweep")
    sweep.add_argument("--eps-grid", type=str, help="Comma separated ascending epsilons")
    return parser


def _configure_logging(args) -> None:
    level = logging.DEBUG if args.debug else logging.INFO if args.verbose else constants.LOG_LEVEL
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _merged(args) -> dict:
    """Flags win over file values."""
    config = dict(load_json(args.instance)) if args.instance else {}
    for flag, key in _FILE_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            config[key] = value
    if args.p_hat is not None:
        config.pop("counts", None)
    if args.counts is not None:
        config.pop("p_hat", None)
    return config


def _instance(config: dict, require_eps: bool = True) -> Instance:
    if "p_hat" not in config and "counts" not in config:
        raise CliInputError("an instance is required: pass --p-hat, --counts or --instance")
    data = dict(config)
    if not require_eps and data.get("epsilon") is None:
        data["epsilon"] = 0.0
    return instance_from_dict(data)


def _settings(config: dict, args) -> SolverSettings:
    symmetrize = not args.no_symmetrize and bool(config.get("symmetrize", True))
    return SolverSettings(
        max_iterations=int(config.get("max_iterations", constants.MAX_ITERATIONS)),
        symmetrize=symmetrize,
        seed=int(config.get("seed", 0)),
    )


def _out_dir(config: dict) -> Path:
    return Path(config.get("out_dir") or constants.OUTPUT_DIR)


def _formats(config: dict) -> list[str]:
    raw = config.get("format") or ",".join(constants.REPORT_FORMATS)
    if isinstance(raw, (list, tuple)):
        raw = ",".join(raw)
    formats = [f.strip().lower() for f in str(raw).split(",") if f.strip()]
    unknown = [f for f in formats if f not in constants.REPORT_FORMATS]
    if unknown or not formats:
        raise CliInputError(f"unknown format(s) {unknown}; choose from {','.join(constants.REPORT_FORMATS)}")
    return formats


def _solve(inst: Instance, settings: SolverSettings, full: bool):
    return solve_full_problem(inst, settings) if full else solve_qdro(inst, settings)


def cmd_solve(args) -> int:
    config = _merged(args)
    inst = _instance(config)
    settings = _settings(config, args)
    solution = _solve(inst, settings, args.full)
    certificate = certify_solution(solution, inst, settings.tolerances)
    record = solution_to_dict(
        solution,
        inst,
        kkt_max_residual=None if certificate.kkt is None else certificate.kkt.max_residual,
        duality_gap=certificate.duality_gap,
    )
    path = write_json(record, _out_dir(config) / "solution.json")
    print(f"x = {rounded(solution.x.tolist())}")
    print(f"beta = {solution.beta:.6f}  t = {solution.t:.3e}  status = {solution.status.value}")
    if solution.status is SolverStatus.MAX_ITERATIONS:
        print(f"⚠️ not converged after {solution.iterations} iterations; wrote {path}")
        return EXIT_NOT_CONVERGED
    print(f"✅ wrote {path}")
    return EXIT_OK


def cmd_laplace(args) -> int:
    config = _merged(args)
    inst = _instance(config, require_eps=False)
    c = Pseudocount(config.get("c", 1.0))
    x = laplace_smooth(inst.p_hat, c)
    record = rounded({
        "p_hat": inst.p_hat.tolist(),
        "c": c.c,
        "x": x.tolist(),
        "quotient": laplace_quotient(inst.n, c),
    })
    path = write_json(record, _out_dir(config) / "laplace.json")
    print(f"x = {record['x']}")
    print(f"✅ wrote {path}")
    return EXIT_OK


def _estimate(inst: Instance, args, config, settings):
    if args.x is not None:
        return validate_distribution(parse_vector(args.x)), None
    if args.estimator == "laplace":
        return laplace_smooth(inst.p_hat, Pseudocount(config.get("c", 1.0))), None
    solution = _solve(inst, settings, args.full)
    return solution.x, solution


def cmd_axioms(args) -> int:
    config = _merged(args)
    settings = _settings(config, args)
    tol = settings.tolerances.axiom_tol
    reports = []
    if args.batch:
        frame = load_batch_csv(args.batch)
        for row in frame.itertuples(index=False):
            row = row._asdict()
            p_hat = validate_distribution(parse_vector(row["p_hat"]))
            x_text = row.get("x")
            if isinstance(x_text, str) and x_text.strip():
                x, solution = validate_distribution(parse_vector(x_text)), None
            else:
                inst = Instance(p_hat, config.get("epsilon", 0.0), config.get("q", QExponent(2.0)))
                x, solution = _estimate(inst, args, config, settings)
            reports.append((p_hat, run_axiom_suite(p_hat, x, tol, solution=solution)))
    else:
        inst = _instance(config, require_eps=args.estimator == "qdro" and args.x is None)
        x, solution = _estimate(inst, args, config, settings)
        reports.append((inst.p_hat, run_axiom_suite(inst.p_hat, x, tol, solution=solution)))

    for p_hat, report in reports:
        print(f"p_hat = {rounded(p_hat.tolist())}")
        print(format_axiom_table(report))
        print()
    record = [axiom_report_to_dict(r) for _, r in reports]
    path = _out_dir(config) / "axioms.json"
    write_json(record if len(record) > 1 else record[0], path)
    print(f"✅ wrote {path}")
    return EXIT_OK


def cmd_certify(args) -> int:
    config = _merged(args)
    settings = _settings(config, args)
    if args.solution:
        inst = _instance(config) if ("p_hat" in config or "counts" in config) else None
        solution, inst = load_solution(args.solution, inst)
    else:
        inst = _instance(config)
        solution = _solve(inst, settings, args.full)
    try:
        certificate = certify_solution(solution, inst, settings.tolerances)
    except (QdroError, ArithmeticError) as exc:
        print(f"❌ certification failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    record = certificate_to_dict(certificate)
    record["instance"] = rounded(instance_to_dict(inst))
    path = write_json(record, _out_dir(config) / "certificate.json")
    if certificate.kkt is not None:
        print(f"KKT max residual = {certificate.kkt.max_residual:.3e}")
    print(f"duality gap = {certificate.duality_gap:.3e}")
    print(f"non-degeneracy = {'pass' if certificate.assumption1 else 'fail'}")
    if not certificate.passed:
        print(f"❌ certification failed; wrote {path}")
        return EXIT_CERTIFICATION
    print(f"✅ certified ({certificate.method}); wrote {path}")
    return EXIT_OK


def cmd_repro(args) -> int:
    config = _merged(args)
    settings = _settings(config, args)
    outcome = reproduce(_out_dir(config), _formats(config), settings)
    for path in outcome.written:
        print(f"✅ wrote {path}")
    if outcome.failures:
        for failure in outcome.failures:
            print(f"❌ {failure}", file=sys.stderr)
        return EXIT_REPRO
    print("✅ all golden checks passed")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _merged(args)
    settings = _settings(config, args)
    inst = _instance(config, require_eps=False)
    grid = config.get("eps_grid", constants.SENSITIVITY_EPS_GRID)
    if isinstance(grid, str):
        grid = parse_vector(grid)
    result = run_sensitivity(inst.p_hat, inst.q, grid, settings)
    formats = _formats(config)
    if any(s.status is SolverStatus.MAX_ITERATIONS for s in result.solutions):
        print("⚠️ some grid points did not converge; nothing written")
        return EXIT_NOT_CONVERGED
    if any(not c.passed for c in result.certificates):
        print("❌ some grid points failed certification; nothing written")
        return EXIT_CERTIFICATION
    for fmt in formats:
        print(f"✅ wrote {emit_report(result, fmt, _out_dir(config) / f'{constants.SWEEP_STEM}.{fmt}')}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "laplace": cmd_laplace,
    "axioms": cmd_axioms,
    "certify": cmd_certify,
    "repro": cmd_repro,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CliInputError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_INPUT
    _configure_logging(args)
    try:
        return COMMANDS[args.subcommand](args)
    except ReportWriteError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, FileNotFoundError, json.JSONDecodeError, InvalidInstanceError) as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MaxIterationsError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (QdroError, ArithmeticError) as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
