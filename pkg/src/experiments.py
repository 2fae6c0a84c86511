"""
================================================================================
                    EXPERIMENT REPRODUCTION
================================================================================

MODULE: Reference instances, ε sweeps and report emission

DESCRIPTION:
    • run_experiment1     - 5-category instance with an unseen category
                            (ε = 0.2, q = 2), axiom suite and certificate
    • run_sensitivity     - one certified solve per ε on a grid; distances to
                            the uniform and to the empirical distribution
    • run_boundary_cases  - the q = 1 and q = ∞ instances, reported at full
                            precision with their order-preservation outcome
    • check_golden_*      - named golden-value failures (empty list = pass)
    • emit_report         - json / csv / svg artifacts
    • reproduce           - everything above, written to one directory

WORKFLOW:
    1. Solve each instance with solve_qdro
    2. Certify it (KKT residuals and/or duality gap)
    3. Run the axiom suite
    4. Write artifacts in grid order

================================================================================
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import singledispatch
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from src import constants
from src.axioms import AxiomCheck, AxiomReport, check_order_preservation, run_axiom_suite
from src.core import (
    Distribution,
    ExponentKind,
    Instance,
    QExponent,
    Solution,
    SolverStatus,
    uniform_distribution,
    validate_distribution,
)
from src.data.instance_io import (
    axiom_report_to_dict,
    certificate_to_dict,
    instance_to_dict,
    rounded,
    solution_to_dict,
)
from src.data.reports import plot_estimate_comparison, plot_sensitivity, write_csv, write_json, write_svg
from src.solver import Certificate, SolverSettings, certify_solution, solve_qdro

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Experiment1Result:
    instance: Instance
    solution: Solution
    axioms: AxiomReport
    certificate: Certificate


@dataclass(frozen=True, eq=False)
class SweepResult:
    p_hat: Distribution | None
    q: QExponent
    epsilon_grid: np.ndarray
    solutions: tuple[Solution, ...]
    distances_to_uniform: np.ndarray
    distances_to_empirical: np.ndarray
    certificates: tuple[Certificate, ...] = field(default=())

    def __post_init__(self):
        k = len(self.epsilon_grid)
        sizes = {len(self.solutions), len(self.distances_to_uniform), len(self.distances_to_empirical)}
        if self.certificates:
            sizes.add(len(self.certificates))
        if sizes != {k}:
            raise ValueError(f"sweep vectors must all have length {k}")


@dataclass(frozen=True, eq=False)
class BoundaryCase:
    label: str
    instance: Instance
    solution: Solution
    order_preservation: AxiomCheck
    axioms: AxiomReport
    certificate: Certificate
    golden_x: tuple[float, ...]
    structural_residuals: tuple[float, ...] | None = None

    @property
    def x2_minus_x1(self) -> float:
        return float(self.solution.x.probs[1] - self.solution.x.probs[0])


@dataclass(frozen=True, eq=False)
class BoundaryReport:
    q_one: BoundaryCase
    q_inf: BoundaryCase

    def cases(self) -> tuple[BoundaryCase, BoundaryCase]:
        return self.q_one, self.q_inf


@dataclass(frozen=True)
class ReproOutcome:
    written: tuple[Path, ...]
    failures: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failures


def _instance(p_hat: Sequence[float], epsilon: float, q) -> Instance:
    return Instance(validate_distribution(p_hat), epsilon, QExponent.parse(q))


def _solve_certified(inst: Instance, settings: SolverSettings) -> tuple[Solution, Certificate]:
    solution = solve_qdro(inst, settings)
    certificate = certify_solution(solution, inst, settings.tolerances)
    if not certificate.passed:
        logger.warning(
            "⚠️ certificate failed for eps=%g q=%s (gap=%.3e)", inst.epsilon, inst.q, certificate.duality_gap
        )
    return solution, certificate


def run_experiment1(settings: SolverSettings | None = None) -> Experiment1Result:
    settings = settings or SolverSettings()
    inst = _instance(constants.EXPERIMENT1_P_HAT, constants.EXPERIMENT1_EPSILON, constants.EXPERIMENT1_Q)
    solution, certificate = _solve_certified(inst, settings)
    axioms = run_axiom_suite(
        inst.p_hat, solution.x, settings.tolerances.axiom_tol, solution=solution, worst=certificate.worst_case
    )
    return Experiment1Result(inst, solution, axioms, certificate)


def run_sensitivity(
    p_hat: Distribution,
    q: QExponent,
    eps_grid: Sequence[float],
    settings: SolverSettings | None = None,
    workers: int | None = None,
) -> SweepResult:
    """
    Certified solve per grid point; ε = 0 runs in passthrough mode.

    Raises:
        ValueError: negative or non-ascending grid
    """
    settings = settings or SolverSettings()
    grid = np.asarray(list(eps_grid), dtype=np.float64)
    if grid.size and (grid.min() < 0 or np.any(np.diff(grid) < 0)):
        raise ValueError("eps grid must be nonnegative and ascending")
    instances = [Instance(p_hat, float(eps), q) for eps in grid]
    workers = workers or constants.SWEEP_WORKERS
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        # map() yields in submission order
        outcomes = list(pool.map(lambda inst: _solve_certified(inst, settings), instances))
    solutions = tuple(s for s, _ in outcomes)
    certificates = tuple(c for _, c in outcomes)
    uniform = uniform_distribution(p_hat.n).probs
    to_uniform = np.array([np.linalg.norm(s.x.probs - uniform) for s in solutions])
    to_empirical = np.array([np.linalg.norm(s.x.probs - p_hat.probs) for s in solutions])
    return SweepResult(p_hat, q, grid, solutions, to_uniform, to_empirical, certificates)


def _boundary_case(label, p_hat, epsilon, q, golden, settings: SolverSettings) -> BoundaryCase:
    inst = _instance(p_hat, epsilon, q)
    solution, certificate = _solve_certified(inst, settings)
    tol = settings.tolerances.axiom_tol
    axioms = run_axiom_suite(inst.p_hat, solution.x, tol, solution=solution, worst=certificate.worst_case)
    structural = None
    if inst.q.kind is ExponentKind.INFINITY:
        # the tied middle categories sit exactly at the baseline β
        z = -np.log(solution.x.probs) - solution.beta
        structural = (abs(float(z[1])), abs(float(z[2])))
    return BoundaryCase(
        label=label,
        instance=inst,
        solution=solution,
        order_preservation=check_order_preservation(inst.p_hat, solution.x, tol),
        axioms=axioms,
        certificate=certificate,
        golden_x=tuple(golden),
        structural_residuals=structural,
    )


def run_boundary_cases(settings: SolverSettings | None = None) -> BoundaryReport:
    settings = settings or SolverSettings()
    q_one = _boundary_case(
        "q=1", constants.BOUNDARY_Q1_P_HAT, constants.BOUNDARY_Q1_EPSILON, 1.0,
        constants.BOUNDARY_Q1_GOLDEN_X, settings,
    )
    q_inf = _boundary_case(
        "q=inf", constants.BOUNDARY_QINF_P_HAT, constants.BOUNDARY_QINF_EPSILON, "inf",
        constants.BOUNDARY_QINF_GOLDEN_X, settings,
    )
    logger.info("boundary q=1: x2-x1 = %.3e", q_one.x2_minus_x1)
    return BoundaryReport(q_one, q_inf)


# ----------------------------------------------------------------------------
# Golden checks
# ----------------------------------------------------------------------------

def _close(x: np.ndarray, golden: Sequence[float], tol: float) -> bool:
    return bool(np.all(np.abs(x - np.asarray(golden)) <= tol))


def _status_failures(name: str, solution: Solution, certificate: Certificate) -> list[str]:
    failures = []
    if solution.status is SolverStatus.MAX_ITERATIONS:
        failures.append(f"{name}: solver did not converge ({solution.iterations} iterations)")
    if not certificate.passed:
        failures.append(
            f"{name}: certificate failed (method={certificate.method}, gap={certificate.duality_gap:.3e})"
        )
    if abs(certificate.duality_gap) > constants.DUALITY_GAP_TOL:
        failures.append(f"{name}: duality gap {certificate.duality_gap:.3e} > {constants.DUALITY_GAP_TOL:g}")
    return failures


def check_golden_experiment1(result: Experiment1Result) -> list[str]:
    failures = _status_failures("experiment1", result.solution, result.certificate)
    if not _close(result.solution.x.probs, constants.EXPERIMENT1_GOLDEN_X, constants.EXPERIMENT1_GOLDEN_TOL):
        failures.append(f"experiment1: x={result.solution.x} differs from golden values")
    for check in (result.axioms.positivity, result.axioms.symmetry, result.axioms.order_preservation):
        if not check.passed:
            failures.append(f"experiment1: {check.name} failed")
    return failures


def check_golden_sensitivity(result: SweepResult, tol: float = constants.CERT_TOL) -> list[str]:
    failures = []
    for eps, solution, certificate in zip(result.epsilon_grid, result.solutions, result.certificates):
        failures.extend(_status_failures(f"sweep eps={eps:g}", solution, certificate))
        if eps == 0.0 and not np.array_equal(solution.x.probs, result.p_hat.probs):
            failures.append("sweep eps=0: x differs from p_hat")
    if np.any(np.diff(result.distances_to_uniform) > tol):
        failures.append("sweep: distance to uniform increases along the grid")
    if len(result.solutions):
        last = result.solutions[-1].x.probs
        if not _close(last, np.full(last.size, 1.0 / last.size), constants.EXPERIMENT1_GOLDEN_TOL):
            failures.append("sweep: largest eps is not within 1e-3 of uniform")
    return failures


def check_golden_boundary(report: BoundaryReport) -> list[str]:
    failures = []
    for case in report.cases():
        failures.extend(_status_failures(f"boundary {case.label}", case.solution, case.certificate))
        if not _close(case.solution.x.probs, case.golden_x, constants.BOUNDARY_GOLDEN_TOL):
            failures.append(f"boundary {case.label}: x={case.solution.x} differs from golden values")
    x = report.q_inf.solution.x.probs
    if abs(x[1] - x[2]) > constants.TIE_TOL:
        failures.append(f"boundary q=inf: x2 - x3 = {x[1] - x[2]:.3e} is not a tie")
    if (2, 3) not in report.q_inf.order_preservation.ties:
        failures.append("boundary q=inf: order check did not report the (2,3) tie")
    return failures


# ----------------------------------------------------------------------------
# Report emission
# ----------------------------------------------------------------------------

@singledispatch
def to_record(result) -> dict:
    raise TypeError(f"no report layout for {type(result).__name__}")


@to_record.register
def _(result: Experiment1Result) -> dict:
    return rounded({
        "instance": instance_to_dict(result.instance),
        "solution": solution_to_dict(
            result.solution,
            kkt_max_residual=None if result.certificate.kkt is None else result.certificate.kkt.max_residual,
            duality_gap=result.certificate.duality_gap,
        ),
        "axioms": axiom_report_to_dict(result.axioms),
        "certificate": certificate_to_dict(result.certificate),
    })


@to_record.register
def _(result: SweepResult) -> dict:
    return rounded({
        "p_hat": None if result.p_hat is None else result.p_hat.tolist(),
        "q": result.q.to_json(),
        "epsilon_grid": result.epsilon_grid,
        "distances_to_uniform": result.distances_to_uniform,
        "distances_to_empirical": result.distances_to_empirical,
        "points": [
            {
                "epsilon": eps,
                "solution": solution_to_dict(sol, duality_gap=cert.duality_gap if cert else None),
                "certified": None if cert is None else cert.passed,
            }
            for eps, sol, cert in zip(
                result.epsilon_grid,
                result.solutions,
                result.certificates or (None,) * len(result.solutions),
            )
        ],
    })


@to_record.register
def _(result: BoundaryReport) -> dict:
    cases = {}
    for case in result.cases():
        cases[case.label] = {
            "instance": instance_to_dict(case.instance),
            "x": case.solution.x.tolist(),
            "x_full_precision": [repr(v) for v in case.solution.x.tolist()],
            "beta": case.solution.beta,
            "status": case.solution.status.value,
            "order_preservation": {
                "passed": case.order_preservation.passed,
                "ties": [list(p) for p in case.order_preservation.ties],
                "inversions": [list(p) for p in case.order_preservation.inversions],
            },
            "x2_minus_x1": case.x2_minus_x1,
            "duality_gap": case.certificate.duality_gap,
            "structural_residuals": case.structural_residuals,
        }
    return rounded(cases)


@singledispatch
def to_table(result) -> pd.DataFrame:
    raise TypeError(f"no table layout for {type(result).__name__}")


@to_table.register
def _(result: Experiment1Result) -> pd.DataFrame:
    return pd.DataFrame({
        "category": np.arange(1, result.instance.n + 1),
        "p_hat": result.instance.p_hat.probs,
        "x": result.solution.x.probs,
    })


@to_table.register
def _(result: SweepResult) -> pd.DataFrame:
    n = result.p_hat.n if result.p_hat is not None else 0
    columns = ["epsilon"] + [f"x{j + 1}" for j in range(n)] + ["distance_to_uniform", "distance_to_empirical"]
    rows = [
        [eps, *sol.x.tolist(), du, de]
        for eps, sol, du, de in zip(
            result.epsilon_grid, result.solutions, result.distances_to_uniform, result.distances_to_empirical
        )
    ]
    return pd.DataFrame(rows, columns=columns)


@to_table.register
def _(result: BoundaryReport) -> pd.DataFrame:
    rows = []
    for case in result.cases():
        for j, (p, x) in enumerate(zip(case.instance.p_hat.probs, case.solution.x.probs)):
            rows.append([case.label, case.instance.epsilon, j + 1, p, x])
    return pd.DataFrame(rows, columns=["case", "epsilon", "category", "p_hat", "x"])


@singledispatch
def to_figure(result):
    raise ValueError(f"no figure layout for {type(result).__name__}")


@to_figure.register
def _(result: Experiment1Result):
    return plot_estimate_comparison(
        result.instance.p_hat.tolist(), result.solution.x.tolist(),
        f"Empirical vs robust estimate (ε={result.instance.epsilon:g}, q={result.instance.q})",
    )


@to_figure.register
def _(result: SweepResult):
    estimates = np.array([s.x.probs for s in result.solutions])
    return plot_sensitivity(result.epsilon_grid, estimates, f"Sensitivity to ε (q={result.q})")


@singledispatch
def certificates_of(result) -> tuple[Certificate, ...]:
    raise TypeError(f"no certificates for {type(result).__name__}")


@certificates_of.register
def _(result: Experiment1Result) -> tuple[Certificate, ...]:
    return (result.certificate,)


@certificates_of.register
def _(result: SweepResult) -> tuple[Certificate, ...]:
    return tuple(result.certificates)


@certificates_of.register
def _(result: BoundaryReport) -> tuple[Certificate, ...]:
    return tuple(case.certificate for case in result.cases())


def emit_report(results, fmt: str, path) -> Path:
    """
    Write one artifact.

    Raises:
        ValueError: unknown format or no layout for the result type
        ReportWriteError: the file could not be written
    """
    if fmt == "json":
        return write_json(to_record(results), path)
    if fmt == "csv":
        return write_csv(to_table(results), path)
    if fmt == "svg":
        return write_svg(to_figure(results), path)
    raise ValueError(f"unknown report format {fmt!r}; expected one of {constants.REPORT_FORMATS}")


def reproduce(
    out_dir,
    formats: Sequence[str] = constants.REPORT_FORMATS,
    settings: SolverSettings | None = None,
) -> ReproOutcome:
    """Run every reference experiment, write its artifacts and collect golden failures."""
    settings = settings or SolverSettings()
    out_dir = Path(out_dir)
    experiment1 = run_experiment1(settings)
    sweep = run_sensitivity(
        validate_distribution(constants.SENSITIVITY_P_HAT),
        QExponent(constants.SENSITIVITY_Q),
        constants.SENSITIVITY_EPS_GRID,
        settings,
    )
    boundary = run_boundary_cases(settings)

    failures = (
        check_golden_experiment1(experiment1)
        + check_golden_sensitivity(sweep, settings.tolerances.cert_tol)
        + check_golden_boundary(boundary)
    )
    written = []
    for stem, result, allowed in (
        (constants.EXPERIMENT1_STEM, experiment1, ("json", "csv", "svg")),
        (constants.SWEEP_STEM, sweep, ("json", "csv", "svg")),
        (constants.BOUNDARY_STEM, boundary, ("json", "csv")),
    ):
        if not all(cert.passed for cert in certificates_of(result)):
            logger.error("❌ %s artifacts not written: a certificate failed", stem)
            continue
        for fmt in formats:
            if fmt in allowed:
                written.append(emit_report(result, fmt, out_dir / f"{stem}.{fmt}"))
    return ReproOutcome(tuple(written), tuple(failures))
