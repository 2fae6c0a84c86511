"""
================================================================================
                    SMOOTHING AXIOM CHECKS
================================================================================

MODULE: Pointwise verification of the smoothing axioms for a (p̂, x) pair

DESCRIPTION:
    • Positivity          - every x_j > tol
    • Symmetry            - p̂_i = p̂_j (bitwise) ⇒ |x_i - x_j| ≤ tol
    • Order Preservation  - p̂_i < p̂_j ⇒ x_i < x_j; ties and inversions are
                            reported separately
    • Ratio Preservation  - all difference quotients (x_i - x_j)/(p̂_i - p̂_j)
                            agree within tol
    • Non-degeneracy      - t > tol at a solver output, optionally cross-checked
                            against the adversary's norm-constraint activity

    Witnesses are 1-based category numbers. The checks work on any estimator
    output, robust or Laplace.

================================================================================
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from tabulate import tabulate

from src.core import Distribution, Solution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AxiomCheck:
    name: str
    passed: bool
    value: float | None = None
    witness: tuple[int, ...] | None = None
    ties: tuple[tuple[int, int], ...] = field(default=())
    inversions: tuple[tuple[int, int], ...] = field(default=())
    detail: str = ""


@dataclass(frozen=True)
class AxiomReport:
    positivity: AxiomCheck
    symmetry: AxiomCheck
    order_preservation: AxiomCheck
    ratio_preservation: AxiomCheck
    tolerance_used: float
    assumption1: AxiomCheck | None = None

    def checks(self) -> list[AxiomCheck]:
        items = [self.positivity, self.symmetry, self.order_preservation, self.ratio_preservation]
        if self.assumption1 is not None:
            items.append(self.assumption1)
        return items


def _pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def _same_size(p_hat: Distribution, x: Distribution) -> None:
    if p_hat.n != x.n:
        raise ValueError(f"p_hat has {p_hat.n} categories, x has {x.n}")


def check_positivity(x: Distribution, tol: float) -> AxiomCheck:
    j = int(np.argmin(x.probs))
    smallest = float(x.probs[j])
    passed = smallest > tol
    return AxiomCheck(
        name="positivity",
        passed=passed,
        value=smallest,
        witness=None if passed else (j + 1,),
    )


def check_symmetry(p_hat: Distribution, x: Distribution, tol: float) -> AxiomCheck:
    _same_size(p_hat, x)
    i, j = _pairs(x.n)
    equal = p_hat.probs[i] == p_hat.probs[j]
    if not np.any(equal):
        return AxiomCheck(name="symmetry", passed=True, value=0.0, detail="no equal pairs")
    i, j = i[equal], j[equal]
    gaps = np.abs(x.probs[i] - x.probs[j])
    k = int(np.argmax(gaps))
    worst = float(gaps[k])
    return AxiomCheck(
        name="symmetry",
        passed=worst <= tol,
        value=worst,
        witness=(int(i[k]) + 1, int(j[k]) + 1),
    )


def check_order_preservation(
    p_hat: Distribution,
    x: Distribution,
    tol: float,
    min_separation: float = 0.0,
) -> AxiomCheck:
    """
    Ties (|x_i - x_j| ≤ tol) and inversions (x_i - x_j > tol) over pairs with
    p̂_i < p̂_j. Pairs with p̂_j - p̂_i ≤ min_separation are not flagged as ties.
    """
    _same_size(p_hat, x)
    i, j = _pairs(x.n)
    # orient every pair so that p̂_lo < p̂_hi
    swap = p_hat.probs[i] > p_hat.probs[j]
    lo = np.where(swap, j, i)
    hi = np.where(swap, i, j)
    ordered = p_hat.probs[lo] < p_hat.probs[hi]
    lo, hi = lo[ordered], hi[ordered]
    diff = x.probs[hi] - x.probs[lo]
    separation = p_hat.probs[hi] - p_hat.probs[lo]

    tie_mask = (np.abs(diff) <= tol) & (separation > min_separation)
    inv_mask = diff < -tol
    ties = tuple(sorted((int(min(a, b)) + 1, int(max(a, b)) + 1) for a, b in zip(lo[tie_mask], hi[tie_mask])))
    inversions = tuple(
        sorted((int(min(a, b)) + 1, int(max(a, b)) + 1) for a, b in zip(lo[inv_mask], hi[inv_mask]))
    )
    witness = inversions[0] if inversions else (ties[0] if ties else None)
    margin = float(diff.min()) if diff.size else 0.0
    return AxiomCheck(
        name="order_preservation",
        passed=not ties and not inversions,
        value=margin,
        witness=witness,
        ties=ties,
        inversions=inversions,
    )


def ratio_quotients(p_hat: Distribution, x: Distribution) -> np.ndarray:
    _same_size(p_hat, x)
    i, j = _pairs(x.n)
    admissible = p_hat.probs[i] != p_hat.probs[j]
    i, j = i[admissible], j[admissible]
    return (x.probs[i] - x.probs[j]) / (p_hat.probs[i] - p_hat.probs[j])


def check_ratio_preservation(p_hat: Distribution, x: Distribution, tol: float) -> AxiomCheck:
    quotients = ratio_quotients(p_hat, x)
    if quotients.size == 0:
        return AxiomCheck(name="ratio_preservation", passed=True, value=0.0, detail="no admissible pairs")
    spread = float(quotients.max() - quotients.min())
    return AxiomCheck(
        name="ratio_preservation",
        passed=spread <= tol,
        value=spread,
        detail=f"quotients in [{quotients.min():.6f}, {quotients.max():.6f}]",
    )


def check_assumption1(sol: Solution, tol: float, worst=None) -> AxiomCheck:
    """t > tol; with a WorstCase for sol.x the adversary's norm activity must agree."""
    passed = sol.t > tol
    detail = ""
    if worst is not None:
        if worst.norm_active == passed:
            detail = "norm constraint active" if passed else "norm constraint inactive"
        else:
            detail = f"norm_active={worst.norm_active} disagrees with t={sol.t:.3e}"
            logger.warning("⚠️ non-degeneracy cross-check mismatch: %s", detail)
    return AxiomCheck(name="assumption1", passed=passed, value=float(sol.t), detail=detail)


def run_axiom_suite(
    p_hat: Distribution,
    x: Distribution,
    tol: float,
    solution: Solution | None = None,
    worst=None,
) -> AxiomReport:
    report = AxiomReport(
        positivity=check_positivity(x, tol),
        symmetry=check_symmetry(p_hat, x, tol),
        order_preservation=check_order_preservation(p_hat, x, tol),
        ratio_preservation=check_ratio_preservation(p_hat, x, tol),
        tolerance_used=float(tol),
        assumption1=None if solution is None else check_assumption1(solution, tol, worst),
    )
    failed = [c.name for c in report.checks() if not c.passed]
    logger.debug("axiom suite: failed=%s", failed or "none")
    return report


def format_axiom_table(report: AxiomReport) -> str:
    rows = []
    for check in report.checks():
        witness = "" if check.witness is None else ",".join(str(k) for k in check.witness)
        extra = check.detail
        if check.ties:
            extra = "ties " + " ".join(f"({a},{b})" for a, b in check.ties)
        if check.inversions:
            extra = (extra + " " if extra else "") + "inversions " + " ".join(
                f"({a},{b})" for a, b in check.inversions
            )
        rows.append([
            check.name,
            "✅ pass" if check.passed else "❌ fail",
            "" if check.value is None else f"{check.value:.6g}",
            witness,
            extra,
        ])
    return tabulate(rows, headers=["axiom", "result", "value", "witness", "detail"], tablefmt="github")
