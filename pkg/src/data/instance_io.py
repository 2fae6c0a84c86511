"""
================================================================================
                    INSTANCE AND SOLUTION I/O
================================================================================

MODULE: Loading and serialization of instances, solutions and certificates

DESCRIPTION:
    Reads smoothing instances from JSON files and inline CLI vectors, reads
    batches of (p̂, x) pairs from CSV, and turns every result type into plain
    dictionaries with a stable field order and floats rounded to 6 decimals.

KEY FEATURES:
    ✓ Instance JSON schema: {"p_hat": [...], "epsilon": 0.2, "q": 2 | "inf"}
      ("counts": [...] may replace "p_hat")
    ✓ Solution JSON: {x, beta, lambda, objective, t, degenerate, iterations,
      status, kkt_max_residual, duality_gap, instance}
    ✓ Batch CSV: columns `p_hat` and optional `x`, vectors separated by ";"

USAGE:
    from src.data.instance_io import instance_from_dict, load_json

    inst = instance_from_dict(load_json("instance.json"))

================================================================================
"""

from __future__ import annotations

import json
import logging
import math
import os
from typing import Any

import numpy as np
import pandas as pd

from src import constants
from src.core import (
    DEFAULT_TOLERANCES,
    Instance,
    InvalidInstanceError,
    QExponent,
    Solution,
    SolverStatus,
    Tolerances,
    empirical_distribution,
    validate_distribution,
)
from src.norms import dual_norm
from src.solver import objective_full

logger = logging.getLogger(__name__)


def rounded(value: Any, decimals: int | None = constants.FLOAT_DECIMALS) -> Any:
    """
    Recursively round floats; numpy scalars and arrays become plain Python.

    decimals=None keeps full precision (solution files that are read back).
    """
    if isinstance(value, dict):
        return {k: rounded(v, decimals) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [rounded(v, decimals) for v in value]
    if isinstance(value, np.ndarray):
        return [rounded(v, decimals) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if decimals is None:
            return value
        # + 0.0 folds -0.0 into 0.0
        return round(value, decimals) + 0.0
    return value


def parse_vector(text: str) -> list[float]:
    """'0.1,0.2, 0.7' or '0.1;0.2;0.7' -> [0.1, 0.2, 0.7]."""
    tokens = [t for t in str(text).replace(";", ",").split(",") if t.strip()]
    if not tokens:
        raise InvalidInstanceError(f"empty vector: {text!r}")
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise InvalidInstanceError(f"cannot parse vector {text!r}") from exc


def load_json(file_path) -> dict:
    """
    Load a JSON object from disk.

    Raises:
        FileNotFoundError: If file doesn't exist
        InvalidInstanceError: If the content is not a JSON object
    """
    try:
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"File not found: {file_path}")
        with open(file_path, encoding="utf-8") as handle:
            data = json.load(handle)
        if not isinstance(data, dict):
            raise InvalidInstanceError(f"{file_path} must contain a JSON object")
        logger.debug("loaded %d keys from %s", len(data), os.path.basename(str(file_path)))
        return data
    except json.JSONDecodeError as exc:
        logger.error("invalid JSON in %s: %s", file_path, exc)
        raise InvalidInstanceError(f"invalid JSON in {file_path}: {exc}") from exc


def instance_from_dict(data: dict) -> Instance:
    if "p_hat" in data and data["p_hat"] is not None:
        p_hat = validate_distribution(_vector(data["p_hat"]))
    elif "counts" in data and data["counts"] is not None:
        p_hat = empirical_distribution(_vector(data["counts"]))
    else:
        raise InvalidInstanceError("instance needs 'p_hat' or 'counts'")
    if data.get("epsilon") is None:
        raise InvalidInstanceError("instance needs 'epsilon'")
    q = QExponent.parse(data.get("q", 2.0))
    return Instance(p_hat, float(data["epsilon"]), q)


def _vector(value) -> list[float]:
    if isinstance(value, str):
        return parse_vector(value)
    return [float(v) for v in value]


def instance_to_dict(inst: Instance) -> dict:
    return {
        "p_hat": inst.p_hat.tolist(),
        "epsilon": inst.epsilon,
        "q": inst.q.to_json(),
    }


def solution_to_dict(
    sol: Solution,
    inst: Instance | None = None,
    kkt_max_residual: float | None = None,
    duality_gap: float | None = None,
    decimals: int | None = None,
) -> dict:
    record = {
        "x": sol.x.tolist(),
        "beta": sol.beta,
        "lambda": sol.lam.tolist(),
        "objective": sol.objective,
        "t": sol.t,
        "degenerate": sol.degenerate,
        "iterations": sol.iterations,
        "status": sol.status.value,
        "kkt_max_residual": kkt_max_residual,
        "duality_gap": duality_gap,
    }
    if inst is not None:
        record["instance"] = instance_to_dict(inst)
    return rounded(record, decimals)


def solution_from_dict(
    data: dict,
    inst: Instance,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Solution:
    """
    Rebuild a Solution for `inst`; t and the degeneracy flag are recomputed
    from (x, β, λ) rather than trusted.
    """
    try:
        x = validate_distribution(_vector(data["x"]), feas_tol=tolerances.feas_tol)
        beta = float(data["beta"])
    except KeyError as exc:
        raise InvalidInstanceError(f"solution is missing field {exc}") from exc
    if x.n != inst.n:
        raise InvalidInstanceError(f"solution has {x.n} categories, instance has {inst.n}")
    lam = np.asarray(_vector(data.get("lambda") or [0.0] * x.n))
    if lam.size != x.n or np.any(lam < 0):
        raise InvalidInstanceError("lambda must hold n nonnegative entries")
    if np.any(x.probs <= 0):
        raise InvalidInstanceError("solution x must be strictly positive")
    t = dual_norm(-np.log(x.probs) - beta + lam, inst.q).value
    degenerate = t <= tolerances.degen_tol
    status = SolverStatus(data.get("status", SolverStatus.CONVERGED.value))
    return Solution(
        x=x,
        beta=beta,
        lam=lam,
        objective=objective_full(x, lam, beta, inst),
        t=t,
        degenerate=degenerate,
        iterations=int(data.get("iterations", 0)),
        status=status,
    )


def load_solution(file_path, inst: Instance | None = None) -> tuple[Solution, Instance]:
    """Solution file plus its instance (embedded `instance` key unless given)."""
    data = load_json(file_path)
    if inst is None:
        if "instance" not in data:
            raise InvalidInstanceError(f"{file_path} has no 'instance'; pass instance flags")
        inst = instance_from_dict(data["instance"])
    return solution_from_dict(data, inst), inst


def load_batch_csv(file_path) -> pd.DataFrame:
    """
    Load (p̂, x) pairs for batch axiom checks.

    Raises:
        FileNotFoundError: If file doesn't exist
        InvalidInstanceError: If the `p_hat` column is missing
    """
    try:
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"File not found: {file_path}")
        df = pd.read_csv(file_path, dtype=str)
        if "p_hat" not in df.columns:
            raise InvalidInstanceError(f"{file_path} needs a 'p_hat' column")
        logger.info("✅ Loaded %d rows from %s", len(df), os.path.basename(str(file_path)))
        return df
    except pd.errors.EmptyDataError as exc:
        raise InvalidInstanceError(f"{file_path} is empty") from exc


def worst_case_to_dict(wc) -> dict:
    return {
        "e": wc.e,
        "p": wc.p.tolist(),
        "loss": wc.loss,
        "norm_active": wc.norm_active,
        "nu_estimate": wc.nu_estimate,
        "beta": wc.beta,
        "dual_bound": wc.dual_bound,
        "method": wc.method,
    }


def kkt_report_to_dict(report) -> dict:
    return {
        "stationarity_x": report.stationarity_x,
        "stationarity_lambda": report.stationarity_lambda,
        "stationarity_beta": report.stationarity_beta,
        "complementarity": report.complementarity,
        "gamma": report.gamma,
        "xi": report.xi,
        "max_residual": report.max_residual,
        "gamma_deviation": report.gamma_deviation,
        "xi_deviation": report.xi_deviation,
    }


def certificate_to_dict(cert) -> dict:
    return rounded({
        "passed": cert.passed,
        "method": cert.method,
        "duality_gap": cert.duality_gap,
        "oracle_slack": cert.oracle_slack,
        "assumption1": cert.assumption1,
        "kkt": None if cert.kkt is None else kkt_report_to_dict(cert.kkt),
        "worst_case": worst_case_to_dict(cert.worst_case),
    })


def axiom_check_to_dict(check) -> dict:
    return {
        "passed": check.passed,
        "value": check.value,
        "witness": None if check.witness is None else list(check.witness),
        "ties": [list(p) for p in check.ties],
        "inversions": [list(p) for p in check.inversions],
        "detail": check.detail,
    }


def axiom_report_to_dict(report) -> dict:
    record = {
        "positivity": axiom_check_to_dict(report.positivity),
        "symmetry": axiom_check_to_dict(report.symmetry),
        "order_preservation": axiom_check_to_dict(report.order_preservation),
        "ratio_preservation": axiom_check_to_dict(report.ratio_preservation),
        "tolerance_used": report.tolerance_used,
    }
    if report.assumption1 is not None:
        record["assumption1"] = axiom_check_to_dict(report.assumption1)
    return rounded(record)
