from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest

import src.experiments as experiments
from src import constants
from src.core import QExponent, validate_distribution
from src.experiments import (
    check_golden_boundary,
    check_golden_experiment1,
    check_golden_sensitivity,
    emit_report,
    reproduce,
    run_boundary_cases,
    run_experiment1,
    run_sensitivity,
)

SENSITIVITY_P_HAT = validate_distribution(constants.SENSITIVITY_P_HAT)


@pytest.fixture(scope="module")
def sweep():
    return run_sensitivity(SENSITIVITY_P_HAT, QExponent(2), constants.SENSITIVITY_EPS_GRID, workers=2)


def test_experiment1_golden(settings):
    result = run_experiment1(settings)
    assert check_golden_experiment1(result) == []
    assert result.axioms.assumption1.passed


def test_sensitivity_golden(sweep):
    assert check_golden_sensitivity(sweep) == []
    np.testing.assert_array_equal(sweep.solutions[0].x.probs, SENSITIVITY_P_HAT.probs)
    np.testing.assert_allclose(sweep.solutions[-1].x.probs, 0.25, atol=1e-3)
    assert all(cert.passed for cert in sweep.certificates)
    recomputed = [np.linalg.norm(s.x.probs - 0.25) for s in sweep.solutions]
    np.testing.assert_allclose(sweep.distances_to_uniform, recomputed, atol=constants.CERT_TOL)


def test_sensitivity_rejects_bad_grid():
    with pytest.raises(ValueError):
        run_sensitivity(SENSITIVITY_P_HAT, QExponent(2), [0.2, 0.1])
    with pytest.raises(ValueError):
        run_sensitivity(SENSITIVITY_P_HAT, QExponent(2), [-0.1, 0.1])


def test_boundary_golden(settings):
    report = run_boundary_cases(settings)
    assert check_golden_boundary(report) == []
    assert report.q_inf.order_preservation.ties == ((2, 3),)
    assert all(r <= constants.CERT_TOL for r in report.q_inf.structural_residuals)
    assert report.q_inf.axioms.positivity.passed and report.q_inf.axioms.symmetry.passed


def test_emit_report_formats(sweep, tmp_path):
    json_path = emit_report(sweep, "json", tmp_path / "sweep.json")
    csv_path = emit_report(sweep, "csv", tmp_path / "sweep.csv")
    svg_path = emit_report(sweep, "svg", tmp_path / "sweep.svg")
    record = json.loads(json_path.read_text())
    assert record["q"] == 2.0
    assert len(record["points"]) == len(constants.SENSITIVITY_EPS_GRID)
    header = csv_path.read_text().splitlines()[0]
    assert header == "epsilon,x1,x2,x3,x4,distance_to_uniform,distance_to_empirical"
    assert svg_path.read_text().lstrip().startswith("<?xml")
    with pytest.raises(ValueError):
        emit_report(sweep, "pdf", tmp_path / "sweep.pdf")


def test_boundary_has_no_figure(settings, tmp_path):
    with pytest.raises(ValueError):
        emit_report(run_boundary_cases(settings), "svg", tmp_path / "boundary.svg")


def test_empty_sweep_writes_header_only(tmp_path):
    empty = run_sensitivity(SENSITIVITY_P_HAT, QExponent(2), [])
    path = emit_report(empty, "csv", tmp_path / "empty.csv")
    assert path.read_text().splitlines() == [
        "epsilon,x1,x2,x3,x4,distance_to_uniform,distance_to_empirical"
    ]


def test_reproduce_writes_every_artifact(tmp_path, settings):
    outcome = reproduce(tmp_path, settings=settings)
    assert outcome.passed, outcome.failures
    names = sorted(p.name for p in outcome.written)
    assert names == [
        "boundary.csv", "boundary.json",
        "experiment1.csv", "experiment1.json", "experiment1.svg",
        "sweep.csv", "sweep.json", "sweep.svg",
    ]


def test_reproduce_respects_format_filter(tmp_path, settings):
    outcome = reproduce(tmp_path, formats=["csv"], settings=settings)
    assert sorted(p.name for p in outcome.written) == ["boundary.csv", "experiment1.csv", "sweep.csv"]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["boundary.csv", "experiment1.csv", "sweep.csv"]


def test_golden_check_reports_failed_certificate(settings):
    result = run_experiment1(settings)
    failed = dataclasses.replace(result, certificate=dataclasses.replace(result.certificate, passed=False))
    failures = check_golden_experiment1(failed)
    assert len(failures) == 1
    assert "certificate failed (method=kkt" in failures[0]


def test_reproduce_skips_uncertified_results(tmp_path, settings, monkeypatch):
    certify = experiments.certify_solution

    def reject_smooth(solution, inst, tolerances):
        cert = certify(solution, inst, tolerances)
        return dataclasses.replace(cert, passed=False) if inst.q.is_smooth else cert

    monkeypatch.setattr(experiments, "certify_solution", reject_smooth)
    outcome = reproduce(tmp_path, formats=["json", "csv"], settings=settings)
    assert not outcome.passed
    assert any(f.startswith("experiment1: certificate failed") for f in outcome.failures)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["boundary.csv", "boundary.json"]
