from __future__ import annotations

import dataclasses
import json

import pytest

import src.experiments as experiments
from src import constants
from src.main import (
    EXIT_CERTIFICATION,
    EXIT_INPUT,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_REPRO,
    main,
)

EXPERIMENT1 = ["--p-hat", "0.0,0.15,0.15,0.30,0.40", "--eps", "0.2", "--q", "2"]


def _run(tmp_path, *args) -> int:
    return main([*args, "--out-dir", str(tmp_path)])


def _read(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


def test_solve_experiment1(tmp_path):
    assert _run(tmp_path, "solve", *EXPERIMENT1) == EXIT_OK
    record = _read(tmp_path, "solution.json")
    assert list(record) == [
        "x", "beta", "lambda", "objective", "t", "degenerate", "iterations", "status",
        "kkt_max_residual", "duality_gap", "instance",
    ]
    for got, want in zip(record["x"], constants.EXPERIMENT1_GOLDEN_X):
        assert got == pytest.approx(want, abs=1e-3)
    assert record["status"] == "Converged"
    assert record["instance"]["q"] == 2.0


@pytest.mark.parametrize(
    "args",
    [
        ["--p-hat", "0.5,0.5", "--eps", "-1", "--q", "2"],
        ["--p-hat", "0.5,0.5", "--eps", "0.1", "--q", "0.5"],
        ["--p-hat", "0.5,0.6", "--eps", "0.1", "--q", "2"],
        ["--eps", "0.1", "--q", "2"],
        ["--p-hat", "0.5,0.5", "--eps", "0.1", "--bogus"],
    ],
)
def test_solve_input_errors(tmp_path, args, capsys):
    assert _run(tmp_path, "solve", *args) == EXIT_INPUT
    assert "❌" in capsys.readouterr().err


def test_solve_negative_radius_message(tmp_path, capsys):
    _run(tmp_path, "solve", "--p-hat", "0.5,0.5", "--eps", "-1", "--q", "2")
    assert "epsilon must be > 0" in capsys.readouterr().err


def test_solve_degenerate(tmp_path):
    assert _run(tmp_path, "solve", "--p-hat", "0.1,0.2,0.3,0.4", "--eps", "5", "--q", "2") == EXIT_OK
    record = _read(tmp_path, "solution.json")
    assert record["x"] == [0.25, 0.25, 0.25, 0.25]
    assert record["degenerate"] is True
    assert record["status"] == "Degenerate"


def test_solve_not_converged(tmp_path):
    assert _run(tmp_path, "solve", *EXPERIMENT1, "--max-iterations", "1") == EXIT_NOT_CONVERGED


def test_instance_file_with_flag_override(tmp_path):
    instance = tmp_path / "instance.json"
    instance.write_text(json.dumps({"p_hat": [0.1, 0.2, 0.3, 0.4], "epsilon": 5.0, "q": "inf"}))
    assert _run(tmp_path, "solve", "--instance", str(instance), "--eps", "0.05") == EXIT_OK
    record = _read(tmp_path, "solution.json")
    assert record["instance"]["epsilon"] == 0.05
    assert record["instance"]["q"] == "inf"
    assert record["degenerate"] is False


def test_certify_inline(tmp_path):
    assert _run(tmp_path, "certify", *EXPERIMENT1) == EXIT_OK
    record = _read(tmp_path, "certificate.json")
    assert record["passed"] is True
    assert record["method"] == "kkt"


def test_certify_solution_file_and_perturbed_copy(tmp_path):
    assert _run(tmp_path, "solve", *EXPERIMENT1) == EXIT_OK
    solution = tmp_path / "solution.json"
    assert _run(tmp_path, "certify", "--solution", str(solution)) == EXIT_OK

    record = json.loads(solution.read_text())
    record["x"][0] += 1e-3
    record["x"][-1] -= 1e-3
    edited = tmp_path / "edited.json"
    edited.write_text(json.dumps(record))
    assert _run(tmp_path, "certify", "--solution", str(edited)) == EXIT_CERTIFICATION


def test_certify_degenerate_uses_gap(tmp_path, capsys):
    assert _run(tmp_path, "certify", "--p-hat", "0.1,0.2,0.3,0.4", "--eps", "5", "--q", "2") == EXIT_OK
    record = _read(tmp_path, "certificate.json")
    assert record["method"] == "gap"
    assert record["assumption1"] is False
    assert "non-degeneracy = fail" in capsys.readouterr().out


def test_laplace(tmp_path):
    assert _run(tmp_path, "laplace", "--counts", "0,1,1", "--c", "1") == EXIT_OK
    record = _read(tmp_path, "laplace.json")
    assert record["x"] == [0.25, 0.375, 0.375]
    assert record["quotient"] == 0.25


def test_axioms_for_laplace_and_given_estimate(tmp_path, capsys):
    assert _run(tmp_path, "axioms", "--p-hat", "0.0,0.2,0.3,0.5", "--estimator", "laplace") == EXIT_OK
    assert "✅ pass" in capsys.readouterr().out

    assert _run(tmp_path, "axioms", "--p-hat", "0.0,0.2,0.3,0.5", "--x", "0.2,0.25,0.25,0.3") == EXIT_OK
    record = _read(tmp_path, "axioms.json")
    assert record["order_preservation"]["passed"] is False
    assert record["order_preservation"]["ties"] == [[2, 3]]


def test_axioms_batch(tmp_path):
    batch = tmp_path / "batch.csv"
    batch.write_text("p_hat,x\n0.5;0.5,0.4;0.6\n0.1;0.9,0.2;0.8\n")
    assert _run(tmp_path, "axioms", "--batch", str(batch)) == EXIT_OK
    records = _read(tmp_path, "axioms.json")
    assert len(records) == 2
    assert records[0]["symmetry"]["passed"] is False
    assert records[1]["symmetry"]["passed"] is True


def test_sweep(tmp_path):
    code = _run(tmp_path, "sweep", "--p-hat", "0.1,0.2,0.3,0.4", "--q", "2", "--eps-grid", "0,0.1,0.3", "--format", "json,csv")
    assert code == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["sweep.csv", "sweep.json"]


def test_repro(tmp_path):
    assert _run(tmp_path, "repro") == EXIT_OK
    assert len(list(tmp_path.iterdir())) == 8


def test_repro_csv_only(tmp_path):
    assert _run(tmp_path, "repro", "--format", "csv") == EXIT_OK
    assert sorted(p.suffix for p in tmp_path.iterdir()) == [".csv", ".csv", ".csv"]


def test_repro_forced_failure(tmp_path, capsys):
    assert _run(tmp_path, "repro", "--max-iterations", "1") == EXIT_REPRO
    assert "did not converge" in capsys.readouterr().err


def test_unknown_format_is_input_error(tmp_path):
    assert _run(tmp_path, "repro", "--format", "pdf") == EXIT_INPUT


def test_certify_rejects_edited_boundary_solution(tmp_path):
    boundary = ["--p-hat", "0.0,0.2,0.3,0.5", "--eps", "0.2", "--q", "inf"]
    assert _run(tmp_path, "solve", *boundary) == EXIT_OK
    solution = tmp_path / "solution.json"
    assert _run(tmp_path, "certify", "--solution", str(solution)) == EXIT_OK

    record = json.loads(solution.read_text())
    record["x"] = [0.1, 0.2, 0.3, 0.4]
    edited = tmp_path / "edited.json"
    edited.write_text(json.dumps(record))
    assert _run(tmp_path, "certify", "--solution", str(edited)) == EXIT_CERTIFICATION
    assert _read(tmp_path, "certificate.json")["passed"] is False


def test_certify_solution_with_tied_costliest_categories(tmp_path):
    record = {
        "x": [0.1, 0.1, 0.8],
        "beta": 1.0,
        "lambda": [0.0, 0.0, 0.0],
        "objective": 1.0,
        "t": 1.0,
        "degenerate": False,
        "iterations": 0,
        "status": "Converged",
        "instance": {"p_hat": [0.2, 0.2, 0.6], "epsilon": 0.9, "q": 2.0},
    }
    path = tmp_path / "tied.json"
    path.write_text(json.dumps(record))
    assert _run(tmp_path, "certify", "--solution", str(path)) == EXIT_CERTIFICATION
    worst = _read(tmp_path, "certificate.json")["worst_case"]
    assert worst["method"] == "face"
    assert worst["loss"] == pytest.approx(2.302585, abs=1e-6)


def test_sweep_with_failed_certificate_writes_nothing(tmp_path, monkeypatch):
    certify = experiments.certify_solution
    monkeypatch.setattr(
        experiments,
        "certify_solution",
        lambda sol, inst, tol: dataclasses.replace(certify(sol, inst, tol), passed=False),
    )
    code = _run(tmp_path, "sweep", "--p-hat", "0.1,0.2,0.3,0.4", "--q", "2", "--eps-grid", "0,0.1")
    assert code == EXIT_CERTIFICATION
    assert list(tmp_path.iterdir()) == []
