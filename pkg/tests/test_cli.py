import json
import os
import sys

import numpy as np
import pytest
from click.testing import CliRunner

root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, root)

from measknow.cli import EXIT_INPUT, EXIT_OK, EXIT_VIOLATION, cli, worked_way_example
from measknow.codec import save_object
from measknow.gate_audit import GateImplementation, conserving_unitary
from measknow.instruments import KrausInstrument, MeasurementModel, luders_instrument
from measknow.operators import HADAMARD, PAULI_Z, DensityOperator, Observable, basis_vector, spin_half
from measknow.reports import load_report
from measknow.way_bounds import random_conserving_model

SMALL_CONFIG = {
    "seed": 5,
    "dims": [2, 3],
    "ancilla_dims": [2, 3],
    "chain_samples": 8,
    "joint_samples": 4,
    "zero_noise_samples": 4,
    "dilation_samples": 4,
    "way_samples": 4,
    "sign_samples": 4,
    "iterations": 3,
    "restarts": 1,
    "optimizer": {"grid_size": 16, "refine_starts": 2, "cb_samples": 20},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return str(path)


def invoke(args, tmp_path, name="report.json"):
    out = tmp_path / name
    result = CliRunner().invoke(cli, args + ["--out", str(out)])
    report = load_report(out) if out.exists() else None
    return result, report


def test_worked_way_example_reconciles():
    worked = worked_way_example()
    assert worked["bound"] == pytest.approx(0.125)
    assert worked["maximized_floor"] == pytest.approx(0.125)
    # (½|⟨iS_y⟩|)² / (4·¼ + 4·¼) with ⟨S_y⟩ = ½.
    assert worked["half_scaled_value"] == pytest.approx(0.03125)
    assert 4 * worked["half_scaled_value"] == pytest.approx(worked["bound"])
    assert worked["reconciled"]


def test_verify_relations_passes(config_file, tmp_path):
    result, report = invoke(["verify-relations", "--config", config_file], tmp_path)
    assert result.exit_code == EXIT_OK, result.output
    assert report.ok
    expected = {"instrument_chain", "joint_direct_chain", "joint_povm_chain", "zero_noise", "dilation", "way", "gate"}
    assert expected <= set(report.results["summary"])


def test_verify_relations_is_deterministic(config_file, tmp_path):
    args = ["verify-relations", "--config", config_file, "--sweep", "zero_noise", "--sweep", "gate"]
    _, first = invoke(args, tmp_path, "first.json")
    _, second = invoke(args, tmp_path, "second.json")
    assert first.body_json() == second.body_json()


def test_zero_sample_count_is_an_input_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"chain_samples": 0}))
    result, report = invoke(["verify-relations", "--config", str(path)], tmp_path)
    assert result.exit_code == EXIT_INPUT
    assert report is None


def test_missing_config_file_is_an_input_error(tmp_path):
    result, _ = invoke(["verify-relations", "--config", str(tmp_path / "absent.json")], tmp_path)
    assert result.exit_code == EXIT_INPUT


def test_way_bound_sweep(config_file, tmp_path):
    result, report = invoke(["way-bound", "--config", config_file], tmp_path)
    assert result.exit_code == EXIT_OK, result.output
    assert report.results["worked_example"]["reconciled"]


def test_way_bound_audits_conserving_model(config_file, tmp_path):
    model, _ = random_conserving_model(2, np.random.default_rng(71))
    model_path = tmp_path / "model.json"
    save_object(model, model_path)
    result, report = invoke(["way-bound", "--config", config_file, "--model", str(model_path)], tmp_path)
    assert result.exit_code == EXIT_OK, result.output
    assert report.results["conserving"]
    assert report.ok


def test_way_bound_non_conserving_model_is_diagnostic(config_file, tmp_path):
    probe = DensityOperator.pure(basis_vector(2, 0))
    model = MeasurementModel(2, 2, probe, np.kron(HADAMARD, np.eye(2)), Observable(spin_half()[0]))
    model_path = tmp_path / "model.json"
    save_object(model, model_path)
    result, report = invoke(["way-bound", "--config", config_file, "--model", str(model_path)], tmp_path)
    assert result.exit_code == EXIT_OK
    assert report.results["conserving"] is False


def test_way_bound_rejects_wrong_object(config_file, tmp_path):
    path = tmp_path / "instrument.json"
    save_object(luders_instrument(Observable(PAULI_Z)), path)
    result, _ = invoke(["way-bound", "--config", config_file, "--model", str(path)], tmp_path)
    assert result.exit_code == EXIT_INPUT


def test_gate_audit_field_scenario(config_file, tmp_path):
    result, report = invoke(["gate-audit", "--config", config_file, "--scenario", "coherent"], tmp_path)
    assert result.exit_code == EXIT_OK, result.output
    assert report.results["bound"]["floor"] == pytest.approx(0.05)

    result, report = invoke(["gate-audit", "--config", config_file, "--scenario", "thermal"], tmp_path)
    assert result.exit_code == EXIT_OK
    assert report.results["bound"]["floor"] == 0.25


def test_gate_audit_spin_scenario(config_file, tmp_path):
    result, report = invoke(["gate-audit", "--config", config_file, "--scenario", "spin_entangled"], tmp_path)
    assert result.exit_code == EXIT_OK, result.output
    assert report.results["bound"]["floor"] == pytest.approx(0.125)
    assert report.results["bound"]["achieved_error"] >= 0.125 - 1e-6


def test_gate_audit_conserving_implementation(config_file, tmp_path):
    sx = spin_half()[0]
    impl = GateImplementation(2, conserving_unitary(sx, seed=8), basis_vector(2, 0))
    path = tmp_path / "gate.json"
    save_object(impl, path)
    result, report = invoke(["gate-audit", "--config", config_file, "--implementation", str(path)], tmp_path)
    assert result.exit_code == EXIT_OK, result.output
    assert report.results["bound"]["floor"] == pytest.approx(0.125)


def test_gate_audit_non_conserving_implementation_has_no_bound(config_file, tmp_path):
    path = tmp_path / "gate.json"
    save_object(GateImplementation.from_system_unitary(HADAMARD, 2), path)
    result, report = invoke(["gate-audit", "--config", config_file, "--implementation", str(path)], tmp_path)
    assert result.exit_code == EXIT_OK
    assert report.results["bound"] is None
    assert report.results["fidelity"]["gate_fidelity"] == pytest.approx(1.0, abs=1e-9)


def test_gate_audit_reports_violation_under_loose_tolerance(tmp_path):
    # Accepting the exact Hadamard as "conserving" puts it below the floor.
    config = dict(SMALL_CONFIG, numeric={"commutation_tol": 10.0})
    config_path = tmp_path / "loose.json"
    config_path.write_text(json.dumps(config))
    path = tmp_path / "gate.json"
    save_object(GateImplementation.from_system_unitary(HADAMARD, 2), path)
    result, report = invoke(["gate-audit", "--config", str(config_path), "--implementation", str(path)], tmp_path)
    assert result.exit_code == EXIT_VIOLATION
    assert report.violations


def test_gate_audit_needs_exactly_one_source(config_file, tmp_path):
    result, _ = invoke(["gate-audit", "--config", config_file], tmp_path)
    assert result.exit_code == EXIT_INPUT


def test_optimize_gate_nested(config_file, tmp_path):
    saved = tmp_path / "best.json"
    result, report = invoke(
        ["optimize-gate", "--config", config_file, "--n-spins", "2", "--nested", "--save", str(saved)], tmp_path
    )
    assert result.exit_code == EXIT_OK, result.output
    runs = report.results["runs"]
    assert len(runs) == 2
    assert runs[1]["achieved_error"] <= runs[0]["achieved_error"] + 1e-6
    assert saved.exists()


def test_dilate_instrument(config_file, tmp_path):
    path = tmp_path / "instrument.json"
    save_object(luders_instrument(Observable(PAULI_Z)), path)
    model_out = tmp_path / "model.json"
    result, report = invoke(
        ["dilate", "--config", config_file, "--input", str(path), "--model-out", str(model_out)], tmp_path
    )
    assert result.exit_code == EXIT_OK, result.output
    assert report.results["round_trip_residual"] <= 1e-9
    assert json.loads(model_out.read_text())["type"] == "model"


def test_dilate_rejects_incomplete_instrument(config_file, tmp_path):
    path = tmp_path / "instrument.json"
    save_object(KrausInstrument((0.0,), ((np.eye(2),),)), path)
    data = json.loads(path.read_text())
    data["kraus"][0][0]["entries"][0] = [0.5, 0.0]
    path.write_text(json.dumps(data))
    result, _ = invoke(["dilate", "--config", config_file, "--input", str(path)], tmp_path)
    assert result.exit_code == EXIT_INPUT


def test_optimized_gate_audits_against_its_own_charge(config_file, tmp_path):
    saved = tmp_path / "best.json"
    result, _ = invoke(
        ["optimize-gate", "--config", config_file, "--n-spins", "2", "--save", str(saved)], tmp_path, "optimize.json"
    )
    assert result.exit_code == EXIT_OK, result.output
    assert "charge" in json.loads(saved.read_text())

    result, report = invoke(["gate-audit", "--config", config_file, "--implementation", str(saved)], tmp_path)
    assert result.exit_code == EXIT_OK, result.output
    assert report.results["conservation_residual"] <= 1e-9
    # Collective S_x of two spins spans [-1, 1]: floor 1/(4 + 16·1).
    assert report.results["bound"]["floor"] == pytest.approx(0.05)
    assert report.results["bound"]["achieved_error"] >= 0.05 - 1e-6
