import os
import sys
import warnings

import numpy as np
import pytest
from scipy import linalg

root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, root)

from measknow.errors import DegenerateDenominatorWarning, DimensionMismatch
from measknow.instruments import MeasurementModel
from measknow.operators import HADAMARD, DensityOperator, Observable, basis_vector, spin_half, spin_matrices
from measknow.sampling import random_density, random_hermitian
from measknow.way_bounds import (
    ConservationSpec,
    WayReport,
    _evaluate,
    check_conservation,
    random_conserving_model,
    way_audit,
    way_bound,
)

SX, SY, SZ = spin_half()
SPIN_Y_PLUS = DensityOperator.pure(np.array([1.0, 1.0j]) / np.sqrt(2))
PROBE_UP = DensityOperator.pure(basis_vector(2, 0))


def sx_spec(scale=1.0):
    return ConservationSpec(Observable(SX, label="L1"), Observable(scale * SX, label="L2"))


def qubit_model(u, meter):
    return MeasurementModel(2, 2, PROBE_UP, u, Observable(meter, label="M"))


def test_check_conservation_examples():
    generator = np.kron(SX, np.eye(2)) + np.kron(np.eye(2), SX)
    conserving = qubit_model(linalg.expm(-0.7j * generator), SX)
    unitary_residual, meter_residual = check_conservation(conserving, sx_spec())
    assert unitary_residual <= 1e-10
    assert meter_residual <= 1e-10

    hadamard = qubit_model(np.kron(HADAMARD, np.eye(2)), SX)
    assert check_conservation(hadamard, sx_spec())[0] > 0.1

    z_meter = qubit_model(np.eye(4), SZ)
    assert check_conservation(z_meter, sx_spec())[1] == pytest.approx(0.5)


def test_check_conservation_dimension_mismatch():
    spec = ConservationSpec(SX, spin_matrices(3)[0])
    with pytest.raises(DimensionMismatch):
        check_conservation(qubit_model(np.eye(4), SX), spec)


def test_way_bound_worked_example():
    bound = way_bound(Observable(SZ), sx_spec(), SPIN_Y_PLUS, PROBE_UP)
    assert bound == pytest.approx(0.125)
    assert 4 * 0.03125 == pytest.approx(bound)


def test_way_bound_commuting_target_is_zero():
    assert way_bound(Observable(SX), sx_spec(), SPIN_Y_PLUS, PROBE_UP) == 0.0


def test_way_bound_decreases_with_probe_spread():
    bounds = [way_bound(SZ, sx_spec(scale), SPIN_Y_PLUS, PROBE_UP) for scale in (1.0, 2.0, 5.0, 20.0, 100.0)]
    assert all(later < earlier for earlier, later in zip(bounds, bounds[1:]))
    assert bounds[-1] < 1e-4


def test_degenerate_denominator_reports_infinity():
    with pytest.warns(DegenerateDenominatorWarning):
        assert _evaluate(0.5, 0.25, 0.0, 0.0, 1e-9) == float("inf")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert _evaluate(0.0, 0.0, 0.0, 0.0, 1e-9) == 0.0


def test_way_report_serialises_infinite_bound():
    report = WayReport(
        achieved_noise_sq=0.3,
        bound=float("inf"),
        numerator=0.25,
        delta_l1_sq=0.0,
        delta_l2_sq=0.0,
        conservation_residual=0.0,
        meter_residual=0.0,
    )
    data = report.to_dict()
    assert data["bound"] == "inf"
    assert data["margin"] == "-inf"
    assert data["denom_terms"] == [0.0, 0.0]


def test_way_audit_respects_bound_on_conserving_models():
    rng = np.random.default_rng(41)
    for ancilla_dim in (2, 3, 4):
        for _ in range(5):
            model, spec = random_conserving_model(ancilla_dim, rng)
            report = way_audit(model, random_hermitian(2, rng), spec, random_density(2, rng))
            assert report.hypotheses_hold()
            assert report.margin >= -1e-8


def test_way_audit_with_commuting_target():
    rng = np.random.default_rng(42)
    model, spec = random_conserving_model(2, rng)
    report = way_audit(model, SX, spec, SPIN_Y_PLUS)
    assert report.bound == 0.0
    assert report.margin == report.achieved_noise_sq >= 0.0


def test_way_audit_flags_non_conserving_model():
    report = way_audit(qubit_model(np.kron(HADAMARD, np.eye(2)), SX), SZ, sx_spec(), SPIN_Y_PLUS)
    assert not report.hypotheses_hold()
