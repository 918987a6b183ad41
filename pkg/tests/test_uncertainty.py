import os
import sys

import numpy as np
import pytest

root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, root)

from measknow.errors import DisturbanceNotZero, NoiseNotZero, NonCommutingPair, NotUncorrelated
from measknow.instruments import JointPOVM, KrausInstrument, luders_instrument
from measknow.operators import PAULI_I, PAULI_X, PAULI_Z, DensityOperator, Observable, tensor
from measknow.sampling import (
    random_commuting_pair,
    random_density,
    random_hermitian,
    random_instrument,
    random_joint_povm,
)
from measknow.uncertainty import (
    heisenberg_check,
    instrument_chain,
    joint_direct_chain,
    joint_povm_chain,
    nondisturbing_bound,
    precise_measurement_bound,
    uncorrelated_products,
)

KET0 = np.array([1.0, 0.0])
PLUS = np.array([1.0, 1.0]) / np.sqrt(2)
SPIN_Y_PLUS = DensityOperator.pure(np.array([1.0, 1.0j]) / np.sqrt(2))
P_UP = np.diag([1.0, 0.0])
P_DOWN = np.diag([0.0, 1.0])


def luders_z():
    return luders_instrument(Observable(PAULI_Z))


def test_direct_chain_exact_commuting_pair():
    rng = np.random.default_rng(31)
    c, d = random_commuting_pair(3, rng)
    report = joint_direct_chain(c, d, c, d, random_density(3, rng))
    assert report.holds
    for key in ("eps_a", "eps_b", "delta_n_a", "delta_n_b", "half_comm_a_b"):
        assert report.terms[key] == pytest.approx(0.0, abs=1e-7)


def test_direct_chain_two_qubit_example():
    a = tensor(PAULI_Z, PAULI_I)
    b = tensor(PAULI_X, PAULI_I)
    c = tensor(PAULI_Z, PAULI_I)
    d = tensor(PAULI_I, PAULI_X)
    state = DensityOperator.pure(np.kron(KET0, PLUS))
    report = joint_direct_chain(a, b, c, d, state)
    assert report.terms["eps_a"] == pytest.approx(0.0, abs=1e-12)
    assert report.terms["eps_b"] == pytest.approx(np.sqrt(2))
    assert report.holds
    assert all(link.slack >= -1e-12 for link in report.links)


def test_direct_chain_rejects_non_commuting_meters():
    with pytest.raises(NonCommutingPair):
        joint_direct_chain(PAULI_Z, PAULI_X, PAULI_Z, PAULI_X, DensityOperator.pure(KET0))


def test_direct_chain_holds_on_random_commuting_meters():
    rng = np.random.default_rng(32)
    for dim in (2, 3, 4):
        for _ in range(10):
            c, d = random_commuting_pair(dim, rng)
            a, b = random_hermitian(dim, rng), random_hermitian(dim, rng)
            assert joint_direct_chain(a, b, c, d, random_density(dim, rng)).holds


def test_joint_povm_chain_with_exact_first_margin():
    joint = JointPOVM(
        ((1.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (-1.0, 1.0)),
        (P_UP / 2, P_UP / 2, P_DOWN / 2, P_DOWN / 2),
    )
    report = joint_povm_chain(PAULI_Z, PAULI_X, joint, SPIN_Y_PLUS)
    assert report.terms["eps_a"] == pytest.approx(0.0, abs=1e-12)
    assert report.terms["half_comm_a_b"] == pytest.approx(1.0)
    assert report.holds

    same = joint_povm_chain(PAULI_Z, PAULI_Z, joint, SPIN_Y_PLUS)
    assert same.links[-1].rhs == pytest.approx(0.0, abs=1e-12)
    assert same.holds


def test_joint_povm_chain_holds_on_random_joints():
    rng = np.random.default_rng(33)
    for dim in (2, 3):
        for _ in range(10):
            joint = random_joint_povm(dim, rng)
            a, b = random_hermitian(dim, rng), random_hermitian(dim, rng)
            assert joint_povm_chain(a, b, joint, random_density(dim, rng)).holds


def test_instrument_chain_examples():
    report = instrument_chain(PAULI_Z, PAULI_X, luders_z(), DensityOperator.pure(PLUS))
    assert report.terms["eps_a"] == pytest.approx(0.0, abs=1e-12)
    assert report.terms["eta_b"] == pytest.approx(np.sqrt(2))
    assert report.terms["delta_a"] == pytest.approx(1.0)
    assert report.terms["half_comm_a_b"] == pytest.approx(0.0, abs=1e-12)
    assert report.holds

    report = instrument_chain(PAULI_Z, PAULI_X, luders_z(), SPIN_Y_PLUS)
    assert report.terms["half_comm_a_b"] == pytest.approx(1.0)
    assert report.holds
    assert set(report.to_dict()) == {"links", "holds", "terms"}


def test_instrument_chain_holds_on_random_instruments():
    rng = np.random.default_rng(34)
    for dim in (2, 3, 4):
        for _ in range(10):
            instr = random_instrument(dim, rng)
            a, b = random_hermitian(dim, rng), random_hermitian(dim, rng)
            report = instrument_chain(a, b, instr, random_density(dim, rng))
            assert report.holds, report.to_dict()


def test_heisenberg_conditions():
    exact = heisenberg_check(PAULI_Z, PAULI_Z, luders_z(), DensityOperator.pure(PLUS))
    assert exact.condition_iii
    assert exact.heisenberg_holds
    assert exact.bound == pytest.approx(0.0, abs=1e-12)

    shifted = KrausInstrument((2.0, 0.0), ((P_UP,), (P_DOWN,)))
    report = heisenberg_check(PAULI_Z, PAULI_Z, shifted, SPIN_Y_PLUS)
    assert report.condition_ii
    assert not report.condition_iii
    assert report.consistent


def test_heisenberg_report_is_consistent_on_random_instruments():
    rng = np.random.default_rng(35)
    for _ in range(20):
        instr = random_instrument(2, rng)
        a, b = random_hermitian(2, rng), random_hermitian(2, rng)
        state = random_density(2, rng)
        report = heisenberg_check(a, b, instr, state)
        assert report.consistent
        assert instrument_chain(a, b, instr, state).holds


def test_nondisturbing_bound():
    link = nondisturbing_bound(PAULI_X, PAULI_Z, luders_z(), DensityOperator.pure(KET0))
    assert link.rhs == pytest.approx(0.0, abs=1e-12)
    assert link.slack >= 0

    link = nondisturbing_bound(PAULI_X, PAULI_Z, luders_z(), SPIN_Y_PLUS)
    assert link.lhs == pytest.approx(np.sqrt(2))
    assert link.rhs == pytest.approx(1.0)

    with pytest.raises(DisturbanceNotZero):
        nondisturbing_bound(PAULI_Z, PAULI_X, luders_z(), SPIN_Y_PLUS)


def test_precise_measurement_bound():
    link = precise_measurement_bound(PAULI_Z, PAULI_X, luders_z(), SPIN_Y_PLUS)
    assert link.lhs == pytest.approx(np.sqrt(2))
    assert link.rhs == pytest.approx(1.0)

    eigen = precise_measurement_bound(PAULI_Z, PAULI_X, luders_z(), DensityOperator.pure(KET0))
    assert eigen.lhs == pytest.approx(0.0, abs=1e-7)
    assert eigen.rhs == pytest.approx(0.0, abs=1e-12)

    with pytest.raises(NoiseNotZero):
        precise_measurement_bound(PAULI_X, PAULI_Z, luders_z(), SPIN_Y_PLUS)


def test_precise_measurement_bound_on_random_spectral_instruments():
    rng = np.random.default_rng(36)
    for dim in (2, 3):
        for _ in range(10):
            a = Observable(random_hermitian(dim, rng))
            b = random_hermitian(dim, rng)
            link = precise_measurement_bound(a, b, luders_instrument(a), random_density(dim, rng))
            assert link.slack >= -1e-8


def unsharp_joint(weight):
    # ¼(I ± wσ_z ± wσ_x) with labels ±1/w, so both marginals are unbiased.
    labels = (1 / weight, -1 / weight)
    outcomes, effects = [], []
    for x in labels:
        for y in labels:
            outcomes.append((x, y))
            effects.append((PAULI_I + weight**2 * (x * PAULI_Z + y * PAULI_X)) / 4)
    return JointPOVM(tuple(outcomes), tuple(effects))


def test_uncorrelated_products():
    report = uncorrelated_products(PAULI_Z, PAULI_X, unsharp_joint(0.6), SPIN_Y_PLUS)
    assert report.holds
    assert report.delta_n_link.rhs == pytest.approx(1.0)
    assert report.eps_product_link.lhs == pytest.approx(1 / 0.36 - 1)


def test_uncorrelated_products_requires_constant_noise():
    joint = JointPOVM(
        ((1.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (-1.0, 1.0)),
        (P_UP / 2, P_UP / 2, P_DOWN / 2, P_DOWN / 2),
    )
    with pytest.raises(NotUncorrelated):
        uncorrelated_products(PAULI_Z, PAULI_X, joint, SPIN_Y_PLUS)
