import os
import sys

import numpy as np
import pytest

root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, root)

from measknow.config import NumericConfig, OptimizerConfig, RunConfig
from measknow.errors import DimensionMismatch, InvalidState, NotConserving, NotUnitary
from measknow.fock import coherent_state_with_mean, fock_state, thermal_state
from measknow.gate_audit import (
    SPIN_Y_PLUS,
    _identity_tol,
    GateImplementation,
    basis_fidelities,
    bound_coherent,
    bound_field_state,
    bound_spin,
    channel_of,
    charge_blocks,
    conservation_residual,
    conserving_unitary,
    e_vectors,
    embed_ancilla_qubit,
    floor_from_spread,
    gate_fidelity,
    optimize_fidelity,
    pure_state_fidelity_sq,
    sz_noise,
    sz_noise_identity,
)
from measknow.instruments import action_tensor, nonselective_apply
from measknow.operators import (
    HADAMARD,
    PAULI_Z,
    DensityOperator,
    collective_spin,
    mean_stddev,
    spin_half,
    spin_matrices,
)
from measknow.sampling import random_density, random_pure_vector
from measknow.sweeps import random_conserving_implementation

SX = spin_half()[0]
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
XI = np.array([1.0, 0.0])


def test_implementation_contracts():
    with pytest.raises(NotUnitary):
        GateImplementation(2, 2 * np.eye(4), XI)
    with pytest.raises(DimensionMismatch):
        GateImplementation(2, np.eye(6), XI)
    with pytest.raises(InvalidState):
        GateImplementation(2, np.eye(4), np.array([1.0, 1.0]))


def test_channel_examples():
    hadamard = channel_of(GateImplementation.from_system_unitary(HADAMARD, 2))
    assert np.allclose(action_tensor(hadamard.all_kraus()), action_tensor([HADAMARD]))

    identity = channel_of(GateImplementation(2, np.eye(4), XI))
    assert np.allclose(action_tensor(identity.all_kraus()), action_tensor([np.eye(2)]))

    swap = channel_of(GateImplementation(2, SWAP, XI))
    rng = np.random.default_rng(51)
    for _ in range(3):
        out = nonselective_apply(swap, random_density(2, rng))
        assert np.allclose(out.matrix, np.diag([1, 0]))


def test_e_vectors_and_basis_fidelities():
    xi = random_pure_vector(3, np.random.default_rng(52))
    e = e_vectors(GateImplementation(3, np.eye(6), xi))
    assert np.allclose(e.e00, xi)
    assert np.allclose(e.e01, 0)
    assert np.allclose(e.e10, 0)
    assert np.allclose(e.e11, xi)
    assert e.norm_sums() == pytest.approx((1.0, 1.0))

    assert basis_fidelities(GateImplementation(3, np.eye(6), xi)) == pytest.approx((0.5, 0.5))
    assert basis_fidelities(GateImplementation.from_system_unitary(HADAMARD, 3)) == pytest.approx((1.0, 1.0))
    flipped = GateImplementation.from_system_unitary(PAULI_Z @ HADAMARD, 2)
    assert basis_fidelities(flipped) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_gate_fidelity_examples():
    exact = gate_fidelity(GateImplementation.from_system_unitary(HADAMARD, 2))
    assert exact.gate_fidelity == pytest.approx(1.0, abs=1e-9)
    assert exact.gate_error == pytest.approx(0.0, abs=1e-8)
    assert exact.cb_lower_bound <= 1e-9

    identity = gate_fidelity(GateImplementation(2, np.eye(4), XI))
    assert identity.gate_fidelity <= 1e-5
    assert pure_state_fidelity_sq(GateImplementation(2, np.eye(4), XI), identity.worst_state) <= 1e-10
    assert set(identity.to_dict()) == {"f0_sq", "f1_sq", "gate_fidelity", "gate_error", "worst_state", "cb_lower_bound"}


def test_sz_noise_examples():
    assert sz_noise(GateImplementation(2, np.eye(4), XI), SPIN_Y_PLUS) == pytest.approx(0.5)
    assert sz_noise_identity(GateImplementation(2, np.eye(4), XI), SPIN_Y_PLUS) == pytest.approx(0.5)
    rng = np.random.default_rng(53)
    hadamard = GateImplementation.from_system_unitary(HADAMARD, 2)
    for _ in range(3):
        assert sz_noise(hadamard, random_pure_vector(2, rng)) == pytest.approx(0.0, abs=1e-12)


def test_sz_noise_identity_and_floor_on_conserving_implementations():
    rng = np.random.default_rng(54)
    cfg = RunConfig()
    for ancilla_dim in (2, 3, 4, 5):
        for _ in range(5):
            impl = random_conserving_implementation(ancilla_dim, rng, cfg)
            psi = random_pure_vector(2, rng)
            assert sz_noise(impl, psi) == pytest.approx(sz_noise_identity(impl, psi), abs=1e-10)

            jx = spin_matrices(ancilla_dim)[0]
            _, spread = mean_stddev(jx, DensityOperator.pure(impl.ancilla_vector))
            assert sz_noise(impl, SPIN_Y_PLUS) >= floor_from_spread(spread**2) - 1e-9


def test_conserving_unitary_blocks():
    blocks = charge_blocks(SX)
    assert [b.shape[1] for b in blocks] == [1, 2, 1]

    u = conserving_unitary(SX, seed=3)
    assert conservation_residual(GateImplementation(2, u, XI), SX) <= 1e-10

    charge = np.diag([0.0, 0.3])
    assert [b.shape[1] for b in charge_blocks(charge)] == [1, 1, 1, 1]
    u = conserving_unitary(charge, seed=4)
    basis = np.hstack(charge_blocks(charge))
    rotated = basis.conj().T @ u @ basis
    assert np.allclose(rotated, np.diag(np.diag(rotated)))

    with pytest.raises(DimensionMismatch):
        conserving_unitary(SX, block_generators=[np.eye(1), np.eye(1), np.eye(1)])


def test_floor_formulas():
    assert bound_coherent(0.0).floor == pytest.approx(0.25)
    assert bound_coherent(1.0).floor == pytest.approx(0.05)
    assert bound_spin(1, entangled=True).floor == pytest.approx(0.125)
    assert bound_spin(1, entangled=False).floor == pytest.approx(0.125)
    assert bound_spin(5, entangled=True).floor == pytest.approx(1 / 104)
    assert bound_spin(5, entangled=False).floor == pytest.approx(1 / 24)
    with pytest.raises(ValueError):
        bound_spin(0, entangled=True)
    with pytest.raises(ValueError):
        floor_from_spread(-1.0)


def test_field_state_floors():
    number = bound_field_state(fock_state(3, 10), 10)
    assert number.scenario == "number"
    assert number.floor == 0.25

    thermal = bound_field_state(thermal_state(1.0, 12), 12)
    assert thermal.scenario == "thermal"
    assert thermal.floor == 0.25

    coherent = bound_field_state(coherent_state_with_mean(1.0, 16), 16)
    assert coherent.scenario == "coherent"
    assert coherent.floor == pytest.approx(0.05, abs=1e-3)

    with pytest.raises(DimensionMismatch):
        bound_field_state(fock_state(1, 4), 5)


def test_embedding_an_idle_qubit_keeps_the_gate():
    rng = np.random.default_rng(55)
    impl = random_conserving_implementation(2, rng, RunConfig())
    bigger = embed_ancilla_qubit(impl)
    assert bigger.ancilla_dim == 4
    assert basis_fidelities(bigger) == pytest.approx(basis_fidelities(impl))


def test_optimize_fidelity_respects_floor():
    best, report = optimize_fidelity(SX, iterations=10, restarts=2, seed=0)
    assert report.floor == pytest.approx(0.125)
    assert report.achieved_error >= 0.125 - 1e-6
    assert report.satisfied()
    assert conservation_residual(best, SX) <= 1e-9


def test_optimize_fidelity_warm_start_is_monotone():
    optimizer = OptimizerConfig(seed=1)
    first, first_report = optimize_fidelity(SX, iterations=5, restarts=1, seed=1, optimizer=optimizer)
    _, second_report = optimize_fidelity(SX, iterations=5, restarts=1, seed=2, warm_start=first, optimizer=optimizer)
    assert second_report.achieved_error <= first_report.achieved_error + 1e-12


def test_optimize_fidelity_rejects_non_conserving_warm_start():
    with pytest.raises(NotConserving):
        optimize_fidelity(SX, iterations=1, restarts=1, warm_start=GateImplementation.from_system_unitary(HADAMARD, 2))


def test_optimize_fidelity_separable_ancilla():
    charge = np.kron(SX, np.eye(2)) + np.kron(np.eye(2), SX)
    _, report = optimize_fidelity(charge, iterations=5, restarts=1, seed=3, separable_qubits=2)
    assert report.scenario == "spin_separable"
    assert report.floor == pytest.approx(1 / 12)
    assert report.achieved_error >= report.floor - 1e-6


def test_gate_fidelity_sits_below_basis_fidelities_and_above_sz_noise():
    rng = np.random.default_rng(57)
    cfg = RunConfig()
    optimizer = OptimizerConfig(grid_size=16, refine_starts=2, cb_samples=20)
    for ancilla_dim in (2, 3, 4):
        for _ in range(4):
            impl = random_conserving_implementation(ancilla_dim, rng, cfg)
            f0_sq, f1_sq = basis_fidelities(impl)
            fidelity = gate_fidelity(impl, optimizer)
            assert fidelity.gate_fidelity <= min(np.sqrt(f0_sq), np.sqrt(f1_sq)) + 1e-9
            # 1 - F² ≥ 1 - min(f0, f1) ≥ 1 - (f0 + f1)/2 = ε(S_z)² at |S_y=+½⟩.
            assert fidelity.gate_error >= sz_noise(impl, SPIN_Y_PLUS) - 1e-9


def test_charge_follows_embedding_and_optimisation():
    rng = np.random.default_rng(58)
    impl = random_conserving_implementation(2, rng, RunConfig())
    bigger = embed_ancilla_qubit(impl)
    assert np.allclose(bigger.charge, collective_spin(2))
    assert conservation_residual(bigger, bigger.charge) <= 1e-9

    best, _ = optimize_fidelity(collective_spin(2), iterations=2, restarts=1, seed=4, warm_start=bigger)
    assert np.allclose(best.charge, collective_spin(2))


def test_fidelity_identity_tolerance_tracks_unitarity():
    exact = GateImplementation.from_system_unitary(HADAMARD, 2)
    assert _identity_tol(exact) <= 1e-10 + 1e-14

    # Accepted only under a loose unitarity tolerance; the identities still hold to that scale.
    loose = NumericConfig(unitarity_tol=1e-6)
    scaled = GateImplementation(2, (1 + 1e-7) * np.kron(HADAMARD, np.eye(2)), XI, config=loose)
    assert _identity_tol(scaled) > 1e-7
    assert basis_fidelities(scaled) == pytest.approx((1.0, 1.0), abs=1e-6)
