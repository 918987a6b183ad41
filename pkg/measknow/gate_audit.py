"""Hadamard gate implementations constrained by a conserved angular momentum.

An implementation is a pair ``(U, ξ)``: a unitary on qubit ⊗ ancilla and
an ancilla vector. The module derives its channel and the vectors
``E^a_b`` with ``U|a⟩|ξ⟩ = Σ_b |b⟩|E^a_b⟩``, computes basis and gate
fidelities, the rms noise of ``S_z`` read out as ``S_x`` after ``U``, the
closed-form error floors, and searches conserving unitaries for the best
achievable fidelity.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.optimize import minimize

from measknow.config import DEFAULT_CONFIG, NumericConfig, OptimizerConfig
from measknow.error_metrics import rms_noise_sq
from measknow.errors import ConsistencyError, DimensionMismatch, InvalidState, NotConserving, NotUnitary
from measknow.fock import number_operator
from measknow.instruments import POVM, KrausInstrument
from measknow.operators import (
    HADAMARD,
    DensityOperator,
    Observable,
    _frozen,
    as_matrix,
    commutator,
    dagger,
    eigenspaces,
    encode_matrix,
    max_norm,
    mean_stddev,
    spin_half,
    square_dim,
    tensor_all,
)
from measknow.sampling import ginibre, random_hermitian, random_pure_vector, random_unitary

logger = logging.getLogger(__name__)

SPIN_Y_PLUS = _frozen(np.array([1.0, 1.0j]) / np.sqrt(2))

# Internal agreement required between two exact expressions of one quantity.
_IDENTITY_TOL = 1e-10
_PATH_TOL = 1e-9

_SX_PROJECTORS = (
    (-0.5, (np.eye(2) - 2 * spin_half()[0]) / 2),
    (0.5, (np.eye(2) + 2 * spin_half()[0]) / 2),
)


@dataclass(frozen=True, eq=False)
class GateImplementation:
    """Coupling unitary on ``C² ⊗ C^{ancilla_dim}`` and ancilla vector ``ξ``.

    ``charge`` optionally records the ancilla ``L_x`` the unitary was built to
    conserve together with the system ``S_x``.
    """

    ancilla_dim: int
    unitary: np.ndarray
    ancilla_vector: np.ndarray
    config: NumericConfig = field(default=DEFAULT_CONFIG, repr=False)
    charge: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        total = 2 * self.ancilla_dim
        u = as_matrix(self.unitary)
        if u.shape != (total, total):
            raise DimensionMismatch(f"Gate unitary has shape {u.shape}, expected {total}x{total}.")
        defect = max_norm(dagger(u) @ u - np.eye(total))
        if defect > self.config.unitarity_tol:
            raise NotUnitary(f"Gate coupling is not unitary: ‖U†U - I‖_max = {defect:.3e}.")
        xi = np.asarray(self.ancilla_vector, dtype=complex).reshape(-1)
        if xi.shape != (self.ancilla_dim,):
            raise DimensionMismatch(f"Ancilla vector has length {xi.size}, expected {self.ancilla_dim}.")
        norm = float(np.linalg.norm(xi))
        if abs(norm - 1.0) > self.config.trace_tol:
            raise InvalidState(f"Ancilla vector has norm {norm:.12f}, expected 1.")
        object.__setattr__(self, "unitary", _frozen(u))
        object.__setattr__(self, "ancilla_vector", _frozen(xi / norm))
        if self.charge is not None:
            charge = Observable(self.charge, label="L_x", config=self.config)
            if charge.dim != self.ancilla_dim:
                raise DimensionMismatch(f"Ancilla charge has dimension {charge.dim}, expected {self.ancilla_dim}.")
            object.__setattr__(self, "charge", charge.matrix)

    @classmethod
    def from_system_unitary(
        cls, u: Any, ancilla_dim: int = 1, ancilla_vector: Optional[Sequence[complex]] = None
    ) -> "GateImplementation":
        """``U ⊗ I`` with the ancilla left untouched (``ξ = |0⟩`` unless given)."""
        if ancilla_vector is None:
            ancilla_vector = np.eye(ancilla_dim)[0]
        return cls(ancilla_dim, np.kron(as_matrix(u), np.eye(ancilla_dim)), np.asarray(ancilla_vector))

    def to_dict(self) -> Dict[str, Any]:
        xi = self.ancilla_vector
        data = {
            "ancilla_dim": self.ancilla_dim,
            "unitary": encode_matrix(self.unitary),
            "ancilla_vector": encode_matrix(xi.reshape(-1, 1)),
        }
        if self.charge is not None:
            data["charge"] = encode_matrix(self.charge)
        return data


@dataclass(frozen=True, eq=False)
class EVectors:
    """``E^a_b`` indexed by input ``a`` and output ``b``."""

    e00: np.ndarray
    e01: np.ndarray
    e10: np.ndarray
    e11: np.ndarray

    def norm_sums(self) -> Tuple[float, float]:
        return (
            float(np.vdot(self.e00, self.e00).real + np.vdot(self.e01, self.e01).real),
            float(np.vdot(self.e10, self.e10).real + np.vdot(self.e11, self.e11).real),
        )


@dataclass(frozen=True, eq=False)
class FidelityReport:
    f0_sq: float
    f1_sq: float
    gate_fidelity: float
    worst_state: np.ndarray
    cb_lower_bound: float

    @property
    def gate_error(self) -> float:
        return 1.0 - self.gate_fidelity**2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "f0_sq": self.f0_sq,
            "f1_sq": self.f1_sq,
            "gate_fidelity": self.gate_fidelity,
            "gate_error": self.gate_error,
            "worst_state": [[float(z.real), float(z.imag)] for z in self.worst_state],
            "cb_lower_bound": self.cb_lower_bound,
        }


@dataclass(frozen=True)
class BoundReport:
    """Lower bound on ``1 - F²`` for one resource scenario."""

    scenario: str
    parameter: float
    floor: float
    delta_lx_sq: float
    achieved_error: Optional[float] = None

    def satisfied(self, tol: float = DEFAULT_CONFIG.optimizer_tol) -> bool:
        return self.achieved_error is None or self.achieved_error >= self.floor - tol

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "parameter": self.parameter,
            "floor": self.floor,
            "delta_lx_sq": self.delta_lx_sq,
            "achieved_error": self.achieved_error,
        }


def _lifted_columns(u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Columns ``U|a⟩|ξ⟩`` for ``a = 0, 1``, shape ``(2 d_A, 2)``."""
    d = xi.shape[0]
    return np.stack([u[:, a * d : (a + 1) * d] @ xi for a in range(2)], axis=1)


def _kraus_stack(u: np.ndarray, xi: np.ndarray) -> np.ndarray:
    # K_j = (I⊗⟨j|)U(I⊗|ξ⟩), stacked along the first axis.
    d = xi.shape[0]
    return _lifted_columns(u, xi).reshape(2, d, 2).transpose(1, 0, 2)


def channel_of(impl: GateImplementation) -> KrausInstrument:
    """One-outcome instrument ``ρ ↦ Tr_A[U(ρ⊗|ξ⟩⟨ξ|)U†]``."""
    kraus = [k for k in _kraus_stack(impl.unitary, impl.ancilla_vector) if max_norm(k) > 1e-13]
    return KrausInstrument((0.0,), (tuple(kraus),), config=impl.config)


def _identity_tol(impl: GateImplementation) -> float:
    # Column norms of U|a⟩|ξ⟩ drift from 1 by at most n·‖U†U - I‖_max.
    u = impl.unitary
    return _IDENTITY_TOL + u.shape[0] * max_norm(dagger(u) @ u - np.eye(u.shape[0]))


def e_vectors(impl: GateImplementation) -> EVectors:
    d = impl.ancilla_dim
    cols = _lifted_columns(impl.unitary, impl.ancilla_vector)
    vectors = EVectors(
        e00=cols[:d, 0], e01=cols[d:, 0],
        e10=cols[:d, 1], e11=cols[d:, 1],
    )
    tol = _identity_tol(impl)
    for a, total in enumerate(vectors.norm_sums()):
        if abs(total - 1.0) > tol:
            raise ConsistencyError(f"‖E^{a}_0‖² + ‖E^{a}_1‖² = {total:.12f}, expected 1.")
    return vectors


def basis_fidelities(impl: GateImplementation) -> Tuple[float, float]:
    """``(F(|0⟩)², F(|1⟩)²)`` from the ``E`` vectors.

    Each value is computed both as ``½‖E^a_0 ± E^a_1‖²`` and as
    ``1 - ½‖E^a_0 ∓ E^a_1‖²``; a disagreement raises ``ConsistencyError``.
    """
    e = e_vectors(impl)
    half_sq = lambda v: 0.5 * float(np.vdot(v, v).real)  # noqa: E731
    f0, f0_alt = half_sq(e.e00 + e.e01), 1.0 - half_sq(e.e00 - e.e01)
    f1, f1_alt = half_sq(e.e10 - e.e11), 1.0 - half_sq(e.e10 + e.e11)
    tol = _identity_tol(impl)
    if abs(f0 - f0_alt) > tol or abs(f1 - f1_alt) > tol:
        raise ConsistencyError(
            f"Basis fidelity identities disagree: F0² {f0:.12f} vs {f0_alt:.12f}, F1² {f1:.12f} vs {f1_alt:.12f}."
        )
    return f0, f1


def bloch_states(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Rows ``cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩``."""
    theta, phi = np.atleast_1d(theta), np.atleast_1d(phi)
    return np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=1).astype(complex)


def _fidelity_sq(kraus: np.ndarray, psis: np.ndarray) -> np.ndarray:
    """``Σ_k |⟨Hψ|K_k|ψ⟩|²`` for each row ``ψ`` of ``psis``."""
    targets = psis @ HADAMARD.T
    amps = np.einsum("ni,kij,nj->nk", np.conj(targets), kraus, psis)
    return np.sum(np.abs(amps) ** 2, axis=1)


def pure_state_fidelity_sq(impl: GateImplementation, psi: Sequence[complex]) -> float:
    """``F(ψ)² = ⟨Hψ|𝓔(|ψ⟩⟨ψ|)|Hψ⟩``."""
    v = np.asarray(psi, dtype=complex).reshape(1, 2)
    v = v / np.linalg.norm(v)
    return float(_fidelity_sq(_kraus_stack(impl.unitary, impl.ancilla_vector), v)[0])


def _cb_lower_bound(kraus: np.ndarray, extra: np.ndarray, samples: int, rng: np.random.Generator) -> float:
    """Largest trace distance between ``(𝓔⊗id)`` and ``(H⊗id)`` on sampled pure inputs."""
    bell = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2)
    inputs = np.vstack([ginibre((samples, 4), rng), extra, bell])
    inputs = inputs / np.linalg.norm(inputs, axis=1, keepdims=True)
    lifted = np.stack([np.kron(k, np.eye(2)) for k in kraus])
    outs = np.einsum("kij,nj->nki", lifted, inputs)
    rho = np.einsum("nki,nkj->nij", outs, np.conj(outs))
    ideal = inputs @ np.kron(HADAMARD, np.eye(2)).T
    diff = rho - np.einsum("ni,nj->nij", ideal, np.conj(ideal))
    distances = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff)), axis=1)
    return float(np.max(distances))


def gate_fidelity(impl: GateImplementation, optimizer: OptimizerConfig = OptimizerConfig()) -> FidelityReport:
    """Gate fidelity ``inf_ψ F(ψ)`` over pure qubit inputs.

    A ``grid_size x grid_size`` Bloch grid (poles included) locates the
    candidates; Nelder-Mead refines the best ``refine_starts`` cells.
    """
    kraus = _kraus_stack(impl.unitary, impl.ancilla_vector)
    n = optimizer.grid_size
    theta, phi = np.meshgrid(np.linspace(0.0, np.pi, n), np.linspace(0.0, 2 * np.pi, n, endpoint=False), indexing="ij")
    theta, phi = theta.ravel(), phi.ravel()
    values = _fidelity_sq(kraus, bloch_states(theta, phi))

    def objective(x: np.ndarray) -> float:
        return float(_fidelity_sq(kraus, bloch_states(x[0], x[1]))[0])

    best_index = int(np.argmin(values))
    best_value, best_point = float(values[best_index]), np.array([theta[best_index], phi[best_index]])
    for idx in np.argsort(values, kind="stable")[: optimizer.refine_starts]:
        result = minimize(
            objective,
            x0=np.array([theta[idx], phi[idx]]),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000},
        )
        if result.fun < best_value:
            best_value, best_point = float(result.fun), result.x

    worst = bloch_states(best_point[0], best_point[1])[0]
    rng = np.random.default_rng(optimizer.seed)
    cb = _cb_lower_bound(kraus, np.kron(worst, [1.0, 0.0]).reshape(1, 4), optimizer.cb_samples, rng)
    f0_sq, f1_sq = basis_fidelities(impl)
    fidelity = float(np.sqrt(np.clip(best_value, 0.0, 1.0)))
    logger.debug("Gate fidelity %.9f (F0² %.6f, F1² %.6f, cb ≥ %.6f).", fidelity, f0_sq, f1_sq, cb)
    return FidelityReport(f0_sq=f0_sq, f1_sq=f1_sq, gate_fidelity=fidelity, worst_state=worst, cb_lower_bound=cb)


def _normalise_qubit(psi: Sequence[complex]) -> np.ndarray:
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if v.shape != (2,):
        raise DimensionMismatch(f"Expected a qubit vector, got length {v.size}.")
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidState("Cannot use the zero vector as an input state.")
    return v / norm


def sz_readout_povm(impl: GateImplementation) -> POVM:
    """``Π₀{a} = (I⊗⟨ξ|)U†(E^{S_x}{a}⊗I)U(I⊗|ξ⟩)``."""
    d = impl.ancilla_dim
    u = impl.unitary
    lift = np.kron(np.eye(2), impl.ancilla_vector.reshape(d, 1))
    outcomes, effects = [], []
    for value, proj in _SX_PROJECTORS:
        outcomes.append(value)
        effects.append(dagger(lift) @ dagger(u) @ np.kron(proj, np.eye(d)) @ u @ lift)
    return POVM(tuple(outcomes), tuple(effects), config=impl.config)


def sz_noise_from_moments(impl: GateImplementation, psi: Sequence[complex]) -> float:
    sz = spin_half()[2]
    state = DensityOperator.pure(_normalise_qubit(psi), config=impl.config)
    return rms_noise_sq(Observable(sz, label="S_z"), sz_readout_povm(impl), state)


def sz_noise_from_vectors(impl: GateImplementation, psi: Sequence[complex]) -> float:
    """``‖S̃_x U|ψ⊗ξ⟩ - U S̃_z|ψ⊗ξ⟩‖²``."""
    sx, _, sz = spin_half()
    identity = np.eye(impl.ancilla_dim)
    v = np.kron(_normalise_qubit(psi), impl.ancilla_vector)
    u = impl.unitary
    w = np.kron(sx, identity) @ (u @ v) - u @ (np.kron(sz, identity) @ v)
    return float(np.vdot(w, w).real)


def sz_noise(impl: GateImplementation, psi: Sequence[complex]) -> float:
    """``ε(S_z)²`` in ``ψ``, checked across the moment and vector forms."""
    moments = sz_noise_from_moments(impl, psi)
    vectors = sz_noise_from_vectors(impl, psi)
    if abs(moments - vectors) > _PATH_TOL:
        raise ConsistencyError(f"ε(S_z)² disagrees between moment ({moments:.12f}) and vector ({vectors:.12f}) forms.")
    return moments


def sz_noise_identity(impl: GateImplementation, psi: Sequence[complex]) -> float:
    """``1 - |⟨0|ψ⟩|² F(|0⟩)² - |⟨1|ψ⟩|² F(|1⟩)²``."""
    c0, c1 = _normalise_qubit(psi)
    f0_sq, f1_sq = basis_fidelities(impl)
    return 1.0 - abs(c0) ** 2 * f0_sq - abs(c1) ** 2 * f1_sq


def total_charge(ancilla_charge: Any, system_charge: Optional[Any] = None) -> np.ndarray:
    """``L̃₁ + L̃₂`` with ``L₁ = S_x`` unless another system charge is given."""
    l2 = as_matrix(ancilla_charge)
    l1 = spin_half()[0] if system_charge is None else as_matrix(system_charge)
    return np.kron(l1, np.eye(square_dim(l2))) + np.kron(np.eye(square_dim(l1)), l2)


def charge_blocks(
    ancilla_charge: Any, system_charge: Optional[Any] = None, config: NumericConfig = DEFAULT_CONFIG
) -> List[np.ndarray]:
    """Orthonormal bases of the total-charge eigenspaces, ascending."""
    Observable(as_matrix(ancilla_charge), label="L", config=config)  # Hermiticity check
    return [basis for _, basis in eigenspaces(total_charge(ancilla_charge, system_charge), config.degeneracy_tol)]


def block_unitary(blocks: Sequence[np.ndarray], unitaries: Sequence[np.ndarray]) -> np.ndarray:
    """``Σ_c V_c W_c V_c†`` for eigenspace bases ``V_c``."""
    dim = blocks[0].shape[0]
    u = np.zeros((dim, dim), dtype=complex)
    for basis, w in zip(blocks, unitaries):
        u += basis @ w @ dagger(basis)
    return u


def conserving_unitary(
    ancilla_charge: Any,
    seed: Optional[int] = None,
    *,
    rng: Optional[np.random.Generator] = None,
    system_charge: Optional[Any] = None,
    block_generators: Optional[Sequence[Any]] = None,
    config: NumericConfig = DEFAULT_CONFIG,
) -> np.ndarray:
    """Unitary commuting with ``S_x⊗I + I⊗L``.

    Block-diagonal in the total-charge eigenbasis: each eigenspace gets a
    Haar-random unitary, or ``exp(-iG)`` when Hermitian block generators
    are supplied.
    """
    blocks = charge_blocks(ancilla_charge, system_charge, config)
    if block_generators is not None:
        if [g.shape[0] for g in map(as_matrix, block_generators)] != [b.shape[1] for b in blocks]:
            raise DimensionMismatch(
                f"Block generators must have sizes {[b.shape[1] for b in blocks]} to match the charge eigenspaces."
            )
        unitaries = [linalg.expm(-1j * as_matrix(g)) for g in block_generators]
    else:
        rng = rng if rng is not None else np.random.default_rng(seed)
        unitaries = [random_unitary(b.shape[1], rng) for b in blocks]
    return block_unitary(blocks, unitaries)


def conservation_residual(impl: GateImplementation, ancilla_charge: Any) -> float:
    """``‖[U, S_x⊗I + I⊗L]‖_max``."""
    return max_norm(commutator(impl.unitary, total_charge(ancilla_charge)))


def floor_from_spread(delta_lx_sq: float) -> float:
    """``1/(4 + 16(ΔL_x)²)``, the error floor for ancilla charge spread ``ΔL_x``."""
    if delta_lx_sq < 0:
        raise ValueError(f"Variance must be non-negative, got {delta_lx_sq}.")
    return 1.0 / (4.0 + 16.0 * delta_lx_sq)


def bound_coherent(mean_photons: float) -> BoundReport:
    if mean_photons < 0:
        raise ValueError(f"Mean photon number must be non-negative, got {mean_photons}.")
    return BoundReport("coherent", float(mean_photons), floor_from_spread(mean_photons), float(mean_photons))


def bound_spin(n: int, entangled: bool) -> BoundReport:
    """Floors for ``n`` ancilla spins: ``(ΔL_x)² ≤ n²/4`` entangled, ``n/4`` separable."""
    if n < 1:
        raise ValueError(f"Number of ancilla spins must be at least 1, got {n}.")
    if entangled:
        return BoundReport("spin_entangled", float(n), 1.0 / (4.0 + 4.0 * n * n), n * n / 4.0)
    return BoundReport("spin_separable", float(n), 1.0 / (4.0 + 4.0 * n), n / 4.0)


def bound_field_state(field_state: DensityOperator, cutoff: int) -> BoundReport:
    """Floor for a field ancilla with ``L_x = N`` on ``span{|0⟩..|cutoff⟩}``.

    States diagonal in the number basis get ``1/4`` (each number state
    does, and the noise is affine in the ancilla state); other states get
    the spread formula with the truncated ``ΔN``.
    """
    if field_state.dim != cutoff + 1:
        raise DimensionMismatch(f"Field state of dimension {field_state.dim} does not match cutoff {cutoff}.")
    mean, stddev = mean_stddev(number_operator(cutoff), field_state)
    m = field_state.matrix
    off_diagonal = max_norm(m - np.diag(np.diag(m)))
    if off_diagonal <= field_state.config.hermiticity_tol:
        populations = np.real(np.diag(m))
        scenario = "number" if populations.max() >= 1.0 - field_state.config.trace_tol else "thermal"
        return BoundReport(scenario, mean, 0.25, stddev**2)
    return BoundReport("coherent", mean, floor_from_spread(stddev**2), stddev**2)


def embed_ancilla_qubit(impl: GateImplementation, qubit_state: Optional[Sequence[complex]] = None) -> GateImplementation:
    """The same gate with one extra, untouched ancilla qubit in ``qubit_state`` (``|0⟩``).

    A recorded charge ``L`` becomes ``L ⊗ I + I ⊗ S_x``, the collective spin
    of the enlarged ancilla.
    """
    q = np.array([1.0, 0.0], dtype=complex) if qubit_state is None else _normalise_qubit(qubit_state)
    charge = None
    if impl.charge is not None:
        charge = np.kron(impl.charge, np.eye(2)) + np.kron(np.eye(impl.ancilla_dim), spin_half()[0])
    return GateImplementation(
        impl.ancilla_dim * 2,
        np.kron(impl.unitary, np.eye(2)),
        np.kron(impl.ancilla_vector, q),
        config=impl.config,
        charge=charge,
    )


# Coarse Bloch grid for the hill-climbing objective.
_COARSE_THETA, _COARSE_PHI = (
    a.ravel() for a in np.meshgrid(np.linspace(0.0, np.pi, 16), np.linspace(0.0, 2 * np.pi, 16, endpoint=False), indexing="ij")
)
_COARSE_STATES = bloch_states(_COARSE_THETA, _COARSE_PHI)


def _surrogate(u: np.ndarray, xi: np.ndarray) -> float:
    return float(np.min(_fidelity_sq(_kraus_stack(u, xi), _COARSE_STATES)))


def _product(factors: Sequence[np.ndarray]) -> np.ndarray:
    return tensor_all(*[f.reshape(-1, 1) for f in factors]).reshape(-1)


def _climb(
    blocks: Sequence[np.ndarray],
    ancilla_dim: int,
    iterations: int,
    seed: np.random.SeedSequence,
    separable_qubits: Optional[int],
    start: Optional[Tuple[np.ndarray, np.ndarray]],
    optimizer: OptimizerConfig,
    config: NumericConfig,
) -> Tuple[float, GateImplementation]:
    rng = np.random.default_rng(seed)
    sizes = [b.shape[1] for b in blocks]
    factors: Optional[List[np.ndarray]] = None
    if start is not None:
        u, xi = start
    else:
        u = block_unitary(blocks, [random_unitary(k, rng) for k in sizes])
        if separable_qubits:
            factors = [random_pure_vector(2, rng) for _ in range(separable_qubits)]
            xi = _product(factors)
        else:
            xi = random_pure_vector(ancilla_dim, rng)

    score = _surrogate(u, xi)
    step = 0.5
    for _ in range(iterations):
        kick = block_unitary(blocks, [linalg.expm(-1j * random_hermitian(k, rng, scale=step)) for k in sizes])
        u_new = u @ kick
        if factors is not None:
            new_factors = [f + step * ginibre((2,), rng) for f in factors]
            new_factors = [f / np.linalg.norm(f) for f in new_factors]
            xi_new = _product(new_factors)
        else:
            xi_new = xi + step * ginibre((ancilla_dim,), rng)
            xi_new = xi_new / np.linalg.norm(xi_new)
        candidate = _surrogate(u_new, xi_new)
        if candidate > score:
            u, xi, score = u_new, xi_new, candidate
            if factors is not None:
                factors = new_factors
            step = min(1.0, step * 1.1)
        else:
            step = max(0.01, step * 0.95)

    # Re-orthonormalise the accumulated product before validation.
    q, r = np.linalg.qr(u)
    u = q * (np.diag(r) / np.abs(np.diag(r)))
    impl = GateImplementation(ancilla_dim, u, xi, config=config)
    return gate_fidelity(impl, optimizer).gate_fidelity, impl


def optimize_fidelity(
    ancilla_charge: Any,
    iterations: int = 150,
    restarts: int = 20,
    seed: int = 0,
    *,
    separable_qubits: Optional[int] = None,
    warm_start: Optional[GateImplementation] = None,
    n_jobs: int = 1,
    optimizer: Optional[OptimizerConfig] = None,
    config: NumericConfig = DEFAULT_CONFIG,
) -> Tuple[GateImplementation, BoundReport]:
    """Random-restart hill climbing over conserving ``(U, ξ)``.

    Each restart perturbs ``U`` by block-diagonal ``exp(-iG)`` kicks and
    ``ξ`` on the unit sphere (or each factor of a product ``ξ`` when
    ``separable_qubits`` is set), keeping improvements of a coarse-grid
    fidelity. Finalists are scored with ``gate_fidelity``; a warm start is
    itself a finalist, so the returned fidelity never drops below it.

    Returns:
        The best implementation and a ``BoundReport`` whose
        ``achieved_error`` is ``1 - F²`` of that implementation.
    """
    charge = Observable(as_matrix(ancilla_charge), label="L", config=config)
    dim = charge.dim
    if separable_qubits is not None and 2**separable_qubits != dim:
        raise DimensionMismatch(f"{separable_qubits} separable qubits need ancilla dimension {2**separable_qubits}, got {dim}.")
    if warm_start is not None:
        if separable_qubits is not None:
            raise ValueError("A warm start cannot be combined with a separable ancilla search.")
        if warm_start.ancilla_dim != dim:
            raise DimensionMismatch(f"Warm start has ancilla dimension {warm_start.ancilla_dim}, expected {dim}.")
        residual = conservation_residual(warm_start, charge)
        if residual > config.commutation_tol:
            raise NotConserving(f"Warm start does not conserve the total charge (residual {residual:.3e}).")

    optimizer = optimizer or OptimizerConfig(seed=seed)
    blocks = charge_blocks(charge, config=config)
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    start = None if warm_start is None else (np.array(warm_start.unitary), np.array(warm_start.ancilla_vector))
    logger.info("Optimising over %d charge blocks of sizes %s with %d restarts.", len(blocks), [b.shape[1] for b in blocks], restarts)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_climb)(blocks, dim, iterations, s, separable_qubits, start if i == 0 else None, optimizer, config)
        for i, s in enumerate(seeds)
    )
    if warm_start is not None:
        results.append((gate_fidelity(warm_start, optimizer).gate_fidelity, warm_start))
    best_fidelity, best = max(results, key=lambda item: item[0])
    best = replace(best, charge=charge.matrix)

    values = np.linalg.eigvalsh(charge.matrix)
    if separable_qubits is not None:
        report = bound_spin(separable_qubits, entangled=False)
    else:
        spread = float(values[-1] - values[0])
        report = BoundReport("spin_entangled", spread, floor_from_spread(spread**2 / 4), spread**2 / 4)
    report = BoundReport(report.scenario, report.parameter, report.floor, report.delta_lx_sq, 1.0 - best_fidelity**2)
    if not report.satisfied(config.optimizer_tol):
        logger.error("Optimised gate error %.9f lies below the floor %.9f.", report.achieved_error, report.floor)
    logger.info("Best gate fidelity %.6f, error %.6f, floor %.6f.", best_fidelity, report.achieved_error, report.floor)
    return best, report
