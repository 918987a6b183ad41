"""POVMs and Kraus-form instruments with finite outcome sets.

An instrument is stored as a labelled family of Kraus operators; its
operations, POVM, nonselective channel and dual are derived from that
family. The module also builds measurement models (ancilla, probe state,
coupling unitary, meter) in both directions and Naimark extensions.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, List, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from measknow.config import DEFAULT_CONFIG, NumericConfig
from measknow.errors import (
    ConsistencyError,
    DimensionMismatch,
    IncompleteMeasurement,
    InvalidMeasurement,
    NonCommutingPair,
    NotUnitary,
    OutcomeProbabilityZero,
)
from measknow.operators import (
    DensityOperator,
    Observable,
    _frozen,
    as_matrix,
    basis_vector,
    commutator,
    dagger,
    eigenspaces,
    max_norm,
    partial_trace,
    psd_sqrt,
    spectral,
    square_dim,
)

logger = logging.getLogger(__name__)

# Kraus operators with no entry above this are dropped when deriving instruments.
_KRAUS_PRUNE = 1e-13


def _check_labels(outcomes: Sequence[Hashable], count: int, what: str) -> None:
    if not outcomes:
        raise InvalidMeasurement(f"{what} needs at least one outcome.")
    if len(outcomes) != count:
        raise InvalidMeasurement(f"{what} has {len(outcomes)} outcomes but {count} entries.")
    if len(set(outcomes)) != len(outcomes):
        raise InvalidMeasurement(f"{what} outcome labels must be distinct, got {list(outcomes)}.")


def _validate_effects(effects: Sequence[Any], config: NumericConfig, what: str) -> Tuple[np.ndarray, ...]:
    mats = [as_matrix(e) for e in effects]
    dims = {square_dim(m) for m in mats}
    if len(dims) != 1:
        raise DimensionMismatch(f"{what} effects have differing dimensions {sorted(dims)}.")
    dim = dims.pop()
    checked = []
    for m in mats:
        if max_norm(m - dagger(m)) > config.hermiticity_tol:
            raise InvalidMeasurement(f"{what} has a non-Hermitian effect.")
        m = (m + dagger(m)) / 2
        lowest = float(linalg.eigvalsh(m)[0])
        if lowest < -config.psd_tol:
            raise InvalidMeasurement(f"{what} has an effect with negative eigenvalue {lowest:.3e}.")
        checked.append(_frozen(m))
    defect = max_norm(sum(checked) - np.eye(dim))
    if defect > config.completeness_tol:
        raise IncompleteMeasurement(f"{what} effects do not sum to the identity (defect {defect:.3e}).")
    return tuple(checked)


@dataclass(frozen=True, eq=False)
class POVM:
    """Real outcome labels with one positive effect each, summing to the identity."""

    outcomes: Tuple[float, ...]
    effects: Tuple[np.ndarray, ...]
    config: NumericConfig = field(default=DEFAULT_CONFIG, repr=False)

    def __post_init__(self) -> None:
        outcomes = tuple(float(a) for a in self.outcomes)
        _check_labels(outcomes, len(self.effects), "POVM")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "effects", _validate_effects(self.effects, self.config, "POVM"))

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    def effect(self, outcome: float) -> np.ndarray:
        return self.effects[outcome_index(self.outcomes, outcome, self.config.degeneracy_tol)]

    def is_projective(self) -> bool:
        tol = self.config.completeness_tol
        return all(max_norm(e @ e - e) <= tol for e in self.effects)


@dataclass(frozen=True, eq=False)
class JointPOVM:
    """POVM whose outcomes are pairs ``(x, y)``."""

    outcomes: Tuple[Tuple[float, float], ...]
    effects: Tuple[np.ndarray, ...]
    config: NumericConfig = field(default=DEFAULT_CONFIG, repr=False)

    def __post_init__(self) -> None:
        outcomes = tuple((float(x), float(y)) for x, y in self.outcomes)
        _check_labels(outcomes, len(self.effects), "Joint POVM")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "effects", _validate_effects(self.effects, self.config, "Joint POVM"))

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]


@dataclass(frozen=True, eq=False)
class KrausInstrument:
    """Outcome-labelled Kraus sets whose operations sum to a channel."""

    outcomes: Tuple[float, ...]
    kraus_sets: Tuple[Tuple[np.ndarray, ...], ...]
    config: NumericConfig = field(default=DEFAULT_CONFIG, repr=False)

    def __post_init__(self) -> None:
        outcomes = tuple(float(a) for a in self.outcomes)
        _check_labels(outcomes, len(self.kraus_sets), "Instrument")
        sets = []
        for a, ops in zip(outcomes, self.kraus_sets):
            ops = tuple(_frozen(as_matrix(k)) for k in ops)
            if not ops:
                raise InvalidMeasurement(f"Instrument outcome {a} has an empty Kraus set.")
            sets.append(ops)
        shapes = {k.shape for ops in sets for k in ops}
        if len(shapes) != 1:
            raise DimensionMismatch(f"Instrument Kraus operators have differing shapes {sorted(shapes)}.")
        dim = square_dim(sets[0][0])
        total = sum(dagger(k) @ k for ops in sets for k in ops)
        defect = max_norm(total - np.eye(dim))
        if defect > self.config.completeness_tol:
            raise IncompleteMeasurement(
                f"Kraus operators are not trace preserving: ‖Σ K†K - I‖_max = {defect:.3e}."
            )
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "kraus_sets", tuple(sets))

    @property
    def dim(self) -> int:
        return self.kraus_sets[0][0].shape[0]

    def all_kraus(self) -> List[np.ndarray]:
        return [k for ops in self.kraus_sets for k in ops]

    def kraus_for(self, outcome: float) -> Tuple[np.ndarray, ...]:
        return self.kraus_sets[outcome_index(self.outcomes, outcome, self.config.degeneracy_tol)]


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """Indirect measurement model: ancilla, probe state, coupling and meter."""

    system_dim: int
    ancilla_dim: int
    ancilla_state: DensityOperator
    unitary: np.ndarray
    meter: Observable
    config: NumericConfig = field(default=DEFAULT_CONFIG, repr=False)

    def __post_init__(self) -> None:
        total = self.system_dim * self.ancilla_dim
        u = as_matrix(self.unitary)
        if u.shape != (total, total):
            raise DimensionMismatch(
                f"Coupling unitary has shape {u.shape}, expected {total}x{total}."
            )
        defect = max_norm(dagger(u) @ u - np.eye(total))
        if defect > self.config.unitarity_tol:
            raise NotUnitary(f"Coupling is not unitary: ‖U†U - I‖_max = {defect:.3e}.")
        if self.ancilla_state.dim != self.ancilla_dim or self.meter.dim != self.ancilla_dim:
            raise DimensionMismatch("Probe state and meter must act on the ancilla space.")
        object.__setattr__(self, "unitary", _frozen(u))


@dataclass(frozen=True, eq=False)
class NaimarkExtension:
    """Isometry ``V`` and observable ``C`` with ``V†E^C{a}V = Π{a}``."""

    extended_dim: int
    isometry: np.ndarray
    extended_observable: Observable
    outcomes: Tuple[float, ...]

    def effect(self, outcome: float) -> np.ndarray:
        cfg = self.extended_observable.config
        outcome_index(self.outcomes, outcome, cfg.degeneracy_tol)
        proj = spectral(self.extended_observable, cfg).projector(outcome)
        return dagger(self.isometry) @ proj @ self.isometry


def outcome_index(outcomes: Sequence[float], value: float, tol: float) -> int:
    for i, a in enumerate(outcomes):
        if abs(a - value) <= tol:
            return i
    raise InvalidMeasurement(f"No outcome {value} among {list(outcomes)}.")


def _check_state(instr_dim: int, state: DensityOperator) -> None:
    if state.dim != instr_dim:
        raise DimensionMismatch(f"State of dimension {state.dim} given to a {instr_dim}-dimensional instrument.")


def apply_kraus(kraus: Sequence[np.ndarray], rho: np.ndarray) -> np.ndarray:
    """``Σ K ρ K†`` over the given operators."""
    return sum(k @ rho @ dagger(k) for k in kraus)


def luders_instrument(target: Union[Observable, POVM], config: NumericConfig | None = None) -> KrausInstrument:
    """Lüders instrument: spectral projectors of an observable, or ``√Π{a}`` of a POVM."""
    if isinstance(target, POVM):
        return KrausInstrument(
            target.outcomes,
            tuple((psd_sqrt(e),) for e in target.effects),
            config=config or target.config,
        )
    decomposition = spectral(target)
    return KrausInstrument(
        decomposition.eigenvalues,
        tuple((p,) for p in decomposition.projectors),
        config=config or target.config,
    )


def unitary_instrument(u: Any, outcome: float = 0.0, config: NumericConfig = DEFAULT_CONFIG) -> KrausInstrument:
    return KrausInstrument((outcome,), ((as_matrix(u),),), config=config)


def induced_povm(instr: KrausInstrument) -> POVM:
    """The POVM of an instrument, ``Π{a} = Σ_k K†_{a,k} K_{a,k}``."""
    effects = [sum(dagger(k) @ k for k in ops) for ops in instr.kraus_sets]
    return POVM(instr.outcomes, tuple(effects), config=instr.config)


def output_distribution(instr: KrausInstrument, state: DensityOperator) -> List[Tuple[float, float]]:
    _check_state(instr.dim, state)
    return [
        (a, float(np.real(np.trace(apply_kraus(ops, state.matrix)))))
        for a, ops in zip(instr.outcomes, instr.kraus_sets)
    ]


def output_state(instr: KrausInstrument, state: DensityOperator, outcome: float) -> DensityOperator:
    """State conditioned on ``outcome``, ``𝓘{a}ρ / Tr[𝓘{a}ρ]``."""
    _check_state(instr.dim, state)
    unnormalised = apply_kraus(instr.kraus_for(outcome), state.matrix)
    prob = float(np.real(np.trace(unnormalised)))
    if prob <= instr.config.state_prob_floor:
        raise OutcomeProbabilityZero(
            f"Outcome {outcome} has probability {prob:.3e}; the conditional state is undefined."
        )
    return DensityOperator(unnormalised / prob, config=state.config)


def nonselective_apply(instr: KrausInstrument, state: DensityOperator) -> DensityOperator:
    _check_state(instr.dim, state)
    return DensityOperator(apply_kraus(instr.all_kraus(), state.matrix), config=state.config)


def dual_apply(instr: KrausInstrument, obs: Any) -> Any:
    """Heisenberg-picture map ``T*(X) = Σ K† X K``.

    Returns an ``Observable`` for observable input and a plain matrix
    otherwise (projectors, arbitrary operators).
    """
    x = as_matrix(obs)
    if x.shape != (instr.dim, instr.dim):
        raise DimensionMismatch(f"Operator of shape {x.shape} given to a {instr.dim}-dimensional instrument.")
    result = sum(dagger(k) @ x @ k for k in instr.all_kraus())
    if isinstance(obs, Observable):
        return Observable(result, label=f"T*({obs.label})", config=obs.config)
    return result


def moment_operator(povm: POVM, n: int) -> Observable:
    """``O^{(n)}(Π) = Σ_a a^n Π{a}``."""
    if n < 1:
        raise ValueError(f"Moment order must be positive, got {n}.")
    total = sum((a**n) * e for a, e in zip(povm.outcomes, povm.effects))
    return Observable(total, label=f"O^({n})", config=povm.config)


def povm_mean_stddev(povm: POVM, state: DensityOperator) -> Tuple[float, float]:
    _check_state(povm.dim, state)
    probs = [float(np.real(np.trace(e @ state.matrix))) for e in povm.effects]
    mean = sum(a * p for a, p in zip(povm.outcomes, probs))
    # Σ (a - mean)² p(a) equals ⟨O⁽²⁾⟩ - ⟨O⟩² without the cancellation.
    spread = sum((a - mean) ** 2 * p for a, p in zip(povm.outcomes, probs))
    return mean, float(np.sqrt(max(0.0, spread)))


def _compress(model: MeasurementModel, ancilla_op: np.ndarray) -> np.ndarray:
    """``Tr_K[U†(I⊗X)U(I⊗σ)]`` as an operator on the system."""
    u = model.unitary
    lifted = np.kron(np.eye(model.system_dim), ancilla_op)
    probe = np.kron(np.eye(model.system_dim), model.ancilla_state.matrix)
    return partial_trace(dagger(u) @ lifted @ u @ probe, (model.system_dim, model.ancilla_dim))


def instrument_from_model(model: MeasurementModel) -> KrausInstrument:
    """Kraus form of ``𝓘{a}ρ = Tr_K{[I⊗E^M{a}] U(ρ⊗σ)U†}``.

    Kraus operators are ``(I⊗⟨f|) U (I⊗√s|φ⟩)`` for eigenpairs ``(s, φ)``
    of the probe state and orthonormal vectors ``f`` spanning each meter
    eigenspace. Outcomes whose operations vanish identically are dropped.
    """
    sd, ad = model.system_dim, model.ancilla_dim
    probe_values, probe_vectors = linalg.eigh(model.ancilla_state.matrix)
    columns = []
    for s, phi in zip(probe_values, probe_vectors.T):
        if s <= 0:
            continue
        lifted = np.kron(np.eye(sd), (np.sqrt(s) * phi).reshape(ad, 1))
        columns.append((model.unitary @ lifted).reshape(sd, ad, sd))

    outcomes, sets = [], []
    for value, basis in eigenspaces(model.meter.matrix, model.config.degeneracy_tol):
        ops = []
        for blocks in columns:
            for f in basis.T:
                k = np.einsum("j,ijk->ik", np.conj(f), blocks)
                if max_norm(k) > _KRAUS_PRUNE:
                    ops.append(k)
        if ops:
            outcomes.append(value)
            sets.append(tuple(ops))
    logger.debug("Model realises %d effective outcomes.", len(outcomes))
    return KrausInstrument(tuple(outcomes), tuple(sets), config=model.config)


def model_channel_apply(model: MeasurementModel, state: DensityOperator) -> np.ndarray:
    """``Tr_K[U(ρ⊗σ)U†]``, the nonselective channel of a model."""
    joint = model.unitary @ np.kron(state.matrix, model.ancilla_state.matrix) @ dagger(model.unitary)
    return partial_trace(joint, (model.system_dim, model.ancilla_dim))


def model_dual_apply(model: MeasurementModel, x: Any) -> np.ndarray:
    """Heisenberg picture of a model's channel, ``Tr_K[U†(X⊗I)U(I⊗σ)]``."""
    x = as_matrix(x)
    u = model.unitary
    lifted = np.kron(x, np.eye(model.ancilla_dim))
    probe = np.kron(np.eye(model.system_dim), model.ancilla_state.matrix)
    return partial_trace(dagger(u) @ lifted @ u @ probe, (model.system_dim, model.ancilla_dim))


def complete_unitary(columns: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    """Extend orthonormal ``columns`` placed at ``positions`` to a unitary.

    Free columns are filled in ascending order from the standard basis,
    orthogonalised (twice) against everything accepted so far.
    """
    n = columns.shape[0]
    u = np.zeros((n, n), dtype=complex)
    u[:, list(positions)] = columns
    accepted = [columns[:, i] for i in range(columns.shape[1])]
    fixed = set(positions)
    candidates = iter(range(n))
    for p in [p for p in range(n) if p not in fixed]:
        for c in candidates:
            v = basis_vector(n, c)
            for _ in range(2):
                for b in accepted:
                    v = v - b * np.vdot(b, v)
            norm = np.linalg.norm(v)
            if norm > 1e-6:
                break
        else:
            raise ConsistencyError("Ran out of basis vectors while completing an isometry.")
        v = v / norm
        accepted.append(v)
        u[:, p] = v
    return u


def dilate_instrument(instr: KrausInstrument) -> MeasurementModel:
    """A measurement model with a pure probe realising ``instr``.

    The ancilla has one basis vector per Kraus operator; the isometry
    ``V|ψ⟩ = Σ_{a,k} K_{a,k}|ψ⟩⊗|a,k⟩`` is completed to a unitary and the
    meter reads the outcome label of each ancilla block.
    """
    d = instr.dim
    labelled = [(a, k) for a, ops in zip(instr.outcomes, instr.kraus_sets) for k in ops]
    r = len(labelled)
    isometry = np.stack([k for _, k in labelled], axis=1).reshape(d * r, d)
    u = complete_unitary(isometry, [i * r for i in range(d)])
    meter = Observable(np.diag([a for a, _ in labelled]).astype(complex), label="M", config=instr.config)
    probe = DensityOperator.pure(basis_vector(r, 0), config=instr.config)
    logger.debug("Dilated a %d-outcome instrument with a %d-dimensional ancilla.", len(instr.outcomes), r)
    return MeasurementModel(d, r, probe, u, meter, config=instr.config)


def dilate_channel(channel: KrausInstrument) -> MeasurementModel:
    """Unitary dilation ``T(ρ) = Tr_K[U(ρ⊗|ξ⟩⟨ξ|)U†]`` of a one-outcome instrument."""
    if len(channel.outcomes) != 1:
        raise InvalidMeasurement(
            f"dilate_channel expects a single-outcome instrument, got {len(channel.outcomes)} outcomes."
        )
    return dilate_instrument(channel)


def realize_povm(povm: POVM) -> MeasurementModel:
    """Pure-probe measurement model whose POVM is ``povm``."""
    return dilate_instrument(luders_instrument(povm))


def action_tensor(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Images of all matrix units, ``T[i, j] = Σ K|i⟩⟨j|K†``."""
    ks = np.stack([as_matrix(k) for k in kraus])
    return np.einsum("kai,kbj->ijab", ks, np.conj(ks))


def instrument_distance(first: KrausInstrument, second: KrausInstrument) -> float:
    """Largest difference of the two instruments' actions on matrix units.

    Outcomes are matched by label within the degeneracy tolerance; an
    outcome present in only one instrument contributes its own action.
    """
    if first.dim != second.dim:
        raise DimensionMismatch("Instruments act on spaces of different dimension.")
    tol = first.config.degeneracy_tol
    worst = 0.0
    matched = set()
    for a, ops in zip(first.outcomes, first.kraus_sets):
        action = action_tensor(ops)
        for j, b in enumerate(second.outcomes):
            if abs(a - b) <= tol:
                action = action - action_tensor(second.kraus_sets[j])
                matched.add(j)
                break
        worst = max(worst, max_norm(action))
    for j, ops in enumerate(second.kraus_sets):
        if j not in matched:
            worst = max(worst, max_norm(action_tensor(ops)))
    return worst


def meters_compatible(meters: Sequence[Observable], tol: float = DEFAULT_CONFIG.commutation_tol) -> bool:
    return all(
        max_norm(commutator(m1, m2)) <= tol
        for i, m1 in enumerate(meters)
        for m2 in meters[i + 1 :]
    )


def joint_povm_from_model(model: MeasurementModel, second_meter: Observable) -> JointPOVM:
    """Joint POVM read out by two compatible meters on the same model.

    ``Π(x, y) = Tr_K[U†(I⊗E^{M₁}{x}E^{M₂}{y})U(I⊗σ)]``; pairs whose joint
    spectral projector vanishes are omitted.
    """
    if second_meter.dim != model.ancilla_dim:
        raise DimensionMismatch("Second meter must act on the ancilla space.")
    if not meters_compatible([model.meter, second_meter], model.config.commutation_tol):
        raise NonCommutingPair("Meter observables do not commute; no joint spectral measure exists.")
    first = spectral(model.meter)
    second = spectral(second_meter)
    outcomes, effects = [], []
    for x, p in zip(first.eigenvalues, first.projectors):
        for y, q in zip(second.eigenvalues, second.projectors):
            joint = p @ q
            if max_norm(joint) <= _KRAUS_PRUNE:
                continue
            outcomes.append((x, y))
            effects.append(_compress(model, joint))
    return JointPOVM(tuple(outcomes), tuple(effects), config=model.config)


def naimark_extension(povm: POVM) -> NaimarkExtension:
    """Projective extension of a POVM.

    Projective POVMs are returned as is (``V = I``, ``C = Σ a Π{a}``);
    otherwise ``V|ψ⟩ = Σ_a √Π{a}|ψ⟩⊗|a⟩`` on ``H⊗C^m`` with
    ``C = I⊗diag(a)``.
    """
    d = povm.dim
    if povm.is_projective():
        c = sum(a * e for a, e in zip(povm.outcomes, povm.effects))
        return NaimarkExtension(d, np.eye(d, dtype=complex), Observable(c, label="C", config=povm.config), povm.outcomes)
    m = len(povm.outcomes)
    roots = [psd_sqrt(e) for e in povm.effects]
    isometry = np.stack(roots, axis=1).reshape(d * m, d)
    c = np.kron(np.eye(d), np.diag(povm.outcomes))
    return NaimarkExtension(d * m, isometry, Observable(c, label="C", config=povm.config), povm.outcomes)


def marginals(joint: JointPOVM) -> Tuple[POVM, POVM]:
    """Marginal POVMs ``Π^A(x) = Σ_y Π(x, y)`` and ``Π^B(y) = Σ_x Π(x, y)``."""
    first: Dict[float, np.ndarray] = {}
    second: Dict[float, np.ndarray] = {}
    for (x, y), e in zip(joint.outcomes, joint.effects):
        first[x] = first.get(x, 0) + e
        second[y] = second.get(y, 0) + e
    return (
        POVM(tuple(first), tuple(first.values()), config=joint.config),
        POVM(tuple(second), tuple(second.values()), config=joint.config),
    )
