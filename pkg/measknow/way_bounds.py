"""Quantitative Wigner-Araki-Yanase bound for indirect measurement models.

For a model whose coupling conserves ``L̃₁ + L̃₂`` and whose meter commutes
with ``L₂``, the rms noise of any observable ``A`` satisfies

    ε(A)² ≥ |⟨[A, L₁]⟩|² / (4(ΔL₁)² + 4(ΔL₂)²)

with ``L₁`` evaluated in the system state and ``L₂`` in the probe state.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from measknow.config import DEFAULT_CONFIG, NumericConfig
from measknow.error_metrics import rms_noise_sq
from measknow.errors import DegenerateDenominatorWarning, DimensionMismatch
from measknow.gate_audit import conserving_unitary
from measknow.instruments import MeasurementModel, induced_povm, instrument_from_model
from measknow.operators import (
    DensityOperator,
    Observable,
    as_matrix,
    commutator,
    commutator_mean,
    dagger,
    eigenspaces,
    max_norm,
    mean_stddev,
    spin_half,
    spin_matrices,
)
from measknow.sampling import random_density, random_hermitian

logger = logging.getLogger(__name__)

# Below this the denominator (ΔL₁)² + (ΔL₂)² counts as zero.
_DEGENERATE_SPREAD = 1e-14


@dataclass(frozen=True, eq=False)
class ConservationSpec:
    """Additive conserved charge: ``L₁`` on the system, ``L₂`` on the ancilla."""

    system_charge: Observable
    ancilla_charge: Observable

    def __post_init__(self) -> None:
        for name in ("system_charge", "ancilla_charge"):
            value = getattr(self, name)
            if not isinstance(value, Observable):
                object.__setattr__(self, name, Observable(as_matrix(value), label=name))

    def total(self) -> np.ndarray:
        d1, d2 = self.system_charge.dim, self.ancilla_charge.dim
        return np.kron(self.system_charge.matrix, np.eye(d2)) + np.kron(np.eye(d1), self.ancilla_charge.matrix)


@dataclass(frozen=True)
class WayReport:
    achieved_noise_sq: float
    bound: float
    numerator: float
    delta_l1_sq: float
    delta_l2_sq: float
    conservation_residual: float
    meter_residual: float

    @property
    def margin(self) -> float:
        return self.achieved_noise_sq - self.bound

    def hypotheses_hold(self, tol: float = DEFAULT_CONFIG.commutation_tol) -> bool:
        return self.conservation_residual <= tol and self.meter_residual <= tol

    def to_dict(self) -> Dict[str, Any]:
        def finite(x: float) -> Any:
            return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")

        return {
            "achieved_noise_sq": self.achieved_noise_sq,
            "bound": finite(self.bound),
            "margin": finite(self.margin),
            "numerator": self.numerator,
            "denom_terms": [self.delta_l1_sq, self.delta_l2_sq],
            "conservation_residual": self.conservation_residual,
            "meter_residual": self.meter_residual,
        }


def check_conservation(model: MeasurementModel, spec: ConservationSpec) -> Tuple[float, float]:
    """``(‖[U, L̃₁ + L̃₂]‖_max, ‖[M, L₂]‖_max)``."""
    if spec.system_charge.dim != model.system_dim or spec.ancilla_charge.dim != model.ancilla_dim:
        raise DimensionMismatch(
            f"Charges of dimensions ({spec.system_charge.dim}, {spec.ancilla_charge.dim}) do not fit a "
            f"model on ({model.system_dim}, {model.ancilla_dim})."
        )
    unitary_residual = max_norm(commutator(model.unitary, spec.total()))
    meter_residual = max_norm(commutator(model.meter, spec.ancilla_charge))
    return unitary_residual, meter_residual


def _way_terms(
    a: Any, spec: ConservationSpec, state: DensityOperator, probe: DensityOperator
) -> Tuple[float, float, float, float]:
    if state.dim != spec.system_charge.dim or probe.dim != spec.ancilla_charge.dim:
        raise DimensionMismatch("System state and probe must match the charge dimensions.")
    comm = commutator_mean(a, spec.system_charge, state)
    _, d1 = mean_stddev(spec.system_charge, state)
    _, d2 = mean_stddev(spec.ancilla_charge, probe)
    return abs(comm), abs(comm) ** 2, d1**2, d2**2


def _evaluate(comm_abs: float, numerator: float, var1: float, var2: float, tol: float) -> float:
    if comm_abs <= tol:
        return 0.0
    if var1 + var2 <= _DEGENERATE_SPREAD:
        warnings.warn(
            f"WAY bound denominator vanishes with numerator {numerator:.3e}; reporting an infinite bound.",
            DegenerateDenominatorWarning,
            stacklevel=3,
        )
        return float("inf")
    return numerator / (4.0 * var1 + 4.0 * var2)


def way_bound(
    a: Any,
    spec: ConservationSpec,
    state: DensityOperator,
    probe: DensityOperator,
    config: NumericConfig = DEFAULT_CONFIG,
) -> float:
    """Right-hand side of the WAY inequality in ``ρ⊗σ``.

    Zero when ``⟨[A, L₁]⟩`` vanishes within the commutation tolerance;
    ``inf`` with a ``DegenerateDenominatorWarning`` when both charge
    spreads vanish and the numerator does not.
    """
    comm_abs, numerator, var1, var2 = _way_terms(a, spec, state, probe)
    return _evaluate(comm_abs, numerator, var1, var2, config.commutation_tol)


def way_audit(model: MeasurementModel, a: Any, spec: ConservationSpec, state: DensityOperator) -> WayReport:
    """Achieved ``ε(A)²`` of a model against its WAY bound, with hypothesis residuals."""
    unitary_residual, meter_residual = check_conservation(model, spec)
    povm = induced_povm(instrument_from_model(model))
    achieved = rms_noise_sq(a, povm, state)
    comm_abs, numerator, var1, var2 = _way_terms(a, spec, state, model.ancilla_state)
    bound = _evaluate(comm_abs, numerator, var1, var2, model.config.commutation_tol)
    report = WayReport(
        achieved_noise_sq=achieved,
        bound=bound,
        numerator=numerator,
        delta_l1_sq=var1,
        delta_l2_sq=var2,
        conservation_residual=unitary_residual,
        meter_residual=meter_residual,
    )
    if report.hypotheses_hold(model.config.commutation_tol) and report.margin < -model.config.slack_tol:
        logger.error("Conserving model violates the WAY bound: margin %.3e.", report.margin)
    elif not report.hypotheses_hold(model.config.commutation_tol):
        logger.debug(
            "Model outside the theorem's hypotheses (residuals %.3e, %.3e).", unitary_residual, meter_residual
        )
    return report


def commuting_meter(ancilla_charge: Any, rng: np.random.Generator, config: NumericConfig = DEFAULT_CONFIG) -> Observable:
    """Random meter block-diagonal in the eigenspaces of ``L₂``."""
    l2 = as_matrix(ancilla_charge)
    m = np.zeros_like(l2, dtype=complex)
    for _, basis in eigenspaces(l2, config.degeneracy_tol):
        m += basis @ random_hermitian(basis.shape[1], rng) @ dagger(basis)
    return Observable(m, label="M", config=config)


def random_conserving_model(
    ancilla_dim: int,
    rng: np.random.Generator,
    ancilla_charge: Optional[Any] = None,
    config: NumericConfig = DEFAULT_CONFIG,
) -> Tuple[MeasurementModel, ConservationSpec]:
    """Qubit system with ``L₁ = S_x`` and an ancilla charge (spin-j ``J_x`` by default).

    The coupling comes from ``conserving_unitary`` and the meter commutes
    with ``L₂``, so the WAY hypotheses hold by construction.
    """
    sx = spin_half()[0]
    l2 = spin_matrices(ancilla_dim)[0] if ancilla_charge is None else as_matrix(ancilla_charge)
    spec = ConservationSpec(Observable(sx, label="L1", config=config), Observable(l2, label="L2", config=config))
    u = conserving_unitary(l2, rng=rng, system_charge=sx, config=config)
    meter = commuting_meter(l2, rng, config)
    probe = random_density(ancilla_dim, rng, rank=int(rng.integers(1, ancilla_dim + 1)), config=config)
    return MeasurementModel(2, ancilla_dim, probe, u, meter, config=config), spec
