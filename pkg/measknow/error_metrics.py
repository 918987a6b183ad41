"""Noise and disturbance of measurements relative to target observables."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from measknow.errors import DimensionMismatch, InvalidMeasurement
from measknow.instruments import (
    POVM,
    KrausInstrument,
    NaimarkExtension,
    dual_apply,
    moment_operator,
    outcome_index,
)
from measknow.operators import (
    DensityOperator,
    Observable,
    basis_vector,
    encode_matrix,
    expectation,
    hs_norm,
    max_norm,
    psd_sqrt,
    spectral,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NoiseAssessment:
    mean_noise_operator: Observable
    mean_noise: float
    rms_noise: float
    noise_stddev: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean_noise_operator": encode_matrix(self.mean_noise_operator.matrix),
            "mean_noise": self.mean_noise,
            "rms_noise": self.rms_noise,
            "noise_stddev": self.noise_stddev,
        }


@dataclass(frozen=True, eq=False)
class DisturbanceAssessment:
    mean_disturbance_operator: Observable
    mean_disturbance: float
    rms_disturbance: float
    disturbance_stddev: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean_disturbance_operator": encode_matrix(self.mean_disturbance_operator.matrix),
            "mean_disturbance": self.mean_disturbance,
            "rms_disturbance": self.rms_disturbance,
            "disturbance_stddev": self.disturbance_stddev,
        }


@dataclass(frozen=True)
class NoiseClass:
    """``uncorrelated`` iff the mean noise operator is ``offset·I``; ``unbiased`` iff it is 0."""

    uncorrelated: bool
    unbiased: bool
    offset: float


@dataclass(frozen=True)
class ZeroNoiseReport:
    is_spectral: bool
    eps_on_basis: Tuple[float, ...]
    eps_on_faithful: float

    def equivalent(self, tol: float) -> bool:
        """Whether spectrality, faithful-state zero noise and basis zero noise agree."""
        faithful_zero = self.eps_on_faithful <= tol
        basis_zero = all(e <= tol for e in self.eps_on_basis)
        return self.is_spectral == faithful_zero == basis_zero

    def to_dict(self) -> Dict[str, Any]:
        return {
            "is_spectral": self.is_spectral,
            "eps_on_basis": list(self.eps_on_basis),
            "eps_on_faithful": self.eps_on_faithful,
        }


def _as_observable(a: Any, povm: POVM) -> Observable:
    obs = a if isinstance(a, Observable) else Observable(a, config=povm.config)
    if obs.dim != povm.dim:
        raise DimensionMismatch(f"Observable of dimension {obs.dim} measured by a {povm.dim}-dimensional POVM.")
    return obs


def mean_noise_operator(a: Any, povm: POVM) -> Observable:
    """``n(A, Π) = O(Π) - A``."""
    obs = _as_observable(a, povm)
    return Observable(moment_operator(povm, 1).matrix - obs.matrix, label=f"n({obs.label})", config=povm.config)


def rms_noise_sq(a: Any, povm: POVM, state: DensityOperator) -> float:
    """``⟨O⁽²⁾ - O A - A O + A²⟩`` evaluated as ``Σ_a ‖√Π{a} (a - A) √ρ‖²_HS``.

    Each term is the squared norm of a residual, so for spectral measurements
    the ~1e-16 round-off enters squared rather than surviving as ``ε ≈ 1e-8``.
    """
    obs = _as_observable(a, povm)
    if state.dim != povm.dim:
        raise DimensionMismatch(f"State of dimension {state.dim} given to a {povm.dim}-dimensional POVM.")
    cutoff = povm.config.root_cutoff
    identity = np.eye(povm.dim)
    root_state = psd_sqrt(state.matrix)
    total = 0.0
    for outcome, effect in zip(povm.outcomes, povm.effects):
        residual = psd_sqrt(effect, cutoff) @ (outcome * identity - obs.matrix) @ root_state
        total += hs_norm(residual) ** 2
    return total


def assess_noise(a: Any, povm: POVM, state: DensityOperator) -> NoiseAssessment:
    """Mean noise operator, mean noise, rms noise ``ε`` and noise spread ``ΔN``."""
    noise_op = mean_noise_operator(a, povm)
    mean = float(np.real(expectation(noise_op.matrix, state)))
    eps_sq = rms_noise_sq(a, povm, state)
    return NoiseAssessment(
        mean_noise_operator=noise_op,
        mean_noise=mean,
        rms_noise=float(np.sqrt(eps_sq)),
        noise_stddev=float(np.sqrt(max(0.0, eps_sq - mean**2))),
    )


def disturbance_povm(b: Any, channel: KrausInstrument) -> POVM:
    """``T*E^B``: the dual of the nonselective operation applied to ``E^B``."""
    decomposition = spectral(b, channel.config)
    effects = tuple(dual_apply(channel, p) for p in decomposition.projectors)
    return POVM(decomposition.eigenvalues, effects, config=channel.config)


def assess_disturbance(b: Any, channel: KrausInstrument, state: DensityOperator) -> DisturbanceAssessment:
    """``d(B,T)``, its mean, ``η(B,T,ρ) = ε(B, T*E^B, ρ)`` and ``ΔD``."""
    noise = assess_noise(b, disturbance_povm(b, channel), state)
    return DisturbanceAssessment(
        mean_disturbance_operator=noise.mean_noise_operator,
        mean_disturbance=noise.mean_noise,
        rms_disturbance=noise.rms_noise,
        disturbance_stddev=noise.noise_stddev,
    )


def _classify(operator: np.ndarray, tol: float) -> NoiseClass:
    dim = operator.shape[0]
    offset = float(np.real(np.trace(operator))) / dim
    uncorrelated = max_norm(operator - offset * np.eye(dim)) <= tol
    unbiased = uncorrelated and abs(offset) <= tol
    return NoiseClass(uncorrelated=uncorrelated, unbiased=unbiased, offset=0.0 if unbiased else offset)


def classify_noise(a: Any, povm: POVM) -> NoiseClass:
    return _classify(mean_noise_operator(a, povm).matrix, povm.config.class_tol)


def classify_disturbance(b: Any, channel: KrausInstrument) -> NoiseClass:
    povm = disturbance_povm(b, channel)
    return _classify(mean_noise_operator(b, povm).matrix, channel.config.class_tol)


def _matches_spectral_measure(obs: Observable, povm: POVM) -> bool:
    cfg = povm.config
    decomposition = spectral(obs, cfg)
    used = set()
    for value, proj in zip(decomposition.eigenvalues, decomposition.projectors):
        try:
            idx = outcome_index(povm.outcomes, value, cfg.degeneracy_tol)
        except InvalidMeasurement:
            return False
        used.add(idx)
        if max_norm(povm.effects[idx] - proj) > cfg.class_tol:
            return False
    return all(max_norm(e) <= cfg.class_tol for j, e in enumerate(povm.effects) if j not in used)


def zero_noise_equivalence(a: Any, povm: POVM) -> ZeroNoiseReport:
    """Check whether ``Π = E^A`` alongside the rms noise on the maximally mixed and basis states."""
    obs = _as_observable(a, povm)
    basis_eps = tuple(
        float(np.sqrt(rms_noise_sq(obs, povm, DensityOperator.pure(basis_vector(povm.dim, i)))))
        for i in range(povm.dim)
    )
    faithful = float(np.sqrt(rms_noise_sq(obs, povm, DensityOperator.maximally_mixed(povm.dim))))
    return ZeroNoiseReport(
        is_spectral=_matches_spectral_measure(obs, povm),
        eps_on_basis=basis_eps,
        eps_on_faithful=faithful,
    )


def noise_from_extension(a: Any, extension: NaimarkExtension, state: DensityOperator) -> Tuple[float, float]:
    """``ε`` and ``ΔN`` through a Naimark extension ``(W, V, C)``.

    ``ε = ‖CV√ρ - VA√ρ‖_HS`` and ``ΔN = ‖CV√ρ - VA√ρ - n̄ V√ρ‖_HS``.
    """
    obs = a if isinstance(a, Observable) else Observable(a)
    v, c = extension.isometry, extension.extended_observable.matrix
    root = psd_sqrt(state.matrix)
    residual = c @ v @ root - v @ obs.matrix @ root
    mean = float(np.real(expectation(v.conj().T @ c @ v - obs.matrix, state)))
    return hs_norm(residual), hs_norm(residual - mean * v @ root)
