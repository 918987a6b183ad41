"""Field states on a truncated Fock space ``span{|0⟩, ..., |cutoff⟩}``."""

import numpy as np
from scipy.special import gammaln

from measknow.config import DEFAULT_CONFIG, NumericConfig
from measknow.operators import DensityOperator


def _check_cutoff(cutoff: int) -> None:
    if cutoff < 0:
        raise ValueError(f"Fock cutoff must be non-negative, got {cutoff}.")


def number_operator(cutoff: int) -> np.ndarray:
    _check_cutoff(cutoff)
    return np.diag(np.arange(cutoff + 1)).astype(complex)


def fock_state(n: int, cutoff: int, config: NumericConfig = DEFAULT_CONFIG) -> DensityOperator:
    _check_cutoff(cutoff)
    if not 0 <= n <= cutoff:
        raise ValueError(f"Number state |{n}⟩ lies outside the cutoff {cutoff}.")
    populations = np.zeros(cutoff + 1)
    populations[n] = 1.0
    return DensityOperator(np.diag(populations).astype(complex), config=config)


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    """Amplitudes ``e^{-|α|²/2} αⁿ/√n!``, renormalised after truncation."""
    _check_cutoff(cutoff)
    n = np.arange(cutoff + 1)
    if alpha == 0:
        amps = (n == 0).astype(complex)
    else:
        log_mod = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
        amps = np.exp(log_mod - log_mod.max()) * np.exp(1j * n * np.angle(alpha))
    return amps / np.linalg.norm(amps)


def coherent_state(alpha: complex, cutoff: int, config: NumericConfig = DEFAULT_CONFIG) -> DensityOperator:
    return DensityOperator.pure(coherent_amplitudes(alpha, cutoff), config=config)


def coherent_state_with_mean(
    mean_photons: float, cutoff: int, config: NumericConfig = DEFAULT_CONFIG
) -> DensityOperator:
    """Coherent state with real ``α = √⟨N⟩``."""
    if mean_photons < 0:
        raise ValueError(f"Mean photon number must be non-negative, got {mean_photons}.")
    return coherent_state(np.sqrt(mean_photons), cutoff, config=config)


def thermal_state(mean_photons: float, cutoff: int, config: NumericConfig = DEFAULT_CONFIG) -> DensityOperator:
    """Geometric populations ``pₙ ∝ (n̄/(1+n̄))ⁿ`` over the truncated space."""
    _check_cutoff(cutoff)
    if mean_photons < 0:
        raise ValueError(f"Mean photon number must be non-negative, got {mean_photons}.")
    ratio = mean_photons / (1.0 + mean_photons)
    populations = ratio ** np.arange(cutoff + 1)
    populations = populations / populations.sum()
    return DensityOperator(np.diag(populations).astype(complex), config=config)
