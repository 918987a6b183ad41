"""Seeded random draws of states, observables and measurements.

Every sampler takes an explicit ``numpy.random.Generator`` so sweeps can
hand each task its own stream spawned from one ``SeedSequence``.
"""

from typing import Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

from measknow.config import DEFAULT_CONFIG, NumericConfig
from measknow.instruments import POVM, JointPOVM, KrausInstrument, induced_povm
from measknow.operators import DensityOperator, Observable, dagger


def ginibre(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary; a random phase when ``dim == 1``."""
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(dim, random_state=rng)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = ginibre((dim, dim), rng)
    return scale * (g + dagger(g)) / 2


def random_pure_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = ginibre((dim,), rng)
    return v / np.linalg.norm(v)


def random_pure_state(dim: int, rng: np.random.Generator, config: NumericConfig = DEFAULT_CONFIG) -> DensityOperator:
    return DensityOperator.pure(random_pure_vector(dim, rng), config=config)


def random_density(
    dim: int,
    rng: np.random.Generator,
    rank: Optional[int] = None,
    config: NumericConfig = DEFAULT_CONFIG,
) -> DensityOperator:
    """Ginibre ensemble ``GG†/Tr[GG†]`` with ``G`` of shape ``dim x rank``."""
    g = ginibre((dim, rank or dim), rng)
    m = g @ dagger(g)
    return DensityOperator(m / np.real(np.trace(m)), config=config)


def random_observable(
    dim: int, rng: np.random.Generator, label: str = "", config: NumericConfig = DEFAULT_CONFIG
) -> Observable:
    return Observable(random_hermitian(dim, rng), label=label, config=config)


def random_outcomes(count: int, rng: np.random.Generator) -> Tuple[float, ...]:
    """Distinct labels in ``[-2, 2)``, rounded so they survive a JSON round trip."""
    while True:
        labels = np.round(rng.uniform(-2.0, 2.0, size=count), 6)
        if len(np.unique(labels)) == count:
            return tuple(float(a) for a in labels)


def _normalised_kraus(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    # K_i = G_i S^{-1/2} with S = Σ G†G makes Σ K†K = I.
    gs = ginibre((count, dim, dim), rng)
    s = np.einsum("kji,kjl->il", np.conj(gs), gs)
    values, vectors = linalg.eigh(s)
    inv_root = (vectors / np.sqrt(values)) @ dagger(vectors)
    return gs @ inv_root


def random_instrument(
    dim: int,
    rng: np.random.Generator,
    n_outcomes: Optional[int] = None,
    kraus_per_outcome: Optional[int] = None,
    config: NumericConfig = DEFAULT_CONFIG,
) -> KrausInstrument:
    n_outcomes = n_outcomes or int(rng.integers(2, 5))
    kraus_per_outcome = kraus_per_outcome or int(rng.integers(1, 3))
    ops = _normalised_kraus(n_outcomes * kraus_per_outcome, dim, rng)
    sets = tuple(
        tuple(ops[i * kraus_per_outcome : (i + 1) * kraus_per_outcome]) for i in range(n_outcomes)
    )
    return KrausInstrument(random_outcomes(n_outcomes, rng), sets, config=config)


def random_channel(
    dim: int, rng: np.random.Generator, n_kraus: int = 2, config: NumericConfig = DEFAULT_CONFIG
) -> KrausInstrument:
    return KrausInstrument((0.0,), (tuple(_normalised_kraus(n_kraus, dim, rng)),), config=config)


def random_povm(
    dim: int, rng: np.random.Generator, n_outcomes: Optional[int] = None, config: NumericConfig = DEFAULT_CONFIG
) -> POVM:
    return induced_povm(random_instrument(dim, rng, n_outcomes=n_outcomes, kraus_per_outcome=1, config=config))


def random_joint_povm(
    dim: int, rng: np.random.Generator, nx: int = 2, ny: int = 2, config: NumericConfig = DEFAULT_CONFIG
) -> JointPOVM:
    xs, ys = random_outcomes(nx, rng), random_outcomes(ny, rng)
    ops = _normalised_kraus(nx * ny, dim, rng)
    outcomes = [(x, y) for x in xs for y in ys]
    effects = [dagger(k) @ k for k in ops]
    return JointPOVM(tuple(outcomes), tuple(effects), config=config)


def random_commuting_pair(
    dim: int, rng: np.random.Generator, config: NumericConfig = DEFAULT_CONFIG
) -> Tuple[Observable, Observable]:
    """Two observables diagonal in one shared random eigenbasis."""
    w = random_unitary(dim, rng)
    a = w @ np.diag(rng.uniform(-2.0, 2.0, size=dim)) @ dagger(w)
    b = w @ np.diag(rng.uniform(-2.0, 2.0, size=dim)) @ dagger(w)
    return Observable(a, label="C", config=config), Observable(b, label="D", config=config)
