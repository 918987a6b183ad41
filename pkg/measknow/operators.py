"""Dense operators with quantum-mechanical contracts.

Matrices are plain ``numpy`` complex arrays. ``Observable`` and
``DensityOperator`` wrap them with the Hermiticity, positivity and trace
checks every other module relies on, and freeze the underlying buffer.
Units follow hbar = 1, so spin-1/2 operators are Pauli matrices over two.
"""

import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy import linalg

from measknow.config import DEFAULT_CONFIG, NumericConfig
from measknow.errors import DimensionMismatch, InvalidMatrix, InvalidState, NotHermitian

logger = logging.getLogger(__name__)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


def as_matrix(m: Any) -> np.ndarray:
    """Return ``m`` as a finite two-dimensional complex array."""
    if isinstance(m, (Observable, DensityOperator)):
        return m.matrix
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidMatrix(f"Expected a non-empty 2-d matrix, got shape {arr.shape}.")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("Matrix has non-finite entries.")
    return arr


def square_dim(m: np.ndarray) -> int:
    rows, cols = m.shape
    if rows != cols:
        raise DimensionMismatch(f"Expected a square matrix, got {rows}x{cols}.")
    return rows


def max_norm(m: Any) -> float:
    """Largest entry modulus, ``‖m‖_max``."""
    arr = np.asarray(m)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


def hs_norm(m: Any) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.linalg.norm(as_matrix(m), "fro"))


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(m))


def commutator(a: Any, b: Any) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_dim(a, b)
    return a @ b - b @ a


def _check_same_dim(*mats: np.ndarray) -> None:
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise DimensionMismatch(f"Operands have incompatible shapes {sorted(shapes)}.")


@dataclass(frozen=True, eq=False)
class Observable:
    """A Hermitian matrix with a display label."""

    matrix: np.ndarray
    label: str = ""
    config: NumericConfig = field(default=DEFAULT_CONFIG, repr=False)

    def __post_init__(self) -> None:
        m = as_matrix(self.matrix)
        square_dim(m)
        defect = max_norm(m - dagger(m))
        if defect > self.config.hermiticity_tol:
            raise NotHermitian(
                f"Observable {self.label or '<unnamed>'} is not Hermitian (defect {defect:.3e})."
            )
        object.__setattr__(self, "matrix", _frozen((m + dagger(m)) / 2))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A positive semidefinite, unit-trace matrix."""

    matrix: np.ndarray
    config: NumericConfig = field(default=DEFAULT_CONFIG, repr=False)

    def __post_init__(self) -> None:
        m = as_matrix(self.matrix)
        square_dim(m)
        if max_norm(m - dagger(m)) > self.config.hermiticity_tol:
            raise InvalidState("Density operator is not Hermitian.")
        m = (m + dagger(m)) / 2
        lowest = float(linalg.eigvalsh(m)[0])
        if lowest < -self.config.psd_tol:
            raise InvalidState(f"Density operator has negative eigenvalue {lowest:.3e}.")
        trace = float(np.real(np.trace(m)))
        if abs(trace - 1.0) > self.config.trace_tol:
            raise InvalidState(f"Density operator has trace {trace:.12f}, expected 1.")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, vector: Sequence[complex], config: NumericConfig = DEFAULT_CONFIG) -> "DensityOperator":
        """Projector onto ``vector``, normalised first."""
        v = np.asarray(vector, dtype=complex).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise InvalidState("Cannot build a pure state from the zero vector.")
        v = v / norm
        return cls(np.outer(v, np.conj(v)), config=config)

    @classmethod
    def maximally_mixed(cls, dim: int, config: NumericConfig = DEFAULT_CONFIG) -> "DensityOperator":
        return cls(np.eye(dim) / dim, config=config)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Distinct eigenvalues in ascending order with their spectral projectors.

    ``tol`` is the degeneracy tolerance the eigenvalues were clustered with.
    """

    eigenvalues: Tuple[float, ...]
    projectors: Tuple[np.ndarray, ...]
    tol: float = DEFAULT_CONFIG.degeneracy_tol

    def projector(self, value: float) -> np.ndarray:
        """``E^A({value})``: the eigenprojector, or zero when ``value`` is not in the spectrum."""
        for eigenvalue, proj in zip(self.eigenvalues, self.projectors):
            if abs(eigenvalue - value) <= self.tol:
                return proj
        return np.zeros_like(self.projectors[0])

    def reconstruct(self) -> np.ndarray:
        return sum(v * p for v, p in zip(self.eigenvalues, self.projectors))


def eigenspaces(m: Any, tol: float = DEFAULT_CONFIG.degeneracy_tol) -> List[Tuple[float, np.ndarray]]:
    """Group the eigenvectors of a Hermitian matrix by eigenvalue.

    Neighbouring eigenvalues closer than ``tol`` are merged into one
    cluster whose value is the cluster mean.

    Returns:
        List of ``(eigenvalue, basis)`` pairs, ascending, where ``basis``
        holds an orthonormal basis of the eigenspace in its columns.
    """
    m = as_matrix(m)
    values, vectors = linalg.eigh((m + dagger(m)) / 2)
    clusters: List[List[int]] = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] < tol:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return [(float(np.mean(values[idx])), vectors[:, idx]) for idx in clusters]


def spectral(obs: Any, config: NumericConfig | None = None) -> SpectralDecomposition:
    """Spectral measure of an observable, one projector per distinct eigenvalue."""
    if not isinstance(obs, Observable):
        obs = Observable(as_matrix(obs), config=config or DEFAULT_CONFIG)
    cfg = config or obs.config
    spaces = eigenspaces(obs.matrix, cfg.degeneracy_tol)
    return SpectralDecomposition(
        eigenvalues=tuple(value for value, _ in spaces),
        projectors=tuple(_frozen(basis @ dagger(basis)) for _, basis in spaces),
        tol=cfg.degeneracy_tol,
    )


def expectation(op: Any, state: DensityOperator) -> complex:
    """``Tr[op ρ]``."""
    m = as_matrix(op)
    if m.shape != state.matrix.shape:
        raise DimensionMismatch(
            f"Operator of shape {m.shape} does not act on a state of dimension {state.dim}."
        )
    return complex(np.einsum("ij,ji->", m, state.matrix))


def mean_stddev(obs: Any, state: DensityOperator) -> Tuple[float, float]:
    """Mean ``Tr[Aρ]`` and standard deviation ``(⟨A²⟩ - ⟨A⟩²)^{1/2}``.

    The variance is clamped at zero before the square root.
    """
    a = as_matrix(obs)
    mean = float(np.real(expectation(a, state)))
    centred = a - mean * np.eye(a.shape[0])
    variance = float(np.real(expectation(centred @ centred, state)))
    return mean, float(np.sqrt(max(0.0, variance)))


def commutator_mean(a: Any, b: Any, state: DensityOperator) -> complex:
    """``Tr[(AB - BA)ρ]``; purely imaginary for Hermitian ``A`` and ``B``."""
    return expectation(commutator(a, b), state)


def tensor(a: Any, b: Any) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def tensor_all(*mats: Any) -> np.ndarray:
    return reduce(tensor, mats)


def partial_trace(m: Any, dims: Tuple[int, int], keep: str = "first") -> np.ndarray:
    """Trace out one factor of a bipartite operator.

    Args:
        m: Operator on a ``d1*d2`` dimensional product space.
        dims: The factor dimensions ``(d1, d2)``.
        keep: ``"first"`` returns the operator on the ``d1`` factor,
            ``"second"`` the one on the ``d2`` factor.
    """
    m = as_matrix(m)
    d1, d2 = dims
    if m.shape != (d1 * d2, d1 * d2):
        raise DimensionMismatch(f"Matrix of shape {m.shape} does not match factors {dims}.")
    blocks = m.reshape(d1, d2, d1, d2)
    if keep == "first":
        return np.einsum("ajbj->ab", blocks)
    if keep == "second":
        return np.einsum("iaib->ab", blocks)
    raise ValueError(f"keep must be 'first' or 'second', got {keep!r}.")


def psd_sqrt(m: Any, cutoff: float = 0.0) -> np.ndarray:
    """Square root of a positive semidefinite matrix.

    Eigenvalues at or below ``cutoff`` are treated as zero, so a projector
    carrying ~1e-16 round-off stays a projector instead of picking up ~1e-8
    components.
    """
    m = as_matrix(m)
    values, vectors = linalg.eigh((m + dagger(m)) / 2)
    values = np.where(values > cutoff, values, 0.0)
    return (vectors * np.sqrt(values)) @ dagger(vectors)


def basis_vector(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def is_unitary(u: Any, tol: float = DEFAULT_CONFIG.unitarity_tol) -> bool:
    u = as_matrix(u)
    return u.shape[0] == u.shape[1] and max_norm(dagger(u) @ u - np.eye(u.shape[0])) <= tol


# Pauli matrices and spin operators (hbar = 1).

PAULI_I = _frozen(np.eye(2))
PAULI_X = _frozen([[0, 1], [1, 0]])
PAULI_Y = _frozen([[0, -1j], [1j, 0]])
PAULI_Z = _frozen([[1, 0], [0, -1]])
HADAMARD = _frozen(np.array([[1, 1], [1, -1]]) / np.sqrt(2))


def spin_matrices(dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin-j operators ``(J_x, J_y, J_z)`` for ``j = (dim - 1)/2``.

    Basis index 0 carries ``m = +j``, so for ``dim = 2`` index 0 is the
    ``σ_z = +1`` state ``|0⟩``.
    """
    j = (dim - 1) / 2
    m = j - np.arange(dim)
    raising = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        raising[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jx = (raising + dagger(raising)) / 2
    jy = (raising - dagger(raising)) / 2j
    return jx, jy, np.diag(m).astype(complex)


def spin_half() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return spin_matrices(2)


def collective_spin(n: int, axis: str = "x") -> np.ndarray:
    """Total spin component ``Σ_j S^{(j)}`` of ``n`` spin-1/2 systems."""
    single = dict(zip("xyz", spin_half()))[axis]
    total = np.zeros((2**n, 2**n), dtype=complex)
    for site in range(n):
        factors = [np.eye(2)] * n
        factors[site] = single
        total += tensor_all(*factors)
    return total


def encode_matrix(m: Any) -> Dict[str, Any]:
    """Canonical JSON form, ``{"dim": d, "entries": [[re, im], ...]}`` row-major."""
    m = as_matrix(m)
    rows, cols = m.shape
    entries = [[float(z.real), float(z.imag)] for z in m.reshape(-1)]
    if rows == cols:
        return {"dim": rows, "entries": entries}
    return {"rows": rows, "cols": cols, "entries": entries}


def decode_matrix(data: Dict[str, Any]) -> np.ndarray:
    try:
        if "dim" in data:
            rows = cols = int(data["dim"])
        else:
            rows, cols = int(data["rows"]), int(data["cols"])
        entries = np.asarray(data["entries"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidMatrix(f"Malformed matrix encoding: {e}") from e
    if entries.shape != (rows * cols, 2):
        raise InvalidMatrix(
            f"Expected {rows * cols} [re, im] pairs for a {rows}x{cols} matrix, got shape {entries.shape}."
        )
    return as_matrix((entries[:, 0] + 1j * entries[:, 1]).reshape(rows, cols))
