"""
Dense linear algebra for qubit systems

Pauli strings, Kronecker products, density matrices, expectation values, swap
operators and Werner mixing. States are plain numpy arrays: a state vector is a
complex vector of length 2^N and a density matrix a complex 2^N x 2^N array.
Qubit 1 is the leftmost tensor factor and the most significant bit of a basis
index; qubit indices in interfaces are 1-based.
"""
from dataclasses import dataclass, field
from functools import lru_cache, reduce
from itertools import product
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy.linalg import eigvalsh

from src.constants import (
    DEFAULT_MAX_QUBITS,
    EXPECTATION_IMAG_TOL,
    EXPECTATION_RANGE_TOL,
    HERMITIAN_TOL,
    NORM_TOL,
    PAULI_SYMBOLS,
    PSD_TOL,
    TRACE_TOL,
    UNITARY_TOL,
)
from src.errors import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidStateError,
    ResourceLimitError,
)

StateVector = np.ndarray
DensityMatrix = np.ndarray

_PAULI_MATRICES = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


@dataclass(frozen=True, order=True)
class PauliString:
    """Generalized Pauli observable, e.g. "XZY" (qubit 1 leftmost)"""
    labels: str

    def __post_init__(self):
        if not isinstance(self.labels, str) or len(self.labels) == 0:
            raise InvalidInputError("Pauli string must have at least one symbol")
        bad = set(self.labels) - set(PAULI_SYMBOLS)
        if bad:
            raise InvalidInputError(
                f"invalid Pauli symbols {sorted(bad)} in {self.labels!r}"
            )

    def __str__(self) -> str:
        return self.labels

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    @property
    def index(self) -> int:
        """Base-4 index with I=0, X=1, Y=2, Z=3, leftmost digit most significant."""
        value = 0
        for symbol in self.labels:
            value = value * 4 + PAULI_SYMBOLS.index(symbol)
        return value

    @property
    def is_identity(self) -> bool:
        return set(self.labels) == {"I"}

    def swapped(self, a: int, b: int) -> "PauliString":
        """The same observable with qubits a and b relabeled."""
        chars = list(self.labels)
        chars[a - 1], chars[b - 1] = chars[b - 1], chars[a - 1]
        return PauliString("".join(chars))

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls("I" * n_qubits)

    @classmethod
    def from_index(cls, index: int, n_qubits: int) -> "PauliString":
        if not 0 <= index < 4 ** n_qubits:
            raise InvalidInputError(f"index {index} out of range for {n_qubits} qubits")
        symbols = []
        for _ in range(n_qubits):
            index, digit = divmod(index, 4)
            symbols.append(PAULI_SYMBOLS[digit])
        return cls("".join(reversed(symbols)))


def as_pauli(value: "PauliString | str") -> PauliString:
    """Accept a PauliString or its label string."""
    if isinstance(value, PauliString):
        return value
    return PauliString(str(value).upper())


def all_pauli_strings(n_qubits: int, include_identity: bool = True) -> List[PauliString]:
    """All 4^N strings in canonical index order."""
    strings = [PauliString("".join(s)) for s in product(PAULI_SYMBOLS, repeat=n_qubits)]
    if not include_identity:
        strings = strings[1:]
    return strings


@dataclass(frozen=True)
class FeatureVector:
    """Expectation values over an ordered feature set"""
    values: np.ndarray
    feature_set: Tuple[PauliString, ...] = field(default_factory=tuple)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.feature_set),):
            raise DimensionMismatchError(
                f"{values.shape[0]} values for {len(self.feature_set)} features"
            )
        if np.any(np.abs(values) > 1 + EXPECTATION_RANGE_TOL):
            raise InvalidStateError("feature values must lie in [-1, 1]")
        for i, pstring in enumerate(self.feature_set):
            if pstring.is_identity and abs(values[i] - 1.0) > 1e-12:
                raise InvalidStateError("identity feature must equal 1")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.feature_set)


# ===== Operators =====

def pauli_matrix(symbol: str) -> np.ndarray:
    """Single-qubit I, X, Y or Z."""
    matrix = _PAULI_MATRICES.get(str(symbol).upper())
    if matrix is None:
        raise InvalidInputError(f"invalid Pauli symbol: {symbol!r}")
    return matrix.copy()


def kron_all(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product, leftmost factor most significant."""
    return reduce(np.kron, factors)


@lru_cache(maxsize=4096)
def _operator_cached(labels: str) -> np.ndarray:
    matrix = kron_all([_PAULI_MATRICES[s] for s in labels])
    matrix.setflags(write=False)
    return matrix


def operator_of(pstring: "PauliString | str", max_qubits: int = DEFAULT_MAX_QUBITS) -> np.ndarray:
    """Dense matrix of a Pauli string (Hermitian and unitary)."""
    pstring = as_pauli(pstring)
    if pstring.n_qubits > max_qubits:
        raise ResourceLimitError(
            f"{pstring.n_qubits} qubits exceeds the operator limit of {max_qubits}"
        )
    return _operator_cached(pstring.labels)


@lru_cache(maxsize=8192)
def pauli_action(labels: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sparse form of a Pauli string: sigma|k> = phase[k] |flip[k]>

    Returns:
        (flip, phase) with flip[k] = k XOR x-mask and
        phase[k] = i^(#Y) * (-1)^popcount(k AND z-mask)
    """
    n_qubits = len(labels)
    x_mask = 0
    z_mask = 0
    for q, symbol in enumerate(labels):
        bit = 1 << (n_qubits - 1 - q)
        if symbol in "XY":
            x_mask |= bit
        if symbol in "YZ":
            z_mask |= bit
    k = np.arange(2 ** n_qubits)
    parity = np.zeros_like(k)
    masked = k & z_mask
    for q in range(n_qubits):
        parity ^= (masked >> q) & 1
    phase = (1j ** labels.count("Y")) * np.where(parity == 1, -1.0, 1.0)
    flip = k ^ x_mask
    flip.setflags(write=False)
    phase.setflags(write=False)
    return flip, phase


def n_qubits_of(array: np.ndarray) -> int:
    """Qubit count implied by a state vector or density matrix."""
    dim = array.shape[-1]
    n_qubits = int(round(np.log2(dim))) if dim > 0 else -1
    if n_qubits < 1 or 2 ** n_qubits != dim:
        raise DimensionMismatchError(f"dimension {dim} is not a power of two")
    return n_qubits


# ===== States =====

def validate_state_vector(psi: StateVector) -> StateVector:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise InvalidStateError("state vector must be one-dimensional")
    n_qubits_of(psi)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORM_TOL:
        raise InvalidStateError(f"state vector norm {norm:.3e} differs from 1")
    return psi


def validate_density_matrix(rho: DensityMatrix) -> DensityMatrix:
    """Check Hermiticity, unit trace and PSD; returns the complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got {rho.shape}")
    n_qubits_of(rho)
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise InvalidStateError("density matrix is not Hermitian")
    trace = np.trace(rho)
    if abs(trace - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"density matrix trace {trace.real:.3e} differs from 1")
    min_eigenvalue = eigvalsh(rho)[0]
    if min_eigenvalue < -PSD_TOL:
        raise InvalidStateError(f"density matrix has eigenvalue {min_eigenvalue:.3e}")
    return rho


def projector(psi: StateVector) -> DensityMatrix:
    """|psi><psi|"""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def maximally_mixed(n_qubits: int) -> DensityMatrix:
    dim = 2 ** n_qubits
    return np.eye(dim, dtype=complex) / dim


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2)"""
    return float(np.real(np.sum(rho * rho.T)))


# ===== Expectation values =====

def _check_expectation(value: complex) -> float:
    if abs(value.imag) > EXPECTATION_IMAG_TOL:
        raise InvalidStateError(f"expectation has imaginary part {value.imag:.3e}")
    real = float(value.real)
    if abs(real) > 1 + EXPECTATION_RANGE_TOL:
        raise InvalidStateError(f"expectation {real} outside [-1, 1]")
    return min(1.0, max(-1.0, real))


def expectation(rho: DensityMatrix, pstring: "PauliString | str") -> float:
    """Tr(sigma_k rho) without forming the product matrix."""
    pstring = as_pauli(pstring)
    rho = np.asarray(rho)
    if rho.shape != (2 ** pstring.n_qubits,) * 2:
        raise DimensionMismatchError(
            f"{pstring.labels} acts on {pstring.n_qubits} qubits, state shape {rho.shape}"
        )
    flip, phase = pauli_action(pstring.labels)
    value = np.sum(phase * rho[np.arange(rho.shape[0]), flip])
    return _check_expectation(complex(value))


def _check_feature_set(feature_set: Sequence["PauliString | str"], n_qubits: int) -> Tuple[PauliString, ...]:
    if len(feature_set) == 0:
        raise InvalidInputError("feature set is empty")
    strings = tuple(as_pauli(p) for p in feature_set)
    for pstring in strings:
        if pstring.n_qubits != n_qubits:
            raise DimensionMismatchError(
                f"{pstring.labels} has length {pstring.n_qubits}, expected {n_qubits}"
            )
    return strings


def feature_vector(rho: DensityMatrix, feature_set: Sequence["PauliString | str"]) -> FeatureVector:
    """Expectation of every string in the feature set."""
    strings = _check_feature_set(feature_set, n_qubits_of(np.asarray(rho)))
    values = np.array([expectation(rho, p) for p in strings])
    return FeatureVector(values=values, feature_set=strings)


def feature_matrix_pure(states: np.ndarray, feature_set: Sequence["PauliString | str"]) -> np.ndarray:
    """
    Feature rows for a batch of pure states

    Args:
        states: (M, 2^N) complex array of normalized state vectors
        feature_set: ordered Pauli strings

    Returns:
        (M, F) real array of <psi|sigma|psi>
    """
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    strings = _check_feature_set(feature_set, n_qubits_of(states))
    out = np.empty((states.shape[0], len(strings)))
    for j, pstring in enumerate(strings):
        flip, phase = pauli_action(pstring.labels)
        out[:, j] = np.real(np.sum(states[:, flip].conj() * states * phase, axis=1))
    return np.clip(out, -1.0, 1.0)


def feature_matrix_density(rhos: np.ndarray, feature_set: Sequence["PauliString | str"]) -> np.ndarray:
    """Feature rows for a batch of density matrices, shape (M, 2^N, 2^N)."""
    rhos = np.asarray(rhos, dtype=complex)
    if rhos.ndim == 2:
        rhos = rhos[None]
    strings = _check_feature_set(feature_set, n_qubits_of(rhos))
    k = np.arange(rhos.shape[-1])
    out = np.empty((rhos.shape[0], len(strings)))
    for j, pstring in enumerate(strings):
        flip, phase = pauli_action(pstring.labels)
        out[:, j] = np.real(np.sum(rhos[:, k, flip] * phase, axis=1))
    return np.clip(out, -1.0, 1.0)


# ===== Mixing and permutations =====

def werner_state(rho_e: DensityMatrix, p: float) -> DensityMatrix:
    """(1 - p) rho_e + p I / 2^N"""
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"mixing fraction p={p} outside [0, 1]")
    rho_e = np.asarray(rho_e, dtype=complex)
    return (1.0 - p) * rho_e + p * maximally_mixed(n_qubits_of(rho_e))


@lru_cache(maxsize=256)
def adjacent_swap(nu: int, n_qubits: int) -> np.ndarray:
    """I^(nu-1) (x) SWAP (x) I^(N-nu-1): exchanges qubits nu and nu+1."""
    if not 1 <= nu < n_qubits:
        raise InvalidInputError(f"adjacent swap {nu} invalid for {n_qubits} qubits")
    matrix = kron_all([
        np.eye(2 ** (nu - 1), dtype=complex),
        _SWAP,
        np.eye(2 ** (n_qubits - nu - 1), dtype=complex),
    ])
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=256)
def swap_operator(a: int, b: int, n_qubits: int) -> np.ndarray:
    """
    Operator exchanging qubits a < b

    Built from adjacent swaps S_a ... S_{b-1} ... S_a so the qubits in between
    keep their positions.
    """
    if not 1 <= a < b <= n_qubits:
        raise InvalidInputError(f"swap ({a}, {b}) invalid for {n_qubits} qubits")
    sequence = list(range(a, b)) + list(range(b - 2, a - 1, -1))
    matrix = reduce(np.matmul, [adjacent_swap(nu, n_qubits) for nu in sequence])
    matrix.setflags(write=False)
    return matrix


def permutation_operator(swaps: Iterable[Tuple[int, int]], n_qubits: int) -> np.ndarray:
    """Product of swap operators, first pair applied first."""
    matrix = np.eye(2 ** n_qubits, dtype=complex)
    for a, b in swaps:
        matrix = swap_operator(min(a, b), max(a, b), n_qubits) @ matrix
    return matrix


def conjugate_by(rho: DensityMatrix, unitary: np.ndarray) -> DensityMatrix:
    """U rho U^dagger"""
    unitary = np.asarray(unitary, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if unitary.shape != rho.shape:
        raise DimensionMismatchError(f"operator {unitary.shape} vs state {rho.shape}")
    deviation = np.max(np.abs(unitary @ unitary.conj().T - np.eye(unitary.shape[0])))
    if deviation > UNITARY_TOL:
        raise InvalidInputError(f"operator is not unitary (deviation {deviation:.3e})")
    return unitary @ rho @ unitary.conj().T
