"""Random states shared by the test modules."""
import numpy as np


def random_state(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.standard_normal(2 ** n_qubits) + 1j * rng.standard_normal(2 ** n_qubits)
    return psi / np.linalg.norm(psi)


def random_density(n_qubits: int, rng: np.random.Generator, rank: int = 3) -> np.ndarray:
    vectors = [random_state(n_qubits, rng) for _ in range(rank)]
    weights = rng.dirichlet(np.ones(rank))
    return sum(w * np.outer(v, v.conj()) for w, v in zip(weights, vectors))


def reduced_purity(psi: np.ndarray, group, n_qubits: int) -> float:
    """Purity of the reduced state on a set of 1-based qubits."""
    keep = sorted(q - 1 for q in group)
    rest = [q for q in range(n_qubits) if q not in keep]
    tensor = psi.reshape((2,) * n_qubits).transpose(keep + rest)
    matrix = tensor.reshape(2 ** len(keep), -1)
    rho = matrix @ matrix.conj().T
    return float(np.real(np.trace(rho @ rho)))
