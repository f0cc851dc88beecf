"""
Mixed-state optimization (MSO)

Parameterizes every k-separable mixed state of N qubits as a convex mixture
of A pure states. Each pure state is a tensor product of arbitrary part states
placed by a permutation from the catalog. The witness expectation over that
set is minimized with Adam and the minimum is subtracted from the witness
bias, so the adjusted witness is nonnegative on the separable states the
optimizer can reach.

Raw parameter layout (flat float vector): for each catalog entry, for each of
its alpha copies, for each part of size nu: magnitudes x (2^nu values) then
phases theta (2^nu - 1 values); the A mixing parameters y come last.
"""
import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.errors import (
    DegenerateParameterError,
    DimensionMismatchError,
    InvalidInputError,
    OptimizationError,
)
from src.models import AdamConfig, MsoConfig
from src.seeding import child_generators
from src.statesets import PermutationSpec, catalog_specs, pauli_eigenstates
from src.tensor_core import projector
from src.witness import Witness, evaluate, evaluate_pure

logger = logging.getLogger(__name__)

# Gradient entries below this (relative to the loss) count as a stationary point
_STATIONARY_GRAD = 1e-12


# ===== Catalog =====

@dataclass(frozen=True)
class PartitionCatalog:
    """Permutation specs with alpha = 2^max(nu) pure-state copies each"""
    n_qubits: int
    entries: Tuple[PermutationSpec, ...]

    @property
    def copies(self) -> Tuple[int, ...]:
        return tuple(2 ** max(spec.parts) for spec in self.entries)

    @property
    def total_states(self) -> int:
        """A, the number of mixed pure states"""
        return sum(self.copies)

    @staticmethod
    def slot_size(parts: Sequence[int]) -> int:
        return sum(2 ** (nu + 1) - 1 for nu in parts)

    @cached_property
    def offsets(self) -> Tuple[int, ...]:
        """Start of each entry's block in the flat vector."""
        offsets, position = [], 0
        for spec, alpha in zip(self.entries, self.copies):
            offsets.append(position)
            position += alpha * self.slot_size(spec.parts)
        return tuple(offsets)

    @property
    def mixing_offset(self) -> int:
        last = len(self.entries) - 1
        return self.offsets[last] + self.copies[last] * self.slot_size(self.entries[last].parts)

    @property
    def parameter_count(self) -> int:
        return self.mixing_offset + self.total_states


def build_catalog(n_qubits: int) -> PartitionCatalog:
    """Catalog of the k-separable arrangements of N qubits."""
    catalog = PartitionCatalog(n_qubits, tuple(catalog_specs(n_qubits)))
    logger.debug("Catalog N=%d: %d entries, A=%d", n_qubits, len(catalog.entries), catalog.total_states)
    return catalog


def raw_parameter_count(n_qubits: int) -> int:
    return build_catalog(n_qubits).parameter_count


def estimate_memory_bytes(n_qubits: int) -> float:
    """Upper estimate 2^(2N+2) (N-1)! / sqrt(3) * exp(pi sqrt(2N/3)) of the optimizer's memory load."""
    if n_qubits < 2:
        raise InvalidInputError("N must be at least 2")
    return (
        2.0 ** (2 * n_qubits + 2)
        * math.factorial(n_qubits - 1)
        / math.sqrt(3.0)
        * math.exp(math.pi * math.sqrt(2.0 * n_qubits / 3.0))
    )


# ===== Constraints =====

def constrain_magnitudes(x: np.ndarray) -> np.ndarray:
    """k_i = x_i^2 / sqrt(sum_j x_j^4), along the last axis."""
    x = np.asarray(x, dtype=float)
    q = np.sum(x ** 4, axis=-1, keepdims=True)
    if np.any(q == 0):
        raise DegenerateParameterError("magnitude parameters are all zero")
    return x ** 2 / np.sqrt(q)


def constrain_weights(y: np.ndarray) -> np.ndarray:
    """p_i = y_i^2 / sum_j y_j^2"""
    y = np.asarray(y, dtype=float)
    s = np.sum(y ** 2)
    if s == 0:
        raise DegenerateParameterError("mixing parameters are all zero")
    return y ** 2 / s


class _Part(NamedTuple):
    x: np.ndarray       # (alpha, d) raw magnitudes
    phases: np.ndarray  # (alpha, d) with a leading zero column
    k: np.ndarray       # (alpha, d) constrained magnitudes
    phi: np.ndarray     # (alpha, d) part amplitudes
    q: np.ndarray       # (alpha, 1) sum of x^4


def _parts_of(block: np.ndarray, parts: Sequence[int]) -> List[_Part]:
    out = []
    offset = 0
    for nu in parts:
        d = 2 ** nu
        x = block[:, offset:offset + d]
        theta = block[:, offset + d:offset + 2 * d - 1]
        offset += 2 * d - 1
        phases = np.concatenate([np.zeros((block.shape[0], 1)), theta], axis=1)
        k = constrain_magnitudes(x)
        out.append(_Part(x, phases, k, k * np.exp(1j * phases), np.sum(x ** 4, axis=1, keepdims=True)))
    return out


def _tensor_rows(parts: Sequence[_Part]) -> np.ndarray:
    """Row-wise tensor product of the part amplitudes, first part most significant."""
    chi = parts[0].phi
    for part in parts[1:]:
        chi = (chi[:, :, None] * part.phi[:, None, :]).reshape(chi.shape[0], -1)
    return chi


# ===== Parameterization =====

@dataclass
class SeparableParameterization:
    """Flat raw parameters for a catalog"""
    catalog: PartitionCatalog
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.shape != (self.catalog.parameter_count,):
            raise DimensionMismatchError(
                f"{self.values.size} parameters, catalog needs {self.catalog.parameter_count}"
            )

    def block(self, entry: int) -> np.ndarray:
        """(alpha, slot size) view of one entry's copies."""
        spec = self.catalog.entries[entry]
        alpha = self.catalog.copies[entry]
        size = self.catalog.slot_size(spec.parts)
        start = self.catalog.offsets[entry]
        return self.values[start:start + alpha * size].reshape(alpha, size)

    def slot(self, entry: int, copy: int) -> np.ndarray:
        return self.block(entry)[copy]

    @property
    def mixing(self) -> np.ndarray:
        return self.values[self.catalog.mixing_offset:]

    def weights(self) -> np.ndarray:
        return constrain_weights(self.mixing)

    def is_degenerate(self) -> bool:
        if not np.any(self.mixing):
            return True
        for entry, spec in enumerate(self.catalog.entries):
            block = self.block(entry)
            offset = 0
            for nu in spec.parts:
                d = 2 ** nu
                if np.any(np.all(block[:, offset:offset + d] == 0, axis=1)):
                    return True
                offset += 2 * d - 1
        return False

    @classmethod
    def random(cls, catalog: PartitionCatalog, rng: np.random.Generator) -> "SeparableParameterization":
        """Uniform draws on [-1, 1], redrawn if any constraint is degenerate."""
        while True:
            params = cls(catalog, rng.uniform(-1.0, 1.0, catalog.parameter_count))
            if not params.is_degenerate():
                return params


def assemble_pure(slot_params: np.ndarray, spec: PermutationSpec) -> np.ndarray:
    """Part amplitudes (k_0, k_1 e^(i theta_1), ...) tensored, then permuted."""
    slot_params = np.asarray(slot_params, dtype=float).ravel()
    expected = PartitionCatalog.slot_size(spec.parts)
    if slot_params.size != expected:
        raise DimensionMismatchError(f"{spec.label} needs {expected} parameters, got {slot_params.size}")
    chi = _tensor_rows(_parts_of(slot_params[None, :], spec.parts))[0]
    return spec.operator @ chi if spec.swap_sequence else chi


def _slot_states(params: SeparableParameterization) -> np.ndarray:
    """(A, 2^N) pure states in slot order."""
    states = []
    for entry, spec in enumerate(params.catalog.entries):
        chi = _tensor_rows(_parts_of(params.block(entry), spec.parts))
        states.append(chi @ spec.operator.T if spec.swap_sequence else chi)
    return np.concatenate(states)


def assemble_mixed(params: SeparableParameterization, catalog: Optional[PartitionCatalog] = None) -> np.ndarray:
    """rho = sum_i p_i |psi_i><psi_i|"""
    if catalog is not None and catalog != params.catalog:
        raise DimensionMismatchError("parameters belong to a different catalog")
    states = _slot_states(params)
    rho = np.einsum("k,ki,kj->ij", params.weights(), states, states.conj())
    return 0.5 * (rho + rho.conj().T)


# ===== Loss and gradient =====

class _Objective:
    """Witness expectation and its analytic gradient for one catalog"""

    def __init__(self, catalog: PartitionCatalog, witness: Witness):
        if witness.n_qubits != catalog.n_qubits:
            raise DimensionMismatchError(
                f"{witness.n_qubits}-qubit witness, {catalog.n_qubits}-qubit catalog"
            )
        self.catalog = catalog
        operator = witness.operator()
        # witness seen from the canonical (unpermuted) tensor order of each entry
        self.reduced = []
        for spec in catalog.entries:
            if spec.swap_sequence:
                perm = spec.operator
                self.reduced.append(perm.conj().T @ operator @ perm)
            else:
                self.reduced.append(operator)

    def __call__(self, values: np.ndarray, with_gradient: bool = True) -> Tuple[float, Optional[np.ndarray]]:
        params = SeparableParameterization(self.catalog, values)
        energies = np.empty(self.catalog.total_states)
        grad = np.zeros_like(params.values) if with_gradient else None
        slot = 0
        for entry, spec in enumerate(self.catalog.entries):
            alpha = self.catalog.copies[entry]
            parts = _parts_of(params.block(entry), spec.parts)
            chi = _tensor_rows(parts)
            g = chi @ self.reduced[entry].T
            energies[slot:slot + alpha] = np.real(np.sum(chi.conj() * g, axis=1))
            if with_gradient:
                start = self.catalog.offsets[entry]
                grad[start:start + params.block(entry).size] = self._slot_gradients(g, parts).ravel()
            slot += alpha

        y = params.mixing
        s = np.sum(y ** 2)
        if s == 0:
            raise DegenerateParameterError("mixing parameters are all zero")
        p = y ** 2 / s
        loss = float(p @ energies)
        if with_gradient:
            offset = self.catalog.mixing_offset
            slot = 0
            for entry, spec in enumerate(self.catalog.entries):
                alpha = self.catalog.copies[entry]
                start = self.catalog.offsets[entry]
                size = self.catalog.slot_size(spec.parts)
                block = grad[start:start + alpha * size].reshape(alpha, size)
                block *= p[slot:slot + alpha, None]
                slot += alpha
            grad[offset:] = (2.0 * y / s) * (energies - loss)
        return loss, grad

    @staticmethod
    def _slot_gradients(g: np.ndarray, parts: Sequence[_Part]) -> np.ndarray:
        """d<chi|W|chi>/d(raw slot parameters), one row per copy."""
        alpha = g.shape[0]
        n_parts = len(parts)
        tensor = g.reshape((alpha,) + tuple(part.phi.shape[1] for part in parts))
        rows = []
        for j, part in enumerate(parts):
            operands = [tensor, list(range(n_parts + 1))]
            for i, other in enumerate(parts):
                if i != j:
                    operands += [other.phi.conj(), [0, i + 1]]
            h = np.einsum(*operands, [0, j + 1])
            d_theta = 2.0 * np.imag(part.phi[:, 1:].conj() * h[:, 1:])
            u = 2.0 * np.real(np.exp(-1j * part.phases) * h)
            s = np.sum(part.k * u, axis=1, keepdims=True)
            d_x = (2.0 * part.x / np.sqrt(part.q)) * (u - part.k * s)
            rows += [d_x, d_theta]
        return np.concatenate(rows, axis=1)


def loss(params: SeparableParameterization, witness: Witness) -> float:
    """Tr(rho W) for the assembled mixed state."""
    value, _ = _Objective(params.catalog, witness)(params.values, with_gradient=False)
    return value


def gradient(params: SeparableParameterization, witness: Witness) -> np.ndarray:
    """Analytic gradient of loss() with respect to every raw parameter."""
    if not np.all(np.isfinite(params.values)):
        raise InvalidInputError("parameters must be finite")
    _, grad = _Objective(params.catalog, witness)(params.values)
    return grad


def numerical_gradient(params: SeparableParameterization, witness: Witness, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of loss()."""
    objective = _Objective(params.catalog, witness)
    values = params.values.copy()
    grad = np.empty_like(values)
    for i in range(values.size):
        original = values[i]
        values[i] = original + step
        forward, _ = objective(values, with_gradient=False)
        values[i] = original - step
        backward, _ = objective(values, with_gradient=False)
        values[i] = original
        grad[i] = (forward - backward) / (2.0 * step)
    return grad


# ===== Optimizer =====

class Adam:
    """Adam over a single flat parameter vector, updated in place"""

    def __init__(self, step_size: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None
        self.t = 0

    @classmethod
    def from_config(cls, cfg: AdamConfig) -> "Adam":
        return cls(cfg.step_size, cfg.beta1, cfg.beta2, cfg.epsilon)

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t

        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grads
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grads * grads)

        denom = np.sqrt(self.v / bc2) + self.epsilon
        params -= (self.step_size / bc1) * self.m / denom


@dataclass
class _RestartOutcome:
    index: int
    trace: List[float]
    best_loss: float = math.inf
    best_values: Optional[np.ndarray] = None
    diverged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _descend(objective: _Objective, cfg: MsoConfig, rng: np.random.Generator, index: int) -> _RestartOutcome:
    values = SeparableParameterization.random(objective.catalog, rng).values
    adam = Adam.from_config(cfg.adam)
    outcome = _RestartOutcome(index=index, trace=[])
    window = cfg.convergence_window

    for iteration in range(cfg.max_iterations):
        try:
            value, grad = objective(values)
        except DegenerateParameterError:
            outcome.diverged = True
            break
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            outcome.diverged = True
            break
        outcome.trace.append(value)
        if value < outcome.best_loss:
            outcome.best_loss = value
            outcome.best_values = values.copy()
        if iteration >= window:
            previous = outcome.trace[iteration - window]
            if abs(previous - value) <= cfg.relative_tolerance * max(1.0, abs(previous)):
                break
        if np.max(np.abs(grad)) <= _STATIONARY_GRAD * max(1.0, abs(value)):
            break
        adam.step(values, grad)

    if outcome.diverged and outcome.best_values is None:
        logger.warning("MSO restart %d diverged after %d iterations", index, outcome.iterations)
    else:
        # a late non-finite step does not void the best iterate already found
        outcome.diverged = outcome.best_values is None
        logger.debug("MSO restart %d: best %.8f after %d iterations", index, outcome.best_loss, outcome.iterations)
    return outcome


@dataclass
class MsoResult:
    """Lowest witness expectation found over the separable parameterization"""
    min_expectation: float
    argmin: np.ndarray
    loss_trace: List[Tuple[int, float]]
    iterations_used: int
    restart_index: int  # -1 when the eigenstate floor beat every restart
    eigenstate_floor: float
    restart_traces: List[List[float]] = field(default_factory=list)
    best_parameters: Optional[np.ndarray] = None

    def trace_rows(self) -> List[Tuple[int, float, int]]:
        return [
            (iteration, value, restart)
            for restart, trace in enumerate(self.restart_traces)
            for iteration, value in enumerate(trace)
        ]

    def trace_csv(self) -> str:
        """iteration,loss,restart_index for every restart"""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["iteration", "loss", "restart_index"])
        for iteration, value, restart in self.trace_rows():
            writer.writerow([iteration, format(value, ".17g"), restart])
        return buffer.getvalue()


def eigenstate_floor(witness: Witness) -> Tuple[float, np.ndarray]:
    """Minimum witness expectation over the 6^N Pauli eigenstates and its state."""
    states = pauli_eigenstates(witness.n_qubits)
    values = evaluate_pure(witness, states)
    idx = int(np.argmin(values))
    return float(values[idx]), states[idx]


def optimize(
    witness: Witness,
    cfg: Optional[MsoConfig] = None,
    rng: Optional[np.random.Generator] = None,
    threads: int = 1,
    catalog: Optional[PartitionCatalog] = None,
) -> MsoResult:
    """
    Minimize Tr(rho W) over k-separable mixtures with independent Adam restarts

    The best restart (ties to the lowest index) is compared against the
    eigenstate floor; the lower of the two is reported.

    Raises:
        OptimizationError: every restart diverged
    """
    cfg = cfg or MsoConfig()
    catalog = catalog or build_catalog(witness.n_qubits)
    objective = _Objective(catalog, witness)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    restart_rngs = child_generators(rng, cfg.restarts)

    logger.info("MSO: %d restarts over %d parameters (N=%d)", cfg.restarts, catalog.parameter_count, catalog.n_qubits)
    jobs = list(enumerate(restart_rngs))
    if threads > 1 and cfg.restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda job: _descend(objective, cfg, job[1], job[0]), jobs))
    else:
        outcomes = [_descend(objective, cfg, restart_rng, index) for index, restart_rng in jobs]

    finished = [o for o in outcomes if not o.diverged]
    if not finished:
        raise OptimizationError("every MSO restart diverged", traces=[o.trace for o in outcomes])
    best = min(finished, key=lambda o: (o.best_loss, o.index))

    params = SeparableParameterization(catalog, best.best_values)
    argmin = assemble_mixed(params)
    min_expectation = evaluate(witness, argmin)
    restart_index = best.index
    floor, floor_state = eigenstate_floor(witness)
    if floor < min_expectation:
        argmin = projector(floor_state)
        min_expectation = evaluate(witness, argmin)
        restart_index = -1

    logger.info("MSO minimum %.8f (restart %d, eigenstate floor %.8f)", min_expectation, restart_index, floor)
    return MsoResult(
        min_expectation=min_expectation,
        argmin=argmin,
        loss_trace=list(enumerate(best.trace)),
        iterations_used=best.iterations,
        restart_index=restart_index,
        eigenstate_floor=floor,
        restart_traces=[o.trace for o in outcomes],
        best_parameters=best.best_values,
    )


def adjust_bias(witness: Witness, result: MsoResult) -> Witness:
    """Subtract the separable minimum from the identity coefficient."""
    delta = result.min_expectation
    adjusted = witness.with_bias(
        witness.bias - delta,
        bias_adjustment=-delta,
        mso_min_expectation=delta,
        mso_restart_index=result.restart_index,
    )
    logger.info("Bias %.8f -> %.8f", witness.bias, adjusted.bias)
    return adjusted
