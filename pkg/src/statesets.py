"""
Training and test state generation

Pauli eigenstates with locally perturbed neighbours (separable training data),
Werner states of the target (entangled training data), the GHZ and W targets,
and Dirichlet mixtures of random k-separable pure states (separable test data).
Every generator takes an explicit numpy Generator so sample sets are
reproducible from the master seed.
"""
import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from src.constants import (
    ENTANGLED_TRAINING_COUNT,
    EXTRAS_PER_EIGENSTATE,
    PERMUTATION_TABLES,
    PERTURBATION_SIGMA,
    SINGLE_QUBIT_EIGENSTATE_LABELS,
    WERNER_P_MAX,
    PermutationRow,
    SampleOrigin,
    TargetKind,
    get_permutation_rows,
    get_target_kind,
)
from src.errors import ArtifactError, DimensionMismatchError, InvalidInputError
from src.seeding import child_generators
from src.tensor_core import (
    FeatureVector,
    PauliString,
    as_pauli,
    feature_matrix_density,
    feature_matrix_pure,
    kron_all,
    permutation_operator,
    projector,
    werner_state,
)

logger = logging.getLogger(__name__)

# Test states generated per worker shard
_SHARD_SIZE = 256

_SQRT_HALF = 1.0 / np.sqrt(2.0)
_SINGLE_QUBIT_EIGENSTATES = np.array([
    [_SQRT_HALF, _SQRT_HALF],        # X+
    [_SQRT_HALF, -_SQRT_HALF],       # X-
    [_SQRT_HALF, 1j * _SQRT_HALF],   # Y+
    [_SQRT_HALF, -1j * _SQRT_HALF],  # Y-
    [1.0, 0.0],                      # Z+
    [0.0, 1.0],                      # Z-
], dtype=complex)


# ===== Sample containers =====

@dataclass(frozen=True)
class LabeledSample:
    """One training or test point"""
    features: FeatureVector
    label: int  # +1 separable, -1 entangled
    origin: SampleOrigin

    def __post_init__(self):
        if self.label not in (1, -1):
            raise InvalidInputError(f"label must be +1 or -1, got {self.label}")
        if not np.all(np.isfinite(self.features.values)):
            raise InvalidInputError("features must be finite")


@dataclass
class TrainingSet:
    """Feature rows, labels and origins over a shared feature set"""
    features: np.ndarray
    labels: np.ndarray
    origins: List[SampleOrigin]
    feature_set: Tuple[PauliString, ...]
    n_qubits: int
    seed: Optional[int] = None
    target: Optional[TargetKind] = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int)
        self.feature_set = tuple(as_pauli(p) for p in self.feature_set)
        if self.features.shape != (len(self.labels), len(self.feature_set)):
            raise DimensionMismatchError(
                f"feature matrix {self.features.shape} does not match "
                f"{len(self.labels)} samples x {len(self.feature_set)} features"
            )
        if len(self.origins) != len(self.labels):
            raise DimensionMismatchError("one origin per sample is required")
        if not np.all(np.isin(self.labels, (1, -1))):
            raise InvalidInputError("labels must be +1 or -1")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInputError("feature values must be finite")
        for pstring in self.feature_set:
            if pstring.n_qubits != self.n_qubits:
                raise DimensionMismatchError(f"{pstring} is not a {self.n_qubits}-qubit string")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def samples(self) -> List[LabeledSample]:
        return [
            LabeledSample(FeatureVector(row, self.feature_set), int(label), origin)
            for row, label, origin in zip(self.features, self.labels, self.origins)
        ]

    def origin_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for origin in self.origins:
            counts[origin.value] = counts.get(origin.value, 0) + 1
        return counts

    def columns(self, feature_subset: Sequence["PauliString | str"]) -> np.ndarray:
        """Feature matrix restricted to (and ordered by) a subset."""
        position = {p: i for i, p in enumerate(self.feature_set)}
        try:
            idx = [position[as_pauli(p)] for p in feature_subset]
        except KeyError as e:
            raise InvalidInputError(f"feature {e.args[0]} is not in the training set") from None
        return self.features[:, idx]

    def merged(self, other: "TrainingSet") -> "TrainingSet":
        if other.feature_set != self.feature_set:
            raise DimensionMismatchError("cannot merge sets with different feature sets")
        return TrainingSet(
            features=np.vstack([self.features, other.features]),
            labels=np.concatenate([self.labels, other.labels]),
            origins=list(self.origins) + list(other.origins),
            feature_set=self.feature_set,
            n_qubits=self.n_qubits,
            seed=self.seed,
            target=self.target or other.target,
        )


# ===== Permutation specs =====

@dataclass(frozen=True)
class PermutationSpec:
    """Arrangement of qubit groups for a k-separable pure state"""
    parts: Tuple[int, ...]
    label: str
    swap_sequence: Tuple[Tuple[int, int], ...] = field(default_factory=tuple)
    fully_separable: bool = False

    def __post_init__(self):
        if any(p < 1 for p in self.parts):
            raise InvalidInputError(f"invalid part sizes {self.parts}")
        if not self.fully_separable and sum(1 for p in self.parts if p == 1) > 1:
            raise InvalidInputError(f"{self.label}: at most one single-qubit part is allowed")
        for a, b in self.swap_sequence:
            if a == b or min(a, b) < 1 or max(a, b) > self.n_qubits:
                raise InvalidInputError(f"{self.label}: invalid swap ({a}, {b})")

    @property
    def n_qubits(self) -> int:
        return sum(self.parts)

    @classmethod
    def from_row(cls, row: PermutationRow) -> "PermutationSpec":
        swaps = tuple((min(a, b), max(a, b)) for a, b in row.swaps)
        return cls(parts=row.parts, label=row.label, swap_sequence=swaps)

    @classmethod
    def fully_separable_spec(cls, n_qubits: int) -> "PermutationSpec":
        label = "|".join(str(q) for q in range(1, n_qubits + 1))
        return cls(parts=(1,) * n_qubits, label=label, fully_separable=True)

    def qubit_groups(self) -> Tuple[FrozenSet[int], ...]:
        """Final qubit positions of each part after the swap sequence."""
        position = list(range(1, self.n_qubits + 1))  # content index -> qubit
        for a, b in self.swap_sequence:
            position = [b if q == a else a if q == b else q for q in position]
        groups = []
        start = 0
        for size in self.parts:
            groups.append(frozenset(position[start:start + size]))
            start += size
        return tuple(groups)

    @cached_property
    def operator(self) -> np.ndarray:
        """Permutation operator placing the canonical tensor product."""
        return permutation_operator(self.swap_sequence, self.n_qubits)


def catalog_specs(n_qubits: int) -> List[PermutationSpec]:
    """Specs for every row of the permutation table."""
    return [PermutationSpec.from_row(row) for row in get_permutation_rows(n_qubits)]


def mixture_arrangements(n_qubits: int) -> List[PermutationSpec]:
    """Catalog specs plus the fully separable arrangement."""
    specs = catalog_specs(n_qubits) if n_qubits in PERMUTATION_TABLES else []
    return specs + [PermutationSpec.fully_separable_spec(n_qubits)]


# ===== Separable training states =====

def eigenstate_labels(n_qubits: int) -> List[Tuple[str, ...]]:
    """Per-qubit basis labels of pauli_eigenstates(N), in the same order."""
    return list(product(SINGLE_QUBIT_EIGENSTATE_LABELS, repeat=n_qubits))


def _batch_kron(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker products of every left row with every right row."""
    return (left[:, None, :, None] * right[None, :, None, :]).reshape(
        left.shape[0] * right.shape[0], left.shape[1] * right.shape[1]
    )


def pauli_eigenstates(n_qubits: int) -> np.ndarray:
    """
    All 6^N product eigenstates of the generalized Pauli operators

    Returns:
        (6^N, 2^N) array; qubit 1 varies slowest, per-qubit order
        X+, X-, Y+, Y-, Z+, Z-
    """
    if n_qubits < 1:
        raise InvalidInputError("at least one qubit is required")
    states = _SINGLE_QUBIT_EIGENSTATES
    for _ in range(n_qubits - 1):
        states = _batch_kron(states, _SINGLE_QUBIT_EIGENSTATES)
    return states


def _local_perturbations(shape: Tuple[int, ...], sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Single-qubit unitaries H_i of shape (*shape, 2, 2)."""
    theta = np.arccos(1.0 - 2.0 * rng.random(shape))
    phi = rng.uniform(0.0, 2.0 * np.pi, shape)
    omega = rng.uniform(0.0, 2.0 * np.pi, shape)
    cos = np.cos(sigma * theta / 2.0)
    sin = np.sin(sigma * theta / 2.0)
    h = np.empty(shape + (2, 2), dtype=complex)
    h[..., 0, 0] = np.exp(-0.5j * sigma * (phi + omega)) * cos
    h[..., 0, 1] = -np.exp(0.5j * sigma * (phi - omega)) * sin
    h[..., 1, 0] = np.exp(-0.5j * sigma * (phi - omega)) * sin
    h[..., 1, 1] = np.exp(0.5j * sigma * (phi + omega)) * cos
    return h


def perturbation_unitary(n_qubits: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Local unitary H = (x)_i H_i with angles scaled by sigma."""
    if sigma < 0:
        raise InvalidInputError(f"sigma must be nonnegative, got {sigma}")
    factors = _local_perturbations((n_qubits,), sigma, rng)
    return kron_all(list(factors))


def separable_training_states(
    n_qubits: int,
    extras_per_eigenstate: int = EXTRAS_PER_EIGENSTATE,
    sigma: float = PERTURBATION_SIGMA,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Eigenstates each followed by their perturbed copies

    Perturbations are local, so each copy is built qubit by qubit as
    (x)_i H_i|e_i> with independent angles per copy and per qubit.

    Returns:
        (6^N * (1 + extras), 2^N) array of product states
    """
    if extras_per_eigenstate < 0:
        raise InvalidInputError("extras_per_eigenstate must be nonnegative")
    if sigma < 0:
        raise InvalidInputError(f"sigma must be nonnegative, got {sigma}")
    rng = rng if rng is not None else np.random.default_rng()

    count = 6 ** n_qubits
    copies = 1 + extras_per_eigenstate
    # per-qubit eigenstate index of every eigenstate, qubit 1 first
    digits = np.array(list(product(range(6), repeat=n_qubits)), dtype=int).reshape(count, n_qubits)
    single = _SINGLE_QUBIT_EIGENSTATES[digits]  # (count, N, 2)
    local = np.repeat(single[:, None], copies, axis=1)  # (count, copies, N, 2)
    if extras_per_eigenstate > 0:
        h = _local_perturbations((count, extras_per_eigenstate, n_qubits), sigma, rng)
        local[:, 1:] = np.einsum("cenij,cenj->ceni", h, local[:, 1:])

    states = local[..., 0, :]
    for q in range(1, n_qubits):
        states = (states[..., :, None] * local[..., q, None, :]).reshape(count, copies, -1)
    return states.reshape(count * copies, 2 ** n_qubits)


# ===== Entangled training states and targets =====

def target_state(kind: TargetKind | str, n_qubits: int) -> np.ndarray:
    """GHZ or W state vector."""
    try:
        kind = get_target_kind(kind)
    except ValueError:
        raise InvalidInputError(f"invalid target kind: {kind!r}") from None
    if n_qubits < 2:
        raise InvalidInputError("targets need at least two qubits")
    dim = 2 ** n_qubits
    psi = np.zeros(dim, dtype=complex)
    if kind == TargetKind.GHZ:
        psi[0] = psi[-1] = 1.0 / np.sqrt(2.0)
    else:
        for q in range(n_qubits):
            psi[1 << q] = 1.0 / np.sqrt(n_qubits)
    return psi


def entangled_training_states(
    rho_e: np.ndarray,
    count: int = ENTANGLED_TRAINING_COUNT,
    p_max: float = WERNER_P_MAX,
) -> np.ndarray:
    """Werner states on a linear p grid from 0 to p_max (p_max alone if count == 1)."""
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    if not 0.0 < p_max < 1.0:
        raise InvalidInputError(f"p_max={p_max} outside (0, 1)")
    grid = np.array([p_max]) if count == 1 else p_max * np.arange(count) / (count - 1)
    return np.stack([werner_state(rho_e, float(p)) for p in grid])


# ===== Separable test states =====

def dirichlet_weights(alpha: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Symmetric Dirichlet draw via normalized Gamma(alpha, 1) variables

    Uses Gamma(a) = Gamma(a + 1) * U^(1/a) in log space so tiny alpha
    does not underflow every draw to zero.
    """
    if alpha <= 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    if count == 1:
        return np.ones(1)
    log_gamma = np.log(rng.standard_gamma(alpha + 1.0, count)) + np.log(rng.random(count)) / alpha
    weights = np.exp(log_gamma - np.max(log_gamma))
    return weights / weights.sum()


def _haar_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    vector = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return vector / np.linalg.norm(vector)


def random_kseparable_pure(n_qubits: int, spec: PermutationSpec, rng: np.random.Generator) -> np.ndarray:
    """Random pure state that is a product across the spec's qubit groups."""
    if spec.n_qubits != n_qubits:
        raise InvalidInputError(f"spec {spec.label} describes {spec.n_qubits} qubits, not {n_qubits}")
    chi = kron_all([_haar_vector(2 ** size, rng) for size in spec.parts])
    psi = spec.operator @ chi if spec.swap_sequence else chi
    return psi / np.linalg.norm(psi)


def _mixture_shard(
    n_qubits: int,
    count: int,
    alpha: float,
    specs: Sequence[PermutationSpec],
    rng: np.random.Generator,
) -> np.ndarray:
    dim = 2 ** n_qubits
    out = np.empty((count, dim, dim), dtype=complex)
    for i in range(count):
        choices = rng.integers(len(specs), size=dim)
        pure = np.stack([random_kseparable_pure(n_qubits, specs[c], rng) for c in choices])
        weights = dirichlet_weights(alpha, dim, rng)
        out[i] = np.einsum("k,ki,kj->ij", weights, pure, pure.conj())
    return out


def separable_test_states(
    n_qubits: int,
    count: int,
    alpha: float,
    rng: np.random.Generator,
    threads: int = 1,
) -> np.ndarray:
    """
    Dirichlet mixtures of 2^N random k-separable pure states

    Work is split into fixed-size shards with their own child generators, so
    the output does not depend on the thread count.

    Returns:
        (count, 2^N, 2^N) array of separable density matrices
    """
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    if alpha <= 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    specs = mixture_arrangements(n_qubits)
    sizes = [min(_SHARD_SIZE, count - start) for start in range(0, count, _SHARD_SIZE)]
    shard_rngs = child_generators(rng, len(sizes))

    def _run(args):
        size, shard_rng = args
        return _mixture_shard(n_qubits, size, alpha, specs, shard_rng)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            shards = list(pool.map(_run, zip(sizes, shard_rngs)))
    else:
        shards = [_run(args) for args in zip(sizes, shard_rngs)]
    return np.concatenate(shards)


# ===== Training sets =====

def separable_training_set(
    n_qubits: int,
    feature_set: Sequence["PauliString | str"],
    extras_per_eigenstate: int = EXTRAS_PER_EIGENSTATE,
    sigma: float = PERTURBATION_SIGMA,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
    target: Optional[TargetKind] = None,
) -> TrainingSet:
    """Labeled (+1) feature rows of the eigenstates and their neighbours."""
    states = separable_training_states(n_qubits, extras_per_eigenstate, sigma, rng)
    origins = ([SampleOrigin.EIGENSTATE] + [SampleOrigin.PERTURBED] * extras_per_eigenstate) * (6 ** n_qubits)
    features = feature_matrix_pure(states, feature_set)
    logger.info("Generated %d separable training states for %d qubits", len(states), n_qubits)
    return TrainingSet(
        features=features,
        labels=np.ones(len(states), dtype=int),
        origins=origins,
        feature_set=tuple(feature_set),
        n_qubits=n_qubits,
        seed=seed,
        target=target,
    )


def entangled_training_set(
    target: TargetKind | str,
    n_qubits: int,
    feature_set: Sequence["PauliString | str"],
    count: int = ENTANGLED_TRAINING_COUNT,
    p_max: float = WERNER_P_MAX,
    seed: Optional[int] = None,
) -> TrainingSet:
    """Labeled (-1) feature rows of Werner states of the target."""
    kind = get_target_kind(target)
    rho_e = projector(target_state(kind, n_qubits))
    states = entangled_training_states(rho_e, count, p_max)
    features = feature_matrix_density(states, feature_set)
    logger.info("Generated %d entangled training states (p <= %.3f)", count, p_max)
    return TrainingSet(
        features=features,
        labels=-np.ones(count, dtype=int),
        origins=[SampleOrigin.WERNER] * count,
        feature_set=tuple(feature_set),
        n_qubits=n_qubits,
        seed=seed,
        target=kind,
    )


# ===== Persistence =====

def training_set_to_csv(data: TrainingSet) -> Tuple[str, Dict[str, Any]]:
    """
    Serialize to CSV rows plus a JSON-ready header

    Returns:
        (csv text with columns label, origin, <feature labels...>, header dict)
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["label", "origin"] + [p.labels for p in data.feature_set])
    for row, label, origin in zip(data.features, data.labels, data.origins):
        writer.writerow([int(label), origin.value] + [format(v, ".17g") for v in row])
    header = {
        "n_qubits": data.n_qubits,
        "feature_set": [p.labels for p in data.feature_set],
        "seed": data.seed,
        "target": data.target.value if data.target else None,
        "count": len(data),
        "origin_counts": data.origin_counts(),
    }
    return buffer.getvalue(), header


def training_set_from_csv(text: str, header: Dict[str, Any]) -> TrainingSet:
    """Inverse of training_set_to_csv."""
    reader = csv.reader(io.StringIO(text))
    try:
        columns = next(reader)
    except StopIteration:
        raise ArtifactError("sample file is empty") from None
    if columns[2:] != list(header["feature_set"]):
        raise ArtifactError("sample file columns do not match its header")
    labels, origins, rows = [], [], []
    for record in reader:
        labels.append(int(record[0]))
        origins.append(SampleOrigin(record[1]))
        rows.append([float(v) for v in record[2:]])
    features = np.array(rows, dtype=float).reshape(len(rows), len(columns) - 2)
    target = header.get("target")
    return TrainingSet(
        features=features,
        labels=np.array(labels, dtype=int),
        origins=origins,
        feature_set=tuple(PauliString(p) for p in header["feature_set"]),
        n_qubits=int(header["n_qubits"]),
        seed=header.get("seed"),
        target=TargetKind(target) if target else None,
    )
