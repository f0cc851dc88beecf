"""
Witness model and analysis

A witness is a sparse real combination of Pauli strings; the identity
coefficient is its bias. This module evaluates witnesses on states, builds
the Mermin GHZ witness, computes noise tolerances against Werner mixing,
normalizes and compares coefficients, prunes small terms and reads/writes the
JSON witness format (including the bundled published witnesses).
"""
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from src.constants import (
    DEFAULT_MAX_QUBITS,
    FIXTURE_NAMES,
    NOISE_SCAN_STEP,
    TargetKind,
    ToleranceMethod,
    get_target_kind,
)
from src.errors import (
    ArtifactError,
    DimensionMismatchError,
    InvalidInputError,
    NormalizationError,
)
from src.svm_trainer import Hyperplane
from src.tensor_core import (
    PauliString,
    as_pauli,
    expectation,
    feature_matrix_density,
    feature_matrix_pure,
    n_qubits_of,
    operator_of,
    werner_state,
)

logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).parent / "fixtures"

_NORMALIZATION_RTOL = 1e-9


@dataclass
class Witness:
    """Sparse Pauli-basis witness; the identity string carries the bias"""
    n_qubits: int
    terms: Dict[PauliString, float]
    target: Optional[TargetKind] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise InvalidInputError("a witness needs at least one qubit")
        terms: Dict[PauliString, float] = {}
        for pstring, coeff in self.terms.items():
            pstring = as_pauli(pstring)
            if pstring.n_qubits != self.n_qubits:
                raise DimensionMismatchError(
                    f"term {pstring} does not act on {self.n_qubits} qubits"
                )
            coeff = float(coeff)
            if not np.isfinite(coeff):
                raise InvalidInputError(f"coefficient of {pstring} is not finite")
            terms[pstring] = terms.get(pstring, 0.0) + coeff
        self.terms = terms
        if self.target is not None:
            self.target = get_target_kind(self.target)

    @property
    def identity(self) -> PauliString:
        return PauliString.identity(self.n_qubits)

    @property
    def bias(self) -> float:
        return self.terms.get(self.identity, 0.0)

    @property
    def support(self) -> List[PauliString]:
        """Non-identity strings in term order."""
        return [p for p in self.terms if not p.is_identity]

    @property
    def term_count(self) -> int:
        return len(self.terms)

    def strings_and_coefficients(self) -> Tuple[List[PauliString], np.ndarray]:
        strings = list(self.terms)
        return strings, np.array([self.terms[p] for p in strings])

    def coefficient(self, pstring: "PauliString | str") -> float:
        return self.terms.get(as_pauli(pstring), 0.0)

    def with_bias(self, bias: float, **metadata) -> "Witness":
        terms = {self.identity: float(bias)}
        terms.update({p: c for p, c in self.terms.items() if not p.is_identity})
        return Witness(self.n_qubits, terms, self.target, {**self.metadata, **metadata})

    def scaled(self, factor: float) -> "Witness":
        return Witness(
            self.n_qubits,
            {p: c * factor for p, c in self.terms.items()},
            self.target,
            dict(self.metadata),
        )

    def operator(self, max_qubits: int = DEFAULT_MAX_QUBITS) -> np.ndarray:
        """Dense Hermitian matrix sum_k c_k sigma_k."""
        dim = 2 ** self.n_qubits
        matrix = np.zeros((dim, dim), dtype=complex)
        for pstring, coeff in self.terms.items():
            matrix += coeff * operator_of(pstring, max_qubits)
        return matrix

    # ===== JSON =====

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_qubits": self.n_qubits,
            "target": self.target.value if self.target else None,
            "terms": [{"pauli": p.labels, "coeff": c} for p, c in self.terms.items()],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Witness":
        try:
            n_qubits = int(data["n_qubits"])
            terms = {PauliString(t["pauli"]): float(t["coeff"]) for t in data["terms"]}
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f"invalid witness document: {e}") from None
        target = data.get("target")
        return cls(
            n_qubits=n_qubits,
            terms=terms,
            target=TargetKind(target) if target else None,
            metadata=dict(data.get("metadata") or {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Witness":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ArtifactError(f"witness file is not valid JSON: {e}") from None
        return cls.from_dict(data)


# ===== Evaluation =====

def _check_dimension(witness: Witness, n_qubits: int):
    if n_qubits != witness.n_qubits:
        raise DimensionMismatchError(
            f"{witness.n_qubits}-qubit witness applied to a {n_qubits}-qubit state"
        )


def evaluate(witness: Witness, rho: np.ndarray) -> float:
    """Tr(rho W) over the sparse terms."""
    rho = np.asarray(rho)
    _check_dimension(witness, n_qubits_of(rho))
    return float(sum(c * expectation(rho, p) for p, c in witness.terms.items()))


def evaluate_many(witness: Witness, rhos: np.ndarray) -> np.ndarray:
    """Tr(rho W) for a batch of density matrices, shape (M, 2^N, 2^N)."""
    rhos = np.asarray(rhos)
    _check_dimension(witness, n_qubits_of(rhos))
    strings, coeffs = witness.strings_and_coefficients()
    return feature_matrix_density(rhos, strings) @ coeffs


def evaluate_pure(witness: Witness, states: np.ndarray) -> np.ndarray:
    """<psi|W|psi> for a batch of state vectors, shape (M, 2^N)."""
    states = np.atleast_2d(np.asarray(states))
    _check_dimension(witness, n_qubits_of(states))
    strings, coeffs = witness.strings_and_coefficients()
    return feature_matrix_pure(states, strings) @ coeffs


# ===== Construction =====

def from_hyperplane(
    hyperplane: Hyperplane,
    target: Optional[TargetKind | str] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Witness:
    """Identity coefficient = bias; each weight becomes its string's coefficient."""
    n_qubits = hyperplane.feature_set[0].n_qubits if hyperplane.feature_set else None
    if n_qubits is None:
        raise InvalidInputError("hyperplane has no features")
    terms = {PauliString.identity(n_qubits): hyperplane.bias}
    terms.update({p: float(w) for p, w in zip(hyperplane.feature_set, hyperplane.weights)})
    return Witness(n_qubits, terms, target, dict(metadata or {}))


def mermin_support(n_qubits: int) -> List[PauliString]:
    """X/Y strings with an even number of Ys, ordered by Y count then label."""
    if n_qubits < 3:
        raise InvalidInputError(f"the Mermin witness needs at least 3 qubits, got {n_qubits}")
    labels = ["".join(s) for s in product("XY", repeat=n_qubits) if s.count("Y") % 2 == 0]
    return [PauliString(s) for s in sorted(labels, key=lambda s: (s.count("Y"), s))]


def mermin_witness(n_qubits: int) -> Witness:
    """
    2^(N-2) I - M_N

    M_N sums every permutation of X^(N-2m) Y^(2m) with sign (-1)^m, so
    strings with 2m Ys carry the coefficient (-1)^(m+1).
    """
    terms = {PauliString.identity(n_qubits): float(2 ** (n_qubits - 2))}
    for pstring in mermin_support(n_qubits):
        m = pstring.labels.count("Y") // 2
        terms[pstring] = float((-1) ** (m + 1))
    return Witness(
        n_qubits, terms, TargetKind.GHZ, {"name": f"mermin{n_qubits}", "provenance": "mermin"}
    )


# ===== Noise tolerance =====

@dataclass(frozen=True)
class NoiseToleranceReport:
    """Largest Werner mixing fraction the witness still detects"""
    p_star: float
    method: ToleranceMethod
    expectation_at_target: float
    step_size: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.p_star <= 1.0:
            raise InvalidInputError(f"p_star={self.p_star} outside [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p_star": self.p_star,
            "method": self.method.value,
            "expectation_at_target": self.expectation_at_target,
            "step_size": self.step_size,
        }


def noise_tolerance_scan(witness: Witness, rho_e: np.ndarray, step: float = NOISE_SCAN_STEP) -> NoiseToleranceReport:
    """
    Scan p = 0, step, 2 step, ... and report the last p with Tr(W rho_p) < 0

    The scan stops at the first nonnegative value or at p = 1.
    """
    if not 0.0 < step <= 1.0:
        raise InvalidInputError(f"step must be in (0, 1], got {step}")
    e0 = evaluate(witness, rho_e)
    p_star = 0.0
    if e0 < 0:
        n_steps = int(np.floor(1.0 / step + 1e-9))
        for j in range(1, n_steps + 1):
            p = round(j * step, 12)
            if evaluate(witness, werner_state(rho_e, p)) >= 0:
                break
            p_star = p
    return NoiseToleranceReport(p_star, ToleranceMethod.SCAN, e0, step)


def noise_tolerance_analytic(witness: Witness, rho_e: np.ndarray) -> NoiseToleranceReport:
    """Root of the affine map p -> Tr(W rho_p), clamped to [0, 1]."""
    e0 = evaluate(witness, rho_e)
    e1 = witness.bias  # every non-identity string is traceless
    if e0 >= 0:
        p_star = 0.0
    elif e1 < 0:
        p_star = 1.0
    else:
        p_star = min(1.0, max(0.0, e0 / (e0 - e1)))
    return NoiseToleranceReport(p_star, ToleranceMethod.ANALYTIC, e0)


def noise_tolerance(witness: Witness, rho_e: np.ndarray, method: ToleranceMethod | str = ToleranceMethod.SCAN,
                    step: float = NOISE_SCAN_STEP) -> NoiseToleranceReport:
    if ToleranceMethod(method) == ToleranceMethod.SCAN:
        return noise_tolerance_scan(witness, rho_e, step)
    return noise_tolerance_analytic(witness, rho_e)


def fidelity_noise_tolerance(n_qubits: int) -> float:
    """Noise tolerance of the fidelity-based W witness: 1 / (N (1 - 2^-N))."""
    if n_qubits < 2:
        raise InvalidInputError("N must be at least 2")
    return float(Fraction(2 ** n_qubits, n_qubits * (2 ** n_qubits - 1)))


# ===== Normalization and comparison =====

def normalize(
    witness: Witness,
    bias_to: Optional[float] = None,
    match_identity_of: Optional[Witness] = None,
) -> Witness:
    """Scale every coefficient by one positive factor so the bias hits a target."""
    if (bias_to is None) == (match_identity_of is None):
        raise InvalidInputError("give exactly one of bias_to or match_identity_of")
    target = bias_to if bias_to is not None else match_identity_of.bias
    if witness.bias == 0:
        raise NormalizationError("cannot normalize a witness with zero identity coefficient")
    factor = target / witness.bias
    if not factor > 0:
        raise NormalizationError(
            f"normalizing bias {witness.bias} to {target} needs a non-positive factor"
        )
    normalized = witness.scaled(factor)
    normalized.metadata["normalization"] = f"identity = {target:g}"
    return normalized


@dataclass
class CoefficientComparison:
    """Per-term coefficients of a witness against a reference"""
    rows: List[Tuple[PauliString, float, float, float]]  # (pauli, coeff, reference, percent error)
    only_in_witness: List[PauliString] = field(default_factory=list)
    only_in_reference: List[PauliString] = field(default_factory=list)

    @property
    def errors(self) -> Dict[PauliString, float]:
        return {p: err for p, _, _, err in self.rows if not p.is_identity}

    @property
    def max_abs_error(self) -> float:
        errors = list(self.errors.values())
        return float(max(abs(e) for e in errors)) if errors else 0.0

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["feature", "reference_coefficient", "witness_coefficient", "percent_error"])
        for pstring, coeff, ref, err in self.rows:
            writer.writerow([pstring.labels, format(ref, ".17g"), format(coeff, ".17g"),
                             "" if pstring.is_identity else f"{err:.2f}"])
        for pstring in self.only_in_witness:
            writer.writerow([pstring.labels, "", "", "missing from reference"])
        for pstring in self.only_in_reference:
            writer.writerow([pstring.labels, "", "", "missing from witness"])
        return buffer.getvalue()

    def to_text(self) -> str:
        lines = [f"{'Feature':<10}{'Reference':>14}{'Witness':>14}{'Percent error':>16}"]
        for pstring, coeff, ref, err in self.rows:
            shown = "normalized" if pstring.is_identity else f"{err:.2f}"
            lines.append(f"{pstring.labels:<10}{ref:>14.4f}{coeff:>14.4f}{shown:>16}")
        for pstring in self.only_in_witness:
            lines.append(f"{pstring.labels:<10}{'-':>14}{'':>14}{'only in witness':>16}")
        for pstring in self.only_in_reference:
            lines.append(f"{pstring.labels:<10}{'':>14}{'-':>14}{'only in reference':>16}")
        lines.append(f"max |percent error|: {self.max_abs_error:.2f}")
        return "\n".join(lines) + "\n"


def percent_error_vs(witness: Witness, reference: Witness) -> CoefficientComparison:
    """
    100 * (c / c_ref - 1) for every term the two witnesses share

    Raises:
        NormalizationError: identity coefficients differ
    """
    if witness.n_qubits != reference.n_qubits:
        raise DimensionMismatchError("witnesses act on different numbers of qubits")
    if not np.isclose(witness.bias, reference.bias, rtol=_NORMALIZATION_RTOL, atol=0.0) or reference.bias == 0:
        raise NormalizationError(
            f"identity coefficients differ ({witness.bias} vs {reference.bias}); normalize first"
        )
    rows = []
    for pstring, ref in reference.terms.items():
        if pstring not in witness.terms:
            continue
        coeff = witness.terms[pstring]
        if ref == 0:
            error = 0.0 if coeff == 0 else float("inf")
        else:
            error = 100.0 * (coeff / ref - 1.0)
        rows.append((pstring, coeff, ref, error))
    return CoefficientComparison(
        rows=rows,
        only_in_witness=[p for p in witness.terms if p not in reference.terms],
        only_in_reference=[p for p in reference.terms if p not in witness.terms],
    )


# ===== Pruning =====

def prune_by_cutoff(witness: Witness, cutoff: float) -> Witness:
    """Drop non-identity terms with |coefficient| < cutoff (bias must be 1)."""
    if not np.isclose(witness.bias, 1.0, rtol=0.0, atol=_NORMALIZATION_RTOL):
        raise NormalizationError("prune_by_cutoff expects a witness normalized to identity = 1")
    if cutoff < 0:
        raise InvalidInputError("cutoff must be nonnegative")
    terms = {p: c for p, c in witness.terms.items() if p.is_identity or abs(c) >= cutoff}
    return Witness(witness.n_qubits, terms, witness.target, {**witness.metadata, "cutoff": cutoff})


@dataclass
class CutoffScan:
    """Largest cutoff that keeps the noise tolerance"""
    cutoff: float
    witness: Witness
    p_star: float
    reference_p_star: float
    table: List[Tuple[float, int, float]]  # (cutoff, term count, p_star)


def cutoff_scan(
    witness: Witness,
    rho_e: np.ndarray,
    cutoffs: Optional[Iterable[float]] = None,
    allowed_drop: float = NOISE_SCAN_STEP,
) -> CutoffScan:
    """
    Try increasing cutoffs and keep the largest whose pruned witness stays within
    allowed_drop of the unpruned analytic noise tolerance
    """
    base = normalize(witness, bias_to=1.0)
    reference = noise_tolerance_analytic(base, rho_e).p_star
    if cutoffs is None:
        cutoffs = sorted({abs(c) for p, c in base.terms.items() if not p.is_identity})
    best = (0.0, base, reference)
    table = []
    for cutoff in sorted(cutoffs):
        pruned = prune_by_cutoff(base, cutoff)
        p_star = noise_tolerance_analytic(pruned, rho_e).p_star
        table.append((float(cutoff), pruned.term_count, p_star))
        if abs(p_star - reference) <= allowed_drop:
            best = (float(cutoff), pruned, p_star)
    logger.info("Cutoff %.6g keeps %d terms (p* %.4f vs %.4f)",
                best[0], best[1].term_count, best[2], reference)
    return CutoffScan(best[0], best[1], best[2], reference, table)


# ===== Bundled witnesses =====

def fixture_names() -> List[str]:
    return list(FIXTURE_NAMES)


def load_fixture(name: str) -> Witness:
    """Published witness bundled with the package, e.g. "w4_46"."""
    if name not in FIXTURE_NAMES:
        raise ArtifactError(f"unknown fixture {name!r} (available: {', '.join(FIXTURE_NAMES)})")
    path = FIXTURE_DIR / f"{name}.json"
    return Witness.from_json(path.read_text(encoding="utf-8"))

