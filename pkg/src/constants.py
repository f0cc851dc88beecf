"""
Constants for witness construction

Enums, numerical tolerances, pipeline defaults and the permutation tables of
k-separable pure-state arrangements for 3, 4 and 5 qubits.
"""
import os
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple


class TargetKind(str, Enum):
    """Target entangled state"""
    GHZ = "ghz"
    W = "w"


class FeatureSubsetKind(str, Enum):
    """How the witness feature set is chosen"""
    FULL = "full"          # all 4^N - 1 non-identity Pauli strings
    MERMIN = "mermin"      # support of the Mermin witness
    EXPLICIT = "explicit"  # labels listed in the config
    FILE = "file"          # support of an existing witness file


class SampleOrigin(str, Enum):
    """Where a labeled sample came from"""
    EIGENSTATE = "eigenstate"
    PERTURBED = "perturbed"
    WERNER = "werner"
    DIRICHLET_MIXED = "dirichlet-mixed"


class ToleranceMethod(str, Enum):
    """Noise tolerance computation"""
    SCAN = "scan"
    ANALYTIC = "analytic"


PAULI_SYMBOLS = "IXYZ"

# Per-qubit eigenstate order used by the eigenstate enumeration
SINGLE_QUBIT_EIGENSTATE_LABELS: Tuple[str, ...] = ("X+", "X-", "Y+", "Y-", "Z+", "Z-")

# Tolerances
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
NORM_TOL = 1e-10
PSD_TOL = 1e-8
UNITARY_TOL = 1e-9
EXPECTATION_IMAG_TOL = 1e-9
EXPECTATION_RANGE_TOL = 1e-9
CERTIFICATE_TOL = 1e-9
SCHMIDT_RANK_TOL = 1e-8

# Largest N for which dense operators are built (WFORGE_MAX_QUBITS=8 etc.)
DEFAULT_MAX_QUBITS = int(os.environ.get("WFORGE_MAX_QUBITS", 6))

# Training data defaults
EXTRAS_PER_EIGENSTATE = 5
PERTURBATION_SIGMA = 0.05
ENTANGLED_TRAINING_COUNT = 1000
WERNER_P_MAX = 0.25

# Verification defaults (desk scale; the published runs used 10^6 states)
TEST_ALPHA = 0.1
VERIFICATION_SEPARABLE_COUNT = 10_000
VERIFICATION_ENTANGLED_COUNT = 10_000
QUICK_CERTIFICATE_COUNT = 1_000

NOISE_SCAN_STEP = 0.001

# Coefficient cutoffs after normalizing the bias to 1
CUTOFF_4_QUBIT = 0.02
CUTOFF_5_QUBIT = 0.0004

# Named RNG substreams fanned out from the master seed
STREAM_IDS: Dict[str, int] = {
    "data": 1,
    "svm": 2,
    "mso": 3,
    "verify": 4,
    "rfe": 5,
}


@dataclass(frozen=True)
class PermutationRow:
    """One row of a permutation table"""
    label: str                           # qubit arrangement, e.g. "13|24"
    parts: Tuple[int, ...]               # group sizes in canonical tensor order
    swaps: Tuple[Tuple[int, int], ...]   # swap operators in application order


# Arrangements of k-separable pure states. Products like S23 S15 are stored in
# application order, rightmost factor first: ((1, 5), (2, 3)).
PERMUTATION_TABLES: Dict[int, List[PermutationRow]] = {
    3: [
        PermutationRow("1|23", (1, 2), ()),
        PermutationRow("2|13", (1, 2), ((1, 2),)),
        PermutationRow("3|12", (2, 1), ()),
    ],
    4: [
        # 1|234
        PermutationRow("1|234", (1, 3), ()),
        PermutationRow("2|134", (1, 3), ((1, 2),)),
        PermutationRow("3|124", (1, 3), ((1, 3),)),
        PermutationRow("4|123", (1, 3), ((1, 4),)),
        # 12|34
        PermutationRow("12|34", (2, 2), ()),
        PermutationRow("13|24", (2, 2), ((2, 3),)),
        PermutationRow("14|23", (2, 2), ((2, 4),)),
    ],
    5: [
        # 1|2345
        PermutationRow("1|2345", (1, 4), ()),
        PermutationRow("2|1345", (1, 4), ((1, 2),)),
        PermutationRow("3|1245", (1, 4), ((1, 3),)),
        PermutationRow("4|1235", (1, 4), ((1, 4),)),
        PermutationRow("5|1234", (1, 4), ((1, 5),)),
        # 12|345
        PermutationRow("12|345", (2, 3), ()),
        PermutationRow("13|245", (2, 3), ((2, 3),)),
        PermutationRow("14|325", (2, 3), ((2, 4),)),
        PermutationRow("15|324", (2, 3), ((2, 5),)),
        PermutationRow("23|145", (2, 3), ((1, 3),)),
        PermutationRow("24|135", (2, 3), ((1, 4),)),
        PermutationRow("25|134", (2, 3), ((1, 5),)),
        PermutationRow("35|124", (2, 3), ((1, 5), (2, 3))),
        PermutationRow("45|123", (2, 3), ((1, 5), (2, 4))),
        PermutationRow("34|125", (2, 3), ((1, 4), (2, 3))),
        # 12|34|5
        PermutationRow("12|34|5", (2, 2, 1), ()),
        PermutationRow("13|24|5", (2, 2, 1), ((2, 3),)),
        PermutationRow("14|32|5", (2, 2, 1), ((2, 4),)),
        PermutationRow("15|34|2", (2, 2, 1), ((2, 5),)),
        PermutationRow("25|34|1", (2, 2, 1), ((1, 5),)),
        PermutationRow("12|45|3", (2, 2, 1), ((3, 5),)),
        PermutationRow("12|35|4", (2, 2, 1), ((4, 5),)),
        PermutationRow("35|24|1", (2, 2, 1), ((1, 5), (2, 3))),
        PermutationRow("45|23|1", (2, 2, 1), ((1, 5), (2, 4))),
        PermutationRow("35|14|2", (2, 2, 1), ((1, 3), (2, 5))),
        PermutationRow("45|13|2", (2, 2, 1), ((1, 4), (2, 5))),
        PermutationRow("14|25|3", (2, 2, 1), ((2, 4), (3, 5))),
        PermutationRow("24|15|3", (2, 2, 1), ((1, 4), (3, 5))),
        PermutationRow("13|25|4", (2, 2, 1), ((2, 3), (4, 5))),
        PermutationRow("23|15|4", (2, 2, 1), ((1, 3), (4, 5))),
    ],
}


# Bundled witness fixtures (src/fixtures/<name>.json)
FIXTURE_NAMES: Dict[str, str] = {
    "w4_46": "46 term 4 qubit W state witness",
    "w4_38": "38 term 4 qubit W state witness",
    "w4_28": "28 term 4 qubit W state witness",
    "w5_20": "20 term 5 qubit W state witness",
    "w5_180": "180 term 5 qubit W state witness",
    "ghz4_svm": "4 qubit SVM derived GHZ witness",
    "ghz5_svm": "5 qubit SVM derived GHZ witness",
}

# Noise tolerances reported alongside the fixtures
FIXTURE_NOISE_TOLERANCES: Dict[str, float] = {
    "w4_46": 0.30,
    "w4_38": 0.40,
    "w4_28": 0.46,
    "w5_20": 0.05,
    "w5_180": 0.15,
}


def get_permutation_rows(n_qubits: int) -> List[PermutationRow]:
    """Return the permutation table for N qubits."""
    from src.errors import UnsupportedCatalogError

    rows = PERMUTATION_TABLES.get(n_qubits)
    if rows is None:
        raise UnsupportedCatalogError(
            f"no permutation table for {n_qubits} qubits "
            f"(available: {sorted(PERMUTATION_TABLES)})"
        )
    return rows


def get_target_kind(target: TargetKind | str) -> TargetKind:
    """Accept an enum member or its string value."""
    if isinstance(target, str) and not isinstance(target, TargetKind):
        return TargetKind(target.lower())
    return target
