"""
Witness validity checks

certify: the witness must be nonnegative on every Pauli eigenstate and on a
batch of random k-separable mixtures. verify: classification of fresh
separable and Werner test sets, with per-class statistics.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from src.constants import CERTIFICATE_TOL, QUICK_CERTIFICATE_COUNT, TEST_ALPHA
from src.errors import InvalidInputError
from src.models import CertificateReport, CheckIssue, ClassStats, VerificationConfig, VerificationReport
from src.statesets import pauli_eigenstates, separable_test_states, target_state
from src.tensor_core import projector, werner_state
from src.witness import Witness, evaluate_many, evaluate_pure

logger = logging.getLogger(__name__)

# Mixed states generated and evaluated per batch
_BATCH = 2048


class WitnessChecker:
    """Separable-set certificate and test-set verification"""

    def __init__(self, max_listed: int = 50, threads: int = 1):
        self.max_listed = max_listed
        self.threads = threads

    def certify(
        self,
        witness: Witness,
        mixture_count: int = QUICK_CERTIFICATE_COUNT,
        rng: Optional[np.random.Generator] = None,
        alpha: float = TEST_ALPHA,
    ) -> Tuple[bool, CertificateReport]:
        """
        Check Tr(rho W) >= -1e-9 on all 6^N eigenstates and on mixture_count
        Dirichlet-mixed k-separable states

        Returns:
            (passed, report) tuple
        """
        issues: List[CheckIssue] = []
        states = pauli_eigenstates(witness.n_qubits)
        values = evaluate_pure(witness, states)
        eigenstate_min = float(np.min(values))
        for idx in np.flatnonzero(values < -CERTIFICATE_TOL)[:self.max_listed]:
            issues.append(CheckIssue(
                index=int(idx),
                issue_type="eigenstate",
                message=f"eigenstate #{idx} has negative expectation",
                current_value=f"{values[idx]:.3e}",
                expected_value=">= 0",
            ))

        mixture_min = None
        if mixture_count > 0:
            rng = rng if rng is not None else np.random.default_rng()
            mixture_values = self._mixture_expectations(witness, mixture_count, alpha, rng)
            mixture_min = float(np.min(mixture_values))
            for idx in np.flatnonzero(mixture_values < -CERTIFICATE_TOL)[:self.max_listed]:
                issues.append(CheckIssue(
                    index=int(idx),
                    issue_type="mixture",
                    message=f"separable mixture #{idx} has negative expectation",
                    current_value=f"{mixture_values[idx]:.3e}",
                    expected_value=">= 0",
                ))

        is_valid = len(issues) == 0
        report = CertificateReport(
            is_valid=is_valid,
            n_qubits=witness.n_qubits,
            eigenstate_min=eigenstate_min,
            mixture_min=mixture_min,
            checked_count=len(states) + mixture_count,
            issues=issues,
        )
        logger.info("Certificate (%d states): %s, eigenstate min %.3e",
                    report.checked_count, "passed" if is_valid else "FAILED", eigenstate_min)
        return is_valid, report

    def verify(
        self,
        witness: Witness,
        cfg: Optional[VerificationConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> VerificationReport:
        """Classify fresh separable mixtures and Werner states of the witness target."""
        cfg = cfg or VerificationConfig()
        rng = rng if rng is not None else np.random.default_rng()
        if witness.target is None:
            raise InvalidInputError("witness has no target state to verify against")

        is_certified, certificate = self.certify(witness, mixture_count=0)

        separable_values = self._mixture_expectations(witness, cfg.separable_count, cfg.alpha, rng)
        separable_bad = np.flatnonzero(separable_values < -CERTIFICATE_TOL)

        rho_e = projector(target_state(witness.target, witness.n_qubits))
        mixing = rng.uniform(0.0, cfg.p_max, cfg.entangled_count)
        entangled_values = np.concatenate([
            evaluate_many(witness, np.stack([werner_state(rho_e, float(p)) for p in chunk]))
            for chunk in np.array_split(mixing, max(1, len(mixing) // _BATCH))
        ])
        entangled_bad = np.flatnonzero(entangled_values >= 0)

        issues = list(certificate.issues)
        for idx in separable_bad[:cfg.max_listed]:
            issues.append(CheckIssue(
                index=int(idx),
                issue_type="separable",
                message=f"separable test state #{idx} detected as entangled",
                current_value=f"{separable_values[idx]:.3e}",
                expected_value=">= 0",
            ))
        for idx in entangled_bad[:cfg.max_listed]:
            issues.append(CheckIssue(
                index=int(idx),
                issue_type="entangled",
                message=f"Werner state #{idx} (p={mixing[idx]:.4f}) not detected",
                current_value=f"{entangled_values[idx]:.3e}",
                expected_value="< 0",
            ))

        report = VerificationReport(
            is_valid=is_certified and len(separable_bad) == 0 and len(entangled_bad) == 0,
            n_qubits=witness.n_qubits,
            term_count=witness.term_count,
            alpha=cfg.alpha,
            p_max=cfg.p_max,
            separable=ClassStats(
                count=cfg.separable_count,
                min_expectation=float(np.min(separable_values)),
                max_expectation=float(np.max(separable_values)),
                misclassified=len(separable_bad),
                misclassified_indices=[int(i) for i in separable_bad[:cfg.max_listed]],
            ),
            entangled=ClassStats(
                count=cfg.entangled_count,
                min_expectation=float(np.min(entangled_values)),
                max_expectation=float(np.max(entangled_values)),
                misclassified=len(entangled_bad),
                misclassified_indices=[int(i) for i in entangled_bad[:cfg.max_listed]],
            ),
            certificate=certificate,
            issues=issues,
        )
        logger.info("Verification: %d/%d separable and %d/%d entangled misclassified",
                    len(separable_bad), cfg.separable_count, len(entangled_bad), cfg.entangled_count)
        return report

    def _mixture_expectations(
        self, witness: Witness, count: int, alpha: float, rng: np.random.Generator
    ) -> np.ndarray:
        values = []
        sizes = [min(_BATCH, count - start) for start in range(0, count, _BATCH)]
        for size in tqdm(sizes, desc="separable states", unit="batch", disable=None, leave=False):
            rhos = separable_test_states(witness.n_qubits, size, alpha, rng, threads=self.threads)
            values.append(evaluate_many(witness, rhos))
        return np.concatenate(values)


def get_checker(max_listed: int = 50, threads: int = 1) -> WitnessChecker:
    """Return a checker instance"""
    return WitnessChecker(max_listed=max_listed, threads=threads)
