"""
Recursive feature elimination

Each level retrains one witness per candidate subset (the current terms minus
one non-identity string), shifts its bias so no Pauli eigenstate goes
negative, scores it by analytic noise tolerance against the target state, and
keeps the best. The level winner then gets a full MSO bias adjustment and a
quick separability certificate before the next level starts.
"""
import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.checker import get_checker
from src.errors import InvalidInputError, TrainingError, VerificationFailed, WforgeError
from src.models import MsoConfig, RfeConfig, SvmConfig
from src.mso import adjust_bias, eigenstate_floor, optimize
from src.seeding import substream
from src.statesets import TrainingSet, target_state
from src.svm_trainer import train
from src.tensor_core import PauliString, as_pauli, projector
from src.witness import Witness, from_hyperplane, noise_tolerance_analytic

logger = logging.getLogger(__name__)


@dataclass
class Candidate:
    """One retrained subset of a level"""
    removed: PauliString
    noise_tolerance: Optional[float]
    witness: Optional[Witness] = None
    error: Optional[str] = None


@dataclass
class RfeLevel:
    """Outcome of one elimination level"""
    retained: List[PauliString]          # terms kept after this level, identity first
    removed: PauliString
    best_tolerance: float                # analytic tolerance of the winning candidate
    candidates: List[Candidate]
    candidate_witness: Witness           # winner before the full bias adjustment
    adjusted_tolerance: Optional[float] = None
    adjusted_witness: Optional[Witness] = None
    wall_time: float = 0.0
    accepted: bool = True

    @property
    def best_subset(self) -> List[PauliString]:
        return self.retained

    def to_dict(self) -> Dict[str, Any]:
        return {
            "retained": [p.labels for p in self.retained],
            "term_count": len(self.retained),
            "removed": self.removed.labels,
            "best_tolerance": self.best_tolerance,
            "adjusted_tolerance": self.adjusted_tolerance,
            "accepted": self.accepted,
            "wall_time": self.wall_time,
            "candidates": [
                {"removed": c.removed.labels, "noise_tolerance": c.noise_tolerance, "error": c.error}
                for c in self.candidates
            ],
            "candidate_witness": self.candidate_witness.to_dict(),
        }


@dataclass
class RfeTrace:
    """Every level of an elimination run"""
    initial_terms: List[PauliString]
    initial_tolerance: float
    levels: List[RfeLevel] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def accepted_levels(self) -> List[RfeLevel]:
        return [level for level in self.levels if level.accepted]

    def tolerances(self) -> List[float]:
        """Initial tolerance followed by each accepted level's adjusted tolerance."""
        return [self.initial_tolerance] + [
            level.adjusted_tolerance for level in self.accepted_levels
        ]

    def is_monotone(self) -> bool:
        values = self.tolerances()
        return all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "initial_terms": [p.labels for p in self.initial_terms],
            "initial_tolerance": self.initial_tolerance,
            "stop_reason": self.stop_reason,
            "monotone": self.is_monotone(),
            "levels": [level.to_dict() for level in self.levels],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def levels_csv(self) -> str:
        """One row per candidate: level, term_count, removed, noise_tolerance, chosen, error"""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["level", "term_count", "removed", "noise_tolerance", "chosen", "error"])
        for number, level in enumerate(self.levels, start=1):
            for candidate in level.candidates:
                writer.writerow([
                    number,
                    len(level.retained),
                    candidate.removed.labels,
                    "" if candidate.noise_tolerance is None else format(candidate.noise_tolerance, ".17g"),
                    int(candidate.removed == level.removed),
                    candidate.error or "",
                ])
        return buffer.getvalue()


# ===== Levels =====

def _with_identity(features: Sequence["PauliString | str"]) -> List[PauliString]:
    strings = [as_pauli(p) for p in features]
    if not strings:
        raise InvalidInputError("feature list is empty")
    identity = PauliString.identity(strings[0].n_qubits)
    return [identity] + [p for p in strings if not p.is_identity]


def _train_candidate(
    removed: PauliString,
    subset: List[PauliString],
    data: TrainingSet,
    rho_e: np.ndarray,
    svm_cfg: SvmConfig,
    rng: np.random.Generator,
) -> Candidate:
    n_qubits = data.n_qubits
    try:
        if subset:
            hyperplane = train(
                data, subset,
                learning_rate=svm_cfg.learning_rate,
                batch_size=svm_cfg.batch_size,
                regularization=svm_cfg.regularization,
                epochs=svm_cfg.epochs,
                shuffle=svm_cfg.shuffle,
                rng=rng,
            )
            witness = from_hyperplane(hyperplane, data.target)
        else:
            witness = Witness(n_qubits, {PauliString.identity(n_qubits): 1.0}, data.target)
        floor, _ = eigenstate_floor(witness)
        witness = witness.with_bias(witness.bias - floor, bias_adjustment="eigenstate floor")
        tolerance = noise_tolerance_analytic(witness, rho_e).p_star
        return Candidate(removed, tolerance, witness)
    except WforgeError as e:
        logger.warning("Candidate without %s failed: %s", removed, e)
        return Candidate(removed, None, error=str(e))


def rfe_level(
    current_features: Sequence["PauliString | str"],
    data: TrainingSet,
    svm_cfg: Optional[SvmConfig] = None,
    seed: int = 0,
    coefficients: Optional[Dict[PauliString, float]] = None,
    max_candidates: Optional[int] = None,
    threads: int = 1,
) -> RfeLevel:
    """
    Try every single-feature removal and keep the best subset

    Args:
        current_features: current terms; the identity is always retained
        data: training set whose feature set covers current_features
        svm_cfg: retraining settings
        seed: master seed; each candidate trains on its own rfe substream
        coefficients: current witness coefficients, used to rank candidates
            when max_candidates caps the level
        max_candidates: beam width (smallest |coefficient| first)
        threads: candidates trained concurrently

    Returns:
        RfeLevel with the winner; ties go to the lexicographically smallest
        removed string

    Raises:
        TrainingError: every candidate failed
    """
    svm_cfg = svm_cfg or SvmConfig()
    features = _with_identity(current_features)
    removable = sorted(features[1:], key=lambda p: p.labels)
    if not removable:
        raise InvalidInputError("nothing left to eliminate: only the identity term remains")
    if data.target is None:
        raise InvalidInputError("training set has no target state")
    if max_candidates is not None and coefficients is not None and len(removable) > max_candidates:
        removable = sorted(removable, key=lambda p: (abs(coefficients.get(p, 0.0)), p.labels))[:max_candidates]
        removable.sort(key=lambda p: p.labels)

    rho_e = projector(target_state(data.target, data.n_qubits))
    start = time.perf_counter()

    def _run(removed: PauliString) -> Candidate:
        subset = [p for p in features[1:] if p != removed]
        rng = substream(seed, "rfe", len(features), removed.index)
        return _train_candidate(removed, subset, data, rho_e, svm_cfg, rng)

    if threads > 1 and len(removable) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            candidates = list(pool.map(_run, removable))
    else:
        candidates = [_run(p) for p in removable]

    scored = [c for c in candidates if c.noise_tolerance is not None]
    if not scored:
        raise TrainingError(
            "every candidate subset failed to train",
            diagnostics={c.removed.labels: c.error for c in candidates},
        )
    best = min(scored, key=lambda c: (-c.noise_tolerance, c.removed.labels))
    retained = [p for p in features if p != best.removed]
    logger.info("RFE level %d -> %d terms: removed %s (p* %.4f)",
                len(features), len(retained), best.removed, best.noise_tolerance)
    return RfeLevel(
        retained=retained,
        removed=best.removed,
        best_tolerance=best.noise_tolerance,
        candidates=candidates,
        candidate_witness=best.witness,
        wall_time=time.perf_counter() - start,
    )


# ===== Driver =====

def rfe_run(
    initial_witness: Witness,
    data: TrainingSet,
    cfg: RfeConfig,
    svm_cfg: Optional[SvmConfig] = None,
    mso_cfg: Optional[MsoConfig] = None,
    seed: int = 0,
    threads: int = 1,
) -> Tuple[Witness, RfeTrace]:
    """
    Eliminate terms level by level until a stopping rule fires

    Stops when the term count (identity included) reaches
    cfg.target_feature_count, or when a level's best tolerance falls below
    cfg.tolerance_floor; in the latter case the best witness so far is
    returned.

    Raises:
        VerificationFailed: a level winner failed the quick certificate
    """
    svm_cfg = cfg.svm or svm_cfg or SvmConfig()
    mso_cfg = cfg.mso or mso_cfg or MsoConfig()
    if data.target is None:
        raise InvalidInputError("training set has no target state")
    rho_e = projector(target_state(data.target, data.n_qubits))

    current = initial_witness
    features = _with_identity(list(initial_witness.terms))
    initial_tolerance = noise_tolerance_analytic(initial_witness, rho_e).p_star
    trace = RfeTrace(initial_terms=features, initial_tolerance=initial_tolerance)
    best_witness, best_tolerance = initial_witness, initial_tolerance
    checker = get_checker(threads=threads)

    target = cfg.target_feature_count
    with tqdm(total=max(0, len(features) - (target or 1)), desc="rfe", unit="level", disable=None, leave=False) as progress:
        while True:
            if target is not None and len(features) <= target:
                trace.stop_reason = "target feature count reached"
                break
            if len(features) < 2:
                trace.stop_reason = "only the identity term remains"
                break

            level = rfe_level(
                features, data, svm_cfg,
                seed=seed,
                coefficients=current.terms,
                max_candidates=cfg.max_candidates_per_level,
                threads=threads,
            )
            trace.levels.append(level)
            progress.update(1)

            if cfg.tolerance_floor is not None and level.best_tolerance < cfg.tolerance_floor:
                level.accepted = False
                trace.stop_reason = "tolerance below floor"
                current = best_witness
                break

            level_start = time.perf_counter()
            result = optimize(
                level.candidate_witness, mso_cfg,
                rng=substream(seed, "mso", len(level.retained)),
                threads=threads,
            )
            adjusted = adjust_bias(level.candidate_witness, result)
            passed, certificate = checker.certify(
                adjusted, cfg.quick_certificate_count, rng=substream(seed, "verify", len(level.retained))
            )
            if not passed:
                raise VerificationFailed(
                    f"level winner with {len(level.retained)} terms failed the separability certificate",
                    report=certificate,
                )
            level.adjusted_witness = adjusted
            level.adjusted_tolerance = noise_tolerance_analytic(adjusted, rho_e).p_star
            level.wall_time += time.perf_counter() - level_start

            current = adjusted
            features = level.retained
            if level.adjusted_tolerance >= best_tolerance:
                best_witness, best_tolerance = adjusted, level.adjusted_tolerance

    if not trace.is_monotone():
        logger.warning("RFE noise tolerance decreased along the elimination path")
    logger.info("RFE finished with %d terms (%s)", current.term_count, trace.stop_reason)
    return current, trace
