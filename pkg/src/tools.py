"""
Pipeline command implementations

One function per CLI command: a validated PipelineConfig in, a response model
out. Every command reads and writes artifacts through the run directory's
RunStore and never prints.
"""
import logging
import time
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from src.checker import get_checker
from src.constants import FeatureSubsetKind, FIXTURE_NAMES
from src.errors import ArtifactError, ConfigError, DimensionMismatchError, VerificationFailed
from src.models import (
    AdjustResponse,
    CompareResponse,
    GenDataResponse,
    PipelineConfig,
    ReportResponse,
    RfeResponse,
    TrainResponse,
    VerificationReport,
)
from src.mso import adjust_bias, optimize
from src.report_generator import get_report_generator
from src.rfe import rfe_run
from src.run_storage import (
    COMPARISON_CSV,
    COMPARISON_TEXT,
    ENTANGLED_SAMPLES,
    MSO_TRACE,
    RFE_LEVELS,
    RFE_TRACE,
    RFE_WITNESS,
    SEPARABLE_SAMPLES,
    VERIFICATION,
    WITNESS_ADJUSTED,
    WITNESS_TRAINED,
    RunStore,
    get_run_store,
    sidecar_key,
)
from src.seeding import substream
from src.statesets import (
    TrainingSet,
    entangled_training_set,
    separable_training_set,
    target_state,
    training_set_from_csv,
    training_set_to_csv,
)
from src.svm_trainer import train
from src.tensor_core import PauliString, all_pauli_strings, projector
from src.witness import (
    Witness,
    from_hyperplane,
    load_fixture,
    mermin_support,
    mermin_witness,
    noise_tolerance_analytic,
    normalize,
    percent_error_vs,
)

logger = logging.getLogger(__name__)


# ===== Helpers =====

def _store(cfg: PipelineConfig) -> RunStore:
    store = get_run_store(cfg.output_dir)
    store.update_manifest(
        config=cfg.model_dump(mode="json"),
        config_digest=cfg.digest(),
        seed=cfg.seed,
    )
    return store


def _stream(cfg: PipelineConfig, name: str, override: Optional[int] = None) -> np.random.Generator:
    if override is not None:
        return np.random.default_rng(override)
    return substream(cfg.seed, name)


def read_witness(path: str | Path) -> Witness:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"witness file not found: {path}")
    return Witness.from_json(path.read_text(encoding="utf-8"))


def _witness_from(store: RunStore, witness_path: Optional[str], defaults: Tuple[str, ...]) -> Tuple[Witness, str]:
    """Explicit file, else the first default artifact present in the run."""
    if witness_path:
        return read_witness(witness_path), str(witness_path)
    for key in defaults:
        if store.exists(key):
            return Witness.from_json(store.get_text(key)), str(store.path(key))
    raise ArtifactError(f"no witness in {store.root} (looked for {', '.join(defaults)})")


def resolve_features(cfg: PipelineConfig) -> List[PauliString]:
    """Non-identity feature subset named by the features section."""
    n = cfg.n_qubits
    kind = cfg.features.kind
    if kind == FeatureSubsetKind.FULL:
        return all_pauli_strings(n, include_identity=False)
    if kind == FeatureSubsetKind.MERMIN:
        return mermin_support(n)
    if kind == FeatureSubsetKind.EXPLICIT:
        return [PauliString(label) for label in cfg.features.labels]
    witness = read_witness(cfg.features.path)
    if witness.n_qubits != n:
        raise ConfigError(f"feature file {cfg.features.path} has {witness.n_qubits} qubits, config has {n}")
    if not witness.support:
        raise ConfigError(f"feature file {cfg.features.path} has no non-identity terms")
    return witness.support


def load_training_data(store: RunStore) -> TrainingSet:
    """Separable and entangled sample files merged into one set."""
    sets = []
    for key in (SEPARABLE_SAMPLES, ENTANGLED_SAMPLES):
        header = store.get_json(sidecar_key(key))
        if header is None:
            raise ArtifactError(f"missing sample header {store.path(sidecar_key(key))}; run gen-data first")
        sets.append(training_set_from_csv(store.get_text(key), header))
    return sets[0].merged(sets[1])


def _reference_witness(reference: str, n_qubits: int) -> Witness:
    if reference == "mermin":
        return mermin_witness(n_qubits)
    if reference in FIXTURE_NAMES:
        return load_fixture(reference)
    return read_witness(reference)


# ===== Commands =====

def cmd_gen_data(cfg: PipelineConfig) -> GenDataResponse:
    """
    Generate and persist the training samples

    Separable: every Pauli eigenstate plus its perturbed neighbours.
    Entangled: Werner states of the target on a linear grid up to p_max.
    """
    store = _store(cfg)
    features = resolve_features(cfg)
    rng = substream(cfg.seed, "data")
    separable = separable_training_set(
        cfg.n_qubits, features,
        extras_per_eigenstate=cfg.training.extras_per_eigenstate,
        sigma=cfg.training.sigma,
        rng=rng,
        seed=cfg.seed,
        target=cfg.target,
    )
    entangled = entangled_training_set(
        cfg.target, cfg.n_qubits, features,
        count=cfg.training.entangled_count,
        p_max=cfg.training.p_max,
        seed=cfg.seed,
    )

    digests = {}
    for key, data in ((SEPARABLE_SAMPLES, separable), (ENTANGLED_SAMPLES, entangled)):
        text, header = training_set_to_csv(data)
        digests[key] = store.set_text(key, text, command="gen-data")
        header["digest"] = digests[key]
        store.set_json(sidecar_key(key), header, command="gen-data")

    counts = separable.origin_counts()
    counts.update(entangled.origin_counts())
    logger.info("gen-data: %d separable, %d entangled samples over %d features",
                len(separable), len(entangled), len(features))
    return GenDataResponse(
        separable_count=len(separable),
        entangled_count=len(entangled),
        feature_count=len(features),
        origin_counts=counts,
        digests=digests,
    )


def cmd_train(cfg: PipelineConfig) -> TrainResponse:
    """Train the SVM on the configured feature subset and save the raw witness."""
    store = _store(cfg)
    data = load_training_data(store)
    if data.n_qubits != cfg.n_qubits:
        raise DimensionMismatchError(f"samples are {data.n_qubits}-qubit, config says {cfg.n_qubits}")
    features = resolve_features(cfg)
    svm = cfg.svm
    hyperplane = train(
        data, features,
        learning_rate=svm.learning_rate,
        batch_size=svm.batch_size,
        regularization=svm.regularization,
        epochs=svm.epochs,
        shuffle=svm.shuffle,
        rng=_stream(cfg, "svm", svm.seed),
    )
    witness = from_hyperplane(hyperplane, cfg.target, {
        "provenance": "trained",
        "feature_subset": cfg.features.kind.value,
        "training_accuracy": hyperplane.diagnostics["training_accuracy"],
        "final_loss": hyperplane.diagnostics["final_loss"],
        "config_digest": cfg.digest(),
    })
    store.set_text(WITNESS_TRAINED, witness.to_json(), command="train")
    return TrainResponse(
        witness_path=str(store.path(WITNESS_TRAINED)),
        term_count=witness.term_count,
        bias=witness.bias,
        training_accuracy=hyperplane.diagnostics["training_accuracy"],
        final_loss=hyperplane.diagnostics["final_loss"],
    )


def cmd_adjust(cfg: PipelineConfig, witness_path: Optional[str] = None) -> AdjustResponse:
    """Shift the witness bias by the separable minimum found by MSO."""
    store = _store(cfg)
    witness, source = _witness_from(store, witness_path, (WITNESS_TRAINED,))
    result = optimize(witness, cfg.mso, rng=_stream(cfg, "mso", cfg.mso.seed), threads=cfg.threads)
    adjusted = adjust_bias(witness, result)
    adjusted.metadata["source"] = source

    store.set_text(MSO_TRACE, result.trace_csv(), command="adjust")
    store.set_text(WITNESS_ADJUSTED, adjusted.to_json(), command="adjust")
    tolerance = noise_tolerance_analytic(adjusted, projector(target_state(cfg.target, cfg.n_qubits)))
    return AdjustResponse(
        witness_path=str(store.path(WITNESS_ADJUSTED)),
        trace_path=str(store.path(MSO_TRACE)),
        bias_before=witness.bias,
        bias_after=adjusted.bias,
        min_expectation=result.min_expectation,
        restart_index=result.restart_index,
        iterations_used=result.iterations_used,
        eigenstate_floor=result.eigenstate_floor,
        noise_tolerance=tolerance.p_star,
    )


def cmd_rfe(cfg: PipelineConfig, witness_path: Optional[str] = None) -> RfeResponse:
    """Recursive feature elimination starting from the adjusted witness."""
    if cfg.rfe is None:
        raise ConfigError("the rfe section is not configured")
    store = _store(cfg)
    witness, _ = _witness_from(store, witness_path, (WITNESS_ADJUSTED,))
    data = load_training_data(store)
    final, trace = rfe_run(
        witness, data, cfg.rfe,
        svm_cfg=cfg.svm,
        mso_cfg=cfg.mso,
        seed=cfg.seed,
        threads=cfg.threads,
    )
    final.metadata["provenance"] = "rfe"
    store.set_text(RFE_WITNESS, final.to_json(), command="rfe")
    store.set_json(RFE_TRACE, trace.to_dict(), command="rfe")
    store.set_text(RFE_LEVELS, trace.levels_csv(), command="rfe")
    tolerances = trace.tolerances()
    return RfeResponse(
        witness_path=str(store.path(RFE_WITNESS)),
        trace_path=str(store.path(RFE_TRACE)),
        levels_path=str(store.path(RFE_LEVELS)),
        initial_terms=len(trace.initial_terms),
        final_terms=final.term_count,
        noise_tolerance=tolerances[-1],
        monotone=trace.is_monotone(),
    )


def cmd_verify(cfg: PipelineConfig, witness_path: Optional[str] = None) -> VerificationReport:
    """
    Classify fresh separable and Werner test states

    The report is written before a failure is raised, so a failing run still
    leaves verification.json behind.

    Raises:
        VerificationFailed: any misclassification or certificate violation
    """
    store = _store(cfg)
    witness, source = _witness_from(store, witness_path, (RFE_WITNESS, WITNESS_ADJUSTED, WITNESS_TRAINED))
    if witness.target is None:
        witness.target = cfg.target
    checker = get_checker(max_listed=cfg.verification.max_listed, threads=cfg.threads)
    start = time.perf_counter()
    report = checker.verify(witness, cfg.verification, rng=substream(cfg.seed, "verify"))
    logger.info("Verified %s in %.1fs", source, time.perf_counter() - start)
    store.set_json(VERIFICATION, report.model_dump(mode="json"), command="verify")
    if not report.is_valid:
        raise VerificationFailed(
            f"{report.separable.misclassified} separable and {report.entangled.misclassified} "
            f"entangled test states misclassified",
            report=report,
        )
    return report


def cmd_compare(cfg: PipelineConfig, witness_path: Optional[str] = None, reference: str = "mermin") -> CompareResponse:
    """
    Per-term percent error against a reference witness

    The witness is rescaled so its identity coefficient matches the
    reference's. reference is "mermin", a bundled fixture name or a path.
    """
    store = _store(cfg)
    witness, _ = _witness_from(store, witness_path, (WITNESS_ADJUSTED, WITNESS_TRAINED))
    ref = _reference_witness(reference, witness.n_qubits)
    if ref.n_qubits != witness.n_qubits:
        raise DimensionMismatchError(
            f"witness has {witness.n_qubits} qubits, reference {reference} has {ref.n_qubits}"
        )
    comparison = percent_error_vs(normalize(witness, match_identity_of=ref), ref)
    store.set_text(COMPARISON_CSV, comparison.to_csv(), command="compare")
    store.set_text(COMPARISON_TEXT, comparison.to_text(), command="compare")
    logger.info("Compared against %s: max |percent error| %.2f", reference, comparison.max_abs_error)
    return CompareResponse(
        csv_path=str(store.path(COMPARISON_CSV)),
        text_path=str(store.path(COMPARISON_TEXT)),
        reference=reference,
        max_abs_error=comparison.max_abs_error,
        only_in_witness=[p.labels for p in comparison.only_in_witness],
        only_in_reference=[p.labels for p in comparison.only_in_reference],
    )


def cmd_report(output_dir: str | Path) -> ReportResponse:
    """Render report.html for a run directory; missing artifacts are listed, not fatal."""
    store = get_run_store(output_dir)
    if not store.root.is_dir():
        raise ArtifactError(f"run directory not found: {store.root}")
    path, missing = get_report_generator(store).generate()
    return ReportResponse(
        report_path=path,
        complete=not missing,
        missing=missing,
        config_digest=store.manifest().get("config_digest"),
    )
