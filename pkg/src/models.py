"""
Pydantic models for pipeline configuration and command results
"""
import hashlib
import json
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.constants import (
    DEFAULT_MAX_QUBITS,
    ENTANGLED_TRAINING_COUNT,
    EXTRAS_PER_EIGENSTATE,
    PERTURBATION_SIGMA,
    QUICK_CERTIFICATE_COUNT,
    TEST_ALPHA,
    VERIFICATION_ENTANGLED_COUNT,
    VERIFICATION_SEPARABLE_COUNT,
    WERNER_P_MAX,
    FeatureSubsetKind,
    TargetKind,
)
from src.errors import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ===== Configuration =====

class SvmConfig(_Section):
    """Soft-margin SVM training settings"""
    learning_rate: float = Field(0.01, gt=0, description="Initial step size, decayed as 1/sqrt(epoch)")
    batch_size: int = Field(64, ge=1, description="Mini-batch size")
    regularization: float = Field(1e-4, ge=0, description="L2 weight penalty lambda")
    epochs: int = Field(200, ge=1, description="Passes over the training data")
    shuffle: bool = Field(True, description="Reshuffle samples every epoch")
    seed: Optional[int] = Field(None, ge=0, description="Overrides the svm substream of the master seed")


class AdamConfig(_Section):
    """Adam step settings"""
    step_size: float = Field(0.01, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)


class MsoConfig(_Section):
    """Mixed-state optimization settings"""
    max_iterations: int = Field(500, ge=1, description="Adam steps per restart")
    convergence_window: int = Field(25, ge=1, description="Iterations between stopping-rule comparisons")
    relative_tolerance: float = Field(1e-6, gt=0, description="Relative loss change that ends a restart")
    adam: AdamConfig = Field(default_factory=AdamConfig)
    restarts: int = Field(8, ge=1, description="Independent random initializations")
    seed: Optional[int] = Field(None, ge=0, description="Overrides the mso substream of the master seed")


class RfeConfig(_Section):
    """Recursive feature elimination settings"""
    target_feature_count: Optional[int] = Field(None, ge=1, description="Stop at this many terms (identity included)")
    tolerance_floor: Optional[float] = Field(None, ge=0, le=1, description="Stop when the best noise tolerance falls below this")
    max_candidates_per_level: Optional[int] = Field(None, ge=1, description="Beam width; unset tries every feature")
    quick_certificate_count: int = Field(QUICK_CERTIFICATE_COUNT, ge=0, description="Mixed separable states checked per level winner")
    svm: Optional[SvmConfig] = Field(None, description="Retraining settings; defaults to the pipeline svm section")
    mso: Optional[MsoConfig] = Field(None, description="Level-winner bias adjustment; defaults to the pipeline mso section")

    @model_validator(mode="after")
    def _needs_stopping_rule(self):
        if self.target_feature_count is None and self.tolerance_floor is None:
            raise ValueError("set target_feature_count and/or tolerance_floor")
        return self


class FeatureConfig(_Section):
    """Feature subset the witness is trained on"""
    kind: FeatureSubsetKind = Field(FeatureSubsetKind.MERMIN)
    labels: List[str] = Field(default_factory=list, description="Pauli labels for kind=explicit")
    path: Optional[str] = Field(None, description="Witness JSON whose support is used for kind=file")

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == FeatureSubsetKind.EXPLICIT and not self.labels:
            raise ValueError("explicit feature subset is empty")
        if self.kind == FeatureSubsetKind.FILE and not self.path:
            raise ValueError("kind=file needs a path")
        return self

    @field_validator("labels")
    @classmethod
    def _upper(cls, labels: List[str]) -> List[str]:
        return [label.strip().upper() for label in labels]


class TrainingDataConfig(_Section):
    """Training sample generation"""
    extras_per_eigenstate: int = Field(EXTRAS_PER_EIGENSTATE, ge=0)
    sigma: float = Field(PERTURBATION_SIGMA, ge=0)
    entangled_count: int = Field(ENTANGLED_TRAINING_COUNT, ge=1)
    p_max: float = Field(WERNER_P_MAX, gt=0, lt=1)


class VerificationConfig(_Section):
    """Test set sizes for verification"""
    separable_count: int = Field(VERIFICATION_SEPARABLE_COUNT, ge=1)
    entangled_count: int = Field(VERIFICATION_ENTANGLED_COUNT, ge=1)
    alpha: float = Field(TEST_ALPHA, gt=0)
    p_max: float = Field(WERNER_P_MAX, gt=0, lt=1)
    max_listed: int = Field(50, ge=0, description="Misclassified sample indices kept in the report")


class PipelineConfig(_Section):
    """Complete configuration of one run"""
    n_qubits: int = Field(..., ge=2)
    target: TargetKind = Field(...)
    seed: int = Field(..., ge=0, lt=2 ** 64, description="Master seed")
    output_dir: str = Field("runs/default")
    threads: int = Field(1, ge=1)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    training: TrainingDataConfig = Field(default_factory=TrainingDataConfig)
    svm: SvmConfig = Field(default_factory=SvmConfig)
    mso: MsoConfig = Field(default_factory=MsoConfig)
    rfe: Optional[RfeConfig] = None
    verification: VerificationConfig = Field(default_factory=VerificationConfig)

    @model_validator(mode="after")
    def _consistent_qubits(self):
        if self.n_qubits > DEFAULT_MAX_QUBITS:
            raise ValueError(f"n_qubits={self.n_qubits} exceeds WFORGE_MAX_QUBITS={DEFAULT_MAX_QUBITS}")
        if self.features.kind == FeatureSubsetKind.MERMIN and self.n_qubits < 3:
            raise ValueError("the mermin feature subset needs n_qubits >= 3")
        for label in self.features.labels:
            if len(label) != self.n_qubits or set(label) - set("IXYZ"):
                raise ValueError(f"feature {label!r} is not a {self.n_qubits}-qubit Pauli string")
            if set(label) == {"I"}:
                raise ValueError("the identity is the bias term, not a feature")
        return self

    def digest(self) -> str:
        """sha256 of the canonical JSON form"""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_override(value: str) -> Any:
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def apply_overrides(raw: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Apply dotted key=value overrides (values parsed as JSON, else kept as strings)."""
    data = json.loads(json.dumps(raw))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override must look like key=value: {item!r}")
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = _parse_override(value)
    return data


def build_pipeline_config(raw: Dict[str, Any], overrides: Optional[List[str]] = None) -> PipelineConfig:
    """Validate a raw config mapping; errors are collected per field."""
    data = apply_overrides(raw, overrides or [])
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        field_errors = [
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        ]
        raise ConfigError("invalid configuration", field_errors) from None


# ===== Checks and reports =====

class CheckIssue(BaseModel):
    """One problem found by a check"""
    index: int = Field(..., description="Sample index (-1: whole witness, -2: run)")
    issue_type: str = Field(..., description="Issue type (eigenstate, mixture, separable, entangled, artifact, monotonicity)")
    message: str = Field(..., description="Description")
    current_value: Optional[str] = Field(None, description="Observed value")
    expected_value: Optional[str] = Field(None, description="Expected value")


class CertificateReport(BaseModel):
    """Separable-set validity certificate"""
    is_valid: bool
    n_qubits: int
    eigenstate_min: float = Field(..., description="Minimum expectation over the 6^N eigenstates")
    mixture_min: Optional[float] = Field(None, description="Minimum over random separable mixtures")
    checked_count: int = Field(..., description="States evaluated")
    issues: List[CheckIssue] = Field(default_factory=list)


class ClassStats(BaseModel):
    """Expectation statistics of one test class"""
    count: int
    min_expectation: float
    max_expectation: float
    misclassified: int
    misclassified_indices: List[int] = Field(default_factory=list)


class VerificationReport(BaseModel):
    """Verification of a witness on fresh test data"""
    is_valid: bool
    n_qubits: int
    term_count: int
    alpha: float
    p_max: float
    separable: ClassStats
    entangled: ClassStats
    certificate: CertificateReport
    issues: List[CheckIssue] = Field(default_factory=list)


class GenDataResponse(BaseModel):
    """gen-data result"""
    separable_count: int
    entangled_count: int
    feature_count: int
    origin_counts: Dict[str, int]
    digests: Dict[str, str]


class TrainResponse(BaseModel):
    """train result"""
    witness_path: str
    term_count: int
    bias: float
    training_accuracy: float
    final_loss: float


class AdjustResponse(BaseModel):
    """adjust result"""
    witness_path: str
    trace_path: str
    bias_before: float
    bias_after: float
    min_expectation: float
    restart_index: int = Field(..., description="Winning restart (-1: eigenstate floor)")
    iterations_used: int
    eigenstate_floor: float
    noise_tolerance: float


class RfeResponse(BaseModel):
    """rfe result"""
    witness_path: str
    trace_path: str
    levels_path: str
    initial_terms: int
    final_terms: int
    noise_tolerance: float
    monotone: bool = Field(..., description="Whether tolerance never decreased across levels")


class CompareResponse(BaseModel):
    """compare result"""
    csv_path: str
    text_path: str
    reference: str
    max_abs_error: float
    only_in_witness: List[str] = Field(default_factory=list)
    only_in_reference: List[str] = Field(default_factory=list)


class ReportResponse(BaseModel):
    """report result"""
    report_path: str
    complete: bool
    missing: List[str] = Field(default_factory=list)
    config_digest: Optional[str] = None
