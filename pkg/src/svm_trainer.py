"""
Soft-margin linear SVM

Mini-batch subgradient descent on the L2-regularized hinge loss. The
hyperplane's bias is the coefficient of the identity string, so decision
values equal witness expectations: separable samples (+1) land on the
positive side.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from src.errors import DimensionMismatchError, InvalidInputError, TrainingError
from src.statesets import TrainingSet
from src.tensor_core import FeatureVector, PauliString, as_pauli

logger = logging.getLogger(__name__)


@dataclass
class Hyperplane:
    """Weights over a feature set plus the bias (identity coefficient)"""
    weights: np.ndarray
    bias: float
    feature_set: Tuple[PauliString, ...]
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.feature_set = tuple(as_pauli(p) for p in self.feature_set)
        self.bias = float(self.bias)
        if self.weights.shape != (len(self.feature_set),):
            raise DimensionMismatchError(
                f"{self.weights.shape} weights for {len(self.feature_set)} features"
            )
        if any(p.is_identity for p in self.feature_set):
            raise InvalidInputError("the identity string is carried by the bias, not a weight")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise InvalidInputError("hyperplane parameters must be finite")

    def scaled(self, factor: float) -> "Hyperplane":
        return Hyperplane(self.weights * factor, self.bias * factor, self.feature_set)


def decision_value(hyperplane: Hyperplane, features: FeatureVector) -> float:
    """w . f + b"""
    if tuple(features.feature_set) != hyperplane.feature_set:
        raise DimensionMismatchError("feature vector and hyperplane use different feature sets")
    return float(hyperplane.weights @ features.values + hyperplane.bias)


def decision_values(hyperplane: Hyperplane, features: np.ndarray) -> np.ndarray:
    """Vectorized decision values for feature rows already aligned to the hyperplane."""
    features = np.atleast_2d(features)
    if features.shape[1] != len(hyperplane.feature_set):
        raise DimensionMismatchError(
            f"{features.shape[1]} feature columns for {len(hyperplane.feature_set)} weights"
        )
    return features @ hyperplane.weights + hyperplane.bias


# ===== Objective =====

def hinge_objective(weights: np.ndarray, bias: float, features: np.ndarray, labels: np.ndarray, reg: float) -> float:
    margins = labels * (features @ weights + bias)
    return float(0.5 * reg * weights @ weights + np.mean(np.maximum(0.0, 1.0 - margins)))


def hinge_gradient(
    weights: np.ndarray, bias: float, features: np.ndarray, labels: np.ndarray, reg: float
) -> Tuple[np.ndarray, float]:
    """Subgradient of hinge_objective (exact away from the kinks)."""
    margins = labels * (features @ weights + bias)
    active = margins < 1.0
    scale = labels[active] / len(labels)
    grad_w = reg * weights - scale @ features[active]
    grad_b = -float(np.sum(scale))
    return grad_w, grad_b


# ===== Training =====

def train(
    data: TrainingSet,
    feature_subset: Sequence["PauliString | str"],
    learning_rate: float = 0.01,
    batch_size: int = 64,
    regularization: float = 1e-4,
    epochs: int = 200,
    seed: Optional[int] = None,
    shuffle: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> Hyperplane:
    """
    Fit a hyperplane on the columns of feature_subset

    The step size decays as learning_rate / sqrt(epoch); the returned
    parameters are the average of the final epoch's iterates.

    Raises:
        InvalidInputError: empty subset, identity in the subset, bad settings
        TrainingError: single-class data or a non-finite loss
    """
    subset = tuple(as_pauli(p) for p in feature_subset)
    if not subset:
        raise InvalidInputError("feature subset is empty")
    if any(p.is_identity for p in subset):
        raise InvalidInputError("feature subset must not contain the identity string")
    if learning_rate <= 0 or batch_size < 1 or regularization < 0 or epochs < 1:
        raise InvalidInputError("invalid SVM settings")

    labels = data.labels.astype(float)
    n_pos = int(np.sum(labels > 0))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError(
            "training data contains a single class",
            diagnostics={"separable": n_pos, "entangled": n_neg},
        )

    features = data.columns(subset)
    if rng is None:
        rng = np.random.default_rng(seed)
    n_samples = len(labels)
    weights = np.zeros(len(subset))
    bias = 0.0
    order = np.arange(n_samples)
    loss = hinge_objective(weights, bias, features, labels, regularization)

    for epoch in range(1, epochs + 1):
        step = learning_rate / np.sqrt(epoch)
        if shuffle:
            order = rng.permutation(n_samples)
        final_epoch = epoch == epochs
        avg_w = np.zeros_like(weights)
        avg_b = 0.0
        n_batches = 0
        for start in range(0, n_samples, batch_size):
            idx = order[start:start + batch_size]
            grad_w, grad_b = hinge_gradient(weights, bias, features[idx], labels[idx], regularization)
            weights = weights - step * grad_w
            bias -= step * grad_b
            if final_epoch:
                avg_w += weights
                avg_b += bias
                n_batches += 1

        loss = hinge_objective(weights, bias, features, labels, regularization)
        if not np.isfinite(loss):
            raise TrainingError(
                "hinge loss diverged",
                diagnostics={"epoch": epoch, "loss": float(loss), "learning_rate": learning_rate},
            )
        if epoch % 50 == 0:
            logger.debug("epoch %d: loss %.6f", epoch, loss)

    weights = avg_w / n_batches
    bias = avg_b / n_batches
    loss = hinge_objective(weights, bias, features, labels, regularization)
    hyperplane = Hyperplane(
        weights=weights,
        bias=bias,
        feature_set=subset,
        diagnostics={"final_loss": loss, "epochs": epochs, "samples": n_samples},
    )
    accuracy = training_accuracy(hyperplane, data)
    hyperplane.diagnostics["training_accuracy"] = accuracy
    logger.info("Trained %d-feature hyperplane: loss %.6f, accuracy %.4f", len(subset), loss, accuracy)
    return hyperplane


def training_accuracy(hyperplane: Hyperplane, data: TrainingSet) -> float:
    """Fraction of samples with sign(decision value) == label; zero counts as wrong."""
    if len(data) == 0:
        return 0.0
    values = decision_values(hyperplane, data.columns(hyperplane.feature_set))
    correct = np.where(data.labels > 0, values > 0, values < 0)
    return float(np.mean(correct))
