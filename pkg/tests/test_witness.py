from fractions import Fraction

import numpy as np
import pytest

from src.constants import FIXTURE_NOISE_TOLERANCES, TargetKind, ToleranceMethod
from src.errors import (
    ArtifactError,
    DimensionMismatchError,
    InvalidInputError,
    NormalizationError,
)
from src.statesets import pauli_eigenstates, target_state
from src.svm_trainer import Hyperplane
from src.tensor_core import PauliString, maximally_mixed, projector
from src.witness import (
    Witness,
    cutoff_scan,
    evaluate,
    evaluate_many,
    evaluate_pure,
    fidelity_noise_tolerance,
    fixture_names,
    from_hyperplane,
    load_fixture,
    mermin_support,
    mermin_witness,
    noise_tolerance,
    noise_tolerance_analytic,
    noise_tolerance_scan,
    normalize,
    percent_error_vs,
    prune_by_cutoff,
)
from tests.helpers import random_density, random_state


def _rho(kind, n_qubits):
    return projector(target_state(kind, n_qubits))


# ===== Model =====

def test_witness_merges_and_validates_terms():
    witness = Witness(2, {"II": 1.0, "XX": 0.5, PauliString("XX"): 0.25})
    assert witness.coefficient("XX") == pytest.approx(0.75)
    assert witness.bias == 1.0
    assert witness.support == [PauliString("XX")]
    with pytest.raises(DimensionMismatchError):
        Witness(2, {"XXX": 1.0})
    with pytest.raises(InvalidInputError):
        Witness(2, {"XX": float("nan")})


def test_with_bias_puts_identity_first():
    witness = Witness(2, {"ZZ": -1.0, "II": 1.0}).with_bias(3.0, note="shifted")
    assert list(witness.terms)[0].is_identity
    assert witness.bias == 3.0
    assert witness.metadata["note"] == "shifted"


def test_json_document():
    witness = mermin_witness(3)
    loaded = Witness.from_json(witness.to_json())
    assert loaded.terms == witness.terms
    assert loaded.target == TargetKind.GHZ
    assert loaded.metadata["name"] == "mermin3"
    with pytest.raises(ArtifactError):
        Witness.from_json("{not json")
    with pytest.raises(ArtifactError):
        Witness.from_dict({"n_qubits": 2, "terms": [{"pauli": "XX"}]})


def test_from_hyperplane():
    hyperplane = Hyperplane(np.array([-1.0, 0.5]), 2.0, ("XX", "ZZ"))
    witness = from_hyperplane(hyperplane, "ghz", {"provenance": "trained"})
    assert witness.bias == 2.0
    assert witness.coefficient("XX") == -1.0
    assert witness.coefficient("ZZ") == 0.5
    assert witness.target == TargetKind.GHZ


# ===== Evaluation =====

def test_evaluation_paths_agree(rng):
    witness = Witness(3, {"III": 0.7, "XYZ": -0.3, "ZZI": 0.4, "YIY": 1.1})
    rhos = np.stack([random_density(3, rng) for _ in range(4)])
    dense = [np.real(np.trace(witness.operator() @ rho)) for rho in rhos]
    assert np.allclose([evaluate(witness, rho) for rho in rhos], dense)
    assert np.allclose(evaluate_many(witness, rhos), dense)
    states = np.stack([random_state(3, rng) for _ in range(4)])
    assert np.allclose(evaluate_pure(witness, states),
                       [evaluate(witness, projector(s)) for s in states])
    with pytest.raises(DimensionMismatchError):
        evaluate(witness, maximally_mixed(2))


def test_maximally_mixed_reads_the_bias():
    witness = Witness(3, {"III": 0.7, "XYZ": -0.3})
    assert evaluate(witness, maximally_mixed(3)) == pytest.approx(0.7)


# ===== Mermin =====

@pytest.mark.parametrize("n_qubits, terms", [(3, 5), (4, 9), (5, 17)])
def test_mermin_on_ghz(n_qubits, terms):
    witness = mermin_witness(n_qubits)
    assert witness.term_count == terms
    assert witness.bias == 2 ** (n_qubits - 2)
    expected = 2 ** (n_qubits - 2) - 2 ** (n_qubits - 1)
    assert evaluate(witness, _rho("ghz", n_qubits)) == pytest.approx(expected)


def test_mermin_support_order_and_signs():
    assert [p.labels for p in mermin_support(3)] == ["XXX", "XYY", "YXY", "YYX"]
    witness = mermin_witness(4)
    assert witness.coefficient("XXXX") == -1.0
    assert witness.coefficient("XXYY") == 1.0
    assert witness.coefficient("YYYY") == -1.0
    with pytest.raises(InvalidInputError):
        mermin_support(2)


@pytest.mark.parametrize("n_qubits", [3, 4])
def test_mermin_nonnegative_on_eigenstates(n_qubits):
    values = evaluate_pure(mermin_witness(n_qubits), pauli_eigenstates(n_qubits))
    assert values.min() >= -1e-9


# ===== Noise tolerance =====

@pytest.mark.parametrize("n_qubits", [3, 4, 5])
def test_mermin_tolerance_is_one_half(n_qubits):
    witness = mermin_witness(n_qubits)
    rho_e = _rho("ghz", n_qubits)
    analytic = noise_tolerance_analytic(witness, rho_e)
    scan = noise_tolerance_scan(witness, rho_e)
    assert analytic.p_star == pytest.approx(0.5)
    assert abs(scan.p_star - analytic.p_star) <= 0.001 + 1e-12
    assert scan.method == ToleranceMethod.SCAN and scan.step_size == 0.001


def test_undetected_target_has_zero_tolerance():
    witness = Witness(3, {"III": 1.0, "XXX": 0.5})
    report = noise_tolerance(witness, _rho("ghz", 3), method="analytic")
    assert report.p_star == 0.0
    assert noise_tolerance(witness, _rho("ghz", 3), method="scan").p_star == 0.0


def test_negative_bias_detects_everything():
    witness = Witness(3, {"III": -1.0, "XXX": -0.5})
    assert noise_tolerance_analytic(witness, _rho("ghz", 3)).p_star == 1.0


@pytest.mark.parametrize("factor", [0.1, 3.7])
def test_positive_scaling_keeps_classification(factor, rng):
    witness = mermin_witness(3)
    scaled = witness.scaled(factor)
    rho_e = _rho("ghz", 3)
    assert noise_tolerance_analytic(scaled, rho_e).p_star == pytest.approx(
        noise_tolerance_analytic(witness, rho_e).p_star
    )
    rhos = np.stack([random_density(3, rng) for _ in range(20)])
    assert np.array_equal(evaluate_many(witness, rhos) < 0, evaluate_many(scaled, rhos) < 0)


def test_fidelity_baselines():
    assert fidelity_noise_tolerance(4) == float(Fraction(4, 15))
    assert fidelity_noise_tolerance(5) == float(Fraction(32, 155))
    with pytest.raises(InvalidInputError):
        fidelity_noise_tolerance(1)


# ===== Normalization and comparison =====

def test_normalize():
    witness = Witness(3, {"III": 4.0, "XXX": -2.0})
    unit = normalize(witness, bias_to=1.0)
    assert unit.bias == 1.0 and unit.coefficient("XXX") == -0.5
    matched = normalize(witness, match_identity_of=mermin_witness(3))
    assert matched.bias == 2.0
    with pytest.raises(InvalidInputError):
        normalize(witness)
    with pytest.raises(NormalizationError):
        normalize(witness, bias_to=-1.0)
    with pytest.raises(NormalizationError):
        normalize(Witness(3, {"XXX": 1.0}), bias_to=1.0)


def test_compare_with_itself():
    witness = mermin_witness(4)
    comparison = percent_error_vs(witness, witness)
    assert comparison.max_abs_error == 0.0
    assert not comparison.only_in_reference and not comparison.only_in_witness


def test_compare_requires_equal_bias():
    with pytest.raises(NormalizationError):
        percent_error_vs(mermin_witness(3).scaled(2.0), mermin_witness(3))


def test_published_ghz4_against_mermin():
    reference = mermin_witness(4)
    comparison = percent_error_vs(normalize(load_fixture("ghz4_svm"), match_identity_of=reference), reference)
    errors = {p.labels: e for p, e in comparison.errors.items()}
    assert errors["XXXX"] == pytest.approx(-6.5, abs=0.01)
    assert comparison.max_abs_error <= 10.0
    assert [p.labels for p in comparison.only_in_reference] == ["YYYY"]
    assert "XXXX" in comparison.to_csv()
    assert "max |percent error|" in comparison.to_text()


def test_published_ghz5_against_mermin():
    reference = mermin_witness(5)
    comparison = percent_error_vs(normalize(load_fixture("ghz5_svm"), match_identity_of=reference), reference)
    assert comparison.max_abs_error <= 3.0
    assert not comparison.only_in_reference


# ===== Pruning =====

def test_prune_by_cutoff():
    witness = Witness(3, {"III": 1.0, "XXX": -0.5, "ZZI": 0.01})
    pruned = prune_by_cutoff(witness, 0.1)
    assert pruned.term_count == 2
    assert pruned.metadata["cutoff"] == 0.1
    with pytest.raises(NormalizationError):
        prune_by_cutoff(witness.scaled(2.0), 0.1)


def test_cutoff_scan_drops_negligible_terms():
    base = mermin_witness(3)
    noisy = Witness(3, {**base.terms, PauliString("ZZI"): 0.001}, TargetKind.GHZ)
    scan = cutoff_scan(noisy, _rho("ghz", 3))
    assert scan.cutoff == pytest.approx(0.5)
    assert scan.witness.term_count == 5
    assert abs(scan.p_star - scan.reference_p_star) <= 0.001
    assert len(scan.table) == 2


# ===== Bundled witnesses =====

def test_fixture_term_counts():
    counts = {name: load_fixture(name).term_count for name in fixture_names()}
    assert counts == {
        "w4_46": 46, "w4_38": 38, "w4_28": 28, "w5_20": 20, "w5_180": 180,
        "ghz4_svm": 8, "ghz5_svm": 17,
    }
    with pytest.raises(ArtifactError):
        load_fixture("w6_1")


@pytest.mark.parametrize("name", sorted(FIXTURE_NOISE_TOLERANCES))
def test_fixture_noise_tolerance(name):
    witness = load_fixture(name)
    report = noise_tolerance_scan(witness, _rho("w", witness.n_qubits))
    assert report.p_star == pytest.approx(FIXTURE_NOISE_TOLERANCES[name], abs=0.02)


@pytest.mark.parametrize("name", fixture_names())
def test_fixtures_nearly_nonnegative_on_eigenstates(name):
    witness = load_fixture(name)
    values = evaluate_pure(witness, pauli_eigenstates(witness.n_qubits))
    # published coefficients are rounded to a few decimals
    assert values.min() >= -5e-3
