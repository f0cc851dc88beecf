import numpy as np
import pytest
from scipy.linalg import eigvalsh

from src.errors import DegenerateParameterError, DimensionMismatchError, InvalidInputError
from src.models import MsoConfig
from src.mso import (
    Adam,
    SeparableParameterization,
    adjust_bias,
    assemble_mixed,
    assemble_pure,
    build_catalog,
    constrain_magnitudes,
    constrain_weights,
    eigenstate_floor,
    estimate_memory_bytes,
    gradient,
    loss,
    numerical_gradient,
    optimize,
    raw_parameter_count,
)
from src.tensor_core import projector
from src.witness import Witness, evaluate, mermin_witness
from tests.helpers import reduced_purity


# ===== Catalog =====

@pytest.mark.parametrize("n_qubits, entries, total, params", [
    (3, 3, 12, 132),
    (4, 7, 44, 788),
    (5, 30, 220, 5720),
])
def test_catalog_counts(n_qubits, entries, total, params):
    catalog = build_catalog(n_qubits)
    assert len(catalog.entries) == entries
    assert catalog.total_states == total
    assert raw_parameter_count(n_qubits) == params


def test_memory_estimate_grows():
    values = [estimate_memory_bytes(n) for n in range(2, 7)]
    assert all(b > a for a, b in zip(values, values[1:]))
    with pytest.raises(InvalidInputError):
        estimate_memory_bytes(1)


# ===== Constraints =====

def test_constrained_magnitudes_have_unit_norm(rng):
    x = rng.uniform(-1, 1, (5, 8))
    k = constrain_magnitudes(x)
    assert np.all(k >= 0)
    assert np.allclose(np.sum(k ** 2, axis=1), 1.0)
    with pytest.raises(DegenerateParameterError):
        constrain_magnitudes(np.zeros(4))


def test_constrained_weights(rng):
    p = constrain_weights(rng.uniform(-1, 1, 12))
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)
    with pytest.raises(DegenerateParameterError):
        constrain_weights(np.zeros(3))


# ===== Assembly =====

def test_parameter_vector_length_checked():
    catalog = build_catalog(3)
    with pytest.raises(DimensionMismatchError):
        SeparableParameterization(catalog, np.zeros(10))
    assert SeparableParameterization(catalog, np.zeros(catalog.parameter_count)).is_degenerate()


@pytest.mark.parametrize("n_qubits", [3, 4])
def test_assembled_pure_states_are_products(n_qubits, rng):
    catalog = build_catalog(n_qubits)
    params = SeparableParameterization.random(catalog, rng)
    for entry, spec in enumerate(catalog.entries):
        psi = assemble_pure(params.slot(entry, 0), spec)
        assert np.linalg.norm(psi) == pytest.approx(1.0)
        for group in spec.qubit_groups():
            assert reduced_purity(psi, group, n_qubits) == pytest.approx(1.0, abs=1e-9), spec.label


def test_assembled_mixture_is_a_density_matrix(rng):
    params = SeparableParameterization.random(build_catalog(4), rng)
    rho = assemble_mixed(params)
    assert np.allclose(rho, rho.conj().T)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert eigvalsh(rho)[0] > -1e-10


def test_assemble_pure_checks_slot_size():
    spec = build_catalog(3).entries[0]
    with pytest.raises(DimensionMismatchError):
        assemble_pure(np.ones(3), spec)


# ===== Loss and gradient =====

def test_loss_is_the_witness_expectation(rng):
    witness = mermin_witness(3)
    for _ in range(5):
        params = SeparableParameterization.random(build_catalog(3), rng)
        assert loss(params, witness) == pytest.approx(evaluate(witness, assemble_mixed(params)), abs=1e-12)


def test_mermin_at_all_zeros_state():
    state = np.zeros(8)
    state[0] = 1.0
    assert evaluate(mermin_witness(3), projector(state)) == pytest.approx(2.0)


@pytest.mark.parametrize("n_qubits, points", [(3, 100), (4, 5)])
def test_gradient_matches_finite_differences(n_qubits, points):
    rng = np.random.default_rng(n_qubits)
    witness = Witness(
        n_qubits,
        {**mermin_witness(n_qubits).terms, "Z" * n_qubits: 0.3, "X" + "I" * (n_qubits - 2) + "Z": -0.7},
    )
    catalog = build_catalog(n_qubits)
    for _ in range(points):
        params = SeparableParameterization.random(catalog, rng)
        analytic = gradient(params, witness)
        numeric = numerical_gradient(params, witness)
        assert np.allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


# ===== Adam =====

def test_adam_first_step_is_signed_step_size():
    params = np.array([1.0, -2.0, 0.5])
    Adam(step_size=0.01).step(params, np.array([4.0, -0.1, 2.0]))
    assert np.allclose(params, [0.99, -1.99, 0.49], atol=1e-6)


def test_adam_minimizes_a_quadratic():
    params = np.array([1.0, -2.0, 0.5])
    adam = Adam(step_size=0.01)
    for _ in range(3000):
        adam.step(params, 2.0 * params)
    assert np.linalg.norm(params) < 0.05


# ===== Optimization =====

def test_mermin3_separable_bound_is_tight():
    cfg = MsoConfig(restarts=8, max_iterations=2000)
    result = optimize(mermin_witness(3), cfg, rng=np.random.default_rng(0))
    assert -1e-9 <= result.min_expectation <= 5e-3
    assert result.min_expectation <= result.eigenstate_floor
    for trace in result.restart_traces:
        assert 1 <= len(trace) <= cfg.max_iterations


def test_eigenstate_floor_wins_short_runs():
    witness = Witness(3, {"III": 0.0, "ZII": 1.0})
    floor, state = eigenstate_floor(witness)
    assert floor == pytest.approx(-1.0)
    result = optimize(witness, MsoConfig(restarts=2, max_iterations=1), rng=np.random.default_rng(1))
    assert result.restart_index == -1
    assert result.min_expectation == pytest.approx(-1.0)
    assert np.allclose(result.argmin, projector(state))


def test_optimize_is_deterministic_across_threads():
    cfg = MsoConfig(restarts=3, max_iterations=60)
    witness = mermin_witness(3)
    serial = optimize(witness, cfg, rng=np.random.default_rng(8), threads=1)
    parallel = optimize(witness, cfg, rng=np.random.default_rng(8), threads=3)
    assert serial.min_expectation == parallel.min_expectation
    assert serial.restart_traces == parallel.restart_traces
    assert serial.trace_csv() == parallel.trace_csv()


def test_adjust_bias_and_trace():
    witness = Witness(3, {"III": 0.5, "ZII": 1.0})
    result = optimize(witness, MsoConfig(restarts=2, max_iterations=40), rng=np.random.default_rng(2))
    adjusted = adjust_bias(witness, result)
    assert adjusted.bias == pytest.approx(0.5 - result.min_expectation)
    assert adjusted.metadata["mso_restart_index"] == result.restart_index
    assert adjusted.coefficient("ZII") == 1.0
    rows = result.trace_csv().splitlines()
    assert rows[0] == "iteration,loss,restart_index"
    assert len(rows) - 1 == sum(len(t) for t in result.restart_traces)


def test_optimize_rejects_other_qubit_counts():
    with pytest.raises(DimensionMismatchError):
        optimize(mermin_witness(3), MsoConfig(restarts=1, max_iterations=1), catalog=build_catalog(4))
