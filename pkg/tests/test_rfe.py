import numpy as np
import pytest
from tqdm import tqdm

from src.constants import TargetKind
from src.errors import InvalidInputError, VerificationFailed
from src.models import MsoConfig, RfeConfig, SvmConfig
from src.mso import adjust_bias, optimize
from src.rfe import RfeLevel, RfeTrace, rfe_level, rfe_run
from src.statesets import entangled_training_set, separable_training_set, target_state
from src.svm_trainer import train
from src.tensor_core import PauliString, projector
from src.witness import Witness, from_hyperplane, mermin_support, mermin_witness, noise_tolerance_analytic

SVM = SvmConfig(epochs=40)
MSO = MsoConfig(restarts=2, max_iterations=300)


@pytest.fixture(scope="module")
def ghz3_data():
    features = mermin_support(3)
    separable = separable_training_set(3, features, extras_per_eigenstate=1, rng=np.random.default_rng(6), target=TargetKind.GHZ)
    return separable.merged(entangled_training_set("ghz", 3, features, count=200))


def _config(**fields):
    return RfeConfig(quick_certificate_count=100, svm=SVM, mso=MSO, **fields)


def test_level_removes_one_feature(ghz3_data):
    level = rfe_level(mermin_witness(3).terms, ghz3_data, SVM, seed=1)
    assert len(level.candidates) == 4
    assert len(level.retained) == 4
    assert level.retained[0].is_identity
    assert level.removed not in level.retained
    scored = [c.noise_tolerance for c in level.candidates if c.noise_tolerance is not None]
    assert level.best_tolerance == max(scored)
    tied = [c.removed.labels for c in level.candidates if c.noise_tolerance == level.best_tolerance]
    assert level.removed.labels == min(tied)


def test_level_is_seeded_and_thread_independent(ghz3_data):
    a = rfe_level(mermin_witness(3).terms, ghz3_data, SVM, seed=2)
    b = rfe_level(mermin_witness(3).terms, ghz3_data, SVM, seed=2, threads=3)
    assert a.removed == b.removed
    assert [c.noise_tolerance for c in a.candidates] == [c.noise_tolerance for c in b.candidates]


def test_beam_width_limits_candidates(ghz3_data):
    witness = Witness(3, {"III": 2.0, "XXX": -1.0, "XYY": 1.0, "YXY": 0.9, "YYX": 0.1}, TargetKind.GHZ)
    level = rfe_level(witness.terms, ghz3_data, SVM, seed=3, coefficients=witness.terms, max_candidates=2)
    assert sorted(c.removed.labels for c in level.candidates) == ["YXY", "YYX"]


def test_level_input_checks(ghz3_data):
    with pytest.raises(InvalidInputError):
        rfe_level(["III"], ghz3_data, SVM)
    untargeted = separable_training_set(3, mermin_support(3), extras_per_eigenstate=0).merged(
        entangled_training_set("ghz", 3, mermin_support(3), count=10)
    )
    untargeted.target = None
    with pytest.raises(InvalidInputError):
        rfe_level(mermin_support(3), untargeted, SVM)


def test_target_count_already_met_is_passthrough(ghz3_data):
    witness = mermin_witness(3)
    final, trace = rfe_run(witness, ghz3_data, _config(target_feature_count=5), seed=0)
    assert final is witness
    assert trace.levels == []
    assert trace.stop_reason == "target feature count reached"


def test_single_level_run(ghz3_data):
    final, trace = rfe_run(mermin_witness(3), ghz3_data, _config(target_feature_count=4), seed=4)
    assert final.term_count == 4
    assert len(trace.levels) == 1
    level = trace.levels[0]
    assert level.accepted
    assert level.adjusted_witness is final
    assert final.metadata["mso_restart_index"] >= -1
    rows = trace.levels_csv().splitlines()
    assert rows[0] == "level,term_count,removed,noise_tolerance,chosen,error"
    assert len(rows) == 1 + 4
    assert sum(int(row.split(",")[4]) for row in rows[1:]) == 1
    assert trace.to_dict()["levels"][0]["term_count"] == 4


def test_run_is_deterministic(ghz3_data):
    a, trace_a = rfe_run(mermin_witness(3), ghz3_data, _config(target_feature_count=4), seed=9)
    b, trace_b = rfe_run(mermin_witness(3), ghz3_data, _config(target_feature_count=4), seed=9)
    assert a.to_json() == b.to_json()
    assert trace_a.levels_csv() == trace_b.levels_csv()


def test_tolerance_floor_keeps_best_so_far(ghz3_data):
    witness = mermin_witness(3)
    final, trace = rfe_run(witness, ghz3_data, _config(tolerance_floor=0.99), seed=5)
    assert final is witness
    assert trace.stop_reason == "tolerance below floor"
    assert len(trace.levels) == 1 and not trace.levels[0].accepted
    assert trace.accepted_levels == []


def test_monotonicity_flag():
    witness = mermin_witness(3)

    def level(tolerance):
        return RfeLevel(
            retained=[PauliString("III")], removed=PauliString("XXX"), best_tolerance=tolerance,
            candidates=[], candidate_witness=witness, adjusted_tolerance=tolerance,
        )

    rising = RfeTrace([PauliString("III")], 0.3, [level(0.4), level(0.45)])
    falling = RfeTrace([PauliString("III")], 0.3, [level(0.4), level(0.35)])
    assert rising.is_monotone()
    assert not falling.is_monotone()
    assert falling.tolerances() == [0.3, 0.4, 0.35]


def test_candidate_tolerances_match_recomputation(ghz3_data):
    level = rfe_level(mermin_witness(3).terms, ghz3_data, SVM, seed=1)
    rho_e = projector(target_state("ghz", 3))
    for candidate in level.candidates:
        recomputed = noise_tolerance_analytic(candidate.witness, rho_e).p_star
        assert candidate.noise_tolerance == pytest.approx(recomputed, abs=1e-9)


def test_last_feature_leaves_an_undetecting_witness(ghz3_data):
    level = rfe_level(["III", "XXX"], ghz3_data, SVM, seed=1)
    assert [(c.removed.labels, c.noise_tolerance) for c in level.candidates] == [("XXX", 0.0)]
    assert level.retained == [PauliString("III")]


def test_level_adjustment_lowers_mermin_tolerance(ghz3_data):
    _, trace = rfe_run(mermin_witness(3), ghz3_data, _config(target_feature_count=4), seed=4)
    level = trace.levels[0]
    assert level.adjusted_tolerance < 0.5
    assert level.adjusted_tolerance <= level.best_tolerance + 1e-9


def test_progress_bar_closed_on_failure(ghz3_data, monkeypatch):
    closed = []

    class _Bar(tqdm):
        def close(self):
            closed.append(True)
            super().close()

    monkeypatch.setattr("src.rfe.tqdm", _Bar)
    monkeypatch.setattr("src.rfe.adjust_bias", lambda witness, result: witness.with_bias(-10.0))
    with pytest.raises(VerificationFailed):
        rfe_run(mermin_witness(3), ghz3_data, _config(target_feature_count=4), seed=4)
    assert closed


@pytest.mark.slow
def test_ghz4_elimination_to_five_terms_is_deterministic():
    features = mermin_support(4)
    separable = separable_training_set(4, features, extras_per_eigenstate=1, rng=np.random.default_rng(3), target=TargetKind.GHZ)
    data = separable.merged(entangled_training_set("ghz", 4, features, count=500))
    svm_cfg = SvmConfig(epochs=150)
    hyperplane = train(data, features, epochs=svm_cfg.epochs, rng=np.random.default_rng(1))
    trained = from_hyperplane(hyperplane, TargetKind.GHZ)
    mso_cfg = MsoConfig(restarts=3, max_iterations=400)
    start = adjust_bias(trained, optimize(trained, mso_cfg, rng=np.random.default_rng(2)))
    assert start.term_count == 9

    cfg = RfeConfig(target_feature_count=5, quick_certificate_count=200, svm=svm_cfg, mso=mso_cfg)
    first, trace_a = rfe_run(start, data, cfg, seed=11)
    second, trace_b = rfe_run(start, data, cfg, seed=11)
    assert first.term_count == 5
    assert len(trace_a.levels) == 4
    assert trace_a.stop_reason == "target feature count reached"
    assert first.to_json() == second.to_json()
    assert trace_a.levels_csv() == trace_b.levels_csv()
