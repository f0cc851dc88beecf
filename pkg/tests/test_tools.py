import json
from pathlib import Path

import numpy as np
import pytest

import wforge
from src import tools
from src.errors import ArtifactError, ConfigError, EXIT_CONFIG, EXIT_INCOMPLETE, EXIT_OK, EXIT_VERIFICATION
from src.run_storage import (
    COMPARISON_CSV,
    ENTANGLED_SAMPLES,
    MSO_TRACE,
    REPORT,
    RFE_LEVELS,
    RFE_WITNESS,
    SEPARABLE_SAMPLES,
    VERIFICATION,
    WITNESS_ADJUSTED,
    WITNESS_TRAINED,
    get_run_store,
    sidecar_key,
)
from src.checker import get_checker
from src.witness import Witness, mermin_witness

RFE_SECTION = {"target_feature_count": 4, "quick_certificate_count": 100}
GHZ3_CONFIG = str(Path(__file__).resolve().parent.parent / "configs" / "ghz3.json")


def _write_config(tmp_path, cfg):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.model_dump(mode="json")), encoding="utf-8")
    return str(path)


def test_full_pipeline(small_config):
    cfg = small_config(rfe=RFE_SECTION, svm={"epochs": 150})
    store = get_run_store(cfg.output_dir)

    data = tools.cmd_gen_data(cfg)
    assert data.separable_count == 2 * 216
    assert data.entangled_count == 200
    assert data.feature_count == 4
    assert data.origin_counts == {"eigenstate": 216, "perturbed": 216, "werner": 200}
    header = store.get_json(sidecar_key(SEPARABLE_SAMPLES))
    assert header["digest"] == data.digests[SEPARABLE_SAMPLES]
    assert store.exists(ENTANGLED_SAMPLES)

    trained = tools.cmd_train(cfg)
    assert trained.term_count == 5
    assert trained.training_accuracy >= 0.8
    witness = Witness.from_json(store.get_text(WITNESS_TRAINED))
    assert witness.metadata["provenance"] == "trained"
    assert witness.metadata["config_digest"] == cfg.digest()

    adjusted = tools.cmd_adjust(cfg)
    assert adjusted.bias_after == pytest.approx(adjusted.bias_before - adjusted.min_expectation)
    assert adjusted.min_expectation <= adjusted.eigenstate_floor
    assert adjusted.noise_tolerance > cfg.verification.p_max
    assert store.exists(MSO_TRACE)
    passed, certificate = get_checker().certify(
        Witness.from_json(store.get_text(WITNESS_ADJUSTED)), 10_000, rng=np.random.default_rng(0)
    )
    assert passed
    assert certificate.mixture_min >= -1e-9

    rfe = tools.cmd_rfe(cfg)
    assert rfe.initial_terms == 5
    assert rfe.final_terms == 4
    assert store.get_text(RFE_LEVELS).startswith("level,term_count,removed")

    report = tools.cmd_verify(cfg, witness_path=str(store.path(WITNESS_ADJUSTED)))
    assert report.is_valid
    assert store.get_json(VERIFICATION)["is_valid"] is True

    comparison = tools.cmd_compare(cfg)
    assert comparison.reference == "mermin"
    assert comparison.only_in_reference == [] and comparison.only_in_witness == []
    assert store.get_text(COMPARISON_CSV)

    result = tools.cmd_report(cfg.output_dir)
    assert result.complete and result.missing == []
    assert result.config_digest == cfg.digest()
    html = store.get_text(REPORT)
    assert "XXX" in html and cfg.digest() in html

    commands = {entry["command"] for entry in store.manifest()["artifacts"].values()}
    assert {"gen-data", "train", "adjust", "rfe", "verify", "compare", "report"} <= commands


def _run_to_adjusted(cfg):
    tools.cmd_gen_data(cfg)
    tools.cmd_train(cfg)
    tools.cmd_adjust(cfg)
    store = get_run_store(cfg.output_dir)
    return {key: store.get(key) for key in (SEPARABLE_SAMPLES, ENTANGLED_SAMPLES, WITNESS_TRAINED, WITNESS_ADJUSTED, MSO_TRACE)}


def test_rerun_gives_byte_identical_artifacts(small_config):
    cfg = small_config()
    first = _run_to_adjusted(cfg)
    second = _run_to_adjusted(cfg)
    assert all(value is not None for value in first.values())
    assert first == second


def test_run_directory_does_not_change_results(small_config, tmp_path):
    a = _run_to_adjusted(small_config(output_dir=str(tmp_path / "a")))
    b = _run_to_adjusted(small_config(output_dir=str(tmp_path / "b")))
    assert a[SEPARABLE_SAMPLES] == b[SEPARABLE_SAMPLES]
    assert a[MSO_TRACE] == b[MSO_TRACE]
    assert Witness.from_json(a[WITNESS_ADJUSTED].decode()).terms == Witness.from_json(b[WITNESS_ADJUSTED].decode()).terms


def test_train_needs_samples(small_config):
    with pytest.raises(ArtifactError):
        tools.cmd_train(small_config())


def test_rfe_needs_its_section(small_config):
    with pytest.raises(ConfigError):
        tools.cmd_rfe(small_config())


def test_explicit_features_and_file_features(small_config, tmp_path):
    cfg = small_config(features={"kind": "explicit", "labels": ["XXX", "ZZI"]})
    assert [p.labels for p in tools.resolve_features(cfg)] == ["XXX", "ZZI"]
    path = tmp_path / "w.json"
    path.write_text(mermin_witness(3).to_json(), encoding="utf-8")
    cfg = small_config(features={"kind": "file", "path": str(path)})
    assert [p.labels for p in tools.resolve_features(cfg)] == ["XXX", "XYY", "YXY", "YYX"]
    cfg = small_config(n_qubits=4, features={"kind": "file", "path": str(path)})
    with pytest.raises(ConfigError):
        tools.resolve_features(cfg)


def test_report_lists_missing_artifacts(small_config):
    cfg = small_config()
    tools.cmd_gen_data(cfg)
    result = tools.cmd_report(cfg.output_dir)
    assert not result.complete
    assert WITNESS_TRAINED in result.missing and RFE_WITNESS not in result.missing
    assert get_run_store(cfg.output_dir).exists(REPORT)
    with pytest.raises(ArtifactError):
        tools.cmd_report(cfg.output_dir + "-nowhere")


# ===== CLI =====

def test_cli_report_exit_codes(small_config, tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert wforge.main(["report", "--output", str(empty)]) == EXIT_INCOMPLETE
    assert json.loads(capsys.readouterr().out)["complete"] is False


def test_cli_config_errors(tmp_path):
    assert wforge.main(["train", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert wforge.main(["train", "--set", "n_qubits=3"]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]", encoding="utf-8")
    assert wforge.main(["gen-data", "--config", str(bad)]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    [],
    ["gen-data", "--bogus"],
    ["train", "--threads", "abc"],
    ["frobnicate"],
    ["report", "--log-level", "LOUD"],
])
def test_cli_usage_errors_are_config_errors(argv, capsys):
    assert wforge.main(argv) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_cli_shipped_ghz3_config_completes(tmp_path, capsys):
    output = str(tmp_path / "ghz3")
    for command in ("gen-data", "train", "adjust", "rfe", "verify", "compare"):
        assert wforge.main([command, "--config", GHZ3_CONFIG, "--output", output]) == EXIT_OK, command
    capsys.readouterr()
    assert wforge.main(["report", "--output", output]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["complete"] is True and result["missing"] == []
    assert Witness.from_json(get_run_store(output).get_text(RFE_WITNESS)).term_count == 4


def test_cli_gen_data_with_flags(small_config, tmp_path, capsys):
    config = _write_config(tmp_path, small_config())
    output = tmp_path / "flagged"
    assert wforge.main(["gen-data", "--config", config, "--seed", "11", "--output", str(output)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["entangled_count"] == 200
    manifest = get_run_store(output).manifest()
    assert manifest["seed"] == 11
    assert manifest["config"]["output_dir"] == str(output)


def test_cli_failed_verification(small_config, tmp_path, capsys):
    cfg = small_config()
    config = _write_config(tmp_path, cfg)
    broken = mermin_witness(3)
    broken = broken.with_bias(broken.bias - 1.5)
    path = tmp_path / "broken.json"
    path.write_text(broken.to_json(), encoding="utf-8")
    assert wforge.main(["verify", "--config", config, "--witness", str(path)]) == EXIT_VERIFICATION
    assert json.loads(capsys.readouterr().out)["is_valid"] is False
    assert get_run_store(cfg.output_dir).exists(VERIFICATION)


@pytest.mark.slow
def test_ghz4_witness_reproduces_mermin(small_config):
    cfg = small_config(
        n_qubits=4,
        training={"extras_per_eigenstate": 4, "entangled_count": 1000},
        svm={"epochs": 300},
        mso={"restarts": 4, "max_iterations": 1000},
    )
    tools.cmd_gen_data(cfg)
    tools.cmd_train(cfg)
    adjusted = tools.cmd_adjust(cfg)
    assert adjusted.noise_tolerance > 0.3
    witness = Witness.from_json(get_run_store(cfg.output_dir).get_text(WITNESS_ADJUSTED))
    reference = mermin_witness(4)
    for pauli, coeff in reference.terms.items():
        assert np.sign(witness.coefficient(pauli)) == np.sign(coeff), pauli
    comparison = tools.cmd_compare(cfg)
    assert comparison.max_abs_error <= 10.0


@pytest.mark.slow
def test_ghz3_terms_have_equal_weight(small_config):
    cfg = small_config(training={"extras_per_eigenstate": 5, "entangled_count": 1000}, svm={"epochs": 400})
    tools.cmd_gen_data(cfg)
    tools.cmd_train(cfg)
    tools.cmd_adjust(cfg)
    comparison = tools.cmd_compare(cfg)
    assert comparison.max_abs_error <= 7.0
