import json

import numpy as np
import pytest

from src.models import build_pipeline_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config(tmp_path):
    """GHZ-3 run sized for the unit suite; keyword overrides use dotted keys."""
    def _build(**overrides):
        raw = {
            "n_qubits": 3,
            "target": "ghz",
            "seed": 5,
            "output_dir": str(tmp_path / "run"),
            "features": {"kind": "mermin"},
            "training": {"extras_per_eigenstate": 1, "entangled_count": 200},
            "svm": {"epochs": 60},
            "mso": {"restarts": 2, "max_iterations": 150},
            "verification": {"separable_count": 200, "entangled_count": 200},
        }
        sets = [f"{key}={json.dumps(value)}" for key, value in overrides.items()]
        return build_pipeline_config(raw, sets)
    return _build
