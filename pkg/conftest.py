import json

import numpy as np
import pytest

from src.thermal.analysis import ThermalSpec
from src.thermal.qdbc import QdbcSpec, random_qdbc_spec

# omega = 1, gbar = 0.2, beta = 1, hbar = 1
K_REF = 0.5 / np.tanh(0.5)
NBAR_REF = 1.0 / np.expm1(1.0)
GAMMA_REF = 0.2


@pytest.fixture
def reference_spec() -> QdbcSpec:
    return QdbcSpec(thermal=ThermalSpec(B=np.eye(2), beta=1.0, hbar=1.0), gamma=np.array([GAMMA_REF]))


@pytest.fixture
def reference_model() -> dict:
    return {"n": 1, "hbar": 1.0, "B": [[1.0, 0.0], [0.0, 1.0]], "beta": 1.0, "gamma": [GAMMA_REF]}


@pytest.fixture
def model_file(tmp_path, reference_model):
    """Write a model dict to tmp_path and return its path."""

    def _write(data=None, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(reference_model if data is None else data), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def random_specs():
    """50 seeded random QDBC specs with n in {1, 2, 3}."""
    gen = np.random.default_rng(7)
    return [random_qdbc_spec(int(n), gen) for n in gen.integers(1, 4, size=50)]
