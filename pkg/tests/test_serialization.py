import json

import numpy as np
import pytest

from hmm_forecast.errors import ModelFormatError
from hmm_forecast.hmm import FitConfig, fit_baum_welch, forward_log_likelihood, sample
from hmm_forecast.serialization import (
    FORMAT_VERSION,
    deserialize,
    fit_config_from_document,
    load_model,
    save_model,
    serialize,
)

from synthetic import random_model


@pytest.fixture
def model():
    return random_model(np.random.default_rng(123), 4, 3)


def test_roundtrip_is_bit_exact(model):
    back = deserialize(serialize(model))
    assert back.equals(model)
    for name in ("start_prob", "transition", "means", "covariances"):
        assert getattr(back, name).tobytes() == getattr(model, name).tobytes()


def test_serialization_is_stable(model):
    assert serialize(model) == serialize(deserialize(serialize(model)))


def test_fit_config_carried(model):
    cfg = FitConfig(max_iterations=77, tolerance=0.01, seed=5)
    doc = json.loads(serialize(model, cfg))
    assert fit_config_from_document(doc) == cfg
    assert list(doc)[:4] == ["format", "version", "n_states", "dim"]


def test_score_unchanged_after_reload(tmp_path):
    truth = random_model(np.random.default_rng(1), 2, 3)
    _, X = sample(truth, 120, 2)
    fitted, _ = fit_baum_welch(X, 2, FitConfig(seed=0))
    path = tmp_path / "m.model"
    save_model(path, fitted)
    assert forward_log_likelihood(load_model(path), X) == forward_log_likelihood(fitted, X)


def _doc(model):
    return json.loads(serialize(model))


def test_transition_row_not_stochastic(model):
    doc = _doc(model)
    doc["transition"][1] = [0.2, 0.2, 0.2, 0.2]
    with pytest.raises(ModelFormatError, match="row-stochastic"):
        deserialize(json.dumps(doc))


def test_wrong_version(model):
    doc = _doc(model)
    doc["version"] = FORMAT_VERSION + 1
    with pytest.raises(ModelFormatError, match="version"):
        deserialize(json.dumps(doc))


def test_malformed_json():
    with pytest.raises(ModelFormatError):
        deserialize("{not json")


def test_missing_field(model):
    doc = _doc(model)
    del doc["means"]
    with pytest.raises(ModelFormatError, match="means"):
        deserialize(json.dumps(doc))


def test_non_pd_covariance(model):
    doc = _doc(model)
    doc["covariances"][2] = (-np.eye(3)).tolist()
    with pytest.raises(ModelFormatError, match="positive definite"):
        deserialize(json.dumps(doc))
