import json

import numpy as np
import pytest

from conftest import blobs
from dentalfusion.fusion import fit_tooth_ensemble
from dentalfusion.learn import TrainConfig, train
from dentalfusion.modelio import ModelLoadError, load_model, read_model, save_model, to_document, write_model

KINDS = ("tree", "random_forest", "extra_trees", "gradient_boosting", "adaboost")


def fitted(rng, kind, n_features=5):
    X, y = blobs(rng, n_per_class=20, n_classes=3, n_features=n_features, spread=2.0)
    return train(X, y, TrainConfig.default(kind, n_trees=6, seed=1)), X


@pytest.mark.parametrize("kind", KINDS)
def test_round_trip_is_bit_identical(rng, kind):
    m, X = fitted(rng, kind)
    back = load_model(save_model(m))
    Xq = np.vstack([X, rng.normal(scale=5, size=(50, X.shape[1]))])
    assert np.array_equal(back.predict_proba(Xq), m.predict_proba(Xq))
    assert save_model(back) == save_model(m)


def test_tooth_ensemble_round_trip(rng, tmp_path):
    X, y = blobs(rng, n_per_class=15, n_classes=2, n_features=18, spread=2.0)
    ens = fit_tooth_ensemble(X, y, TrainConfig.default("gradient_boosting", n_trees=4), 2, rule="mean")
    write_model(tmp_path / "m.json", ens)
    back = read_model(tmp_path / "m.json")
    assert back.rule == "mean"
    assert np.array_equal(back.decision_profiles(X), ens.decision_profiles(X))
    assert np.array_equal(back.predict(X), ens.predict(X))


def test_document_header(rng):
    m, _ = fitted(rng, "random_forest")
    doc = to_document(m)
    assert doc["format"] == "dentalfusion-model" and doc["schema_version"] == 1
    assert doc["model_kind"] == "random_forest" and doc["n_classes"] == 3
    assert len(doc["checksum"]) == 64


def test_corrupted_payload(rng):
    m, _ = fitted(rng, "tree")
    doc = json.loads(save_model(m))
    doc["model"]["threshold"][0] += 1.0
    with pytest.raises(ModelLoadError, match="checksum"):
        load_model(json.dumps(doc).encode())


def test_version_mismatch(rng):
    m, _ = fitted(rng, "tree")
    doc = json.loads(save_model(m))
    doc["schema_version"] = 99
    with pytest.raises(ModelLoadError, match="version"):
        load_model(json.dumps(doc).encode())


@pytest.mark.parametrize("payload", [b"", b"{", b"[1, 2]", b'{"format": "other"}', b"\xff\xfe"])
def test_bad_payloads(payload):
    with pytest.raises(ModelLoadError):
        load_model(payload)


def test_truncated_payload(rng):
    m, _ = fitted(rng, "adaboost")
    data = save_model(m)
    with pytest.raises(ModelLoadError):
        load_model(data[: len(data) // 2])
