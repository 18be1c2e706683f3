"""Versioned JSON model files.

Layout (all keys at top level)::

    format          "dentalfusion-model"
    schema_version  integer, currently 1
    model_kind      tree | random_forest | extra_trees | gradient_boosting
                    | adaboost | tooth_ensemble
    feature_names   column names the model was trained on (or null)
    n_features      input width
    n_classes       C
    hyperparameters TrainConfig fields (null for hand-built models)
    seed            training seed
    model           kind-specific body, see ``_encode``
    checksum        sha256 hex of the canonical JSON of every other key

A tree body stores parallel node arrays ``feature``, ``threshold``, ``left``,
``right`` (-1 marks a leaf), ``value`` (per-node output rows) and ``cover``.
Floats are written with ``repr`` precision so a round trip is exact.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .data import Tooth
from .fusion import ToothGroupEnsemble
from .learn import AdaBoostModel, BoostedModel, ForestModel, TrainConfig, TreeModel, model_kind

FORMAT = "dentalfusion-model"
SCHEMA_VERSION = 1


class ModelLoadError(ValueError):
    pass


def _tree_to_dict(t: TreeModel) -> dict:
    return {
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
        "cover": t.cover.tolist(),
        "n_features": t.n_features,
        "n_classes": t.n_classes,
        "max_depth": t.max_depth,
        "seed": t.seed,
    }


def _tree_from_dict(d: dict) -> TreeModel:
    t = TreeModel(
        feature=np.array(d["feature"], dtype=np.int64),
        threshold=np.array(d["threshold"], dtype=float),
        left=np.array(d["left"], dtype=np.int64),
        right=np.array(d["right"], dtype=np.int64),
        value=np.array(d["value"], dtype=float).reshape(len(d["feature"]), -1),
        cover=np.array(d["cover"], dtype=float),
        n_features=int(d["n_features"]),
        n_classes=int(d["n_classes"]),
        max_depth=d["max_depth"],
        seed=d["seed"],
    )
    n = t.n_nodes
    if not all(len(a) == n for a in (t.threshold, t.left, t.right, t.cover)):
        raise ModelLoadError("tree node arrays have inconsistent lengths")
    internal = t.left >= 0
    if np.any(t.left[internal] >= n) or np.any(t.right[internal] >= n) or np.any(t.feature[internal] >= t.n_features):
        raise ModelLoadError("tree references out-of-range nodes or features")
    return t


def _encode(model) -> dict:
    kind = model_kind(model) if not isinstance(model, ToothGroupEnsemble) else "tooth_ensemble"
    if kind == "tree":
        return _tree_to_dict(model)
    if kind in ("random_forest", "extra_trees"):
        return {"trees": [_tree_to_dict(t) for t in model.trees], "bootstrap": model.bootstrap,
                "max_features": model.max_features}
    if kind == "gradient_boosting":
        return {"init_scores": model.init_scores.tolist(), "learning_rate": model.learning_rate,
                "train_loss": list(model.train_loss),
                "trees": [[_tree_to_dict(t) for t in rnd] for rnd in model.trees]}
    if kind == "adaboost":
        return {"trees": [_tree_to_dict(t) for t in model.trees], "alphas": list(model.alphas),
                "errors": list(model.errors)}
    return {"rule": model.rule,
            "members": {t.value: to_document(m) for t, m in model.members.items()}}


def _decode(kind: str, body: dict, doc: dict):
    n_features, n_classes = int(doc["n_features"]), int(doc["n_classes"])
    names = doc.get("feature_names")
    cfg = TrainConfig.from_dict(doc["hyperparameters"]) if doc.get("hyperparameters") else None
    if kind == "tree":
        m = _tree_from_dict(body)
    elif kind in ("random_forest", "extra_trees"):
        m = ForestModel([_tree_from_dict(t) for t in body["trees"]], n_features, n_classes,
                        bool(body["bootstrap"]), int(body["max_features"]), kind, cfg)
    elif kind == "gradient_boosting":
        m = BoostedModel(np.array(body["init_scores"], dtype=float),
                         [[_tree_from_dict(t) for t in rnd] for rnd in body["trees"]],
                         n_features, n_classes, float(body["learning_rate"]), list(body["train_loss"]), cfg)
    elif kind == "adaboost":
        m = AdaBoostModel([_tree_from_dict(t) for t in body["trees"]], list(body["alphas"]),
                          n_features, n_classes, list(body["errors"]), cfg)
    elif kind == "tooth_ensemble":
        members = {Tooth(k): from_document(v) for k, v in body["members"].items()}
        return ToothGroupEnsemble(members, n_classes, body["rule"], names)
    else:
        raise ModelLoadError(f"unknown model kind {kind!r}")
    m.feature_names = names
    return m


def _checksum(doc: dict) -> str:
    payload = {k: v for k, v in doc.items() if k != "checksum"}
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def to_document(model) -> dict:
    cfg = getattr(model, "config", None)
    if isinstance(model, ToothGroupEnsemble):
        kind = "tooth_ensemble"
        first = next(iter(model.members.values()))
        cfg = getattr(first, "config", None)
    else:
        kind = model_kind(model)
    doc = {
        "format": FORMAT,
        "schema_version": SCHEMA_VERSION,
        "model_kind": kind,
        "feature_names": list(model.feature_names) if model.feature_names is not None else None,
        "n_features": int(model.n_features),
        "n_classes": int(model.n_classes),
        "hyperparameters": cfg.to_dict() if cfg is not None else None,
        "seed": cfg.seed if cfg is not None else getattr(model, "seed", None),
        "model": _encode(model),
    }
    doc["checksum"] = _checksum(doc)
    return doc


def from_document(doc: dict):
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelLoadError("not a dentalfusion model document")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ModelLoadError(f"unsupported schema version {doc.get('schema_version')!r}")
    if doc.get("checksum") != _checksum(doc):
        raise ModelLoadError("checksum mismatch; the model file is corrupted")
    try:
        return _decode(doc["model_kind"], doc["model"], doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelLoadError):
            raise
        raise ModelLoadError(f"malformed model body: {exc}") from None


def save_model(model) -> bytes:
    return json.dumps(to_document(model), separators=(",", ":"), allow_nan=False).encode("utf-8")


def load_model(payload: bytes):
    if not payload:
        raise ModelLoadError("empty model payload")
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"model payload is not valid JSON: {exc}") from None
    return from_document(doc)


def write_model(path: str | Path, model) -> None:
    Path(path).write_bytes(save_model(model))


def read_model(path: str | Path):
    return load_model(Path(path).read_bytes())
