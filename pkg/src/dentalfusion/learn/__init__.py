"""From-scratch tree learners with probabilistic outputs."""
from __future__ import annotations

import numpy as np

from .boosting import AdaBoostModel, BoostedModel, samme_alpha, softmax, train_adaboost, train_gradient_boosting
from .config import DISPLAY_NAMES, MODEL_KINDS, ConfigError, TrainConfig
from .forest import ForestModel, train_extra_trees, train_random_forest
from .tree import InputError, TreeModel, gini, train_tree

Model = TreeModel | ForestModel | BoostedModel | AdaBoostModel

_TRAINERS = {
    "tree": train_tree,
    "random_forest": train_random_forest,
    "extra_trees": train_extra_trees,
    "gradient_boosting": train_gradient_boosting,
    "adaboost": train_adaboost,
}


def train(X, y, cfg: TrainConfig, n_classes: int | None = None) -> Model:
    return _TRAINERS[cfg.kind](X, y, cfg, n_classes=n_classes)


def predict_proba(model: Model, X) -> np.ndarray:
    """Row-stochastic class probabilities, shape (n_rows, n_classes)."""
    return model.predict_proba(X)


def model_kind(model: Model) -> str:
    if isinstance(model, TreeModel):
        return "tree"
    return model.kind


__all__ = [
    "AdaBoostModel",
    "BoostedModel",
    "ConfigError",
    "DISPLAY_NAMES",
    "ForestModel",
    "InputError",
    "MODEL_KINDS",
    "Model",
    "TrainConfig",
    "TreeModel",
    "gini",
    "model_kind",
    "predict_proba",
    "samme_alpha",
    "softmax",
    "train",
    "train_adaboost",
    "train_extra_trees",
    "train_gradient_boosting",
    "train_random_forest",
    "train_tree",
]
