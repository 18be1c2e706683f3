"""Bagged random forests and extremely randomized trees."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .tree import TreeModel, check_X, check_Xy, train_tree


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent stream per tree so results do not depend on scheduling."""
    return np.random.default_rng([seed, tree_index])


def parallel_map(fn, items, n_jobs: int) -> list:
    if n_jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class ForestModel:
    trees: list[TreeModel]
    n_features: int
    n_classes: int
    bootstrap: bool
    max_features: int
    kind: str = "random_forest"
    config: TrainConfig | None = None
    feature_names: list[str] | None = None

    def predict_proba(self, X) -> np.ndarray:
        X = check_X(X, self.n_features)
        total = np.zeros((len(X), self.n_classes))
        for tree in self.trees:
            total += tree.predict_proba(X)
        return total / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def _train_forest(X, y, cfg: TrainConfig, n_classes, random_thresholds: bool, kind: str) -> ForestModel:
    X, y, n_classes = check_Xy(X, y, n_classes)
    n = len(y)
    k = cfg.n_split_features(X.shape[1])

    def fit_one(t: int) -> TreeModel:
        rng = tree_rng(cfg.seed, t)
        weight = None
        if cfg.bootstrap:
            weight = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        rows = np.arange(n) if weight is None else np.flatnonzero(weight)
        w = None if weight is None else weight[rows]
        tree = train_tree(
            X[rows], y[rows], cfg, n_classes=n_classes, sample_weight=w, sample_count=w,
            rng=rng, random_thresholds=random_thresholds,
        )
        tree.seed = cfg.seed
        return tree

    trees = parallel_map(fit_one, range(cfg.n_trees), cfg.n_jobs)
    return ForestModel(trees, X.shape[1], n_classes, cfg.bootstrap, k, kind, cfg)


def train_random_forest(X, y, cfg: TrainConfig | None = None, n_classes: int | None = None) -> ForestModel:
    """Bootstrap-resampled trees, sqrt(n_features) candidate features per split."""
    cfg = cfg or TrainConfig.default("random_forest")
    return _train_forest(X, y, cfg, n_classes, random_thresholds=False, kind="random_forest")


def train_extra_trees(X, y, cfg: TrainConfig | None = None, n_classes: int | None = None) -> ForestModel:
    """Trees on the full sample with one uniform random threshold per candidate feature."""
    cfg = cfg or TrainConfig.default("extra_trees")
    return _train_forest(X, y, cfg, n_classes, random_thresholds=True, kind="extra_trees")
