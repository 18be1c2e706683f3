"""Multiclass gradient boosting (softmax log-loss) and SAMME AdaBoost."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .forest import parallel_map
from .tree import TreeBuilder, TreeModel, check_X, check_Xy, train_tree

# weighted error used when a weak learner is perfect on the weighted sample
ADABOOST_EPS = 1e-10
_MAX_HALVINGS = 60


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_loss(raw: np.ndarray, y: np.ndarray) -> float:
    """Mean multiclass cross-entropy of softmax(raw)."""
    m = raw.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(raw - m).sum(axis=1))
    return float(np.mean(lse - raw[np.arange(len(y)), y]))


@dataclass
class BoostedModel:
    """Raw score for class k is ``init_scores[k]`` plus the sum over rounds of
    ``trees[round][k]`` evaluated at x.  Leaf values already include the
    learning rate.
    """

    init_scores: np.ndarray
    trees: list[list[TreeModel]]
    n_features: int
    n_classes: int
    learning_rate: float
    train_loss: list[float] = field(default_factory=list)
    config: TrainConfig | None = None
    feature_names: list[str] | None = None
    kind: str = "gradient_boosting"

    def raw_scores(self, X) -> np.ndarray:
        X = check_X(X, self.n_features)
        raw = np.tile(self.init_scores, (len(X), 1))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                raw[:, k] += tree.predict_value(X)[:, 0]
        return raw

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.raw_scores(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.raw_scores(X), axis=1)


def train_gradient_boosting(X, y, cfg: TrainConfig | None = None, n_classes: int | None = None) -> BoostedModel:
    """One regression tree per class per round, Newton leaf values.

    Each round's trees are fitted to ``onehot - softmax``; a leaf's value is
    ``(C-1)/C * sum(residual) / sum(p * (1-p))`` times the learning rate.  If a
    round would raise the training loss its increments are halved until it
    does not, so the recorded loss sequence never increases.
    """
    cfg = cfg or TrainConfig.default("gradient_boosting")
    X, y, n_classes = check_Xy(X, y, n_classes)
    n = len(y)
    counts = np.bincount(y, minlength=n_classes)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"class(es) {missing} absent from training data; prior undefined")
    init = np.log(counts / n)
    onehot = np.eye(n_classes)[y]
    raw = np.tile(init, (n, 1))
    losses = [log_loss(raw, y)]
    rounds: list[list[TreeModel]] = []
    k = cfg.n_split_features(X.shape[1])
    scale = (n_classes - 1) / n_classes

    for r in range(cfg.n_trees):
        p = softmax(raw)

        def fit_class(c: int) -> TreeModel:
            resid = onehot[:, c] - p[:, c]
            builder = TreeBuilder(
                criterion="mse",
                n_classes=n_classes,
                max_depth=cfg.max_depth,
                min_samples_split=cfg.min_samples_split,
                n_split_features=k,
                rng=np.random.default_rng([cfg.seed, r, c]) if k < X.shape[1] else None,
            )
            tree = builder.build(X, resid)
            leaf = tree.apply(X)
            hess = p[:, c] * (1.0 - p[:, c])
            num = np.bincount(leaf, weights=resid, minlength=tree.n_nodes)
            den = np.bincount(leaf, weights=hess, minlength=tree.n_nodes)
            step = scale * num / np.maximum(den, 1e-12)
            values = np.where(tree.left < 0, cfg.learning_rate * step, 0.0)
            tree.value = values.reshape(-1, 1)
            tree.seed = cfg.seed
            return tree

        trees = parallel_map(fit_class, range(n_classes), cfg.n_jobs)
        incr = np.column_stack([t.predict_value(X)[:, 0] for t in trees])
        loss = log_loss(raw + incr, y)
        halvings = 0
        while loss > losses[-1] and halvings < _MAX_HALVINGS:
            incr *= 0.5
            for t in trees:
                t.value *= 0.5
            loss = log_loss(raw + incr, y)
            halvings += 1
        if loss > losses[-1]:
            break
        raw = raw + incr
        rounds.append(trees)
        losses.append(loss)

    return BoostedModel(init, rounds, X.shape[1], n_classes, cfg.learning_rate, losses, cfg)


@dataclass
class AdaBoostModel:
    """SAMME ensemble; class margins are alpha-weighted hard votes."""

    trees: list[TreeModel]
    alphas: list[float]
    n_features: int
    n_classes: int
    errors: list[float] = field(default_factory=list)
    config: TrainConfig | None = None
    feature_names: list[str] | None = None
    kind: str = "adaboost"

    def margins(self, X) -> np.ndarray:
        X = check_X(X, self.n_features)
        out = np.zeros((len(X), self.n_classes))
        rows = np.arange(len(X))
        for tree, alpha in zip(self.trees, self.alphas):
            out[rows, tree.predict(X)] += alpha
        return out

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.margins(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.margins(X), axis=1)


def samme_alpha(err: float, n_classes: int) -> float:
    return math.log((1.0 - err) / err) + math.log(n_classes - 1)


def train_adaboost(X, y, cfg: TrainConfig | None = None, n_classes: int | None = None) -> AdaBoostModel:
    cfg = cfg or TrainConfig.default("adaboost")
    X, y, n_classes = check_Xy(X, y, n_classes)
    n = len(y)
    w = np.full(n, 1.0 / n)
    trees, alphas, errors = [], [], []
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.n_trees):
        tree = train_tree(X, y, cfg, n_classes=n_classes, sample_weight=w, rng=rng)
        miss = tree.predict(X) != y
        err = float(w[miss].sum() / w.sum())
        if err >= 1.0 - 1.0 / n_classes:
            if not trees:
                # keep a chance-level learner with zero weight so the model is usable
                trees.append(tree)
                alphas.append(0.0)
                errors.append(err)
            break
        perfect = err <= 0.0
        err = max(err, ADABOOST_EPS)
        alpha = samme_alpha(err, n_classes)
        trees.append(tree)
        alphas.append(alpha)
        errors.append(err)
        if perfect:
            break
        w = w * np.exp(alpha * miss)
        w /= w.sum()
    return AdaBoostModel(trees, alphas, X.shape[1], n_classes, errors, cfg)
