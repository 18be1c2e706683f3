"""CART trees stored as flat node arrays.

Node ``i`` is a leaf when ``left[i] == -1``.  Samples with
``x[feature[i]] <= threshold[i]`` go to ``left[i]``.  ``value`` holds the
output of every node (class distribution for classification trees, a single
raw-score increment for boosting trees) and ``cover`` the number of training
samples that reached it, which TreeSHAP uses for conditional expectations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# score differences below this are treated as ties
_TIE_EPS = 1e-12
# minimum impurity decrease for a split to be accepted
_MIN_GAIN = 1e-12


class InputError(ValueError):
    pass


def check_X(X, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise InputError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise InputError(f"model expects {n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise InputError("feature matrix contains non-finite values")
    return X


def check_Xy(X, y, n_classes: int | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    X = check_X(X)
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise InputError("empty feature matrix")
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise InputError(f"label vector shape {y.shape} does not match {X.shape[0]} rows")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise InputError("labels must be integers")
    y = y.astype(np.int64)
    if n_classes is None:
        n_classes = max(2, int(y.max()) + 1)
    if y.min() < 0 or y.max() >= n_classes:
        raise InputError(f"labels must lie in [0, {n_classes})")
    return X, y, n_classes


@dataclass
class TreeModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    n_features: int
    n_classes: int
    max_depth: int | None = None
    seed: int | None = None
    feature_names: list[str] | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_outputs(self) -> int:
        return self.value.shape[1]

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = check_X(X, self.n_features)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.left[node] >= 0
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.left[node] >= 0
        return node

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict_proba(self, X) -> np.ndarray:
        return self.predict_value(X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


@dataclass
class _Node:
    idx: np.ndarray
    depth: int
    id: int


@dataclass
class TreeBuilder:
    """Greedy depth-first recursive partitioning.

    ``criterion`` is ``"gini"`` for classification (targets are integer
    labels, weighted by ``sample_weight``) or ``"mse"`` for regression on a
    real target.  ``random_thresholds`` draws one uniform threshold per
    candidate feature instead of scanning all midpoints.
    """

    criterion: str = "gini"
    n_classes: int = 2
    max_depth: int | None = None
    min_samples_split: int = 2
    n_split_features: int | None = None
    random_thresholds: bool = False
    rng: np.random.Generator | None = None

    def build(self, X, target, sample_weight=None, sample_count=None) -> TreeModel:
        n, d = X.shape
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        cnt = np.ones(n) if sample_count is None else np.asarray(sample_count, dtype=float)
        if self.criterion == "gini":
            stats = np.zeros((n, self.n_classes))
            stats[np.arange(n), target] = w
        else:
            stats = np.asarray(target, dtype=float).reshape(n, 1)
        k = d if self.n_split_features is None else min(self.n_split_features, d)
        if k < d and self.rng is None:
            raise ValueError("feature subsampling requires an rng")

        feature, threshold, left, right, value, cover = [], [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(self._node_value(stats[idx], cnt[idx]))
            cover.append(float(cnt[idx].sum()))
            return len(feature) - 1

        stack = [_Node(np.arange(n), 0, new_node(np.arange(n)))]
        while stack:
            node = stack.pop()
            idx = node.idx
            if (self.max_depth is not None and node.depth >= self.max_depth) or cover[node.id] < self.min_samples_split:
                continue
            if self._is_pure(stats[idx]):
                continue
            if k < d:
                candidates = np.sort(self.rng.choice(d, size=k, replace=False))
            else:
                candidates = np.arange(d)
            split = self._best_split(X, idx, stats, cnt, candidates)
            if split is None:
                continue
            f, thr = split
            mask = X[idx, f] <= thr
            li, ri = idx[mask], idx[~mask]
            lid, rid = new_node(li), new_node(ri)
            feature[node.id], threshold[node.id] = int(f), float(thr)
            left[node.id], right[node.id] = lid, rid
            stack.append(_Node(ri, node.depth + 1, rid))
            stack.append(_Node(li, node.depth + 1, lid))

        return TreeModel(
            feature=np.array(feature, dtype=np.int64),
            threshold=np.array(threshold, dtype=float),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            value=np.array(value, dtype=float),
            cover=np.array(cover, dtype=float),
            n_features=d,
            n_classes=self.n_classes,
            max_depth=self.max_depth,
        )

    def _node_value(self, s, c):
        if self.criterion == "gini":
            tot = s.sum(axis=0)
            return tot / tot.sum()
        return np.array([s[:, 0].sum() / c.sum()])

    def _is_pure(self, s) -> bool:
        if self.criterion == "gini":
            return np.count_nonzero(s.sum(axis=0) > 0) <= 1
        return bool(np.all(s[:, 0] == s[0, 0]))

    def _impurity_scores(self, s_sorted, c_sorted):
        """Child impurity (summed, unnormalised) for a split after each position."""
        if self.criterion == "gini":
            cl = np.cumsum(s_sorted, axis=0)[:-1]
            tot = cl[-1] + s_sorted[-1]
            cr = tot - cl
            wl = cl.sum(axis=1)
            wr = tot.sum() - wl
            return (wl - (cl * cl).sum(axis=1) / wl) + (wr - (cr * cr).sum(axis=1) / wr)
        sl = np.cumsum(s_sorted[:, 0])[:-1]
        nl = np.cumsum(c_sorted)[:-1]
        stot = sl[-1] + s_sorted[-1, 0]
        ntot = nl[-1] + c_sorted[-1]
        return -(sl * sl / nl + (stot - sl) ** 2 / (ntot - nl))

    def _single_split_score(self, s, c, mask) -> float:
        total = 0.0
        for part in (mask, ~mask):
            if self.criterion == "gini":
                tot = s[part].sum(axis=0)
                w = tot.sum()
                total += w - (tot * tot).sum() / w
            else:
                total -= s[part, 0].sum() ** 2 / c[part].sum()
        return float(total)

    def _parent_score(self, s, c):
        if self.criterion == "gini":
            tot = s.sum(axis=0)
            w = tot.sum()
            return w - (tot * tot).sum() / w
        return -(s[:, 0].sum() ** 2) / c.sum()

    def _best_split(self, X, idx, stats, cnt, candidates):
        s_node, c_node = stats[idx], cnt[idx]
        parent = self._parent_score(s_node, c_node)
        # for gini scores are weight * impurity; normalise the gain tolerance
        scale = s_node.sum() if self.criterion == "gini" else 1.0
        best = None
        best_score = np.inf
        for f in candidates:
            x = X[idx, f]
            if self.random_thresholds:
                lo, hi = x.min(), x.max()
                if not lo < hi:
                    continue
                thr = float(self.rng.uniform(lo, hi))
                mask = x <= thr
                if mask.all() or not mask.any():
                    continue
                score = self._single_split_score(s_node, c_node, mask)
            else:
                order = np.argsort(x, kind="stable")
                xs = x[order]
                valid = xs[1:] > xs[:-1]
                if not valid.any():
                    continue
                scores = self._impurity_scores(s_node[order], c_node[order])
                scores = np.where(valid, scores, np.inf)
                m = scores.min()
                pos = int(np.flatnonzero(scores <= m + _TIE_EPS * max(1.0, abs(m)))[0])
                score = float(scores[pos])
                thr = 0.5 * (xs[pos] + xs[pos + 1])
                if thr >= xs[pos + 1]:
                    thr = float(xs[pos])
            if score < best_score - _TIE_EPS * max(1.0, abs(best_score) if np.isfinite(best_score) else 1.0):
                best_score, best = score, (int(f), float(thr))
        if best is None or (parent - best_score) / scale <= _MIN_GAIN:
            return None
        return best


def gini(y, n_classes: int | None = None) -> float:
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=n_classes or 0)
    p = counts / counts.sum()
    return float(1.0 - (p * p).sum())


def train_tree(
    X, y, cfg=None, n_classes: int | None = None, sample_weight=None, sample_count=None, rng=None,
    random_thresholds: bool = False,
) -> TreeModel:
    """Fit a single CART classification tree with Gini impurity."""
    from .config import TrainConfig

    cfg = cfg or TrainConfig.default("tree")
    X, y, n_classes = check_Xy(X, y, n_classes)
    k = cfg.n_split_features(X.shape[1])
    if rng is None and (k < X.shape[1] or random_thresholds):
        rng = np.random.default_rng(cfg.seed)
    builder = TreeBuilder(
        criterion="gini",
        n_classes=n_classes,
        max_depth=cfg.max_depth,
        min_samples_split=cfg.min_samples_split,
        n_split_features=k,
        random_thresholds=random_thresholds,
        rng=rng,
    )
    tree = builder.build(X, y, sample_weight=sample_weight, sample_count=sample_count)
    tree.seed = cfg.seed
    return tree
