"""Shapley-value attributions for the tree learners.

The game being explained is the path-dependent one: for a coalition S the
value is the expected tree output when features in S are fixed to x and the
others are integrated out using the training covers stored at each split.
``tree_shap`` computes its Shapley values in polynomial time;
``exact_shapley_oracle`` enumerates every coalition and is used to check it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .data import tooth_view
from .learn import AdaBoostModel, BoostedModel, ForestModel, Model, TreeModel
from .learn.tree import check_X

ORACLE_MAX_FEATURES = 12


class ExplainError(ValueError):
    pass


# --- polynomial-time path algorithm ----------------------------------------


@numba.njit
def _extend(feat, zero, one, pw, start, depth, zero_fraction, one_fraction, feature_index):
    feat[start + depth] = feature_index
    zero[start + depth] = zero_fraction
    one[start + depth] = one_fraction
    pw[start + depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[start + i + 1] += one_fraction * pw[start + i] * (i + 1) / (depth + 1)
        pw[start + i] = zero_fraction * pw[start + i] * (depth - i) / (depth + 1)


@numba.njit
def _unwind(feat, zero, one, pw, start, depth, path_index):
    one_fraction = one[start + path_index]
    zero_fraction = zero[start + path_index]
    next_one = pw[start + depth]
    for i in range(depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = pw[start + i]
            pw[start + i] = next_one * (depth + 1) / ((i + 1) * one_fraction)
            next_one = tmp - pw[start + i] * zero_fraction * (depth - i) / (depth + 1)
        else:
            pw[start + i] = pw[start + i] * (depth + 1) / (zero_fraction * (depth - i))
    for i in range(path_index, depth):
        feat[start + i] = feat[start + i + 1]
        zero[start + i] = zero[start + i + 1]
        one[start + i] = one[start + i + 1]


@numba.njit
def _unwound_sum(zero, one, pw, start, depth, path_index):
    one_fraction = one[start + path_index]
    zero_fraction = zero[start + path_index]
    next_one = pw[start + depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = next_one * (depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one = pw[start + i] - tmp * zero_fraction * (depth - i) / (depth + 1)
        else:
            total += pw[start + i] / zero_fraction / ((depth - i) / (depth + 1))
    return total


@numba.njit
def _recurse(node, x, feature, threshold, left, right, cover, value, phi,
             feat, zero, one, pw, parent_start, depth, zero_fraction, one_fraction, feature_index):
    # each level owns a slice of the shared buffer just past its parent's
    start = parent_start + depth + 1
    if depth > 0:
        for i in range(depth):
            feat[start + i] = feat[parent_start + i]
            zero[start + i] = zero[parent_start + i]
            one[start + i] = one[parent_start + i]
            pw[start + i] = pw[parent_start + i]
    _extend(feat, zero, one, pw, start, depth, zero_fraction, one_fraction, feature_index)

    if left[node] < 0:
        for i in range(1, depth + 1):
            w = _unwound_sum(zero, one, pw, start, depth, i)
            scale = w * (one[start + i] - zero[start + i])
            f = feat[start + i]
            for c in range(value.shape[1]):
                phi[f, c] += scale * value[node, c]
        return

    split = feature[node]
    if x[split] <= threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    incoming_zero = 1.0
    incoming_one = 1.0
    path_index = 0
    while path_index <= depth:
        if feat[start + path_index] == split:
            break
        path_index += 1
    if path_index != depth + 1:
        incoming_zero = zero[start + path_index]
        incoming_one = one[start + path_index]
        _unwind(feat, zero, one, pw, start, depth, path_index)
        depth -= 1
    _recurse(hot, x, feature, threshold, left, right, cover, value, phi, feat, zero, one, pw,
             start, depth + 1, incoming_zero * cover[hot] / cover[node], incoming_one, split)
    _recurse(cold, x, feature, threshold, left, right, cover, value, phi, feat, zero, one, pw,
             start, depth + 1, incoming_zero * cover[cold] / cover[node], 0.0, split)


@numba.njit
def _tree_shap_batch(X, feature, threshold, left, right, cover, value, max_depth, out):
    size = (max_depth + 3) * (max_depth + 4) // 2 + 2
    for r in range(X.shape[0]):
        feat = np.full(size, -1, dtype=np.int64)
        zero = np.zeros(size)
        one = np.zeros(size)
        pw = np.zeros(size)
        _recurse(0, X[r], feature, threshold, left, right, cover, value, out[r],
                 feat, zero, one, pw, 0, 0, 1.0, 1.0, -1)


def _check_covers(tree: TreeModel) -> None:
    if np.any(tree.cover <= 0):
        raise ExplainError("tree has a node with zero cover; conditional expectations are undefined")


def expected_value(tree: TreeModel, values: np.ndarray | None = None) -> np.ndarray:
    """Cover-weighted mean leaf output (the value of the empty coalition)."""
    _check_covers(tree)
    values = tree.value if values is None else values
    out = np.zeros_like(values[0], dtype=float)
    stack = [(0, 1.0)]
    while stack:
        node, w = stack.pop()
        if tree.left[node] < 0:
            out = out + w * values[node]
            continue
        for child in (tree.left[node], tree.right[node]):
            stack.append((child, w * tree.cover[child] / tree.cover[node]))
    return out


def tree_shap(tree: TreeModel, X, values: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Shapley values of every feature for every output of one tree.

    ``values`` optionally replaces the per-node outputs (shape
    ``(n_nodes, n_outputs)``).  Returns ``(phi, base)`` with ``phi`` shaped
    ``(n_rows, n_outputs, n_features)`` and ``base`` shaped ``(n_outputs,)``.
    """
    X = check_X(X, tree.n_features)
    _check_covers(tree)
    values = np.ascontiguousarray(tree.value if values is None else values, dtype=float)
    phi = np.zeros((len(X), tree.n_features, values.shape[1]))
    _tree_shap_batch(
        np.ascontiguousarray(X), tree.feature, tree.threshold, tree.left, tree.right,
        tree.cover.astype(float), values, max(tree.depth, 1), phi,
    )
    return phi.transpose(0, 2, 1), expected_value(tree, values)


# --- brute-force oracle ----------------------------------------------------


def _coalition_values(tree: TreeModel, x: np.ndarray, members: np.ndarray, values: np.ndarray) -> np.ndarray:
    """v(S) for every coalition row of ``members`` by recursive descent."""
    out = np.zeros((len(members), values.shape[1]))

    def descend(node, weight):
        if tree.left[node] < 0:
            out[:] += weight[:, None] * values[node]
            return
        f = tree.feature[node]
        goes_left = x[f] <= tree.threshold[node]
        known = members[:, f]
        for child, taken in ((tree.left[node], goes_left), (tree.right[node], not goes_left)):
            share = tree.cover[child] / tree.cover[node]
            w = weight * np.where(known, float(taken), share)
            if w.any():
                descend(child, w)

    descend(0, np.ones(len(members)))
    return out


def _shapley_from_values(v: np.ndarray, n_features: int) -> np.ndarray:
    idx = np.arange(1 << n_features)
    sizes = np.array([bin(i).count("1") for i in idx])
    m = n_features
    weight = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) if s < m else 0.0
                       for s in range(m + 1)])
    phi = np.zeros((v.shape[1], m))
    for i in range(m):
        bit = 1 << i
        without = idx[(idx & bit) == 0]
        phi[:, i] = (weight[sizes[without]][:, None] * (v[without | bit] - v[without])).sum(axis=0)
    return phi


def exact_shapley_oracle(model, x) -> tuple[np.ndarray, np.ndarray]:
    """Shapley values by enumerating all coalitions; returns ``(phi (C, M), v_empty)``."""
    terms = _tree_terms(model)
    n_features = terms[0][0].n_features if terms else model.n_features
    if n_features > ORACLE_MAX_FEATURES:
        raise ExplainError(f"oracle enumerates 2^n coalitions; n_features={n_features} exceeds {ORACLE_MAX_FEATURES}")
    x = check_X(x, n_features)[0]
    idx = np.arange(1 << n_features)
    members = ((idx[:, None] >> np.arange(n_features)) & 1).astype(bool)
    v = np.tile(_output_offset(model), (len(idx), 1))
    for tree, values, weight in terms:
        _check_covers(tree)
        v += weight * _coalition_values(tree, x, members, values)
    return _shapley_from_values(v, n_features), v[0]


# --- model-level attribution -----------------------------------------------


def output_space(model) -> str:
    if isinstance(model, BoostedModel):
        return "raw_score"
    if isinstance(model, AdaBoostModel):
        return "margin"
    if getattr(model, "kind", None) == "tooth_ensemble":
        spaces = {output_space(m) for m in model.members.values()}
        return spaces.pop() if len(spaces) == 1 else "mixed"
    return "probability"


def model_output(model, X) -> np.ndarray:
    """The quantity whose attributions are computed (see :func:`output_space`)."""
    if isinstance(model, BoostedModel):
        return model.raw_scores(X)
    if isinstance(model, AdaBoostModel):
        return model.margins(X)
    if getattr(model, "kind", None) == "tooth_ensemble":
        X = np.asarray(X, dtype=float)
        return np.mean([model_output(m, X[:, tooth_view(t)]) for t, m in model.members.items()], axis=0)
    return model.predict_proba(X)


def _onehot_argmax(tree: TreeModel) -> np.ndarray:
    out = np.zeros_like(tree.value)
    out[np.arange(tree.n_nodes), np.argmax(tree.value, axis=1)] = 1.0
    return out


def _tree_terms(model) -> list[tuple[TreeModel, np.ndarray, float]]:
    """Decompose a model into (tree, per-node output in class space, weight)."""
    if isinstance(model, TreeModel):
        return [(model, model.value, 1.0)]
    if isinstance(model, ForestModel):
        w = 1.0 / len(model.trees)
        return [(t, t.value, w) for t in model.trees]
    if isinstance(model, BoostedModel):
        terms = []
        for round_trees in model.trees:
            for k, t in enumerate(round_trees):
                vals = np.zeros((t.n_nodes, model.n_classes))
                vals[:, k] = t.value[:, 0]
                terms.append((t, vals, 1.0))
        return terms
    if isinstance(model, AdaBoostModel):
        return [(t, _onehot_argmax(t), a) for t, a in zip(model.trees, model.alphas)]
    raise ExplainError(f"cannot explain {type(model).__name__}")


def _output_offset(model) -> np.ndarray:
    if isinstance(model, BoostedModel):
        return np.asarray(model.init_scores, dtype=float)
    return np.zeros(model.n_classes)


@dataclass
class ShapAttribution:
    instance_id: str
    values: np.ndarray  # (C, n_features)
    base_values: np.ndarray  # (C,)
    output_space: str = "probability"

    @property
    def n_classes(self) -> int:
        return self.values.shape[0]


def ensemble_shap_arrays(model, X) -> tuple[np.ndarray, np.ndarray]:
    """Attributions for many rows: ``(phi (n, C, M), base (C,))``."""
    if getattr(model, "kind", None) == "tooth_ensemble":
        X = np.asarray(X, dtype=float)
        phi = np.zeros((len(X), model.n_classes, X.shape[1]))
        base = np.zeros(model.n_classes)
        share = 1.0 / len(model.members)
        for tooth, member in model.members.items():
            cols = tooth_view(tooth)
            p, b = ensemble_shap_arrays(member, X[:, cols])
            phi[:, :, cols] += share * p
            base += share * b
        return phi, base
    X = check_X(X, model.n_features)
    phi = np.zeros((len(X), model.n_classes, model.n_features))
    base = _output_offset(model).copy()
    for tree, values, weight in _tree_terms(model):
        p, b = tree_shap(tree, X, values)
        phi += weight * p
        base += weight * b
    return phi, base


def ensemble_shap(model, X, instance_ids: Sequence[str] | None = None) -> list[ShapAttribution]:
    """Per-instance attributions for any supported model.

    Forests average their trees, boosting sums its per-class trees in raw
    score space, AdaBoost weights each learner's hard vote by its alpha.  The
    output explained is given by :func:`output_space`.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    phi, base = ensemble_shap_arrays(model, X)
    ids = [str(i) for i in range(len(X))] if instance_ids is None else list(instance_ids)
    space = output_space(model)
    return [ShapAttribution(ids[i], phi[i], base.copy(), space) for i in range(len(X))]


# --- summaries ------------------------------------------------------------


@dataclass
class ImportanceSummary:
    feature_names: list[str]
    per_class: np.ndarray  # (C, M) mean |phi| per class
    overall: np.ndarray  # (M,) sum over classes: the stacked-bar length
    ranking: list[int]  # feature indices, most important first
    k: int = 10

    def top(self, k: int | None = None) -> list[int]:
        return self.ranking[: self.k if k is None else k]


def summarize(attributions: Sequence[ShapAttribution], feature_names: Sequence[str], k: int = 10) -> ImportanceSummary:
    if not attributions:
        raise ExplainError("no attributions to summarize")
    stack = np.stack([np.abs(a.values) for a in attributions])
    per_class = stack.mean(axis=0)
    overall = per_class.sum(axis=0)
    ranking = np.lexsort((np.arange(len(overall)), -overall)).tolist()
    return ImportanceSummary(list(feature_names), per_class, overall, ranking, k)


def write_attributions_csv(path: str | Path, attributions: Sequence[ShapAttribution], feature_names: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "class", "feature", "shap_value", "base_value"])
        for a in attributions:
            for c in range(a.n_classes):
                for f, name in enumerate(feature_names):
                    w.writerow([a.instance_id, c, name, repr(float(a.values[c, f])), repr(float(a.base_values[c]))])


def write_summary_csv(path: str | Path, summary: ImportanceSummary) -> None:
    n_classes = summary.per_class.shape[0]
    rank = {f: r + 1 for r, f in enumerate(summary.ranking)}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mean_abs_shap", "rank", *(f"class_{c}" for c in range(n_classes))])
        for f in summary.ranking:
            w.writerow([summary.feature_names[f], f"{summary.overall[f]:.10g}", rank[f],
                        *(f"{summary.per_class[c, f]:.10g}" for c in range(n_classes))])
