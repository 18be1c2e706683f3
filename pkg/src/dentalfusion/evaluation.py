"""Stratified splitting, cross-validation, F1 / one-vs-rest AUC and grid search."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .learn import TrainConfig, train
from .learn.forest import parallel_map


class StratificationError(ValueError):
    pass


def _labels(obj) -> np.ndarray:
    y = obj.y if hasattr(obj, "y") else obj
    return np.asarray(y, dtype=np.int64)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SplitPlan:
    train: np.ndarray
    test: np.ndarray
    seed: int
    label: str = ""


@dataclass(frozen=True)
class CvFolds:
    folds: tuple[np.ndarray, ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def splits(self):
        for i, test in enumerate(self.folds):
            train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
            yield train, test


def stratified_split(labels, test_fraction: float = 0.2, seed: int = 0, label: str = "") -> SplitPlan:
    """Per-class test allocation by largest remainder.

    The test set holds round(n * test_fraction) rows (halves round up) and
    every class contributes floor or ceil of its proportional share.
    """
    y = _labels(labels)
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < 2):
        small = classes[counts < 2].tolist()
        raise StratificationError(f"class(es) {small} have fewer than 2 members; cannot stratify")
    quota = counts * test_fraction
    alloc = np.floor(quota).astype(int)
    target = _round_half_up(len(y) * test_fraction)
    remainder = quota - alloc
    # largest remainders first, class order breaks ties
    for i in np.lexsort((classes, -remainder)):
        if alloc.sum() >= target:
            break
        if alloc[i] < counts[i] - 1:
            alloc[i] += 1
    rng = np.random.default_rng(seed)
    test = []
    for c, a in zip(classes, alloc):
        members = np.flatnonzero(y == c)
        test.append(rng.permutation(members)[:a])
    test = np.sort(np.concatenate(test)) if test else np.empty(0, dtype=np.int64)
    train = np.setdiff1d(np.arange(len(y)), test)
    return SplitPlan(train, test, seed, label)


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> CvFolds:
    """Shuffle each class and deal its members round-robin across folds.

    Dealing continues from the fold where the previous class stopped, which
    keeps fold sizes within one of each other.
    """
    y = _labels(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < k):
        small = classes[counts < k].tolist()
        raise StratificationError(f"class(es) {small} have fewer than k={k} members; cannot stratify")
    rng = np.random.default_rng(seed)
    assigned: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(y == c))
        for j, idx in enumerate(members):
            assigned[(offset + j) % k].append(int(idx))
        offset = (offset + len(members)) % k
    return CvFolds(tuple(np.sort(np.array(a, dtype=np.int64)) for a in assigned), seed)


# --- metrics ---------------------------------------------------------------


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


@dataclass
class F1Result:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def macro(self) -> float:
        return float(np.mean(self.f1))


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def f1_scores(cm) -> F1Result:
    """Per-class precision, recall and F1; empty denominators give 0."""
    cm = np.asarray(cm, dtype=float)
    tp = np.diag(cm)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return F1Result(precision, recall, f1)


@dataclass
class AucResult:
    per_class: np.ndarray  # nan where the class was not evaluable
    skipped: list[int]

    @property
    def macro(self) -> float:
        return float(np.nanmean(self.per_class))


def binary_auc(score, positive) -> float:
    """Mann-Whitney estimate; tied positive/negative pairs count one half."""
    score = np.asarray(score, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos, n_neg = int(positive.sum()), int((~positive).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(score)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_ovr(scores, labels, n_classes: int | None = None) -> AucResult:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = scores.shape[1] if n_classes is None else n_classes
    per_class = np.full(n_classes, np.nan)
    skipped = []
    for j in range(n_classes):
        pos = labels == j
        if pos.all() or not pos.any():
            skipped.append(j)
            continue
        per_class[j] = binary_auc(scores[:, j], pos)
    if len(skipped) == n_classes:
        raise ValueError("no class has both positive and negative instances")
    return AucResult(per_class, skipped)


@dataclass
class FoldMetrics:
    confusion: np.ndarray
    f1: F1Result
    auc: AucResult
    n_classes: int

    @property
    def macro_f1(self) -> float:
        return self.f1.macro

    @property
    def headline_auc(self) -> float:
        """Positive-class AUC for binary tasks, macro OvR otherwise."""
        if self.n_classes == 2 and not np.isnan(self.auc.per_class[1]):
            return float(self.auc.per_class[1])
        return self.auc.macro


def evaluate_predictions(y_true, y_pred, scores, n_classes: int) -> FoldMetrics:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    return FoldMetrics(cm, f1_scores(cm), auc_ovr(scores, y_true, n_classes), n_classes)


@dataclass
class MetricsReport:
    folds: list[FoldMetrics]
    n_models_trained: int = 0

    @property
    def fold_f1(self) -> np.ndarray:
        return np.array([f.macro_f1 for f in self.folds])

    @property
    def fold_auc(self) -> np.ndarray:
        return np.array([f.headline_auc for f in self.folds])

    @property
    def f1_mean(self) -> float:
        return float(np.mean(self.fold_f1))

    @property
    def f1_sd(self) -> float:
        return float(np.std(self.fold_f1))

    @property
    def auc_mean(self) -> float:
        return float(np.mean(self.fold_auc))

    @property
    def auc_sd(self) -> float:
        return float(np.std(self.fold_auc))

    @property
    def per_class_f1(self) -> np.ndarray:
        return np.mean([f.f1.f1 for f in self.folds], axis=0)

    @property
    def confusion(self) -> np.ndarray:
        return np.sum([f.confusion for f in self.folds], axis=0)


# fit_predict(train_idx, test_idx) -> {name: (predicted_labels, scores)}
FitPredict = Callable[[np.ndarray, np.ndarray], Mapping[str, tuple[np.ndarray, np.ndarray]]]


def cross_validate_many(labels, folds: CvFolds, fit_predict: FitPredict, n_classes: int,
                        n_jobs: int = 1) -> dict[str, MetricsReport]:
    """Run ``fit_predict`` once per fold and score every named output."""
    y = _labels(labels)
    splits = list(folds.splits())
    outputs = parallel_map(lambda s: fit_predict(*s), splits, n_jobs)
    reports: dict[str, MetricsReport] = {}
    for (_, test), out in zip(splits, outputs):
        for name, (pred, scores) in out.items():
            rep = reports.setdefault(name, MetricsReport([]))
            rep.folds.append(evaluate_predictions(y[test], pred, scores, n_classes))
            rep.n_models_trained += 1
    return reports


def cross_validate(X, y, folds: CvFolds, model: TrainConfig | Callable, n_classes: int | None = None,
                   n_jobs: int = 1) -> MetricsReport:
    """Cross-validated metrics for one learner.

    ``model`` is a :class:`TrainConfig` or a callable ``(X_train, y_train)``
    returning a fitted object with ``predict`` and ``predict_proba``.
    """
    X = np.asarray(X, dtype=float)
    y = _labels(y)
    n_classes = n_classes or int(y.max()) + 1
    fit = (lambda Xt, yt: train(Xt, yt, model, n_classes=n_classes)) if isinstance(model, TrainConfig) else model

    def fit_predict(tr, te):
        m = fit(X[tr], y[tr])
        return {"model": (m.predict(X[te]), m.predict_proba(X[te]))}

    return cross_validate_many(y, folds, fit_predict, n_classes, n_jobs)["model"]


@dataclass
class ParamGrid:
    kind: str
    params: dict[str, list]

    def __post_init__(self):
        if not self.params or any(len(v) == 0 for v in self.params.values()):
            raise ValueError("parameter grid must be non-empty")

    def __iter__(self):
        names = sorted(self.params)
        for values in itertools.product(*(self.params[n] for n in names)):
            yield dict(zip(names, values))

    def __len__(self) -> int:
        return math.prod(len(v) for v in self.params.values())


@dataclass
class GridResult:
    best: TrainConfig
    best_score: float
    table: list[dict] = field(default_factory=list)


def grid_search(X, y, grid: ParamGrid, folds: CvFolds, base: TrainConfig | None = None,
                fitter: Callable | None = None, n_classes: int | None = None, n_jobs: int = 1) -> GridResult:
    """Exhaustive search by cross-validated mean macro-F1; first best wins ties.

    ``fitter(cfg, X_train, y_train, n_classes)`` overrides plain training,
    e.g. to tune a per-tooth ensemble.
    """
    y = _labels(y)
    n_classes = n_classes or int(y.max()) + 1
    base = base or TrainConfig.default(grid.kind)
    best, best_score, table = None, -np.inf, []
    for params in grid:
        cfg = base.with_params(kind=grid.kind, **params)
        model = cfg if fitter is None else (lambda Xt, yt, cfg=cfg: fitter(cfg, Xt, yt, n_classes))
        rep = cross_validate(X, y, folds, model, n_classes, n_jobs)
        table.append({**params, "f1_mean": rep.f1_mean, "f1_sd": rep.f1_sd, "auc_mean": rep.auc_mean})
        if rep.f1_mean > best_score:
            best, best_score = cfg, rep.f1_mean
    return GridResult(best, best_score, table)
