"""Per-tooth ensembles fused by hard majority voting or soft combiners.

A decision profile matrix (DPM) for one instance is an ``N x C`` array whose
row ``i`` is the class-probability vector of ensemble member ``i``.  The soft
combiners reduce it column by column.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import INCLUDED_TEETH, SubjectRecord, Tooth, tooth_view
from .learn import Model, TrainConfig, train

FUSION_RULES = ("majority", "mean", "median", "max", "min")
SOFT_RULES = FUSION_RULES[1:]
# rules whose fused scores are not guaranteed to sum to one
NON_STOCHASTIC_RULES = ("median", "max", "min")
# conventional tooth numbers within a quadrant
TOOTH_NUMBER = {Tooth.SECOND_PREMOLAR: 5, Tooth.FIRST_MOLAR: 6, Tooth.SECOND_MOLAR: 7}

_STOCHASTIC_TOL = 1e-9


class FusionError(ValueError):
    pass


def check_dpm(dpm) -> np.ndarray:
    d = np.asarray(dpm, dtype=float)
    if d.ndim != 2 or d.shape[0] == 0 or d.shape[1] == 0:
        raise FusionError(f"decision profile must be a non-empty N x C matrix, got shape {d.shape}")
    if np.any(d < 0) or np.any(d > 1) or np.any(np.abs(d.sum(axis=1) - 1) > _STOCHASTIC_TOL):
        raise FusionError("decision profile rows must be probability vectors")
    return d


def build_dpm(members: Sequence[Model], x_per_member: Sequence) -> np.ndarray:
    """Stack each member's class probabilities for one instance."""
    if len(members) != len(x_per_member):
        raise FusionError("one feature row per member is required")
    if not members:
        raise FusionError("an ensemble needs at least one member")
    n_classes = {m.n_classes for m in members}
    if len(n_classes) != 1:
        raise FusionError(f"members disagree on the class count: {sorted(n_classes)}")
    rows = [m.predict_proba(np.asarray(x, dtype=float).reshape(1, -1))[0] for m, x in zip(members, x_per_member)]
    return check_dpm(np.vstack(rows))


def _nonempty(dpm) -> np.ndarray:
    d = np.asarray(dpm, dtype=float)
    if d.ndim < 2 or d.shape[-2] == 0:
        raise FusionError("empty decision profile")
    return d


# the combiners reduce over the member axis (-2) so they also accept a stack
# of DPMs shaped (n_instances, N, C)


def combine_mean(dpm) -> np.ndarray:
    return _nonempty(dpm).mean(axis=-2)


def combine_median(dpm) -> np.ndarray:
    """Middle order statistic for odd N, mean of the two middle ones for even N."""
    d = np.sort(_nonempty(dpm), axis=-2)
    n = d.shape[-2]
    if n % 2:
        return d[..., n // 2, :]
    return 0.5 * (d[..., n // 2 - 1, :] + d[..., n // 2, :])


def combine_max(dpm) -> np.ndarray:
    return _nonempty(dpm).max(axis=-2)


def combine_min(dpm) -> np.ndarray:
    return _nonempty(dpm).min(axis=-2)


COMBINERS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "mean": combine_mean,
    "median": combine_median,
    "max": combine_max,
    "min": combine_min,
}


@dataclass
class FusionResult:
    scores: np.ndarray
    predicted: int
    votes: list[int]
    tie_broken: bool = False
    rule: str = "majority"

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "scores": [float(s) for s in self.scores],
            "predicted": int(self.predicted),
            "votes": [int(v) for v in self.votes],
            "tie_broken": bool(self.tie_broken),
            "stochastic": self.rule not in NON_STOCHASTIC_RULES,
        }


def majority_vote(hard_votes: Sequence[int], dpm=None, n_classes: int | None = None) -> FusionResult:
    """Most-voted class; ties fall back to the mean DPM score over the tied
    classes, then to the lowest class index.  Scores are vote shares.
    """
    votes = [int(v) for v in hard_votes]
    if not votes:
        raise FusionError("majority vote needs at least one vote")
    if dpm is not None:
        dpm = _nonempty(dpm)
        if dpm.shape[0] != len(votes):
            raise FusionError("DPM rows must correspond to voters")
        n_classes = dpm.shape[1]
    if n_classes is None:
        n_classes = max(votes) + 1
    if min(votes) < 0 or max(votes) >= n_classes:
        raise FusionError(f"votes must lie in [0, {n_classes})")
    counts = np.bincount(votes, minlength=n_classes)
    tied = np.flatnonzero(counts == counts.max())
    tie_broken = len(tied) > 1
    if not tie_broken:
        winner = int(tied[0])
    elif dpm is None:
        winner = int(tied[0])
    else:
        mean = dpm.mean(axis=0)[tied]
        winner = int(tied[int(np.argmax(mean))])
    return FusionResult(counts / len(votes), winner, votes, tie_broken, "majority")


def fuse(dpm, rule: str) -> FusionResult:
    """Apply a fusion rule to one DPM; member votes are row argmaxes."""
    d = _nonempty(dpm)
    votes = [int(v) for v in np.argmax(d, axis=1)]
    if rule == "majority":
        return majority_vote(votes, d)
    if rule not in COMBINERS:
        raise FusionError(f"unknown fusion rule {rule!r}; expected one of {FUSION_RULES}")
    scores = COMBINERS[rule](d)
    return FusionResult(scores, int(np.argmax(scores)), votes, False, rule)


@dataclass
class BatchFusion:
    """Fusion outputs for many instances at once."""

    scores: np.ndarray  # (n, C)
    predicted: np.ndarray  # (n,)
    votes: np.ndarray  # (n, N)
    tie_broken: np.ndarray  # (n,) bool
    rule: str

    def __len__(self) -> int:
        return len(self.predicted)

    def result(self, i: int) -> FusionResult:
        return FusionResult(self.scores[i], int(self.predicted[i]), self.votes[i].tolist(),
                            bool(self.tie_broken[i]), self.rule)


def _vote_batch(votes: np.ndarray, dpms: np.ndarray) -> BatchFusion:
    n, n_members, n_classes = dpms.shape
    counts = np.zeros((n, n_classes))
    for m in range(n_members):
        counts[np.arange(n), votes[:, m]] += 1
    is_top = counts == counts.max(axis=1, keepdims=True)
    tie = is_top.sum(axis=1) > 1
    # restrict the fallback to tied classes; argmax then takes the lowest index
    fallback = np.where(is_top, dpms.mean(axis=1), -np.inf)
    predicted = np.where(tie, np.argmax(fallback, axis=1), np.argmax(counts, axis=1))
    return BatchFusion(counts / n_members, predicted, votes, tie, "majority")


def fuse_batch(dpms: np.ndarray, rule: str) -> BatchFusion:
    """Vectorised :func:`fuse` over a stack of DPMs shaped (n, N, C)."""
    d = np.asarray(dpms, dtype=float)
    if d.ndim != 3:
        raise FusionError("expected a (n_instances, N, C) stack of decision profiles")
    n, n_members, n_classes = d.shape
    votes = np.argmax(d, axis=2)
    if rule == "majority":
        return _vote_batch(votes, d)
    if rule not in COMBINERS:
        raise FusionError(f"unknown fusion rule {rule!r}; expected one of {FUSION_RULES}")
    scores = COMBINERS[rule](d)
    return BatchFusion(scores, np.argmax(scores, axis=1), votes, np.zeros(n, dtype=bool), rule)


@dataclass
class ToothGroupEnsemble:
    """One learner per retained tooth, each seeing only that tooth's six columns."""

    members: dict[Tooth, Model]
    n_classes: int
    rule: str = "majority"
    feature_names: list[str] | None = None
    kind: str = field(default="tooth_ensemble", init=False)

    def __post_init__(self):
        if tuple(self.members) != INCLUDED_TEETH:
            raise FusionError("ensemble members must be keyed by the three retained teeth in order")
        if any(m.n_classes != self.n_classes for m in self.members.values()):
            raise FusionError("all members must share the ensemble class count")
        if self.rule not in FUSION_RULES:
            raise FusionError(f"unknown fusion rule {self.rule!r}")

    @property
    def n_features(self) -> int:
        return 18

    @property
    def views(self) -> dict[Tooth, list[int]]:
        return {t: tooth_view(t) for t in self.members}

    def decision_profiles(self, X) -> np.ndarray:
        """Stacked DPMs, shape (n_rows, 3, C)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise FusionError(f"expected {self.n_features} feature columns, got {X.shape[1]}")
        return np.stack(
            [m.predict_proba(X[:, tooth_view(t)]) for t, m in self.members.items()], axis=1
        )

    def fuse_all(self, X, rule: str | None = None) -> BatchFusion:
        return fuse_batch(self.decision_profiles(X), rule or self.rule)

    def predict_proba(self, X) -> np.ndarray:
        """Soft output of the mean combiner (the only rule whose output is stochastic by construction)."""
        return combine_mean(self.decision_profiles(X))

    def predict(self, X) -> np.ndarray:
        return self.fuse_all(X).predicted


def fit_tooth_ensemble(X, y, cfg: TrainConfig, n_classes: int, rule: str = "majority",
                       feature_names: list[str] | None = None) -> ToothGroupEnsemble:
    X = np.asarray(X, dtype=float)
    members = {}
    for tooth in INCLUDED_TEETH:
        cols = tooth_view(tooth)
        member = train(X[:, cols], y, cfg, n_classes=n_classes)
        if feature_names is not None:
            member.feature_names = [feature_names[c] for c in cols]
        members[tooth] = member
    return ToothGroupEnsemble(members, n_classes, rule, feature_names)


def fuse_predict(ens: ToothGroupEnsemble, record: SubjectRecord, rule: str | None = None) -> FusionResult:
    x = np.asarray(record.features, dtype=float)
    members = list(ens.members.values())
    dpm = build_dpm(members, [x[tooth_view(t)] for t in ens.members])
    return fuse(dpm, rule or ens.rule)


def vote_across(predictions: Mapping[str, BatchFusion], soft: Mapping[str, np.ndarray]) -> BatchFusion:
    """Majority vote over several model families' fused predictions.

    ``soft[name]`` is the family's (n, C) mean-combined probability output,
    used as the DPM row for the tie fallback.
    """
    names = list(predictions)
    if not names:
        raise FusionError("no predictions to combine")
    votes = np.column_stack([predictions[k].predicted for k in names])
    dpms = np.stack([soft[k] for k in names], axis=1)
    return _vote_batch(votes, dpms)
