from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

MODEL_KINDS = ("tree", "random_forest", "extra_trees", "gradient_boosting", "adaboost")

DISPLAY_NAMES = {
    "tree": "Decision Tree",
    "random_forest": "Random Forest",
    "extra_trees": "Extra Trees",
    "gradient_boosting": "Gradient Boosting",
    "adaboost": "AdaBoost",
}

_DEFAULTS: dict[str, dict[str, Any]] = {
    "tree": dict(n_trees=1, max_depth=None, feature_subsample="all", bootstrap=False),
    "random_forest": dict(n_trees=100, max_depth=None, feature_subsample="sqrt", bootstrap=True),
    "extra_trees": dict(n_trees=100, max_depth=None, feature_subsample="sqrt", bootstrap=False),
    "gradient_boosting": dict(n_trees=100, max_depth=3, learning_rate=0.1, feature_subsample="all"),
    "adaboost": dict(n_trees=50, max_depth=1, feature_subsample="all"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for every learner family.

    ``max_depth=None`` means unlimited.  ``feature_subsample`` is the number
    of features drawn at each split: ``"sqrt"`` (floor of the square root),
    ``"all"`` or an explicit positive integer.  ``n_jobs`` only affects
    wall-clock time, never the fitted model.
    """

    kind: str = "tree"
    max_depth: int | None = None
    n_trees: int = 1
    learning_rate: float = 0.1
    min_samples_split: int = 2
    feature_subsample: str | int = "all"
    bootstrap: bool = False
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1 or None")
        if self.n_trees < 0 or (self.n_trees == 0 and self.kind != "gradient_boosting"):
            raise ConfigError(f"n_trees={self.n_trees} invalid for {self.kind}")
        if not (0 < self.learning_rate and math.isfinite(self.learning_rate)):
            raise ConfigError("learning_rate must be positive")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if isinstance(self.feature_subsample, str):
            if self.feature_subsample not in ("sqrt", "all"):
                raise ConfigError(f"feature_subsample {self.feature_subsample!r} not understood")
        elif self.feature_subsample < 1:
            raise ConfigError("feature_subsample must be >= 1")
        if self.seed < 0 or self.n_jobs < 1:
            raise ConfigError("seed must be >= 0 and n_jobs >= 1")

    @classmethod
    def default(cls, kind: str, **overrides) -> "TrainConfig":
        if kind not in _DEFAULTS:
            raise ConfigError(f"unknown model kind {kind!r}")
        return cls(kind=kind, **{**_DEFAULTS[kind], **overrides})

    def with_params(self, **params) -> "TrainConfig":
        names = {f.name for f in fields(self)}
        unknown = set(params) - names
        if unknown:
            raise ConfigError(f"unknown hyperparameter(s): {sorted(unknown)}")
        return replace(self, **params)

    def n_split_features(self, n_features: int) -> int:
        if self.feature_subsample == "all":
            return n_features
        if self.feature_subsample == "sqrt":
            return max(1, math.isqrt(n_features))
        return min(int(self.feature_subsample), n_features)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        return cls(**d)
