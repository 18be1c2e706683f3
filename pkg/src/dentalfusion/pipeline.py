"""The train/evaluate workflow: split, cross-validate, hold out, tabulate.

Two modes are supported.  ``single`` trains each model family on all 18
columns.  ``per-tooth`` trains one learner per retained tooth and fuses the
three outputs; every fusion rule is scored from the same fitted members so
the combiner comparison costs no extra training.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .data import FEATURE_NAMES, INCLUDED_TEETH, Dataset, Task, write_wide_csv
from .evaluation import (
    FoldMetrics,
    MetricsReport,
    ParamGrid,
    cross_validate_many,
    evaluate_predictions,
    grid_search,
    stratified_kfold,
    stratified_split,
)
from .fusion import (
    FUSION_RULES,
    TOOTH_NUMBER,
    combine_mean,
    fit_tooth_ensemble,
    fuse_batch,
    vote_across,
)
from .learn import DISPLAY_NAMES, MODEL_KINDS, ConfigError, TrainConfig, train
from .modelio import write_model
from .report import TableRow, write_detail, write_table

log = logging.getLogger(__name__)

MODES = ("single", "per-tooth")
ENSEMBLE_NAME = "Ensemble of above models"
DEFAULT_FAMILIES = ("random_forest", "extra_trees", "gradient_boosting", "adaboost", "tree")


@dataclass
class RunConfig:
    """Everything a ``train-eval`` run depends on.

    ``hyperparameters`` maps a model kind to overrides of its defaults and
    ``grid`` maps a kind to ``{param: [candidates]}`` for grid search on the
    training portion.  ``generator`` holds synthetic-cohort settings used by
    the ``synth`` command.
    """

    seed: int = 0
    task: str = "age"
    mode: str = "per-tooth"
    fusion: str = "majority"
    families: list[str] = field(default_factory=lambda: list(DEFAULT_FAMILIES))
    test_fraction: float = 0.2
    folds: int = 5
    threads: int = 1
    hyperparameters: dict[str, dict[str, Any]] = field(default_factory=dict)
    grid: dict[str, dict[str, list]] = field(default_factory=dict)
    generator: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.task not in [t.value for t in Task]:
            raise ConfigError(f"task must be one of {[t.value for t in Task]}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.fusion not in FUSION_RULES:
            raise ConfigError(f"fusion must be one of {FUSION_RULES}")
        if not self.families:
            raise ConfigError("at least one model family is required")
        for kind in [*self.families, *self.hyperparameters, *self.grid]:
            if kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model family {kind!r}; expected one of {MODEL_KINDS}")
        if len(set(self.families)) != len(self.families):
            raise ConfigError("model families must be distinct")
        if self.folds < 2 or self.threads < 1:
            raise ConfigError("folds must be >= 2 and threads >= 1")
        # fail fast on bad hyperparameter names or values
        for kind in self.families:
            self.train_config(kind)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path | None, **overrides) -> "RunConfig":
        """Read a JSON config file (or start from defaults); non-None overrides win."""
        d = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def task_enum(self) -> Task:
        return Task(self.task)

    def derived_seeds(self) -> tuple[int, int]:
        """Independent seeds for the holdout split and the CV folds."""
        split_seed, fold_seed = np.random.SeedSequence(self.seed).generate_state(2, dtype=np.uint64)
        return int(split_seed), int(fold_seed)

    def train_config(self, kind: str) -> TrainConfig:
        return TrainConfig.default(kind, seed=self.seed, n_jobs=self.threads,
                                   **self.hyperparameters.get(kind, {}))


@dataclass
class TrainEvalResult:
    cv: dict[str, MetricsReport]
    holdout: dict[str, FoldMetrics]
    configs: dict[str, TrainConfig]
    outputs: list[Path]
    grids: dict[str, list[dict]] = field(default_factory=dict)


def _key(table: str, model: str) -> str:
    return f"{table}|{model}"


def per_tooth_outputs(X_tr, y_tr, X_te, configs: dict[str, TrainConfig], n_classes: int, rule: str):
    """Fit one tooth ensemble per family and score every view of it on ``X_te``.

    Returns ``(outputs, ensembles)`` where ``outputs`` maps ``table|model``
    keys to ``(predicted, scores)``.
    """
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    fused, soft, ensembles = {}, {}, {}
    for kind, cfg in configs.items():
        ens = fit_tooth_ensemble(X_tr, y_tr, cfg, n_classes, rule, list(FEATURE_NAMES))
        ensembles[kind] = ens
        dpms = ens.decision_profiles(X_te)
        for i, tooth in enumerate(INCLUDED_TEETH):
            p = dpms[:, i]
            out[_key(f"tooth{TOOTH_NUMBER[tooth]}", kind)] = (np.argmax(p, axis=1), p)
        for r in FUSION_RULES:
            b = fuse_batch(dpms, r)
            out[_key(f"combiner:{r}", kind)] = (b.predicted, b.scores)
        fused[kind] = fuse_batch(dpms, rule)
        soft[kind] = combine_mean(dpms)
    b = vote_across(fused, soft)
    out[_key("ensemble", ENSEMBLE_NAME)] = (b.predicted, b.scores)
    return out, ensembles


def single_outputs(X_tr, y_tr, X_te, configs: dict[str, TrainConfig], n_classes: int):
    out, models = {}, {}
    for kind, cfg in configs.items():
        m = train(X_tr, y_tr, cfg, n_classes=n_classes)
        m.feature_names = list(FEATURE_NAMES)
        models[kind] = m
        out[_key("models", kind)] = (m.predict(X_te), m.predict_proba(X_te))
    return out, models


def _tune(cfg: RunConfig, X, y, folds, n_classes: int, configs: dict[str, TrainConfig]) -> dict[str, list[dict]]:
    tables = {}
    for kind, params in cfg.grid.items():
        if kind not in configs:
            continue
        grid = ParamGrid(kind, params)
        fitter = None
        if cfg.mode == "per-tooth":
            fitter = lambda c, Xt, yt, C: fit_tooth_ensemble(Xt, yt, c, C, cfg.fusion)
        res = grid_search(X, y, grid, folds, configs[kind], fitter, n_classes, cfg.threads)
        log.info("grid search %s: best %s (F1 %.4f)", kind, res.best.to_dict(), res.best_score)
        configs[kind] = res.best
        tables[kind] = res.table
    return tables


def _rows(cv, holdout, table: str, models: list[str], rule: str | None = None) -> list[TableRow]:
    rows = []
    for kind in models:
        name = DISPLAY_NAMES.get(kind, kind)
        k = _key(table, kind)
        rows.append(TableRow.from_cv(name, cv[k], rule))
        rows.append(TableRow.from_holdout(name, holdout[k], rule))
    return rows


def _write_grid(path: Path, table: list[dict]) -> None:
    names = list(table[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in table:
            w.writerow([repr(row[n]) if isinstance(row[n], float) else row[n] for n in names])


def train_eval(ds: Dataset, cfg: RunConfig, out_dir: str | Path) -> TrainEvalResult:
    """Run the full workflow on ``ds`` and write tables, models and splits to ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "models").mkdir(parents=True, exist_ok=True)
    ds = ds.with_task(cfg.task_enum)
    X, y, n_classes = ds.X, ds.y, cfg.task_enum.n_classes
    split_seed, fold_seed = cfg.derived_seeds()
    split = stratified_split(y, cfg.test_fraction, seed=split_seed, label=cfg.task)
    X_tr, y_tr, X_te, y_te = X[split.train], y[split.train], X[split.test], y[split.test]
    folds = stratified_kfold(y_tr, cfg.folds, seed=fold_seed)
    configs = {kind: cfg.train_config(kind) for kind in cfg.families}
    grids = _tune(cfg, X_tr, y_tr, folds, n_classes, configs)

    if cfg.mode == "per-tooth":
        run = lambda a, b, c: per_tooth_outputs(a, b, c, configs, n_classes, cfg.fusion)
    else:
        run = lambda a, b, c: single_outputs(a, b, c, configs, n_classes)
    cv = cross_validate_many(y_tr, folds, lambda tr, te: run(X_tr[tr], y_tr[tr], X_tr[te])[0],
                             n_classes, cfg.threads)
    hold_out, models = run(X_tr, y_tr, X_te)
    holdout = {k: evaluate_predictions(y_te, p, s, n_classes) for k, (p, s) in hold_out.items()}

    written: list[Path] = []

    def table(name: str, rows: list[TableRow]) -> None:
        path = out_dir / f"table_{name}.csv"
        write_table(path, rows)
        written.append(path)

    families = list(configs)
    if cfg.mode == "single":
        table("models", _rows(cv, holdout, "models", families))
    else:
        for tooth in INCLUDED_TEETH:
            n = TOOTH_NUMBER[tooth]
            table(f"tooth{n}", _rows(cv, holdout, f"tooth{n}", families))
        rows = _rows(cv, holdout, f"combiner:{cfg.fusion}", families, cfg.fusion)
        rows += _rows(cv, holdout, "ensemble", [ENSEMBLE_NAME], cfg.fusion)
        table("ensemble", rows)
        table("combiners", [r for rule in FUSION_RULES
                            for r in _rows(cv, holdout, f"combiner:{rule}", families, rule)])

    detail = out_dir / "metrics_detail.csv"
    entries = []
    for key in cv:
        tbl, model = key.split("|", 1)
        entries.append((tbl, model, "cv", cv[key]))
        entries.append((tbl, model, "holdout", holdout[key]))
    write_detail(detail, entries)
    written.append(detail)

    for kind, params in grids.items():
        path = out_dir / f"grid_{kind}.csv"
        _write_grid(path, params)
        written.append(path)

    for kind, model in models.items():
        path = out_dir / "models" / f"{kind}.json"
        write_model(path, model)
        written.append(path)

    holdout_csv = out_dir / "holdout_test.csv"
    write_wide_csv(holdout_csv, ds.subset(split.test))
    written.append(holdout_csv)
    return TrainEvalResult(cv, holdout, configs, written, grids)
