"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 internal failure.
Every command writes ``manifest.json`` into its output directory last.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import (
    FEATURE_NAMES,
    INCLUDED_TEETH,
    Task,
    ValidationError,
    pivot_long_to_wide,
    read_long_csv,
    read_wide_csv,
    validate_dataset,
    write_exclusion_log,
    write_wide_csv,
)
from .evaluation import StratificationError
from .explain import ExplainError, ensemble_shap, summarize, write_attributions_csv, write_summary_csv
from .fusion import FUSION_RULES, NON_STOCHASTIC_RULES, FusionError, ToothGroupEnsemble
from .learn import ConfigError, InputError
from .modelio import ModelLoadError, read_model
from .pipeline import MODES, RunConfig, train_eval
from .report import RunManifest, importance_svg
from .synth import GeneratorConfig, GeneratorConfigError, generate_cohort, write_cohort_csv

log = logging.getLogger("dentalfusion")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3

VALIDATION_ERRORS = (ValidationError, StratificationError, ConfigError, GeneratorConfigError,
                     FusionError, ExplainError, InputError, json.JSONDecodeError)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable: {exc}", EXIT_IO) from None
    return out


def _load_config(args, **overrides) -> RunConfig:
    return RunConfig.load(args.config, seed=args.seed, **overrides)


def _finish(manifest: RunManifest, out: Path, paths) -> None:
    for p in paths:
        manifest.add_output(p, out)
    manifest.write(out / "manifest.json")


def _validated(ds, source) -> None:
    report = validate_dataset(ds)
    if not report.ok:
        shown = "; ".join(str(v) for v in report.violations[:5])
        raise ValidationError(f"{source}: {len(report.violations)} validation violation(s): {shown}")


# --- commands -------------------------------------------------------------


def cmd_ingest(args) -> int:
    out = _out_dir(args.out)
    cfg = _load_config(args)
    manifest = RunManifest("ingest", sys.argv[1:], cfg.to_dict(), cfg.seed)
    measurements, demographics = read_long_csv(args.input)
    manifest.set_dataset(args.input, len(measurements))
    kept_teeth = set(INCLUDED_TEETH)
    dropped = [(m.subject_id, f"excluded tooth {m.tooth.value}/{m.jaw.value}")
               for m in measurements if m.tooth not in kept_teeth]
    result = pivot_long_to_wide([m for m in measurements if m.tooth in kept_teeth], demographics)
    _validated(result.dataset, args.input)
    # subjects with no retained tooth at all never reach the pivot
    seen = {m.subject_id for m in measurements if m.tooth in kept_teeth}
    missing = [(sid, "no retained tooth measurements") for sid in demographics if sid not in seen]
    wide, excl = out / "wide.csv", out / "exclusions.csv"
    write_wide_csv(wide, result.dataset)
    write_exclusion_log(excl, dropped + result.excluded + missing)
    log.info("ingested %d subjects, %d exclusion entries", len(result.dataset), len(dropped) + len(result.excluded))
    _finish(manifest, out, [wide, excl])
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _out_dir(args.out)
    cfg = _load_config(args)
    gen = dict(cfg.generator)
    if args.seed is not None:
        gen["seed"] = args.seed
    if args.n_subjects is not None:
        gen["n_subjects"] = args.n_subjects
    if args.signal is not None:
        gen["signal"] = args.signal
    try:
        gcfg = GeneratorConfig(**gen)
    except TypeError as exc:
        raise ConfigError(f"bad generator settings: {exc}") from None
    manifest = RunManifest("synth", sys.argv[1:], {**cfg.to_dict(), "generator": gcfg.to_dict()}, gcfg.seed)
    cohort = generate_cohort(gcfg)
    long_csv, wide = out / "cohort_long.csv", out / "wide.csv"
    write_cohort_csv(long_csv, cohort)
    write_wide_csv(wide, cohort.to_dataset())
    manifest.dataset_rows = len(cohort)
    _finish(manifest, out, [long_csv, wide])
    return EXIT_OK


def cmd_train_eval(args) -> int:
    out = _out_dir(args.out)
    families = args.families.split(",") if args.families else None
    cfg = _load_config(args, task=args.task, mode=args.mode, fusion=args.fusion,
                       threads=args.threads, families=families)
    manifest = RunManifest("train-eval", sys.argv[1:], cfg.to_dict(), cfg.seed)
    ds = read_wide_csv(args.input, cfg.task_enum)
    manifest.set_dataset(args.input, len(ds))
    _validated(ds, args.input)
    result = train_eval(ds, cfg, out)
    _finish(manifest, out, result.outputs)
    return EXIT_OK


def _load_model_and_data(args, task_default: str):
    try:
        model = read_model(args.model)
    except ModelLoadError as exc:
        raise CliError(f"{args.model}: {exc}", EXIT_IO) from None
    task = Task(args.task or (task_default if model.n_classes != 2 else Task.GENDER.value))
    ds = read_wide_csv(args.input, task)
    if model.n_features != len(FEATURE_NAMES) or (
            model.feature_names is not None and list(model.feature_names) != list(FEATURE_NAMES)):
        raise ExplainError(f"model features {model.feature_names or model.n_features} do not match the "
                           f"wide-table columns")
    return model, ds


def cmd_explain(args) -> int:
    out = _out_dir(args.out)
    model, ds = _load_model_and_data(args, Task.AGE.value)
    # every row of INPUT is explained; train-eval's holdout_test.csv is the intended input
    instances = {"source": str(args.input), "rows": len(ds),
                 "set": "holdout" if Path(args.input).name == "holdout_test.csv" else "input"}
    manifest = RunManifest("explain", sys.argv[1:],
                           {"model": str(args.model), "top_k": args.top_k, "instances": instances}, None)
    manifest.set_dataset(args.input, len(ds))
    if len(ds) == 0:
        raise ValidationError(f"{args.input}: no rows to explain")
    attributions = ensemble_shap(model, ds.X, ds.subject_ids)
    summary = summarize(attributions, FEATURE_NAMES, k=args.top_k)
    att, summ, svg = out / "shap_values.csv", out / "shap_summary.csv", out / "shap_top.svg"
    write_attributions_csv(att, attributions, FEATURE_NAMES)
    write_summary_csv(summ, summary)
    labels = ds.task.class_labels if model.n_classes == ds.task.n_classes else None
    svg.write_text(importance_svg(summary, f"Top {args.top_k} features by mean |SHAP|", labels, args.top_k),
                   encoding="utf-8")
    _finish(manifest, out, [att, summ, svg])
    return EXIT_OK


def cmd_predict(args) -> int:
    out = _out_dir(args.out)
    model, ds = _load_model_and_data(args, Task.AGE.value)
    manifest = RunManifest("predict", sys.argv[1:], {"model": str(args.model), "fusion": args.fusion}, None)
    manifest.set_dataset(args.input, len(ds))
    n_classes = model.n_classes
    path = out / "predictions.csv"
    if isinstance(model, ToothGroupEnsemble):
        rule = args.fusion or model.rule
    else:
        rule = "none"
    # max/min/median scores are not renormalized; only their argmax is meaningful
    stochastic = int(rule not in NON_STOCHASTIC_RULES)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["UniqueID", "predicted", *(f"score_{c}" for c in range(n_classes)),
                    "rule", "stochastic", "votes", "tie_broken"])
        if len(ds):
            X = ds.X
            if isinstance(model, ToothGroupEnsemble):
                b = model.fuse_all(X, rule)
                scores, pred = b.scores, b.predicted
                votes = [";".join(str(v) for v in row) for row in b.votes]
                ties = b.tie_broken
            else:
                scores = model.predict_proba(X)
                pred = np.argmax(scores, axis=1)
                votes = [""] * len(ds)
                ties = np.zeros(len(ds), dtype=bool)
            for i, sid in enumerate(ds.subject_ids):
                w.writerow([sid, int(pred[i]), *(repr(float(s)) for s in scores[i]), rule, stochastic,
                            votes[i], int(bool(ties[i]))])
    _finish(manifest, out, [path])
    return EXIT_OK


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dentalfusion",
        description="Dental age/gender estimation with per-tooth tree ensembles.",
        epilog="Exit codes: 0 ok, 1 validation error, 2 I/O error, 3 internal error.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, input_help: str):
        sp.add_argument("input", help=input_help)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--seed", type=int, help="master seed (non-negative)")
        return sp

    common(sub.add_parser("ingest", help="long measurement CSV -> wide 18-feature CSV"), "long-format CSV")

    sp = sub.add_parser("synth", help="generate a synthetic cohort")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--config", help="JSON config file; its 'generator' object sets cohort parameters")
    sp.add_argument("--seed", type=int, help="generator seed")
    sp.add_argument("--n-subjects", type=int, help="number of subjects")
    sp.add_argument("--signal", choices=("cpch", "tci"), help="where the age trend is injected")
    sp.set_defaults(input=None)

    sp = common(sub.add_parser("train-eval", help="split, cross-validate, hold out and tabulate"), "wide CSV")
    sp.add_argument("--task", choices=[t.value for t in Task])
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--fusion", choices=FUSION_RULES)
    sp.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    sp.add_argument("--families", help="comma-separated model kinds, e.g. random_forest,adaboost")

    for name, helptext in (("explain", "SHAP attributions, summary and top-k chart"),
                           ("predict", "per-subject predictions and fusion metadata")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("model", help="model JSON file")
        sp.add_argument("input", help="wide CSV")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--task", choices=[t.value for t in Task],
                        help="label column to read (default inferred from the model's class count)")
        if name == "explain":
            sp.add_argument("--top-k", type=int, default=10, help="features shown in the chart")
        else:
            sp.add_argument("--fusion", choices=FUSION_RULES, help="override a tooth ensemble's rule")
    return p


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train-eval": cmd_train_eval,
    "explain": cmd_explain,
    "predict": cmd_predict,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal exit code
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
