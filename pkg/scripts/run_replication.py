"""Per-tooth ensembles on a synthetic cohort: CV macro-F1 / AUC for every fusion rule.

Example:
    python scripts/run_replication.py --families random_forest,adaboost --n-subjects 1000
"""
import argparse
import time

from dentalfusion.data import Task
from dentalfusion.evaluation import cross_validate_many, stratified_kfold
from dentalfusion.fusion import FUSION_RULES
from dentalfusion.learn import DISPLAY_NAMES, TrainConfig
from dentalfusion.pipeline import ENSEMBLE_NAME, per_tooth_outputs
from dentalfusion.synth import GeneratorConfig, generate_cohort


def run(task: Task, args) -> None:
    ds = generate_cohort(GeneratorConfig(n_subjects=args.n_subjects, seed=args.generator_seed)).to_dataset(task)
    X, y, c = ds.X, ds.y, task.n_classes
    folds = stratified_kfold(y, args.folds, seed=args.seed)
    configs = {k: TrainConfig.default(k, seed=args.seed, n_jobs=args.threads) for k in args.families}
    start = time.perf_counter()
    reports = cross_validate_many(
        y, folds, lambda tr, te: per_tooth_outputs(X[tr], y[tr], X[te], configs, c, args.rule)[0], c)
    print(f"\n== {task.value}: {len(ds)} subjects, {args.folds}-fold CV, {time.perf_counter() - start:.1f} s")
    print(f"{'model':<22}{'view':<18}{'F1':>8}{'sd':>7}{'AUC':>8}{'sd':>7}")
    views = [f"tooth{n}" for n in (5, 6, 7)] + [f"combiner:{r}" for r in FUSION_RULES]
    for kind in args.families:
        for view in views:
            rep = reports[f"{view}|{kind}"]
            print(f"{DISPLAY_NAMES[kind]:<22}{view:<18}{100 * rep.f1_mean:8.2f}{100 * rep.f1_sd:7.2f}"
                  f"{100 * rep.auc_mean:8.2f}{100 * rep.auc_sd:7.2f}")
    rep = reports[f"ensemble|{ENSEMBLE_NAME}"]
    print(f"{ENSEMBLE_NAME:<40}{100 * rep.f1_mean:8.2f}{100 * rep.f1_sd:7.2f}"
          f"{100 * rep.auc_mean:8.2f}{100 * rep.auc_sd:7.2f}")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--task", choices=["age", "gender", "both"], default="both")
    p.add_argument("--families", default="random_forest", help="comma-separated model kinds")
    p.add_argument("--rule", default="majority", choices=FUSION_RULES, help="rule fed to the cross-family vote")
    p.add_argument("--n-subjects", type=int, default=1000)
    p.add_argument("--generator-seed", type=int, default=GeneratorConfig().seed)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()
    args.families = args.families.split(",")
    tasks = [Task.GENDER, Task.AGE] if args.task == "both" else [Task(args.task)]
    for task in tasks:
        run(task, args)


if __name__ == "__main__":
    main()
