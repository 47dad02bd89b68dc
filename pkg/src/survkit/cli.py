"""Command-line surface tying the modules into runnable workflows.

Exit codes: 0 success, 1 usage error, 2 data validation error,
3 numerical failure (including non-convergence under --strict).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cox, harness, net
from .core import Cohort, concordance_index, kaplan_meier, median_survival
from .errors import (
    ConvergenceError,
    DataValidationError,
    DegenerateDesignError,
    SurvkitError,
    UndefinedCIndexError,
    UndefinedCorrelationError,
)
from .io import (
    cohort_from_survival,
    load_cohort,
    parse_experiment_config,
    read_feature_table,
    read_survival_table,
    serialize_experiment_config,
    write_cohort,
)
from .selection import SelectionConfig, forward_select, standardize

_NUMERICAL_ERRORS = (
    DegenerateDesignError,
    UndefinedCIndexError,
    UndefinedCorrelationError,
    ConvergenceError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=None, help="directory for output files")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--workers", type=int, default=None, help="concurrent split workers")
    p.add_argument("--strict", action="store_true", help="treat non-convergence as failure")


def _out_dir(args) -> Path:
    d = Path(args.out_dir if args.out_dir else ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _cmd_km(args) -> int:
    table = read_survival_table(args.survival)
    cohort = cohort_from_survival(table)
    curve = kaplan_meier(cohort)
    print("time\tat_risk\tevents\tsurvival")
    for p in curve.points:
        print(f"{p.time:g}\t{p.at_risk}\t{p.events}\t{p.survival:.6f}")
    med = median_survival(curve)
    print(f"median: {med:g}" if med is not None else "median: not reached")
    if args.out_dir:
        path = _out_dir(args) / "km_curve.csv"
        with open(path, "w") as f:
            f.write("time,at_risk,events,survival\n")
            for p in curve.points:
                f.write(f"{p.time!r},{p.at_risk},{p.events},{p.survival!r}\n")
        print(f"wrote {path}")
    return 0


def _cmd_cindex(args) -> int:
    surv = read_survival_table(args.survival)
    scores_table = read_feature_table(args.scores)
    if args.score_column not in scores_table.feature_names:
        raise DataValidationError(
            f"{args.scores}: no column named {args.score_column!r}"
        )
    col = scores_table.feature_names.index(args.score_column)
    s_index = {sid: i for i, sid in enumerate(surv.ids)}
    common = sorted(set(surv.ids) & set(scores_table.ids))
    if not common:
        raise DataValidationError("no overlapping subject ids between the two files")
    sc_index = {sid: i for i, sid in enumerate(scores_table.ids)}
    rows_s = [s_index[sid] for sid in common]
    cohort = Cohort.from_arrays(
        common,
        surv.times[rows_s],
        surv.events[rows_s],
        np.zeros((len(common), 0)),
        (),
    )
    scores = scores_table.values[[sc_index[sid] for sid in common], col]
    value = concordance_index(scores, cohort)
    print(f"c-index: {value:.6f}  (n={len(common)})")
    return 0


def _report_unmatched(loaded) -> None:
    if loaded.features_only:
        print(
            f"note: {len(loaded.features_only)} id(s) only in features file: "
            + ", ".join(loaded.features_only[:5])
            + ("..." if len(loaded.features_only) > 5 else ""),
            file=sys.stderr,
        )
    if loaded.survival_only:
        print(
            f"note: {len(loaded.survival_only)} id(s) only in survival file: "
            + ", ".join(loaded.survival_only[:5])
            + ("..." if len(loaded.survival_only) > 5 else ""),
            file=sys.stderr,
        )


def _cmd_cox_fit(args) -> int:
    loaded = load_cohort(args.features, args.survival)
    _report_unmatched(loaded)
    train_c = loaded.cohort
    test_c = None
    if args.test_features or args.test_survival:
        if not (args.test_features and args.test_survival):
            raise _UsageError("provide both --test-features and --test-survival")
        test_c = load_cohort(args.test_features, args.test_survival).cohort
    std = standardize(train_c, [test_c] if test_c is not None else ())
    model = cox.fit(std.train, cox.FitConfig())
    print("coefficients (standardized features):")
    for name, b in zip(model.feature_names, model.beta):
        print(f"  {name}: {b:+.6f}")
    print(f"converged: {model.converged}  iterations: {model.iterations}")
    print(f"final negative partial log-likelihood: {model.final_nll:.6f}")
    train_ci = concordance_index(cox.hazard_scores(model, std.train), train_c)
    print(f"train c-index: {train_ci:.6f}")
    if test_c is not None:
        test_ci = concordance_index(cox.hazard_scores(model, std.others[0]), test_c)
        print(f"test c-index: {test_ci:.6f}")
    if args.strict and not model.converged:
        raise ConvergenceError("fit did not converge (strict mode)")
    return 0


def _cmd_select(args) -> int:
    loaded = load_cohort(args.features, args.survival)
    _report_unmatched(loaded)
    std = standardize(loaded.cohort)
    config = SelectionConfig(
        correlation_threshold=args.threshold,
        max_features=args.max_features,
        min_univariate_cindex=args.min_cindex,
    )
    result = forward_select(std.train, config)
    names = std.train.feature_names
    print("selected (acceptance order):")
    for rank, j in enumerate(result.selected, start=1):
        sign = "+" if result.directions[j] > 0 else "-"
        print(
            f"  {rank}. {names[j]}  univariate c-index {result.univariate_cindex[j]:.4f} "
            f"(direction {sign})"
        )
    if result.rejected_for_correlation:
        print("rejected for correlation:")
        for j, k, rho in result.rejected_for_correlation:
            print(f"  {names[j]} vs {names[k]}  rho {rho:+.4f}")
    if result.constant_features:
        print("constant features (ignored): " + ", ".join(names[j] for j in result.constant_features))
    return 0


def _cmd_train(args) -> int:
    loaded = load_cohort(args.features, args.survival)
    _report_unmatched(loaded)
    cohort = loaded.cohort
    seed = args.seed if args.seed is not None else 0
    v = args.val_fraction
    if not 0.0 < v < 1.0:
        raise _UsageError("--val-fraction must be in (0, 1)")
    plan = harness.SplitPlan(n_repeats=1, fractions=(1.0 - v, v, 0.0), master_seed=seed)
    train_c, val_c, _ = harness.stratified_split(cohort, plan, 0)
    std = standardize(train_c, [val_c])
    median_time = None
    head = "hazard_linear" if args.mode == "hazard" else "class_logit"
    if head == "class_logit":
        median_time = median_survival(kaplan_meier(train_c))
        if median_time is None:
            raise DegenerateDesignError(
                "training-set survival never reaches 0.5: no median class boundary"
            )
    config = net.TrainConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        early_stopping_patience=args.patience,
        validation_metric=args.metric,
        weight_decay=args.weight_decay,
        rng_seed=harness.derive_seed(seed, 0, harness.STAGE_TRAIN),
    )
    hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip())
    model = net.DenseNet.build(
        std.train.n_features, hidden, head, harness.derive_seed(seed, 0, harness.STAGE_NET_INIT)
    )
    best, history = net.train(model, std.train, std.others[0], config, median_time=median_time)
    net.save_checkpoint(best, args.checkpoint, config)
    print(
        f"trained {args.mode} net: best epoch {history.best_epoch} "
        f"({config.validation_metric} {history.best_val_metric:.6f}), "
        f"{len(history.records)} epochs run"
    )
    print(f"wrote checkpoint {args.checkpoint}")
    return 0


def _cmd_synth(args) -> int:
    beta = tuple(float(b) for b in args.signal_beta.split(",") if b.strip())
    spec = harness.SyntheticSpec(
        n=args.n,
        beta_true=beta,
        baseline_rate=args.baseline_rate,
        censoring_rate=args.censoring_rate,
        noise_features=args.noise_features,
        seed=args.seed if args.seed is not None else 0,
    )
    cohort = harness.generate_synthetic(spec)
    out = _out_dir(args)
    features_path = out / "features.csv"
    survival_path = out / "survival.csv"
    write_cohort(cohort, features_path, survival_path)
    frac = cohort.n_events / len(cohort)
    print(f"wrote {features_path} and {survival_path}")
    print(f"n={len(cohort)} features={cohort.n_features} event fraction {frac:.3f}")
    return 0


def _cmd_experiment(args) -> int:
    config_text = Path(args.config).read_text()
    cfg = parse_experiment_config(config_text)
    if args.seed is not None:
        cfg = replace(cfg, split=replace(cfg.split, master_seed=args.seed))
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.features or args.survival:
        if not (args.features and args.survival):
            raise _UsageError("provide both --features and --survival")
        loaded = load_cohort(args.features, args.survival)
        _report_unmatched(loaded)
        cohort = loaded.cohort
    elif cfg.synthetic is not None:
        cohort = harness.generate_synthetic(cfg.synthetic)
    else:
        raise _UsageError(
            "no cohort: pass --features/--survival or add a [synthetic] config section"
        )
    reports = harness.run_experiment(cohort, cfg.split, cfg.pipeline_specs(), workers=cfg.workers)
    summary = harness.aggregate(reports)
    out = _out_dir(args)
    (out / "report.jsonl").write_text("\n".join(harness.report_json_lines(reports)) + "\n")
    (out / "summary.txt").write_text(summary.render_text())
    (out / "summary.json").write_text(
        json.dumps(summary.to_json_dict(), sort_keys=True, indent=2) + "\n"
    )
    (out / "config_used.ini").write_text(serialize_experiment_config(cfg))
    print(summary.render_text(), end="")
    print(f"wrote report.jsonl, summary.txt, summary.json, config_used.ini in {out}")
    if args.strict:
        bad = sum(
            1 for rep in reports for o in rep.outcomes if o.cox_converged is False
        )
        if bad:
            raise ConvergenceError(f"{bad} pipeline fit(s) did not converge (strict mode)")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="survkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("km", help="Kaplan-Meier curve and median survival")
    p.add_argument("--survival", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_km)

    p = sub.add_parser("cindex", help="c-index of a score column against survival data")
    p.add_argument("--survival", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--score-column", default="score")
    _add_common(p)
    p.set_defaults(func=_cmd_cindex)

    p = sub.add_parser("cox-fit", help="fit a proportional-hazards model")
    p.add_argument("--features", required=True)
    p.add_argument("--survival", required=True)
    p.add_argument("--test-features")
    p.add_argument("--test-survival")
    _add_common(p)
    p.set_defaults(func=_cmd_cox_fit)

    p = sub.add_parser("select", help="forward feature selection report")
    p.add_argument("--features", required=True)
    p.add_argument("--survival", required=True)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--max-features", type=int, default=10)
    p.add_argument("--min-cindex", type=float, default=0.5)
    _add_common(p)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("train", help="train a dense net in hazard or classification mode")
    p.add_argument("--features", required=True)
    p.add_argument("--survival", required=True)
    p.add_argument("--mode", choices=("hazard", "classification"), required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--hidden", default="32,16")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--metric", choices=("cindex", "weighted_bce"), default="cindex")
    p.add_argument("--weight-decay", type=float, default=0.0)
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("synth", help="write a synthetic cohort pair")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--signal-beta", required=True, help="comma-separated coefficients")
    p.add_argument("--noise-features", type=int, default=0)
    p.add_argument("--baseline-rate", type=float, default=0.1)
    p.add_argument("--censoring-rate", type=float, default=0.04)
    _add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("experiment", help="full multi-pipeline evaluation run")
    p.add_argument("--config", required=True)
    p.add_argument("--features")
    p.add_argument("--survival")
    _add_common(p)
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        code = exc.code
        return int(code) if code is not None else 0
    except DataValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SurvkitError as exc:  # pragma: no cover - catch-all
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
