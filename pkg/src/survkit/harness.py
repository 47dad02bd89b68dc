"""Repeated stratified-split evaluation harness.

Implements the evaluation protocol: many stratified random splits into
train/validation/test, end-to-end pipelines that each produce a test
c-index, and mean +/- sample-std aggregation. Also provides a synthetic
cohort generator with exponential event and censoring times so that
ground-truth hazard scores exist.

Determinism: every random decision is seeded by a documented derivation
from (master_seed, repeat_index, stage), so results do not depend on
execution order and whole experiments are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import cox, net
from .core import Cohort, concordance_index, kaplan_meier, median_survival
from .errors import DataValidationError, UndefinedCIndexError
from .selection import SelectionConfig, forward_select, standardize

__all__ = [
    "SplitPlan",
    "SyntheticSpec",
    "PipelineSpec",
    "SplitOutcome",
    "ExperimentReport",
    "SummaryRow",
    "SummaryTable",
    "PIPELINE_KINDS",
    "derive_seed",
    "stratified_split",
    "generate_synthetic",
    "run_pipeline",
    "run_experiment",
    "aggregate",
    "format_mean_std",
    "report_json_lines",
]

REPORT_FORMAT_VERSION = 1

# Stage codes for per-split seed derivation.
STAGE_SPLIT = 0
STAGE_NET_INIT = 1
STAGE_TRAIN = 2

_PARTITION_NAMES = ("train", "validation", "test")

PIPELINE_KINDS = (
    "cox_provided_features",
    "direct_hazard_net",
    "cox_on_net_features",
    "cox_on_multimodal_features",
    "median_classifier_then_cox",
)


def derive_seed(master_seed: int, repeat_index: int, stage: int) -> int:
    """Per-split seed: first word of SeedSequence(master_seed,
    spawn_key=(repeat_index, stage)). Independent of scheduling order."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(repeat_index, stage))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class SplitPlan:
    """How to cut the cohort, and how often."""

    n_repeats: int = 100
    fractions: tuple[float, float, float] = (0.60, 0.15, 0.25)
    master_seed: int = 0

    def __post_init__(self):
        if self.n_repeats < 1:
            raise DataValidationError("n_repeats must be >= 1")
        f = self.fractions
        if len(f) != 3 or any(x < 0 for x in f) or abs(sum(f) - 1.0) > 1e-9:
            raise DataValidationError("fractions must be three nonnegative numbers summing to 1")


def _largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Integer partition sizes: floors plus remainder-ordered top-up."""
    exact = [total * f for f in fractions]
    base = [int(np.floor(x)) for x in exact]
    deficit = total - sum(base)
    order = sorted(range(len(fractions)), key=lambda k: (-(exact[k] - base[k]), k))
    for k in order[:deficit]:
        base[k] += 1
    return base


def stratified_split(
    cohort: Cohort, plan: SplitPlan, repeat_index: int
) -> tuple[Optional[Cohort], Optional[Cohort], Optional[Cohort]]:
    """One deterministic stratified split.

    Within each event stratum, subjects are shuffled by the derived seed
    and partitioned by largest-remainder rounding, so each partition's
    event proportion is within one subject of the achievable ideal.
    Partitions with fraction 0 come back as None; each partition keeps
    the cohort's original row order.
    """
    if not 0 <= repeat_index < plan.n_repeats:
        raise DataValidationError(
            f"repeat_index {repeat_index} outside plan range [0, {plan.n_repeats})"
        )
    rng = np.random.default_rng(derive_seed(plan.master_seed, repeat_index, STAGE_SPLIT))
    parts: list[list[int]] = [[], [], []]
    for stratum in (0, 1):
        idx = np.flatnonzero(cohort.events == stratum)
        if idx.size == 0:
            continue
        counts = _largest_remainder(idx.size, plan.fractions)
        for k, f in enumerate(plan.fractions):
            if f > 0 and counts[k] == 0:
                raise DataValidationError(
                    f"stratum event={stratum} has only {idx.size} subjects: "
                    f"cannot populate the {_PARTITION_NAMES[k]} partition"
                )
        shuffled = idx[rng.permutation(idx.size)]
        lo = 0
        for k, c in enumerate(counts):
            parts[k].extend(shuffled[lo : lo + c].tolist())
            lo += c
    return tuple(
        cohort.subset(sorted(p)) if p else None for p in parts
    )  # type: ignore[return-value]


@dataclass(frozen=True)
class SyntheticSpec:
    """Exponential-hazard cohort with known signal coefficients.

    Event times follow rate = baseline_rate * exp(beta_true . signal
    features); censoring is independent exponential. ``noise_features``
    extra standard-normal columns carry no signal.
    """

    n: int
    beta_true: tuple[float, ...]
    baseline_rate: float = 0.1
    censoring_rate: float = 0.04
    noise_features: int = 0
    seed: int = 0
    p: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        derived = len(self.beta_true) + self.noise_features
        if self.p is None:
            object.__setattr__(self, "p", derived)
        elif self.p != derived:
            raise DataValidationError(
                f"p={self.p} but |beta_true| + noise_features = {derived}"
            )
        if self.n < 1:
            raise DataValidationError("n must be >= 1")
        if self.noise_features < 0:
            raise DataValidationError("noise_features must be >= 0")
        if not (self.baseline_rate > 0 and self.censoring_rate > 0):
            raise DataValidationError("baseline_rate and censoring_rate must be > 0")


def generate_synthetic(spec: SyntheticSpec) -> Cohort:
    """Seeded cohort draw; feature columns are standard normal."""
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.p))
    beta = np.asarray(spec.beta_true)
    eta = X[:, : len(beta)] @ beta if len(beta) else np.zeros(spec.n)
    event_time = -np.log1p(-rng.random(spec.n)) / (spec.baseline_rate * np.exp(eta))
    censor_time = -np.log1p(-rng.random(spec.n)) / spec.censoring_rate
    times = np.minimum(event_time, censor_time)
    events = (event_time <= censor_time).astype(int)
    names = [f"signal_{i}" for i in range(len(beta))] + [
        f"noise_{j}" for j in range(spec.noise_features)
    ]
    ids = [f"subj_{i:05d}" for i in range(spec.n)]
    return Cohort.from_arrays(ids, times, events, X, names)


def true_hazard_scores(spec: SyntheticSpec, cohort: Cohort) -> np.ndarray:
    """Ground-truth linear hazard scores for a synthetic cohort."""
    beta = np.asarray(spec.beta_true)
    return cohort.features[:, : len(beta)] @ beta


@dataclass(frozen=True)
class PipelineSpec:
    """One end-to-end pipeline: which route, plus its sub-configurations.

    ``head`` picks the training objective of the feature-learning network
    for the net-feature routes; the median-classifier route always uses
    the classification head. ``net_seed`` initializes the network and is
    normally overridden per split by the harness.
    """

    kind: str
    selection: SelectionConfig = SelectionConfig()
    fit: cox.FitConfig = cox.FitConfig()
    train: net.TrainConfig = net.TrainConfig()
    head: str = "hazard_linear"
    hidden: tuple[int, ...] = (32, 16)
    net_seed: int = 0

    def __post_init__(self):
        if self.kind not in PIPELINE_KINDS:
            raise DataValidationError(
                f"unknown pipeline kind {self.kind!r}; expected one of {PIPELINE_KINDS}"
            )
        if self.head not in net.HEADS:
            raise DataValidationError(f"unknown net head {self.head!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SplitOutcome:
    """Result of one pipeline on one split."""

    kind: str
    cindex: Optional[float]
    skipped: bool
    selected_features: tuple[str, ...]
    cox_converged: Optional[bool]
    note: str = ""


def _select_and_fit(train_c, test_c, selection_cfg, fit_cfg):
    """Standardize on train, select forward, fit the hazard model, score test."""
    std = standardize(train_c, [test_c])
    sel = forward_select(std.train, selection_cfg)
    names = sel.selected_names(std.train)
    if not sel.selected:
        return np.zeros(len(test_c)), names, None
    cols = list(sel.selected)
    tr = std.train.replace_features(std.train.features[:, cols], names)
    te = std.others[0].replace_features(std.others[0].features[:, cols], names)
    model = cox.fit(tr, fit_cfg)
    return cox.hazard_scores(model, te), names, model.converged


def _train_median(train_c: Cohort) -> Optional[float]:
    return median_survival(kaplan_meier(train_c))


def _trained_net(head, std_train, std_val, spec, median_time, cache):
    key = (head, spec.net_seed, spec.train, spec.hidden, median_time)
    if cache is not None and key in cache:
        return cache[key]
    train_cfg = spec.train
    if head == "hazard_linear" and train_cfg.validation_metric != "cindex":
        # hazard mode is early-stopped on c-index by design
        train_cfg = replace(train_cfg, validation_metric="cindex")
    initial = net.DenseNet.build(std_train.n_features, spec.hidden, head, spec.net_seed)
    best, _ = net.train(initial, std_train, std_val, train_cfg, median_time=median_time)
    if cache is not None:
        cache[key] = best
    return best


def run_pipeline(
    spec: PipelineSpec,
    train_c: Cohort,
    val_c: Optional[Cohort],
    test_c: Cohort,
    cache: Optional[dict] = None,
) -> SplitOutcome:
    """Execute one pipeline end to end and score the test partition.

    Every fitting and selection decision sees the train partition only
    (plus validation for early stopping); a test set with no comparable
    pair is reported as skipped rather than imputed. ``cache`` lets one
    split share identically-configured trained networks across pipelines.
    """

    def done(scores, selected, converged, note=""):
        try:
            c = concordance_index(scores, test_c)
        except UndefinedCIndexError:
            return SplitOutcome(spec.kind, None, True, selected, converged, "undefined-cindex")
        return SplitOutcome(spec.kind, float(c), False, selected, converged, note)

    kind = spec.kind
    if kind == "cox_provided_features":
        scores, selected, converged = _select_and_fit(train_c, test_c, spec.selection, spec.fit)
        return done(scores, selected, converged)

    if val_c is None:
        raise DataValidationError(f"pipeline {kind} needs a validation partition")

    std = standardize(train_c, [val_c, test_c])
    std_val, std_test = std.others

    if kind == "direct_hazard_net":
        model = _trained_net("hazard_linear", std.train, std_val, spec, None, cache)
        scores, _ = net.forward_batch(model, std_test.features)
        return done(scores, (), None)

    head = "class_logit" if kind == "median_classifier_then_cox" else spec.head
    median_time = None
    if head == "class_logit":
        median_time = _train_median(train_c)
        if median_time is None:
            return SplitOutcome(spec.kind, None, True, (), None, "median-not-reached")
    model = _trained_net(head, std.train, std_val, spec, median_time, cache)
    learned_names = net.extracted_feature_names(model)
    acts_train = net.extract_features(model, std.train)
    acts_test = net.extract_features(model, std_test)

    if kind == "cox_on_net_features":
        feat_train, feat_test, names = acts_train, acts_test, learned_names
    else:  # multimodal: provided features alongside learned ones
        feat_train = np.hstack([train_c.features, acts_train])
        feat_test = np.hstack([test_c.features, acts_test])
        names = train_c.feature_names + learned_names

    derived_train = train_c.replace_features(feat_train, names)
    derived_test = test_c.replace_features(feat_test, names)
    scores, selected, converged = _select_and_fit(
        derived_train, derived_test, spec.selection, spec.fit
    )
    return done(scores, selected, converged)


@dataclass(frozen=True)
class ExperimentReport:
    """Per-split c-indices of one pipeline over all repeats.

    ``per_split_cindex`` has one entry per repeat, NaN where the split
    was skipped; mean and std (sample, n-1) are over the finite entries
    and always recomputable from the stored vector.
    """

    kind: str
    spec_digest: str
    per_split_cindex: np.ndarray
    mean: float
    std: float
    n_skipped: int
    seeds: tuple[int, ...]
    outcomes: tuple[SplitOutcome, ...]


def _mean_std(values: np.ndarray) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    mean = float(np.mean(finite)) if finite.size else float("nan")
    std = float(np.std(finite, ddof=1)) if finite.size >= 2 else float("nan")
    return mean, std


def run_experiment(
    cohort: Cohort,
    plan: SplitPlan,
    specs: Sequence[PipelineSpec],
    workers: int = 1,
) -> tuple[ExperimentReport, ...]:
    """Run every pipeline on every repeat of the split plan.

    Splits are independent jobs; ``workers`` > 1 runs them concurrently.
    Results are canonicalized by repeat index, so concurrency never
    changes the output.
    """
    if not specs:
        raise DataValidationError("at least one pipeline spec is required")

    def run_repeat(r: int):
        seed = derive_seed(plan.master_seed, r, STAGE_SPLIT)
        tr, va, te = stratified_split(cohort, plan, r)
        if tr is None or te is None:
            raise DataValidationError("experiment plan must give train and test subjects")
        cache: dict = {}
        outcomes = []
        for spec in specs:
            spec_r = replace(
                spec,
                net_seed=derive_seed(plan.master_seed, r, STAGE_NET_INIT),
                train=replace(spec.train, rng_seed=derive_seed(plan.master_seed, r, STAGE_TRAIN)),
            )
            outcomes.append(run_pipeline(spec_r, tr, va, te, cache=cache))
        return seed, outcomes

    repeats = range(plan.n_repeats)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_repeat, repeats))
    else:
        results = [run_repeat(r) for r in repeats]

    reports = []
    for k, spec in enumerate(specs):
        values = np.full(plan.n_repeats, np.nan)
        outs = []
        for r, (_, outcomes) in enumerate(results):
            if not outcomes[k].skipped:
                values[r] = outcomes[k].cindex
            outs.append(outcomes[k])
        mean, std = _mean_std(values)
        values.flags.writeable = False
        reports.append(
            ExperimentReport(
                kind=spec.kind,
                spec_digest=spec.digest(),
                per_split_cindex=values,
                mean=mean,
                std=std,
                n_skipped=int(np.sum(~np.isfinite(values))),
                seeds=tuple(seed for seed, _ in results),
                outcomes=tuple(outs),
            )
        )
    return tuple(reports)


def format_mean_std(mean: float, std: float) -> str:
    """Render like the published tables: three decimals either side."""
    if not np.isfinite(mean):
        return "n/a"
    if not np.isfinite(std):
        return f"{mean:.3f} ± n/a"
    return f"{mean:.3f} ± {std:.3f}"


@dataclass(frozen=True)
class SummaryRow:
    kind: str
    mean: float
    std: float
    n_splits: int
    n_skipped: int
    formatted: str


@dataclass(frozen=True)
class SummaryTable:
    rows: tuple[SummaryRow, ...]

    def render_text(self) -> str:
        width = max([len("pipeline"), *(len(r.kind) for r in self.rows)])
        lines = [f"{'pipeline':<{width}}  {'c-index':<15}  splits  skipped"]
        for r in self.rows:
            lines.append(
                f"{r.kind:<{width}}  {r.formatted:<15}  {r.n_splits:>6}  {r.n_skipped:>7}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "rows": [
                {
                    "pipeline": r.kind,
                    "mean": r.mean,
                    "std": r.std,
                    "n_splits": r.n_splits,
                    "n_skipped": r.n_skipped,
                    "formatted": r.formatted,
                }
                for r in self.rows
            ],
        }


def aggregate(reports: Sequence[ExperimentReport]) -> SummaryTable:
    """Mean +/- sample std per pipeline, recomputed from the stored vectors."""
    if not reports:
        raise DataValidationError("nothing to aggregate")
    rows = []
    for rep in reports:
        mean, std = _mean_std(rep.per_split_cindex)
        rows.append(
            SummaryRow(
                kind=rep.kind,
                mean=mean,
                std=std,
                n_splits=int(np.sum(np.isfinite(rep.per_split_cindex))),
                n_skipped=rep.n_skipped,
                formatted=format_mean_std(mean, std),
            )
        )
    return SummaryTable(rows=tuple(rows))


def report_json_lines(reports: Sequence[ExperimentReport]) -> list[str]:
    """One JSON record per (repeat, pipeline), canonical order and bytes."""
    lines = []
    n_repeats = len(reports[0].seeds) if reports else 0
    for r in range(n_repeats):
        for rep in reports:
            o = rep.outcomes[r]
            lines.append(
                json.dumps(
                    {
                        "format_version": REPORT_FORMAT_VERSION,
                        "repeat_index": r,
                        "seed": rep.seeds[r],
                        "pipeline": rep.kind,
                        "spec_digest": rep.spec_digest,
                        "cindex": o.cindex,
                        "skipped": o.skipped,
                        "selected_features": list(o.selected_features),
                        "cox_converged": o.cox_converged,
                        "note": o.note,
                    },
                    sort_keys=True,
                )
            )
    return lines
