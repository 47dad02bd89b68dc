"""Survival analysis toolkit for tabular cohorts.

Censored-survival primitives (Kaplan-Meier curves, concordance index,
censoring weights), a Newton-Raphson proportional-hazards fitter, forward
feature selection with a rank-correlation redundancy filter, a small
dense network trainable either as a hazard scorer or as a
median-survival classifier, and a repeated stratified-split evaluation
harness with a synthetic-cohort generator.
"""

from .core import (
    CensoringWeights,
    Cohort,
    CurvePoint,
    Subject,
    SurvivalCurve,
    censoring_weights,
    concordance_index,
    kaplan_meier,
    median_class_labels,
    median_survival,
)
from .cox import (
    BaselineHazard,
    CoxModel,
    FitConfig,
    breslow_baseline,
    fit,
    hazard_score,
    hazard_scores,
    neg_partial_log_likelihood,
    npll_gradient,
    npll_hessian,
)
from .errors import (
    ConvergenceError,
    DataValidationError,
    DegenerateDesignError,
    SurvkitError,
    UndefinedCIndexError,
    UndefinedCorrelationError,
)
from .harness import (
    ExperimentReport,
    PipelineSpec,
    SplitPlan,
    SyntheticSpec,
    aggregate,
    generate_synthetic,
    run_experiment,
    run_pipeline,
    stratified_split,
)
from .net import (
    DenseNet,
    FeatureBundle,
    TrainConfig,
    bundle_features,
    cox_batch_loss,
    extract_features,
    forward,
    load_checkpoint,
    save_checkpoint,
    train,
    weighted_bce,
)
from .selection import (
    SelectionConfig,
    SelectionResult,
    forward_select,
    spearman_rho,
    standardize,
    univariate_cindex,
)

__version__ = "0.1.0"
