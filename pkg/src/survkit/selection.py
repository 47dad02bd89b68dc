"""Forward feature selection by univariate concordance.

Features are ranked by their direction-agnostic univariate c-index and
accepted greedily unless their Spearman rank correlation with an already
accepted feature exceeds a threshold. Also provides train-statistics
feature standardization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Cohort, concordance_index
from .errors import DataValidationError, UndefinedCorrelationError

__all__ = [
    "SelectionConfig",
    "SelectionResult",
    "Standardization",
    "standardize",
    "spearman_rho",
    "univariate_cindex",
    "oriented_univariate_cindex",
    "forward_select",
]

# Columns whose spread is below this (relative to their magnitude) carry
# no usable variation; they standardize to 0 and cannot be ranked.
_CONSTANT_RTOL = 1e-12


@dataclass(frozen=True)
class SelectionConfig:
    correlation_threshold: float = 0.8
    max_features: int = 10
    min_univariate_cindex: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.correlation_threshold <= 1.0:
            raise DataValidationError("correlation_threshold must be in (0, 1]")
        if self.max_features < 1:
            raise DataValidationError("max_features must be >= 1")


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of one forward-selection run.

    ``selected`` lists feature indices in acceptance order.
    ``univariate_cindex`` and ``directions`` cover every feature column;
    a direction of -1 means the negated column was the better hazard
    score. ``rejected_for_correlation`` holds (candidate, conflicting
    selected feature, rho) triples; ``constant_features`` were never
    candidates.
    """

    selected: tuple[int, ...]
    univariate_cindex: np.ndarray
    directions: np.ndarray
    rejected_for_correlation: tuple[tuple[int, int, float], ...]
    constant_features: tuple[int, ...]

    def selected_names(self, cohort: Cohort) -> tuple[str, ...]:
        return tuple(cohort.feature_names[j] for j in self.selected)


@dataclass(frozen=True)
class Standardization:
    """Cohorts rescaled by train-set statistics, plus those statistics."""

    train: Cohort
    others: tuple[Cohort, ...]
    mean: np.ndarray
    std: np.ndarray
    constant_features: tuple[int, ...]


def _constant_columns(X: np.ndarray) -> np.ndarray:
    mean = X.mean(axis=0) if len(X) else np.zeros(X.shape[1])
    spread = X.max(axis=0) - X.min(axis=0) if len(X) else np.zeros(X.shape[1])
    return spread <= _CONSTANT_RTOL * np.maximum(1.0, np.abs(mean))


def standardize(train: Cohort, others: Sequence[Cohort] = ()) -> Standardization:
    """Center and scale every feature by its train-set mean and std.

    The identical affine transform is applied to the other cohorts.
    Constant train columns are mapped to 0 everywhere and reported.
    """
    X = train.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = _constant_columns(X)
    safe_std = np.where(constant, 1.0, np.where(std == 0, 1.0, std))

    def transform(c: Cohort) -> Cohort:
        Z = (c.features - mean) / safe_std
        Z[:, constant] = 0.0
        return c.replace_features(Z, c.feature_names)

    for other in others:
        if other.n_features != train.n_features:
            raise DataValidationError("all cohorts must share the feature dimension")
    return Standardization(
        train=transform(train),
        others=tuple(transform(c) for c in others),
        mean=mean,
        std=std,
        constant_features=tuple(int(j) for j in np.flatnonzero(constant)),
    )


def _midranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by the average rank of the tie group."""
    _, inverse, counts = np.unique(v, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return starts[inverse] + (counts[inverse] + 1) / 2.0


def spearman_rho(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation: Pearson correlation of mid-ranks."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape or len(a) < 2:
        raise DataValidationError("inputs must be equal-length vectors of length >= 2")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelationError("rank correlation of a constant vector is undefined")
    ra = _midranks(a)
    rb = _midranks(b)
    rho = float(np.corrcoef(ra, rb)[0, 1])
    return float(np.clip(rho, -1.0, 1.0))


def oriented_univariate_cindex(column: np.ndarray, cohort: Cohort) -> tuple[float, int]:
    """Direction-agnostic discriminative power of one feature column.

    Returns (max of C(column) and C(-column), chosen sign). The sign is
    +1 when the raw column already points in the hazard direction.
    """
    column = np.asarray(column, dtype=float).ravel()
    if column.shape != (len(cohort),):
        raise DataValidationError("column length must match cohort size")
    c = concordance_index(column, cohort)
    # tied scores contribute 0.5 to both directions, so C(-col) = 1 - C(col)
    return (c, 1) if c >= 1.0 - c else (1.0 - c, -1)


def univariate_cindex(column: np.ndarray, cohort: Cohort) -> float:
    """Max of the c-index of a column and of its negation; always >= 0.5."""
    return oriented_univariate_cindex(column, cohort)[0]


def forward_select(cohort: Cohort, config: SelectionConfig = SelectionConfig()) -> SelectionResult:
    """Greedy selection by descending univariate c-index.

    Candidates tie-break toward the lower feature index. A candidate is
    rejected when the absolute Spearman correlation with any already
    selected feature exceeds the threshold. Stops at ``max_features``,
    at candidate exhaustion, or when the remaining candidates fall below
    ``min_univariate_cindex``. Deterministic.
    """
    p = cohort.n_features
    if p == 0:
        raise DataValidationError("forward selection needs at least one feature")
    X = cohort.features
    constant = _constant_columns(X)
    cvals = np.empty(p)
    signs = np.empty(p, dtype=int)
    for j in range(p):
        cvals[j], signs[j] = oriented_univariate_cindex(X[:, j], cohort)
    candidates = sorted(
        (j for j in range(p) if not constant[j]),
        key=lambda j: (-cvals[j], j),
    )
    selected: list[int] = []
    rejected: list[tuple[int, int, float]] = []
    for j in candidates:
        if len(selected) == config.max_features:
            break
        if cvals[j] < config.min_univariate_cindex:
            break  # descending order: every later candidate is weaker
        conflict = None
        for k in selected:
            rho = spearman_rho(X[:, j], X[:, k])
            if abs(rho) > config.correlation_threshold:
                conflict = (j, k, rho)
                break
        if conflict is None:
            selected.append(j)
        else:
            rejected.append(conflict)
    return SelectionResult(
        selected=tuple(selected),
        univariate_cindex=cvals,
        directions=signs,
        rejected_for_correlation=tuple(rejected),
        constant_features=tuple(int(j) for j in np.flatnonzero(constant)),
    )
