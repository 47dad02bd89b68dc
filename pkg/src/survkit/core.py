"""Core censored-survival primitives.

Cohort representation, the Kaplan-Meier product-limit curve, median
survival, Harrell's concordance index, censoring weights and median-class
labels for censoring-aware classification.

All functions here are pure: they never mutate their inputs and are safe
to call from concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataValidationError, UndefinedCIndexError

__all__ = [
    "Subject",
    "Cohort",
    "CurvePoint",
    "SurvivalCurve",
    "CensoringWeights",
    "kaplan_meier",
    "median_survival",
    "concordance_index",
    "censoring_weights",
    "median_class_labels",
]


@dataclass(frozen=True)
class Subject:
    """One observation: identifier, follow-up time, event flag, features.

    ``event`` is 1 when the event was observed and 0 when the subject was
    right-censored at ``time``.
    """

    id: str
    time: float
    event: int
    features: np.ndarray


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


class Cohort:
    """Immutable, ordered table of subjects with a shared feature dimension.

    Construct either from ``Subject`` records or from parallel arrays via
    :meth:`from_arrays`. Arrays exposed on the instance (``times``,
    ``events``, ``features``) are read-only views.
    """

    __slots__ = ("ids", "times", "events", "features", "feature_names")

    def __init__(self, subjects: Sequence[Subject], feature_names: Sequence[str]):
        if len(subjects) == 0:
            raise DataValidationError("cohort must contain at least one subject")
        ids = [s.id for s in subjects]
        times = np.asarray([s.time for s in subjects], dtype=float)
        events = np.asarray([s.event for s in subjects])
        feats = np.asarray([np.asarray(s.features, dtype=float).ravel() for s in subjects], dtype=float)
        self._init_from(ids, times, events, feats, feature_names)

    @classmethod
    def from_arrays(
        cls,
        ids: Sequence[str],
        times: np.ndarray,
        events: np.ndarray,
        features: np.ndarray,
        feature_names: Sequence[str],
    ) -> "Cohort":
        obj = object.__new__(cls)
        obj._init_from(
            list(ids),
            np.asarray(times, dtype=float),
            np.asarray(events),
            np.asarray(features, dtype=float),
            feature_names,
        )
        return obj

    def _init_from(self, ids, times, events, features, feature_names) -> None:
        n = len(ids)
        if n == 0:
            raise DataValidationError("cohort must contain at least one subject")
        if len(set(ids)) != n:
            raise DataValidationError("subject ids must be unique")
        if times.shape != (n,) or not np.all(np.isfinite(times)) or np.any(times < 0):
            raise DataValidationError("times must be finite and nonnegative, one per subject")
        if events.shape != (n,) or not np.all(np.isin(events, (0, 1))):
            raise DataValidationError("event indicators must be 0 or 1, one per subject")
        if features.ndim != 2 or features.shape[0] != n:
            raise DataValidationError("features must be a (n_subjects, n_features) matrix")
        if not np.all(np.isfinite(features)):
            raise DataValidationError("feature values must be finite")
        names = tuple(str(f) for f in feature_names)
        if len(names) != features.shape[1]:
            raise DataValidationError(
                f"{len(names)} feature names for {features.shape[1]} feature columns"
            )
        object.__setattr__(self, "ids", tuple(str(i) for i in ids))
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "events", _readonly(events.astype(np.int8)))
        object.__setattr__(self, "features", _readonly(features))
        object.__setattr__(self, "feature_names", names)

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("Cohort is immutable")

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cohort):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.feature_names == other.feature_names
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
            and np.array_equal(self.features, other.features)
        )

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_events(self) -> int:
        return int(np.sum(self.events))

    def subject(self, i: int) -> Subject:
        return Subject(
            id=self.ids[i],
            time=float(self.times[i]),
            event=int(self.events[i]),
            features=self.features[i],
        )

    @property
    def subjects(self) -> tuple[Subject, ...]:
        return tuple(self.subject(i) for i in range(len(self)))

    def subset(self, indices: Iterable[int]) -> "Cohort":
        """New cohort containing the given rows, in the given order."""
        idx = np.asarray(list(indices), dtype=int)
        if idx.size == 0:
            raise DataValidationError("cannot build an empty cohort subset")
        return Cohort.from_arrays(
            [self.ids[i] for i in idx],
            self.times[idx],
            self.events[idx],
            self.features[idx],
            self.feature_names,
        )

    def replace_features(self, features: np.ndarray, feature_names: Sequence[str]) -> "Cohort":
        """Same subjects and outcomes, different feature matrix."""
        return Cohort.from_arrays(self.ids, self.times, self.events, features, feature_names)

    def __repr__(self) -> str:
        return (
            f"Cohort(n={len(self)}, events={self.n_events}, "
            f"features={self.n_features})"
        )


@dataclass(frozen=True)
class CurvePoint:
    """One drop of the survival step function, at a distinct event time."""

    time: float
    survival: float
    at_risk: int
    events: int


@dataclass(frozen=True)
class SurvivalCurve:
    """Kaplan-Meier step function: one point per distinct event time."""

    points: tuple[CurvePoint, ...]

    @property
    def times(self) -> np.ndarray:
        return np.asarray([p.time for p in self.points])

    @property
    def survival(self) -> np.ndarray:
        return np.asarray([p.survival for p in self.points])

    def survival_at(self, t: float) -> float:
        """S(t): probability of surviving past time t."""
        s = 1.0
        for p in self.points:
            if p.time <= t:
                s = p.survival
            else:
                break
        return s


@dataclass(frozen=True)
class CensoringWeights:
    """Per-subject 0/1 loss weights around a median survival time.

    A weight is 0 exactly when the subject was censored before
    ``median_time``; such subjects carry no class information.
    """

    weights: np.ndarray
    median_time: float


def kaplan_meier(cohort: Cohort) -> SurvivalCurve:
    """Product-limit estimate of the survival function.

    Censored subjects shrink later risk sets but contribute no drop of
    their own, so the curve has exactly one point per distinct event time.
    """
    times = cohort.times
    events = cohort.events
    event_times = np.unique(times[events == 1])
    points = []
    s = 1.0
    for t in event_times:
        at_risk = int(np.count_nonzero(times >= t))
        d = int(np.count_nonzero((times == t) & (events == 1)))
        s *= 1.0 - d / at_risk
        points.append(CurvePoint(time=float(t), survival=s, at_risk=at_risk, events=d))
    return SurvivalCurve(points=tuple(points))


def median_survival(curve: SurvivalCurve) -> Optional[float]:
    """Smallest event time t with S(t) <= 0.5, or None if never reached."""
    for p in curve.points:
        if p.survival <= 0.5:
            return p.time
    return None


def concordance_index(scores: np.ndarray, cohort: Cohort) -> float:
    """Harrell's c-index of hazard scores against observed outcomes.

    A pair (i, j) with time_i < time_j is comparable iff subject i had an
    event; tied event times are never comparable. A comparable pair is
    concordant when the shorter-surviving subject got the strictly higher
    score; tied scores contribute 0.5.

    Raises UndefinedCIndexError when no pair is comparable.
    """
    s = np.asarray(scores, dtype=float)
    if s.shape != (len(cohort),):
        raise DataValidationError(
            f"expected {len(cohort)} scores, got shape {s.shape}"
        )
    if not np.all(np.isfinite(s)):
        raise DataValidationError("scores must be finite")
    t = cohort.times
    e = cohort.events
    # comparable[i, j]: i failed strictly before j's observed time
    comparable = (t[:, None] < t[None, :]) & (e[:, None] == 1)
    n_comparable = int(comparable.sum())
    if n_comparable == 0:
        raise UndefinedCIndexError("no comparable pair: c-index undefined")
    concordant = int((comparable & (s[:, None] > s[None, :])).sum())
    tied = int((comparable & (s[:, None] == s[None, :])).sum())
    return (concordant + 0.5 * tied) / n_comparable


def _check_median_time(median_time: float) -> float:
    m = float(median_time)
    if not np.isfinite(m) or m <= 0:
        raise DataValidationError("median_time must be a positive finite number")
    return m


def censoring_weights(cohort: Cohort, median_time: float) -> CensoringWeights:
    """0/1 loss weights: 1 when followed at least to the median or the
    event was observed, 0 for subjects censored before the median."""
    m = _check_median_time(median_time)
    w = np.where(m <= cohort.times, 1.0, cohort.events.astype(float))
    return CensoringWeights(weights=_readonly(w), median_time=m)


def median_class_labels(cohort: Cohort, median_time: float) -> np.ndarray:
    """1 for subjects observed strictly longer than the median, else 0.

    Pair these labels with :func:`censoring_weights`: label 0 for a
    subject censored before the median is meaningless on its own, but the
    matching weight is 0 there.
    """
    m = _check_median_time(median_time)
    return _readonly((cohort.times > m).astype(np.int8))
