"""Cox proportional-hazards model fitted by Newton-Raphson.

The negative partial log-likelihood, its analytic gradient and Hessian,
a step-halving Newton fit, relative-hazard scoring, and the Breslow
cumulative baseline-hazard estimate. Ties share the full risk set
(Breslow convention) and the risk-set sum is evaluated in log-sum-exp
form, so large linear predictors cannot overflow.

The score-level helpers (:func:`partial_likelihood_loss`,
:func:`partial_likelihood_score_grad`) operate on arbitrary per-subject
risk scores; the network training code reuses them with batch-local risk
sets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import Cohort
from .errors import DataValidationError, DegenerateDesignError

__all__ = [
    "FitConfig",
    "CoxModel",
    "BaselineHazard",
    "partial_likelihood_loss",
    "partial_likelihood_score_grad",
    "neg_partial_log_likelihood",
    "npll_gradient",
    "npll_hessian",
    "fit",
    "hazard_score",
    "hazard_scores",
    "breslow_baseline",
]


@dataclass(frozen=True)
class FitConfig:
    """Newton-Raphson settings.

    ``ridge`` is a tiny L2 stabilizer on the objective; set it to 0 for
    exact maximum-likelihood comparisons. ``beta_norm_limit`` flags
    monotone-likelihood divergence (separable designs have no finite
    optimum) instead of iterating forever.
    """

    max_iterations: int = 100
    tolerance: float = 1e-8
    ridge: float = 1e-9
    step_halving_max: int = 30
    beta_norm_limit: float = 50.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DataValidationError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise DataValidationError("tolerance must be > 0")
        if self.ridge < 0:
            raise DataValidationError("ridge must be >= 0")
        if self.step_halving_max < 0:
            raise DataValidationError("step_halving_max must be >= 0")
        if not self.beta_norm_limit > 0:
            raise DataValidationError("beta_norm_limit must be > 0")


@dataclass(frozen=True)
class BaselineHazard:
    """Breslow cumulative baseline hazard: a nondecreasing step function."""

    times: np.ndarray
    cumulative: np.ndarray

    def cumulative_at(self, t: float) -> float:
        """Cumulative baseline hazard at time t (0 before the first event)."""
        i = int(np.searchsorted(self.times, t, side="right"))
        return 0.0 if i == 0 else float(self.cumulative[i - 1])


@dataclass(frozen=True)
class CoxModel:
    """Fitted coefficients plus fit diagnostics."""

    beta: np.ndarray
    feature_names: tuple[str, ...]
    converged: bool
    iterations: int
    final_nll: float
    baseline: Optional[BaselineHazard] = None

    def with_baseline(self, baseline: BaselineHazard) -> "CoxModel":
        return replace(self, baseline=baseline)


def _ascending_groups(times: np.ndarray):
    """Sort order plus contiguous [lo, hi) bounds of equal-time groups."""
    order = np.argsort(times, kind="stable")
    ts = times[order]
    starts = np.flatnonzero(np.concatenate(([True], ts[1:] != ts[:-1])))
    bounds = np.append(starts, len(ts))
    return order, bounds


def partial_likelihood_loss(scores: np.ndarray, times: np.ndarray, events: np.ndarray) -> float:
    """Negative partial log-likelihood of per-subject risk scores.

    Sum over subjects with an event of ``log(sum_{T_j >= T_i} exp(s_j)) - s_i``,
    the risk set taken over all rows passed in (censored included).
    """
    scores = np.asarray(scores, dtype=float)
    n = len(scores)
    if not np.any(events == 1):
        return 0.0
    order, bounds = _ascending_groups(np.asarray(times, dtype=float))
    sc = scores[order]
    es = np.asarray(events)[order]
    shift = float(sc.max())
    w = np.exp(sc - shift)
    loss = 0.0
    s0 = 0.0
    for g in range(len(bounds) - 2, -1, -1):
        lo, hi = bounds[g], bounds[g + 1]
        s0 += float(w[lo:hi].sum())
        ev = es[lo:hi] == 1
        d = int(ev.sum())
        if d:
            loss += d * (np.log(s0) + shift) - float(sc[lo:hi][ev].sum())
    return float(loss)


def partial_likelihood_score_grad(
    scores: np.ndarray, times: np.ndarray, events: np.ndarray
) -> np.ndarray:
    """Gradient of :func:`partial_likelihood_loss` with respect to the scores."""
    scores = np.asarray(scores, dtype=float)
    events = np.asarray(events)
    n = len(scores)
    if not np.any(events == 1):
        return np.zeros(n)
    order, bounds = _ascending_groups(np.asarray(times, dtype=float))
    sc = scores[order]
    es = events[order]
    w = np.exp(sc - float(sc.max()))
    n_groups = len(bounds) - 1
    ratio = np.zeros(n_groups)  # d_t / S0(t) per equal-time group
    s0 = 0.0
    for g in range(n_groups - 1, -1, -1):
        lo, hi = bounds[g], bounds[g + 1]
        s0 += float(w[lo:hi].sum())
        d = int(np.sum(es[lo:hi] == 1))
        if d:
            ratio[g] = d / s0
    cum = np.cumsum(ratio)  # sum of d_t/S0(t) over event times t <= T_k
    grad_sorted = -(es == 1).astype(float)
    for g in range(n_groups):
        lo, hi = bounds[g], bounds[g + 1]
        grad_sorted[lo:hi] += w[lo:hi] * cum[g]
    grad = np.empty(n)
    grad[order] = grad_sorted
    return grad


def _check_beta(beta: np.ndarray, cohort: Cohort) -> np.ndarray:
    b = np.asarray(beta, dtype=float).ravel()
    if b.shape != (cohort.n_features,):
        raise DataValidationError(
            f"beta has dimension {b.shape[0]}, cohort has {cohort.n_features} features"
        )
    return b


def neg_partial_log_likelihood(beta: np.ndarray, cohort: Cohort) -> float:
    """Negative partial log-likelihood of coefficients on a cohort."""
    b = _check_beta(beta, cohort)
    return partial_likelihood_loss(cohort.features @ b, cohort.times, cohort.events)


def npll_gradient(beta: np.ndarray, cohort: Cohort) -> np.ndarray:
    """Analytic gradient of the negative partial log-likelihood."""
    b = _check_beta(beta, cohort)
    g = partial_likelihood_score_grad(cohort.features @ b, cohort.times, cohort.events)
    return cohort.features.T @ g


def npll_hessian(beta: np.ndarray, cohort: Cohort) -> np.ndarray:
    """Analytic Hessian of the negative partial log-likelihood.

    Symmetric positive semidefinite up to rounding; O(n p^2) via one
    descending-time sweep over risk sets.
    """
    b = _check_beta(beta, cohort)
    X = cohort.features
    p = X.shape[1]
    if not np.any(cohort.events == 1) or p == 0:
        return np.zeros((p, p))
    order, bounds = _ascending_groups(cohort.times)
    eta = X @ b
    sc = eta[order]
    es = cohort.events[order]
    Xs = X[order]
    w = np.exp(sc - float(sc.max()))
    s0 = 0.0
    s1 = np.zeros(p)
    s2 = np.zeros((p, p))
    H = np.zeros((p, p))
    for g in range(len(bounds) - 2, -1, -1):
        lo, hi = bounds[g], bounds[g + 1]
        wg = w[lo:hi]
        Xg = Xs[lo:hi]
        s0 += float(wg.sum())
        s1 += wg @ Xg
        s2 += Xg.T @ (wg[:, None] * Xg)
        d = int(np.sum(es[lo:hi] == 1))
        if d:
            m = s1 / s0
            H += d * (s2 / s0 - np.outer(m, m))
    return H


def _uncensored_risk_rows(cohort: Cohort) -> np.ndarray:
    """Rows belonging to at least one risk set: time >= earliest event time."""
    event_times = cohort.times[cohort.events == 1]
    return cohort.times >= event_times.min()


def fit(cohort: Cohort, config: FitConfig = FitConfig()) -> CoxModel:
    """Maximize the partial likelihood by step-halving Newton-Raphson.

    Deterministic: starts at beta = 0, stops when the max-norm of the
    accepted update falls below ``config.tolerance``. Non-convergence and
    likelihood divergence are reported on the returned model via
    ``converged=False``, not raised.
    """
    if cohort.n_events == 0:
        raise DegenerateDesignError("cannot fit: cohort has no uncensored subject")
    p = cohort.n_features
    if p == 0:
        return CoxModel(
            beta=np.zeros(0),
            feature_names=(),
            converged=True,
            iterations=0,
            final_nll=neg_partial_log_likelihood(np.zeros(0), cohort),
        )
    risk_rows = _uncensored_risk_rows(cohort)
    Xr = cohort.features[risk_rows]
    flat = np.flatnonzero(Xr.max(axis=0) == Xr.min(axis=0))
    if flat.size:
        names = ", ".join(cohort.feature_names[j] for j in flat)
        raise DegenerateDesignError(f"zero-variance feature(s) in risk sets: {names}")

    ridge = config.ridge
    eye = np.eye(p)

    def objective(b: np.ndarray) -> float:
        val = neg_partial_log_likelihood(b, cohort)
        return val + 0.5 * ridge * float(b @ b)

    beta = np.zeros(p)
    f = objective(beta)
    converged = False
    iterations = 0
    for it in range(1, config.max_iterations + 1):
        iterations = it
        grad = npll_gradient(beta, cohort) + ridge * beta
        hess = npll_hessian(beta, cohort) + ridge * eye
        try:
            delta = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            delta = np.linalg.pinv(hess) @ -grad
        if not np.all(np.isfinite(delta)):
            break
        alpha = 1.0
        accepted = False
        for _ in range(config.step_halving_max + 1):
            cand = beta + alpha * delta
            fc = objective(cand)
            if fc <= f + 1e-12 * max(1.0, abs(f)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        step_norm = float(np.max(np.abs(cand - beta)))
        beta, f = cand, fc
        if float(np.linalg.norm(beta)) > config.beta_norm_limit:
            # monotone likelihood: no finite optimum
            break
        if step_norm < config.tolerance:
            converged = True
            break
    return CoxModel(
        beta=beta,
        feature_names=cohort.feature_names,
        converged=converged,
        iterations=iterations,
        final_nll=neg_partial_log_likelihood(beta, cohort),
    )


def hazard_score(model: CoxModel, features: np.ndarray) -> float:
    """Log relative hazard of one feature vector: beta . x."""
    x = np.asarray(features, dtype=float).ravel()
    if x.shape != model.beta.shape:
        raise DataValidationError(
            f"feature vector has dimension {x.shape[0]}, model has {model.beta.shape[0]}"
        )
    return float(model.beta @ x)


def hazard_scores(model: CoxModel, cohort: Cohort) -> np.ndarray:
    """Log relative hazards for every subject of a cohort."""
    if cohort.n_features != model.beta.shape[0]:
        raise DataValidationError(
            f"cohort has {cohort.n_features} features, model has {model.beta.shape[0]}"
        )
    return cohort.features @ model.beta


def breslow_baseline(model: CoxModel, cohort: Cohort) -> BaselineHazard:
    """Breslow estimate of the cumulative baseline hazard.

    At each distinct event time the hazard increments by d_t divided by
    the risk-set sum of exp(score); with all-zero coefficients this is
    the familiar d_t / n_at_risk.
    """
    if not np.all(np.isfinite(model.beta)):
        raise DataValidationError("model coefficients are not finite; fit the model first")
    eta = hazard_scores(model, cohort)
    if cohort.n_events == 0:
        return BaselineHazard(times=np.zeros(0), cumulative=np.zeros(0))
    order, bounds = _ascending_groups(cohort.times)
    sc = eta[order]
    es = cohort.events[order]
    ts = cohort.times[order]
    shift = float(sc.max())
    w = np.exp(sc - shift)
    n_groups = len(bounds) - 1
    s0 = 0.0
    inc = np.zeros(n_groups)
    for g in range(n_groups - 1, -1, -1):
        lo, hi = bounds[g], bounds[g + 1]
        s0 += float(w[lo:hi].sum())
        d = int(np.sum(es[lo:hi] == 1))
        if d:
            inc[g] = d / (s0 * np.exp(shift))
    keep = inc > 0
    group_times = ts[bounds[:-1]]
    return BaselineHazard(
        times=group_times[keep],
        cumulative=np.cumsum(inc[keep]),
    )
