"""Small dense feed-forward network with two survival training modes.

The same architecture trains either as a direct hazard scorer under the
partial-likelihood loss (risk sets formed within each minibatch, which is
exactly why that mode cannot run at batch size one) or as a median-survival
classifier under censoring-weighted binary cross-entropy, which tolerates
any batch size. Hidden activations can be extracted as learned features
for a downstream linear hazard model.

Pure numpy; training is plain minibatch gradient descent with seeded
shuffling, optional weight decay and best-validation-snapshot early
stopping, so runs are bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import cox
from .core import Cohort, censoring_weights, concordance_index, median_class_labels
from .errors import DataValidationError

__all__ = [
    "Layer",
    "DenseNet",
    "TrainConfig",
    "TrainHistory",
    "EpochRecord",
    "CoxBatchLoss",
    "FeatureBundle",
    "forward",
    "forward_batch",
    "weighted_bce",
    "cox_batch_loss",
    "classification_batch_loss",
    "train",
    "extract_features",
    "extracted_feature_names",
    "bundle_features",
    "save_checkpoint",
    "load_checkpoint",
    "config_digest",
]

HEADS = ("hazard_linear", "class_logit")
_ACTIVATIONS = ("relu", "linear")


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str

    def copy(self) -> "Layer":
        return Layer(self.W.copy(), self.b.copy(), self.activation)


@dataclass
class DenseNet:
    """Stack of dense layers; the last layer is the single-output head."""

    layers: list[Layer]
    head: str
    rng_seed: int

    @classmethod
    def build(
        cls,
        n_inputs: int,
        hidden: Sequence[int] = (32, 16),
        head: str = "hazard_linear",
        rng_seed: int = 0,
    ) -> "DenseNet":
        """Fan-in-scaled uniform initialization, fully seeded."""
        if n_inputs < 1:
            raise DataValidationError("network needs at least one input feature")
        if head not in HEADS:
            raise DataValidationError(f"unknown head {head!r}; expected one of {HEADS}")
        if any(h < 1 for h in hidden):
            raise DataValidationError("hidden widths must be >= 1")
        rng = np.random.default_rng(rng_seed)
        dims = [int(n_inputs), *[int(h) for h in hidden], 1]
        layers = []
        for i in range(len(dims) - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            bound = 1.0 / np.sqrt(fan_in)
            W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            act = "relu" if i < len(dims) - 2 else "linear"
            layers.append(Layer(W, b, act))
        return cls(layers=layers, head=head, rng_seed=int(rng_seed))

    @property
    def n_inputs(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(l.W.shape[0] for l in self.layers[:-1])

    def copy(self) -> "DenseNet":
        return DenseNet([l.copy() for l in self.layers], self.head, self.rng_seed)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    learning_rate: float = 0.01
    early_stopping_patience: int = 10
    validation_metric: str = "cindex"  # or "weighted_bce"
    weight_decay: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise DataValidationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise DataValidationError("epochs must be >= 1")
        # learning_rate 0 is allowed: it freezes the parameters, which the
        # reproducibility checks rely on.
        if self.learning_rate < 0:
            raise DataValidationError("learning_rate must be >= 0")
        if self.validation_metric not in ("cindex", "weighted_bce"):
            raise DataValidationError("validation_metric must be 'cindex' or 'weighted_bce'")
        if self.weight_decay < 0:
            raise DataValidationError("weight_decay must be >= 0")


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_metric: float
    improved: bool


@dataclass(frozen=True)
class TrainHistory:
    records: tuple[EpochRecord, ...]
    best_epoch: int
    best_val_metric: float


class CoxBatchLoss(NamedTuple):
    value: float
    degenerate: bool  # no uncensored subject in the batch


@dataclass(frozen=True)
class FeatureBundle:
    """Provided features side by side with learned activations."""

    provided: np.ndarray
    learned: np.ndarray
    concatenated: np.ndarray


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cache(net: DenseNet, X: np.ndarray):
    """Outputs plus per-layer pre- and post-activations (posts[0] is X)."""
    a = X
    pres = []
    posts = [X]
    for layer in net.layers:
        z = a @ layer.W.T + layer.b
        pres.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        posts.append(a)
    return a[:, 0], pres, posts


def forward_batch(net: DenseNet, X: np.ndarray):
    """Deterministic forward pass over rows of X.

    Returns (outputs, hidden activations), the latter one (n, width)
    matrix per hidden layer.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.n_inputs:
        raise DataValidationError(
            f"expected input of shape (n, {net.n_inputs}), got {X.shape}"
        )
    out, _, posts = _forward_cache(net, X)
    return out, posts[1:-1]


def forward(net: DenseNet, x: np.ndarray):
    """Single-vector forward pass: (output, list of hidden activation vectors)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (net.n_inputs,):
        raise DataValidationError(
            f"expected input of dimension {net.n_inputs}, got {x.shape}"
        )
    out, hidden = forward_batch(net, x[None, :])
    return float(out[0]), [h[0] for h in hidden]


def weighted_bce(logit: float, label: int, weight: float) -> float:
    """weight * binary cross-entropy of a pre-sigmoid logit, stable form."""
    if weight < 0:
        raise DataValidationError("weight must be >= 0")
    z = float(logit)
    y = float(label)
    bce = max(z, 0.0) - z * y + np.log1p(np.exp(-abs(z)))
    return float(weight) * float(bce)


def _bce_vector(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = logits
    return np.maximum(z, 0.0) - z * labels + np.log1p(np.exp(-np.abs(z)))


def classification_batch_loss(
    net: DenseNet, batch: Cohort, labels: np.ndarray, weights: np.ndarray
) -> CoxBatchLoss:
    """Weight-normalized mean BCE of the batch: sum(w * bce) / sum(w).

    Normalizing by the weight mass (not the row count) makes zero-weight
    subjects exactly invisible: deleting them changes nothing.
    """
    if net.head != "class_logit":
        raise DataValidationError("classification loss requires a class_logit head")
    out, _ = forward_batch(net, batch.features)
    w = np.asarray(weights, dtype=float)
    sw = float(w.sum())
    if sw == 0.0:
        return CoxBatchLoss(0.0, True)
    loss = float((w * _bce_vector(out, np.asarray(labels, dtype=float))).sum() / sw)
    return CoxBatchLoss(loss, False)


def cox_batch_loss(net: DenseNet, batch: Cohort) -> CoxBatchLoss:
    """Partial-likelihood loss of network outputs, risk sets within the batch.

    With no uncensored subject in the batch the loss is defined as 0 and
    flagged degenerate; in particular a single-subject batch never yields
    a usable gradient.
    """
    if net.head != "hazard_linear":
        raise DataValidationError("hazard loss requires a hazard_linear head")
    out, _ = forward_batch(net, batch.features)
    degenerate = batch.n_events == 0
    return CoxBatchLoss(
        cox.partial_likelihood_loss(out, batch.times, batch.events), degenerate
    )


def _loss_and_grads(
    net: DenseNet,
    X: np.ndarray,
    *,
    times: Optional[np.ndarray] = None,
    events: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
    weights: Optional[np.ndarray] = None,
):
    """Batch loss plus exact parameter gradients for the net's own mode."""
    out, pres, posts = _forward_cache(net, X)
    if net.head == "hazard_linear":
        loss = cox.partial_likelihood_loss(out, times, events)
        dout = cox.partial_likelihood_score_grad(out, times, events)
    else:
        w = np.asarray(weights, dtype=float)
        sw = float(w.sum())
        if sw == 0.0:
            zero = [(np.zeros_like(l.W), np.zeros_like(l.b)) for l in net.layers]
            return 0.0, zero
        y = np.asarray(labels, dtype=float)
        loss = float((w * _bce_vector(out, y)).sum() / sw)
        dout = w * (_sigmoid(out) - y) / sw
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    delta = dout[:, None]  # dL/d(activation of current layer)
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        if layer.activation == "relu":
            delta = delta * (pres[li] > 0)
        grads.append((delta.T @ posts[li], delta.sum(axis=0)))
        if li > 0:
            delta = delta @ layer.W
    grads.reverse()
    return float(loss), grads


def _validation_score(net, val, config, labels=None, weights=None) -> float:
    """Higher-is-better validation score for early stopping."""
    out, _ = forward_batch(net, val.features)
    if config.validation_metric == "cindex":
        # class-logit outputs point toward longer survival, so negate
        scores = out if net.head == "hazard_linear" else -out
        return concordance_index(scores, val)
    w = np.asarray(weights, dtype=float)
    sw = float(w.sum())
    if sw == 0.0:
        raise DataValidationError(
            "validation set has no weighted subject; weighted_bce metric undefined"
        )
    return -float((w * _bce_vector(out, np.asarray(labels, dtype=float))).sum() / sw)


def train(
    net: DenseNet,
    cohort_train: Cohort,
    cohort_val: Cohort,
    config: TrainConfig,
    median_time: Optional[float] = None,
) -> tuple[DenseNet, TrainHistory]:
    """Minibatch gradient descent with best-validation early stopping.

    Hazard mode scores survival ordering directly and therefore needs
    batches of at least two subjects; classification mode needs the
    ``median_time`` that defines labels and censoring weights, and runs
    at any batch size. The returned network is the snapshot with the best
    validation metric, never the last epoch. Fully reproducible given
    (rng_seed, config, data).
    """
    for c in (cohort_train, cohort_val):
        if c.n_features != net.n_inputs:
            raise DataValidationError(
                f"cohort has {c.n_features} features, network expects {net.n_inputs}"
            )
    hazard = net.head == "hazard_linear"
    if hazard:
        if config.batch_size < 2:
            raise DataValidationError(
                "hazard-mode training rejects batch_size=1: a one-subject risk "
                "set makes the ordering loss identically zero, so no parameter "
                "gradient can be computed; use the classification mode instead"
            )
        if config.validation_metric == "weighted_bce":
            raise DataValidationError("weighted_bce metric needs classification labels")
        tr_labels = tr_weights = va_labels = va_weights = None
    else:
        if median_time is None:
            raise DataValidationError("classification training requires median_time")
        tr_labels = median_class_labels(cohort_train, median_time)
        tr_weights = censoring_weights(cohort_train, median_time).weights
        va_labels = median_class_labels(cohort_val, median_time)
        va_weights = censoring_weights(cohort_val, median_time).weights

    work = net.copy()
    rng = np.random.default_rng(config.rng_seed)
    n = len(cohort_train)
    X = cohort_train.features
    times, events = cohort_train.times, cohort_train.events
    lr, wd = config.learning_rate, config.weight_decay

    best = work.copy()
    best_score = -np.inf
    best_epoch = 0
    best_metric = np.nan
    records: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            if hazard:
                loss, grads = _loss_and_grads(
                    work, X[idx], times=times[idx], events=events[idx]
                )
            else:
                loss, grads = _loss_and_grads(
                    work, X[idx], labels=tr_labels[idx], weights=tr_weights[idx]
                )
            batch_losses.append(loss)
            for layer, (dW, db) in zip(work.layers, grads):
                if wd:
                    dW = dW + wd * layer.W
                layer.W -= lr * dW
                layer.b -= lr * db
        score = _validation_score(
            work, cohort_val, config, labels=va_labels, weights=va_weights
        )
        # the score is higher-is-better internally; report bce positive
        display = score if config.validation_metric == "cindex" else -score
        improved = score > best_score
        if improved:
            best = work.copy()
            best_score = score
            best_epoch = epoch
            best_metric = display
        records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(batch_losses)),
                val_metric=display,
                improved=improved,
            )
        )
        if (
            config.early_stopping_patience > 0
            and epoch - best_epoch >= config.early_stopping_patience
        ):
            break
    return best, TrainHistory(
        records=tuple(records), best_epoch=best_epoch, best_val_metric=float(best_metric)
    )


def extract_features(net: DenseNet, cohort: Cohort, layers: Optional[Sequence[int]] = None) -> np.ndarray:
    """Per-subject hidden activations, one row per subject.

    ``layers`` selects hidden layers by index (default: all of them); the
    selected activation matrices are concatenated column-wise, ready to
    merge with provided features for selection and a linear hazard fit.
    """
    _, hidden = forward_batch(net, cohort.features)
    sel = _resolve_layer_selector(net, layers)
    return np.hstack([hidden[i] for i in sel])


def _resolve_layer_selector(net: DenseNet, layers: Optional[Sequence[int]]) -> list[int]:
    n_hidden = len(net.layers) - 1
    if layers is None:
        sel = list(range(n_hidden))
    else:
        sel = [int(i) for i in layers]
        if len(sel) == 0 or any(i < 0 or i >= n_hidden for i in sel):
            raise DataValidationError(
                f"layer selector must pick from {n_hidden} hidden layers, got {layers!r}"
            )
    if n_hidden == 0:
        raise DataValidationError("network has no hidden layer to extract from")
    return sel


def extracted_feature_names(net: DenseNet, layers: Optional[Sequence[int]] = None) -> tuple[str, ...]:
    """Column names matching :func:`extract_features`."""
    sel = _resolve_layer_selector(net, layers)
    names = []
    for i in sel:
        for u in range(net.layers[i].W.shape[0]):
            names.append(f"h{i}_{u:02d}")
    return tuple(names)


def bundle_features(provided: np.ndarray, learned: np.ndarray) -> FeatureBundle:
    """Concatenate provided and learned feature matrices row-aligned."""
    provided = np.asarray(provided, dtype=float)
    learned = np.asarray(learned, dtype=float)
    if provided.ndim != 2 or learned.ndim != 2 or provided.shape[0] != learned.shape[0]:
        raise DataValidationError("provided and learned matrices must share their row count")
    return FeatureBundle(
        provided=provided,
        learned=learned,
        concatenated=np.hstack([provided, learned]),
    )


CHECKPOINT_VERSION = 1


def config_digest(config) -> str:
    """Stable hash of a config dataclass, stored in checkpoints."""
    payload = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def save_checkpoint(net: DenseNet, path, config: Optional[TrainConfig] = None) -> None:
    """Write a versioned checkpoint: layer shapes, row-major weights, seed.

    Stored as a numpy archive with keys ``format_version``, ``head``,
    ``rng_seed``, ``config_hash``, ``n_layers`` and per-layer ``W{i}``,
    ``b{i}``, ``act{i}``.
    """
    arrays = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "head": np.array(net.head),
        "rng_seed": np.array(net.rng_seed),
        "config_hash": np.array(config_digest(config) if config is not None else ""),
        "n_layers": np.array(len(net.layers)),
    }
    for i, layer in enumerate(net.layers):
        arrays[f"W{i}"] = layer.W
        arrays[f"b{i}"] = layer.b
        arrays[f"act{i}"] = np.array(layer.activation)
    np.savez(path, **arrays)


def load_checkpoint(path) -> DenseNet:
    """Inverse of :func:`save_checkpoint`; bit-exact round trip."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise DataValidationError(
                f"unsupported checkpoint version {version}; expected {CHECKPOINT_VERSION}"
            )
        layers = []
        for i in range(int(data["n_layers"])):
            layers.append(
                Layer(
                    W=np.array(data[f"W{i}"]),
                    b=np.array(data[f"b{i}"]),
                    activation=str(data[f"act{i}"]),
                )
            )
        return DenseNet(layers=layers, head=str(data["head"]), rng_seed=int(data["rng_seed"]))
