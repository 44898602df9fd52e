"""From-scratch feedforward binary classifier.

Hidden layers run affine -> batch norm -> ReLU -> dropout (train mode
only); the final layer is affine -> sigmoid.  Two optimizers share one
backward pass: plain averaged-batch gradient descent (weights move by the
batch-mean gradient once per batch) and Adam.  Everything is numpy and
deterministic under a seed.

The default architecture is the thirteen-layer stack
5608..128 -> 1; tests and desk-scale runs shrink the widths through
``TrainConfig``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_WIDTHS = (5608, 5096, 4584, 4072, 3560, 3048, 2536, 2024, 1012, 512, 256, 128, 1)
BN_EPS = 1e-5
BCE_EPS = 1e-12
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2 fallback


class ShapeError(ValueError):
    """Raised when array shapes disagree with the model."""


class EmptyDatasetError(ValueError):
    """Raised when an operation needs at least one sample."""


@dataclass
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray


def fit_scaler(features: np.ndarray) -> ScalerParams:
    """Column standardization statistics; zero-variance columns get std 1."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise EmptyDatasetError("scaler needs a non-empty 2-D feature matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    return ScalerParams(mean=mean, std=std)


def transform(x: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - scaler.mean) / scaler.std


@dataclass
class ModelParams:
    input_dim: int
    widths: tuple[int, ...]
    weights: list[np.ndarray]          # weights[i]: (widths[i], fan_in)
    biases: list[np.ndarray]           # biases[i]: (widths[i],)
    batch_norm: bool
    dropout: float
    bn_gamma: list[np.ndarray] = field(default_factory=list)
    bn_beta: list[np.ndarray] = field(default_factory=list)
    bn_mean: list[np.ndarray] = field(default_factory=list)
    bn_var: list[np.ndarray] = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.widths)


@dataclass
class TrainConfig:
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    epochs: int = 12
    batch_size: int = 200
    learning_rate: float = 0.01
    optimizer: str = "adam"            # "adam" or "sgd" (averaged-batch descent)
    seed: int = 0
    batch_norm: bool = True
    dropout: float = 0.2
    shuffle: bool = True


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    fpr: float
    loss: float

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "fpr": self.fpr,
            "loss": self.loss,
        }


def init_params(
    input_dim: int,
    widths: Sequence[int],
    rng: np.random.Generator,
    batch_norm: bool = True,
    dropout: float = 0.2,
) -> ModelParams:
    """Uniform He-style init from the seeded generator; small random biases."""
    if not widths or widths[-1] != 1:
        raise ShapeError("widths must end at a single output neuron")
    weights, biases = [], []
    fan_in = input_dim
    for w in widths:
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(w, fan_in)))
        biases.append(rng.uniform(-0.01, 0.01, size=w))
        fan_in = w
    params = ModelParams(
        input_dim=input_dim,
        widths=tuple(int(w) for w in widths),
        weights=weights,
        biases=biases,
        batch_norm=batch_norm,
        dropout=float(dropout),
    )
    if batch_norm:
        for w in widths[:-1]:
            params.bn_gamma.append(np.ones(w))
            params.bn_beta.append(np.zeros(w))
            params.bn_mean.append(np.zeros(w))
            params.bn_var.append(np.ones(w))
    return params


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(
    x: np.ndarray,
    params: ModelParams,
    mode: str = "infer",
    rng: Optional[np.random.Generator] = None,
    update_bn_stats: bool = False,
) -> tuple[list[dict], np.ndarray]:
    """Run the network; returns (per-layer caches, predictions).

    ``x`` is one sample (input_dim,) or a batch (n, input_dim).  Train mode
    uses batch statistics for the norm layers and applies inverted dropout;
    infer mode uses running statistics and no dropout.
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != params.input_dim:
        raise ShapeError(f"input width {X.shape[1]} != model input {params.input_dim}")
    train = mode == "train"
    if train and params.dropout > 0 and rng is None:
        raise ValueError("train-mode forward with dropout needs a generator")

    caches: list[dict] = []
    act = X
    last = params.n_layers - 1
    for i in range(params.n_layers):
        cache: dict = {"a_prev": act}
        z = act @ params.weights[i].T + params.biases[i]
        cache["z"] = z
        if i == last:
            act = _sigmoid(z)
            cache["a"] = act
            caches.append(cache)
            break
        h = z
        if params.batch_norm:
            if train:
                mu = h.mean(axis=0)
                var = h.var(axis=0)
                if update_bn_stats:
                    params.bn_mean[i] = 0.9 * params.bn_mean[i] + 0.1 * mu
                    params.bn_var[i] = 0.9 * params.bn_var[i] + 0.1 * var
            else:
                mu, var = params.bn_mean[i], params.bn_var[i]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (h - mu) * inv
            cache["bn"] = (xhat, inv)
            h = params.bn_gamma[i] * xhat + params.bn_beta[i]
        relu_in = h
        cache["relu_in"] = relu_in
        h = np.maximum(relu_in, 0.0)
        if train and params.dropout > 0:
            keep = 1.0 - params.dropout
            mask = (rng.random(h.shape) < keep).astype(np.float64) / keep
            cache["drop_mask"] = mask
            h = h * mask
        cache["a"] = h
        caches.append(cache)
        act = h

    pred = caches[-1]["a"][:, 0]
    if single:
        return caches, pred[0]
    return caches, pred


def bce_loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with predictions clamped away from 0 and 1."""
    a = np.clip(np.asarray(predictions, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(labels, dtype=np.float64)
    if a.shape != y.shape:
        raise ShapeError("predictions and labels must align")
    return float(-np.mean(y * np.log(a) + (1.0 - y) * np.log(1.0 - a)))


def backward(
    params: ModelParams, caches: list[dict], labels: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Mean-over-batch gradients of the BCE loss.

    The output delta folds the loss derivative through the sigmoid, giving
    a - y per sample; hidden deltas propagate through transposed weights
    gated by positive pre-activations (and through whatever norm/dropout
    layers are enabled).
    """
    y = np.asarray(labels, dtype=np.float64)
    n = y.shape[0]
    last = params.n_layers - 1
    dW = [np.zeros_like(w) for w in params.weights]
    db = [np.zeros_like(b) for b in params.biases]
    dgamma = [np.zeros_like(g) for g in params.bn_gamma]
    dbeta = [np.zeros_like(b) for b in params.bn_beta]

    delta = (caches[last]["a"] - y[:, None]) / n  # (n, 1); mean gradient
    for i in range(last, -1, -1):
        cache = caches[i]
        dW[i] = delta.T @ cache["a_prev"]
        db[i] = delta.sum(axis=0)
        if i == 0:
            break
        d_prev = delta @ params.weights[i]
        j = i - 1
        prev_cache = caches[j]
        if "drop_mask" in prev_cache:
            d_prev = d_prev * prev_cache["drop_mask"]
        d_prev = d_prev * (prev_cache["relu_in"] > 0)
        if params.batch_norm:
            xhat, inv = prev_cache["bn"]
            dgamma[j] = (d_prev * xhat).sum(axis=0)
            dbeta[j] = d_prev.sum(axis=0)
            dxhat = d_prev * params.bn_gamma[j]
            m = d_prev.shape[0]
            d_prev = inv * (
                dxhat
                - dxhat.mean(axis=0)
                - xhat * (dxhat * xhat).mean(axis=0)
            ) if m > 1 else dxhat * inv
        delta = d_prev
    return dW, db, dgamma, dbeta


@dataclass
class _AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def train(
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    params: Optional[ModelParams] = None,
) -> ModelParams:
    """Mini-batch training per the configured optimizer; seeded, hence deterministic."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDatasetError("training needs a non-empty feature matrix")
    if y.shape != (X.shape[0],):
        raise ShapeError("labels must be one per row")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")

    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(
            X.shape[1], config.widths, rng,
            batch_norm=config.batch_norm, dropout=config.dropout,
        )
    elif params.input_dim != X.shape[1]:
        raise ShapeError("feature width does not match the model input")

    flat_params = params.weights + params.biases + params.bn_gamma + params.bn_beta
    adam = _AdamState(m=[np.zeros_like(p) for p in flat_params],
                      v=[np.zeros_like(p) for p in flat_params])

    n = X.shape[0]
    eta = config.learning_rate
    for _epoch in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            caches, _ = forward(X[idx], params, mode="train", rng=rng, update_bn_stats=True)
            dW, db, dgamma, dbeta = backward(params, caches, y[idx])
            grads = dW + db + dgamma + dbeta
            if config.optimizer == "sgd":
                for p, g in zip(flat_params, grads):
                    p -= eta * g
            elif config.optimizer == "adam":
                adam.t += 1
                for k, (p, g) in enumerate(zip(flat_params, grads)):
                    adam.m[k] = ADAM_BETA1 * adam.m[k] + (1 - ADAM_BETA1) * g
                    adam.v[k] = ADAM_BETA2 * adam.v[k] + (1 - ADAM_BETA2) * g * g
                    mhat = adam.m[k] / (1 - ADAM_BETA1 ** adam.t)
                    vhat = adam.v[k] / (1 - ADAM_BETA2 ** adam.t)
                    p -= eta * mhat / (np.sqrt(vhat) + ADAM_EPS)
            else:
                raise ValueError(f"unknown optimizer {config.optimizer!r}")
    return params


def predict(params: ModelParams, X: np.ndarray) -> np.ndarray:
    _, scores = forward(X, params, mode="infer")
    return np.atleast_1d(scores)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Trapezoidal area under the ROC curve, sweeping every score threshold.

    Equal scores collapse into one threshold step, which matches the
    pairwise concordance statistic with half-credit for ties.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    pos = float(np.sum(y == 1))
    neg = float(np.sum(y == 0))
    if pos == 0 or neg == 0:
        return 0.0
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tps = np.cumsum(y_sorted == 1)
    fps = np.cumsum(y_sorted == 0)
    distinct = np.nonzero(np.diff(s_sorted))[0]
    boundary = np.concatenate([distinct, [len(s_sorted) - 1]])
    tpr = np.concatenate([[0.0], tps[boundary] / pos])
    fpr = np.concatenate([[0.0], fps[boundary] / neg])
    return float(_trapezoid(tpr, fpr))


def evaluate(
    params: ModelParams,
    scaler: Optional[ScalerParams],
    features: np.ndarray,
    labels: np.ndarray,
    threshold: float = 0.5,
) -> Metrics:
    """Confusion-matrix metrics at the threshold plus AUC and loss.

    Zero-denominator metrics are defined as 0.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.shape[0] == 0:
        raise EmptyDatasetError("evaluation needs at least one sample")
    if scaler is not None:
        X = transform(X, scaler)
    scores = predict(params, X)
    return metrics_from_scores(scores, y, threshold)


def metrics_from_scores(scores: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> Metrics:
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pred = (scores >= threshold).astype(np.float64)
    tp = float(np.sum((pred == 1) & (y == 1)))
    tn = float(np.sum((pred == 0) & (y == 0)))
    fp = float(np.sum((pred == 1) & (y == 0)))
    fn = float(np.sum((pred == 0) & (y == 1)))

    def ratio(num: float, den: float) -> float:
        return num / den if den > 0 else 0.0

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    return Metrics(
        accuracy=ratio(tp + tn, tp + tn + fp + fn),
        precision=precision,
        recall=recall,
        f1=ratio(2 * precision * recall, precision + recall),
        auc=roc_auc(scores, y),
        fpr=ratio(fp, fp + tn),
        loss=bce_loss(np.clip(scores, BCE_EPS, 1 - BCE_EPS), y),
    )
