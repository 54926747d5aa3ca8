"""
Small fully-connected classifiers with hand-written backpropagation.

Hidden layers apply ReLU, the last layer is linear and produces logits.
`feature_tap = i` exposes the output of layer i as the feature map g(x)
that distance-correlation losses act on.
"""
from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from dcornet.models import MLPParams, as_batch
from dcornet.utils import DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

Grads = List[Tuple[np.ndarray, np.ndarray]]


def init_mlp(sizes: Sequence[int], rng: np.random.Generator,
             feature_tap: Optional[int] = None) -> MLPParams:
    """He-initialised MLP; the tap defaults to the last hidden layer."""
    if len(sizes) < 2:
        raise InvalidInputError("an MLP needs an input and an output size")
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        layers.append((w, np.zeros(fan_out)))
    if feature_tap is None:
        feature_tap = max(len(layers) - 2, 0)
    return MLPParams(layers, feature_tap)


def _check_input(params: MLPParams, x) -> np.ndarray:
    x = as_batch(x, "x")
    if x.shape[1] != params.sizes[0]:
        raise DimensionError(f"input has {x.shape[1]} features, model expects {params.sizes[0]}")
    return x


def forward_cache(params: MLPParams, x):
    """Logits, tap features and the per-layer (input, pre-activation) cache."""
    h = _check_input(params, x)
    last = len(params.layers) - 1
    cache = []
    features = None
    for i, (w, b) in enumerate(params.layers):
        z = h @ w + b
        cache.append((h, z))
        h = np.maximum(z, 0.0) if i < last else z
        if i == params.feature_tap:
            features = h
    return h, features, cache


def forward(params: MLPParams, x) -> Tuple[np.ndarray, np.ndarray]:
    logits, features, _ = forward_cache(params, x)
    return logits, features


def predict(params: MLPParams, x) -> np.ndarray:
    return np.argmax(forward(params, x)[0], axis=1)


def all_activations(params: MLPParams, x) -> List[np.ndarray]:
    """Output of every layer, in order (post-ReLU for hidden layers)."""
    _, _, cache = forward_cache(params, x)
    outs = [h for h, _ in cache[1:]]
    outs.append(cache[-1][1])
    return outs


def backward(params: MLPParams, cache, grad_logits: Optional[np.ndarray],
             grad_features: Optional[np.ndarray] = None) -> Tuple[Grads, np.ndarray]:
    """Parameter gradients and the input gradient for upstream gradients on
    the logits and, optionally, on the tap features."""
    last = len(params.layers) - 1
    dh = np.zeros_like(cache[-1][1]) if grad_logits is None else grad_logits
    grads: Grads = [None] * len(params.layers)
    for i in range(last, -1, -1):
        w, _ = params.layers[i]
        h_in, z = cache[i]
        if i == params.feature_tap and grad_features is not None:
            dh = dh + grad_features
        dz = dh * (z > 0) if i < last else dh
        grads[i] = (h_in.T @ dz, dz.sum(axis=0))
        dh = dz @ w.T
    return grads, dh


# --- losses

def _check_labels(logits: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise DimensionError(f"{labels.shape[0] if labels.ndim else 0} labels for {logits.shape[0]} rows")
    if not np.issubdtype(labels.dtype, np.integer):
        raise InvalidInputError("labels must be integer class indices")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InvalidInputError(f"labels must lie in 0..{logits.shape[1] - 1}")
    return labels


def cross_entropy(logits, labels) -> float:
    """Mean negative log-softmax of the true-class logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(logits, labels)
    rows = np.arange(logits.shape[0])
    return float(np.mean(logsumexp(logits, axis=1) - logits[rows, labels]))


def cross_entropy_grad(logits, labels) -> Tuple[float, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    value = cross_entropy(logits, labels)
    n = logits.shape[0]
    grad = softmax(logits, axis=1)
    grad[np.arange(n), labels] -= 1.0
    return value, grad / n


def accuracy(params: MLPParams, x, labels) -> float:
    return float(np.mean(predict(params, x) == np.asarray(labels)))


# --- optimizer

def sgd_step(params: MLPParams, grads: Grads, lr: float, momentum: float = 0.0,
             velocity: Optional[Grads] = None) -> MLPParams:
    """One momentum-SGD update, v <- momentum*v + g and w <- w - lr*v.

    Returns new parameters; `velocity` is updated in place. Without a
    velocity buffer only plain steps (momentum 0) are allowed.
    """
    if momentum and velocity is None:
        raise InvalidInputError("momentum needs a velocity buffer; use MomentumSGD")
    if len(grads) != len(params.layers):
        raise DimensionError(f"{len(grads)} gradient pairs for {len(params.layers)} layers")
    new_layers = []
    for i, ((w, b), (gw, gb)) in enumerate(zip(params.layers, grads)):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise DimensionError(f"layer {i}: gradient shapes {gw.shape}/{gb.shape} "
                                 f"do not match {w.shape}/{b.shape}")
        if velocity is not None:
            vw, vb = velocity[i]
            vw *= momentum
            vw += gw
            vb *= momentum
            vb += gb
            gw, gb = vw, vb
        new_layers.append((w - lr * gw, b - lr * gb))
    return MLPParams(new_layers, params.feature_tap, params.activation)


class MomentumSGD:
    """Stateful wrapper around sgd_step holding one velocity buffer per layer."""

    def __init__(self, lr: float, momentum: float = 0.9):
        if lr < 0:
            raise InvalidInputError("learning rate must be >= 0")
        self.lr = lr
        self.momentum = momentum
        self.velocity: Optional[Grads] = None

    def step(self, params: MLPParams, grads: Grads) -> MLPParams:
        if self.velocity is None:
            self.velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]
        return sgd_step(params, grads, self.lr, self.momentum, self.velocity)


def add_grads(a: Grads, b: Grads, scale: float = 1.0) -> Grads:
    return [(wa + scale * wb, ba + scale * bb) for (wa, ba), (wb, bb) in zip(a, b)]


def grad_norm(grads: Grads) -> float:
    return float(np.sqrt(sum(np.vdot(gw, gw) + np.vdot(gb, gb) for gw, gb in grads)))
