"""
Training two classifiers with mutually independent features and measuring
how well adversarial examples crafted on one transfer to the other.

f1 is trained on cross-entropy alone; f2 on cross-entropy plus a weighted
distance correlation between its tap features and f1's (frozen) tap
features, the weight being alpha times the minibatch size unless
`dc_scale="none"`. Training alternates one epoch of each.
"""
from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dcornet.attacks import attack
from dcornet.dcor_core import dcor
from dcornet.diffgrad import dcor_value_grad
from dcornet.experiments.datasets import shuffled_batches
from dcornet.models import AttackConfig, Dataset, MLPParams, PairTrainConfig
from dcornet.nn import (
    MomentumSGD, accuracy, backward, cross_entropy, cross_entropy_grad,
    forward, forward_cache,
)
from dcornet.utils import DegenerateError, TrainingDivergedError, make_rng

logger = logging.getLogger(__name__)

F1_STREAM = 1
F2_STREAM = 2


def independence_loss(logits2, labels, g1, g2, alpha: float) -> float:
    """CE(f2(x), y) + alpha * dCor(g1, g2)."""
    ce = cross_entropy(logits2, labels)
    if alpha == 0:
        return ce
    report = dcor(g1, g2)
    if report.degenerate:
        logger.warning("independence loss: degenerate features, DC term taken as 0")
    return ce + alpha * report.dcor


def independence_loss_grad(logits2, labels, g1, g2,
                           alpha: float) -> Tuple[float, np.ndarray, Optional[np.ndarray]]:
    """Loss value with its gradients on f2's logits and on f2's tap features."""
    ce, grad_logits = cross_entropy_grad(logits2, labels)
    if alpha == 0:
        return ce, grad_logits, None
    try:
        dc = dcor_value_grad(g2, g1, wrt="X")
    except DegenerateError:
        logger.warning("independence loss: degenerate features, DC term taken as 0")
        return ce, grad_logits, None
    return ce + alpha * dc.value, grad_logits, alpha * dc.grad


def _check_finite(value: float, model: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise TrainingDivergedError(f"{model} diverged in epoch {epoch}: loss {value}",
                                    payload={"model": model, "epoch": epoch})


def _ce_epoch(model: MLPParams, opt: MomentumSGD, data: Dataset, cfg: PairTrainConfig,
              rng: np.random.Generator, name: str, epoch: int) -> Tuple[MLPParams, float]:
    losses = []
    for idx in shuffled_batches(data.x_train.shape[0], cfg.batch_size, rng):
        logits, _, cache = forward_cache(model, data.x_train[idx])
        loss, grad_logits = cross_entropy_grad(logits, data.y_train[idx])
        _check_finite(loss, name, epoch)
        grads, _ = backward(model, cache, grad_logits)
        model = opt.step(model, grads)
        losses.append(loss)
    return model, float(np.mean(losses))


def _independent_epoch(f1: MLPParams, f2: MLPParams, opt: MomentumSGD, data: Dataset,
                       cfg: PairTrainConfig, rng: np.random.Generator,
                       epoch: int) -> Tuple[MLPParams, float]:
    losses = []
    for idx in shuffled_batches(data.x_train.shape[0], cfg.batch_size, rng):
        xb = data.x_train[idx]
        logits, g2, cache = forward_cache(f2, xb)
        _, g1 = forward(f1, xb)
        loss, grad_logits, grad_g2 = independence_loss_grad(
            logits, data.y_train[idx], g1, g2, cfg.dc_weight(idx.size))
        _check_finite(loss, "f2", epoch)
        grads, _ = backward(f2, cache, grad_logits, grad_g2)
        f2 = opt.step(f2, grads)
        losses.append(loss)
    return f2, float(np.mean(losses))


def train_classifier(model: MLPParams, data: Dataset, cfg: PairTrainConfig,
                     stream: int = F2_STREAM) -> Tuple[MLPParams, List[float]]:
    """Plain cross-entropy training; the unregularised baseline for either model."""
    rng = make_rng(cfg.seed, stream)
    opt = MomentumSGD(cfg.lr, cfg.momentum)
    trace = []
    for epoch in range(cfg.epochs):
        model, loss = _ce_epoch(model, opt, data, cfg, rng, f"model[{stream}]", epoch)
        trace.append(loss)
    return model, trace


def train_independent_pair(f1: MLPParams, f2: MLPParams, data: Dataset,
                           cfg: PairTrainConfig) -> Tuple[MLPParams, MLPParams, Dict]:
    """Alternate one epoch of f1 and one epoch of f2 for cfg.epochs rounds.

    With alpha = 0, f2's updates never look at f1 and the run reproduces
    train_classifier on f2 bit for bit.
    """
    rng1 = make_rng(cfg.seed, F1_STREAM)
    rng2 = make_rng(cfg.seed, F2_STREAM)
    opt1 = MomentumSGD(cfg.lr, cfg.momentum)
    opt2 = MomentumSGD(cfg.lr, cfg.momentum)
    f1_trace, f2_trace = [], []
    for epoch in range(cfg.epochs):
        f1, loss1 = _ce_epoch(f1, opt1, data, cfg, rng1, "f1", epoch)
        if cfg.alpha == 0:
            f2, loss2 = _ce_epoch(f2, opt2, data, cfg, rng2, "f2", epoch)
        else:
            f2, loss2 = _independent_epoch(f1, f2, opt2, data, cfg, rng2, epoch)
        f1_trace.append(loss1)
        f2_trace.append(loss2)
        logger.info("epoch %d: f1 loss %.4f, f2 loss %.4f", epoch, loss1, loss2)

    _, g1 = forward(f1, data.x_test)
    _, g2 = forward(f2, data.x_test)
    metrics = {
        "alpha": cfg.alpha,
        "dc_scale": cfg.dc_scale,
        "epochs": cfg.epochs,
        "f1_loss": f1_trace,
        "f2_loss": f2_trace,
        "f1_test_accuracy": accuracy(f1, data.x_test, data.y_test),
        "f2_test_accuracy": accuracy(f2, data.x_test, data.y_test),
        "feature_dcor": dcor(g1, g2).dcor,
    }
    return f1, f2, metrics


def transfer_attack_eval(f1: MLPParams, f2: MLPParams, x, labels,
                         attacks: Sequence[AttackConfig]) -> List[Dict]:
    """One row per attack: examples crafted on f1, accuracy measured on f2."""
    labels = np.asarray(labels)
    clean = accuracy(f2, x, labels)
    rows = []
    for cfg in attacks:
        x_adv = attack(f1, x, labels, cfg)
        rows.append({
            "attack": cfg.kind,
            "epsilon": cfg.epsilon,
            "clean_accuracy": clean,
            "source_accuracy": accuracy(f1, x_adv, labels),
            "transfer_accuracy": accuracy(f2, x_adv, labels),
        })
        logger.info("%s eps=%g: transfer accuracy %.4f (clean %.4f)",
                    cfg.kind, cfg.epsilon, rows[-1]["transfer_accuracy"], clean)
    return rows
