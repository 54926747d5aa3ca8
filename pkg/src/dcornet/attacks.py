"""
L∞ adversarial attacks on MLP classifiers: the fast gradient sign method
and projected gradient descent.
"""
from __future__ import annotations

import logging

import numpy as np

from dcornet.models import AttackConfig, MLPParams, as_batch
from dcornet.nn import backward, cross_entropy_grad, forward_cache
from dcornet.utils import InvalidInputError

logger = logging.getLogger(__name__)


def input_gradient(model: MLPParams, x, labels) -> np.ndarray:
    """∂ CE(model(x), labels) / ∂x."""
    logits, _, cache = forward_cache(model, x)
    _, g = cross_entropy_grad(logits, labels)
    _, dx = backward(model, cache, g)
    return dx


def _clip_domain(x: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.domain is None:
        return x
    lo, hi = cfg.domain
    return np.clip(x, lo, hi)


def fgm_attack(model: MLPParams, x, labels, cfg: AttackConfig) -> np.ndarray:
    """
    One signed-gradient step of size epsilon on the cross-entropy.

    Args:
        model: classifier to attack.
        x: clean inputs, n×p.
        labels: true class indices.
        cfg: attack settings with kind FGM.

    Returns:
        Adversarial inputs clipped to cfg.domain.
    """
    if cfg.kind != "FGM":
        raise InvalidInputError(f"fgm_attack called with a {cfg.kind} config")
    x = as_batch(x, "x")
    if cfg.epsilon == 0:
        return x.copy()
    step = cfg.epsilon * np.sign(input_gradient(model, x, labels))
    return _clip_domain(x + step, cfg)


def pgd_attack(model: MLPParams, x, labels, cfg: AttackConfig) -> np.ndarray:
    """
    Iterated signed-gradient ascent projected onto the epsilon-ball around x
    and onto the data domain. No random start.
    """
    if cfg.kind != "PGD":
        raise InvalidInputError(f"pgd_attack called with a {cfg.kind} config")
    x = as_batch(x, "x")
    if cfg.epsilon == 0:
        return x.copy()
    lower = x - cfg.epsilon
    upper = x + cfg.epsilon
    x_adv = x.copy()
    for _ in range(cfg.pgd_iters):
        x_adv = x_adv + cfg.step * np.sign(input_gradient(model, x_adv, labels))
        x_adv = _clip_domain(np.clip(x_adv, lower, upper), cfg)
    return x_adv


def attack(model: MLPParams, x, labels, cfg: AttackConfig) -> np.ndarray:
    if cfg.kind == "FGM":
        return fgm_attack(model, x, labels, cfg)
    return pgd_attack(model, x, labels, cfg)
