"""
Loss terms for disentangling attribute factors from a residual code.

`label_mask[i, j] == 1` marks sample i as labeled for attribute j. Labeled
pairs contribute cross-entropy, unlabeled pairs contribute the entropy of
the classifier's softmax, and the residual is pushed to be independent of
the stacked factors through distance correlation.
"""
from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from dcornet.dcor_core import dcor
from dcornet.models import DisentangleWeights, as_batch
from dcornet.utils import DimensionError, InvalidInputError, same_n

logger = logging.getLogger(__name__)


def residual_independence_loss(factors: Sequence, residual) -> float:
    """dCor([f1; f2; ...; fk], r) with the factors stacked column-wise."""
    if not factors:
        raise InvalidInputError("need at least one factor batch")
    blocks = [as_batch(f, f"factor[{j}]") for j, f in enumerate(factors)]
    residual = as_batch(residual, "residual")
    same_n(*blocks, residual)
    report = dcor(np.hstack(blocks), residual)
    if report.degenerate:
        logger.warning("residual loss: degenerate batch, dCor taken as 0")
    return report.dcor


def _check_attributes(logits: Sequence, labels: Sequence, label_mask) -> Tuple[List, List, np.ndarray]:
    if len(logits) != len(labels):
        raise DimensionError(f"{len(logits)} classifiers but {len(labels)} label vectors")
    logits = [np.asarray(z, dtype=np.float64) for z in logits]
    labels = [np.asarray(y) for y in labels]
    mask = np.asarray(label_mask)
    if not logits:
        raise InvalidInputError("need at least one attribute")
    n = logits[0].shape[0]
    if mask.shape != (n, len(logits)):
        raise DimensionError(f"label mask has shape {mask.shape}, expected {(n, len(logits))}")
    if not np.isin(mask, (0, 1)).all():
        raise InvalidInputError("label mask entries must be 0 or 1")
    for j, (z, y) in enumerate(zip(logits, labels)):
        if z.ndim != 2 or z.shape[0] != n or y.shape != (n,):
            raise DimensionError(f"attribute {j}: logits {z.shape} / labels {y.shape} for n={n}")
        labeled = mask[:, j] == 1
        if labeled.any() and (y[labeled].min() < 0 or y[labeled].max() >= z.shape[1]):
            raise InvalidInputError(f"attribute {j}: labels must lie in 0..{z.shape[1] - 1}")
    return logits, labels, mask.astype(bool)


def disentangle_losses(logits: Sequence, labels: Sequence, label_mask, factors: Sequence,
                       residual, weights: DisentangleWeights = DisentangleWeights()):
    """(L_cls, L_ent, L_res, weighted total) over all attributes.

    L_cls and L_ent are sums over (sample, attribute) pairs, not means. Any
    reconstruction term is added by the caller.
    """
    logits, labels, mask = _check_attributes(logits, labels, label_mask)
    l_cls = 0.0
    l_ent = 0.0
    for j, (z, y) in enumerate(zip(logits, labels)):
        lse = logsumexp(z, axis=1)
        labeled = mask[:, j]
        if labeled.any():
            rows = np.flatnonzero(labeled)
            l_cls += float(np.sum(lse[rows] - z[rows, y[rows]]))
        if (~labeled).any():
            zu = z[~labeled]
            # H(softmax(z)) = logsumexp(z) - Σ softmax(z) z
            l_ent += float(np.sum(lse[~labeled] - np.sum(softmax(zu, axis=1) * zu, axis=1)))
    l_res = residual_independence_loss(factors, residual)
    total = weights.lambda_cls * l_cls + weights.lambda_ent * l_ent + weights.lambda_res * l_res
    return l_cls, l_ent, l_res, total


def soft_attributes(logits: Sequence, labels: Sequence, label_mask) -> List[np.ndarray]:
    """Per attribute, one-hot labels where labeled and softmax(logits) elsewhere."""
    logits, labels, mask = _check_attributes(logits, labels, label_mask)
    out = []
    for j, (z, y) in enumerate(zip(logits, labels)):
        f = softmax(z, axis=1)
        rows = np.flatnonzero(mask[:, j])
        f[rows] = 0.0
        f[rows, y[rows]] = 1.0
        out.append(f)
    return out
