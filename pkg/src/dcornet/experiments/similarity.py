"""
Comparing networks through their features: minibatch distance-correlation
estimates against label embeddings, partial distance correlation
conditioned on a second network, PDC-driven finetuning and layer-by-layer
similarity heatmaps.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from dcornet.dcor_core import centered_of, dcor, frobenius_mean, report_from_centered
from dcornet.diffgrad import pdcor_value_grad
from dcornet.dump import build_dump
from dcornet.experiments.datasets import shuffled_batches
from dcornet.models import FeatureDump, FinetuneConfig, HeatmapResult, MLPParams, as_batch
from dcornet.nn import (
    MomentumSGD, all_activations, backward, cross_entropy, cross_entropy_grad,
    forward, forward_cache,
)
from dcornet.pdc import pdcor
from dcornet.utils import (
    DegenerateError, InvalidInputError, TrainingDivergedError, make_rng,
)

logger = logging.getLogger(__name__)

Stream = Union[np.ndarray, Iterable]


def iter_minibatches(values, m: int) -> List[np.ndarray]:
    """Consecutive row blocks of exactly m rows; n must be a multiple of m."""
    values = as_batch(values, "features")
    n = values.shape[0]
    if m < 1 or n % m:
        raise InvalidInputError(f"n={n} is not a multiple of the minibatch size m={m}",
                                payload={"n": n, "m": m})
    return [values[start:start + m] for start in range(0, n, m)]


def _batches(stream: Stream, m: int) -> List[np.ndarray]:
    if isinstance(stream, np.ndarray):
        return iter_minibatches(stream, m)
    batches = [as_batch(b, "minibatch") for b in stream]
    for b in batches:
        if b.shape[0] != m:
            raise InvalidInputError(f"minibatch of {b.shape[0]} rows, expected exactly m={m}")
    return batches


def _aligned(*streams: Stream, m: int) -> List[Tuple[np.ndarray, ...]]:
    split = [_batches(s, m) for s in streams]
    if len({len(s) for s in split}) != 1:
        raise InvalidInputError(f"streams disagree on the number of minibatches: "
                                f"{[len(s) for s in split]}")
    if not split[0]:
        raise InvalidInputError("empty stream")
    return list(zip(*split))


def stochastic_dc_estimate(features: Stream, embeddings: Stream, m: int) -> float:
    """Mean of per-minibatch dCor values, (m/n) Σ_t dCor(x_t, gt_t).

    The sum is exactly rounded, so reordering the minibatches cannot change it.
    """
    values = [dcor(x, gt).dcor for x, gt in _aligned(features, embeddings, m=m)]
    return math.fsum(values) / len(values)


def stochastic_pdc_estimate(feat_x: Stream, feat_y: Stream, embeddings: Stream, m: int) -> float:
    """Mean of per-minibatch R*²(x_t, gt_t; y_t): x's information about gt beyond y's."""
    if m < 4:
        raise InvalidInputError("partial distance correlation needs m >= 4")
    values = [pdcor(x, gt, y).pdcor2 for x, y, gt in _aligned(feat_x, feat_y, embeddings, m=m)]
    return math.fsum(values) / len(values)


def stochastic_bias_corrected_estimate(features: Stream, embeddings: Stream, m: int) -> float:
    values = [pdcor(x, gt, np.zeros((m, 1))).pdcor2
              for x, gt in _aligned(features, embeddings, m=m)]
    return math.fsum(values) / len(values)


# --- finetuning with partial distance correlation

def pdc_finetune_loss(logits1, labels, g1, g2, gt, alpha: float) -> float:
    """CE(f1(x), y) - alpha * R*²(g1, gt; g2). The PDC term is maximised."""
    ce = cross_entropy(logits1, labels)
    if alpha == 0:
        return ce
    report = pdcor(g1, gt, g2)
    if report.degenerate:
        logger.warning("finetune loss: degenerate projection, PDC term taken as 0")
    return ce - alpha * report.pdcor2


def pdc_finetune_grad(logits1, labels, g1, g2, gt,
                      alpha: float) -> Tuple[float, np.ndarray, Optional[np.ndarray]]:
    ce, grad_logits = cross_entropy_grad(logits1, labels)
    if alpha == 0:
        return ce, grad_logits, None
    try:
        pdc = pdcor_value_grad(g1, gt, g2)
    except DegenerateError:
        logger.warning("finetune loss: degenerate projection, PDC term taken as 0")
        return ce, grad_logits, None
    return ce - alpha * pdc.value, grad_logits, -alpha * pdc.grad


def finetune_with_pdc(f1: MLPParams, f2: MLPParams, x, labels, gt,
                      cfg: FinetuneConfig) -> Tuple[MLPParams, Dict]:
    """Finetune f1 on CE - alpha * R*²(g1, gt; g2) with f2 frozen.

    `gt` holds one embedding row per sample, aligned with `x`.
    """
    x = as_batch(x, "x")
    gt = as_batch(gt, "gt")
    labels = np.asarray(labels)
    rng = make_rng(cfg.seed, 3)
    opt = MomentumSGD(cfg.lr, cfg.momentum)
    trace = []
    for epoch in range(cfg.epochs):
        losses = []
        for idx in shuffled_batches(x.shape[0], cfg.batch_size, rng, min_rows=4):
            logits, g1, cache = forward_cache(f1, x[idx])
            _, g2 = forward(f2, x[idx])
            loss, grad_logits, grad_g1 = pdc_finetune_grad(
                logits, labels[idx], g1, g2, gt[idx], cfg.alpha)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"finetuning diverged in epoch {epoch}",
                                            payload={"epoch": epoch})
            grads, _ = backward(f1, cache, grad_logits, grad_g1)
            f1 = opt.step(f1, grads)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
        logger.info("finetune epoch %d: loss %.6f", epoch, trace[-1])
    return f1, {"loss": trace, "alpha": cfg.alpha, "lr": cfg.lr}


# --- layer similarity

def model_feature_dump(params: MLPParams, x, sample_ids=None, model_name: str = "mlp",
                       dtype: str = "f64") -> FeatureDump:
    """Every layer's output as a dump: hidden layers h1..h{L-1}, then `logits`."""
    outs = all_activations(params, x)
    names = [f"h{i + 1}" for i in range(len(outs) - 1)] + ["logits"]
    return build_dump(model_name, dict(zip(names, outs)), sample_ids, dtype=dtype,
                      extra={"feature_tap": params.feature_tap})


def common_samples(dump_a: FeatureDump, dump_b: FeatureDump, n_samples: int) -> int:
    n = min(n_samples, len(dump_a.sample_ids), len(dump_b.sample_ids))
    if n < 2:
        raise InvalidInputError(f"need at least 2 common samples, got {n}")
    if list(dump_a.sample_ids[:n]) != list(dump_b.sample_ids[:n]):
        raise InvalidInputError(f"dumps {dump_a.model_name!r} and {dump_b.model_name!r} "
                                f"disagree on the first {n} sample ids")
    return n


def _layer_stats(dump: FeatureDump, n: int) -> List[Tuple[np.ndarray, float]]:
    stats = []
    for name in dump.layer_names:
        A = centered_of(dump.features(name)[:n].reshape(n, -1))
        stats.append((A, frobenius_mean(A, A)))
    return stats


def layer_similarity_heatmap(dump_a: FeatureDump, dump_b: Optional[FeatureDump] = None,
                             n_samples: int = 256, parallel: int = 1) -> HeatmapResult:
    """dCor between every layer of dump_a and every layer of dump_b.

    Without dump_b (or with the same object) the within-model matrix is
    computed once per unordered pair and mirrored.
    """
    within = dump_b is None or dump_b is dump_a
    dump_b = dump_a if dump_b is None else dump_b
    n = common_samples(dump_a, dump_b, n_samples)
    rows = _layer_stats(dump_a, n)
    cols = rows if within else _layer_stats(dump_b, n)

    if within:
        cells = [(i, j) for i in range(len(rows)) for j in range(i, len(cols))]
    else:
        cells = [(i, j) for i in range(len(rows)) for j in range(len(cols))]

    def cell(ij):
        (A, va), (B, vb) = rows[ij[0]], cols[ij[1]]
        return report_from_centered(A, B, va, vb).dcor

    with ThreadPoolExecutor(max_workers=max(1, parallel)) as pool:
        results = list(pool.map(cell, cells))

    values = np.zeros((len(rows), len(cols)))
    for (i, j), v in zip(cells, results):
        values[i, j] = v
        if within:
            values[j, i] = v
    logger.info("heatmap %dx%d over %d samples (%d workers)", len(rows), len(cols), n, parallel)
    return HeatmapResult(values, dump_a.layer_names, dump_b.layer_names, n)
