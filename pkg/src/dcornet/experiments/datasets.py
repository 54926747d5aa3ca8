"""Seeded synthetic classification data and label embeddings."""
from __future__ import annotations

import logging

import numpy as np

from dcornet.models import Dataset, DatasetConfig
from dcornet.utils import InvalidInputError

logger = logging.getLogger(__name__)


def make_blobs(cfg: DatasetConfig, rng: np.random.Generator) -> Dataset:
    """Gaussian blobs, one isotropic cluster per class, min-max scaled into [0, 1].

    Scaling uses training statistics; test points are clipped into the same
    box so that the attack domain [0, 1] contains every clean input.
    """
    centers = cfg.center_scale * rng.standard_normal((cfg.n_classes, cfg.dim))

    def draw(n):
        labels = rng.integers(0, cfg.n_classes, size=n)
        x = centers[labels] + cfg.spread * rng.standard_normal((n, cfg.dim))
        return x, labels

    x_train, y_train = draw(cfg.n_train)
    x_test, y_test = draw(cfg.n_test)
    lo = x_train.min(axis=0)
    span = x_train.max(axis=0) - lo
    span[span == 0] = 1.0
    x_train = (x_train - lo) / span
    x_test = np.clip((x_test - lo) / span, 0.0, 1.0)
    logger.debug("blobs: %d classes, dim %d, %d/%d samples",
                 cfg.n_classes, cfg.dim, cfg.n_train, cfg.n_test)
    return Dataset(x_train, y_train, x_test, y_test)


def class_embeddings(n_classes: int, rng: np.random.Generator, dim: int = 32) -> np.ndarray:
    """Fixed random real-valued embedding per class, standing in for text-model vectors."""
    if n_classes < 1 or dim < 1:
        raise InvalidInputError("n_classes and dim must be positive")
    return rng.standard_normal((n_classes, dim))


def embed_labels(embeddings: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= embeddings.shape[0]):
        raise InvalidInputError(f"labels must lie in 0..{embeddings.shape[0] - 1}")
    return embeddings[labels]


def shuffled_batches(n: int, batch_size: int, rng: np.random.Generator, min_rows: int = 2):
    """Index arrays for one shuffled epoch; a tail shorter than `min_rows` is dropped."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if idx.size >= min_rows:
            yield idx
