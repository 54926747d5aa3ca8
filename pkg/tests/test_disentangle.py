import math

import numpy as np
import pytest

from dcornet.dcor_core import dcor
from dcornet.experiments.disentangle import (
    disentangle_losses, residual_independence_loss, soft_attributes,
)
from dcornet.models import DisentangleWeights
from dcornet.utils import DimensionError, InvalidInputError, make_rng


def _attributes(rng, n=6):
    logits = [rng.standard_normal((n, 3)), rng.standard_normal((n, 2))]
    labels = [rng.integers(0, 3, size=n), rng.integers(0, 2, size=n)]
    return logits, labels


def test_all_labeled_is_summed_cross_entropy(rng):
    logits, labels = _attributes(rng)
    mask = np.ones((6, 2), dtype=int)
    factors = [rng.standard_normal((6, 2))]
    l_cls, l_ent, _, _ = disentangle_losses(logits, labels, mask, factors, rng.standard_normal((6, 3)))
    expected = 0.0
    for z, y in zip(logits, labels):
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        expected -= np.log(p[np.arange(6), y]).sum()
    assert l_cls == pytest.approx(expected, rel=1e-12)
    assert l_ent == 0.0


def test_uniform_unlabeled_entropy(rng):
    logits = [np.zeros((4, 5))]
    labels = [np.zeros(4, dtype=int)]
    mask = np.zeros((4, 1), dtype=int)
    l_cls, l_ent, _, _ = disentangle_losses(logits, labels, mask, [rng.standard_normal((4, 2))],
                                            rng.standard_normal((4, 2)))
    assert l_cls == 0.0
    assert l_ent == pytest.approx(4 * math.log(5), rel=1e-12)


def test_weighted_total(rng):
    logits, labels = _attributes(rng)
    mask = np.array([[1, 0], [0, 1], [1, 1], [0, 0], [1, 0], [0, 1]])
    factors = [rng.standard_normal((6, 2)), rng.standard_normal((6, 1))]
    residual = rng.standard_normal((6, 3))
    weights = DisentangleWeights(lambda_cls=0.2, lambda_ent=0.3, lambda_res=0.5)
    l_cls, l_ent, l_res, total = disentangle_losses(logits, labels, mask, factors, residual, weights)
    assert l_res == pytest.approx(dcor(np.hstack(factors), residual).dcor, abs=1e-15)
    assert total == pytest.approx(0.2 * l_cls + 0.3 * l_ent + 0.5 * l_res, rel=1e-12)


def test_residual_copy_of_factors_is_fully_dependent(rng):
    f = rng.standard_normal((10, 2))
    assert residual_independence_loss([f], f.copy()) == pytest.approx(1.0, abs=1e-12)
    assert residual_independence_loss([f], np.ones((10, 3))) == 0.0


def test_shape_errors(rng):
    logits, labels = _attributes(rng)
    with pytest.raises(DimensionError):
        disentangle_losses(logits, labels, np.ones((6, 3)), [np.ones((6, 1))], np.ones((6, 1)))
    with pytest.raises(DimensionError):
        disentangle_losses(logits, labels[:1], np.ones((6, 2)), [np.ones((6, 1))], np.ones((6, 1)))
    with pytest.raises(InvalidInputError):
        disentangle_losses(logits, labels, np.full((6, 2), 2), [np.ones((6, 1))], np.ones((6, 1)))
    with pytest.raises(InvalidInputError):
        residual_independence_loss([], np.ones((6, 1)))
    with pytest.raises(InvalidInputError):
        DisentangleWeights(lambda_res=-1.0)


def test_soft_attributes_mix_labels_and_softmax(rng):
    logits, labels = _attributes(rng)
    mask = np.array([[1, 0]] * 3 + [[0, 1]] * 3)
    soft = soft_attributes(logits, labels, mask)
    assert np.array_equal(soft[0][0], np.eye(3)[labels[0][0]])
    assert np.allclose(soft[0][4].sum(), 1.0)
    assert np.all(soft[0][4] > 0)
    assert np.array_equal(soft[1][5], np.eye(2)[labels[1][5]])


def test_independent_residual_is_nearly_uncorrelated():
    rng = make_rng(21)
    factors = [rng.standard_normal((2000, 1)), rng.standard_normal((2000, 1))]
    assert residual_independence_loss(factors, rng.standard_normal((2000, 1))) < 0.1


def test_default_weights(rng):
    logits, labels = _attributes(rng)
    mask = np.array([[1, 1], [0, 0], [1, 0], [0, 1], [1, 1], [0, 0]])
    factors = soft_attributes(logits, labels, mask)
    residual = rng.standard_normal((6, 2))
    l_cls, l_ent, l_res, total = disentangle_losses(logits, labels, mask, factors, residual)
    assert total == pytest.approx(0.1 * l_cls + 0.01 * l_ent + 1e-5 * l_res, abs=1e-12)
