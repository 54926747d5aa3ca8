import numpy as np
import pytest

from dcornet.models import DatasetConfig
from dcornet.experiments.datasets import make_blobs
from dcornet.nn import init_mlp
from dcornet.utils import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def batches(rng):
    """Three independent small batches with different feature dimensions."""
    return rng.standard_normal((16, 5)), rng.standard_normal((16, 3)), rng.standard_normal((16, 4))


@pytest.fixture(scope="session")
def tiny_data():
    cfg = DatasetConfig(n_classes=4, dim=8, n_train=256, n_test=128, spread=1.5)
    return make_blobs(cfg, make_rng(7, 0))


@pytest.fixture
def tiny_mlp(tiny_data):
    return init_mlp([tiny_data.dim, 16, 16, 4], make_rng(7, 1))


def assert_bitwise_equal(p, q):
    assert len(p.layers) == len(q.layers)
    for (wa, ba), (wb, bb) in zip(p.layers, q.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)


@pytest.fixture(scope="session")
def trained_mlp(tiny_data):
    from dcornet.experiments.transfer import train_classifier
    from dcornet.models import PairTrainConfig

    model = init_mlp([tiny_data.dim, 16, 16, 4], make_rng(7, 2))
    cfg = PairTrainConfig(epochs=15, lr=0.05, batch_size=32, seed=7)
    return train_classifier(model, tiny_data, cfg)[0]
