import numpy as np
import pytest

from dcornet.dcor_core import (
    dcor, dcov2, double_center, demo_sampler, pairwise_distances, pearson,
)
from dcornet.models import CenteredDistanceMatrix, DistanceMatrix, SampleBatch
from dcornet.utils import DegenerateError, DimensionError, InvalidInputError, make_rng


def test_pairwise_distances_small_cases():
    assert np.array_equal(pairwise_distances([[0.0], [1.0]]).d, [[0, 1], [1, 0]])
    assert np.array_equal(pairwise_distances([[0.0, 0.0], [3.0, 4.0]]).d, [[0, 5], [5, 0]])
    assert not pairwise_distances(np.ones((4, 3))).d.any()


def test_pairwise_distances_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        pairwise_distances([[0.0], [np.nan]])


def test_double_center_hand_computation():
    A = double_center(DistanceMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])))
    assert np.allclose(A.A, [[-0.5, 0.5], [0.5, -0.5]])
    assert dcov2(A, A) == pytest.approx(0.25)
    assert dcov2(A, CenteredDistanceMatrix(np.zeros((2, 2)))) == 0.0


def test_double_center_row_and_column_sums_vanish(rng):
    d = pairwise_distances(rng.standard_normal((5, 3))).d
    A = double_center(DistanceMatrix(d)).A
    tol = 1e-9 * 5 * d.max()
    assert np.abs(A.sum(axis=0)).max() < tol
    assert np.abs(A.sum(axis=1)).max() < tol


def test_double_center_is_exactly_symmetric(rng):
    A = double_center(pairwise_distances(rng.standard_normal((11, 3)))).A
    assert np.array_equal(A, A.T)


def test_dcov2_matches_double_loop(rng):
    A = double_center(pairwise_distances(rng.standard_normal((8, 2)))).A
    B = double_center(pairwise_distances(rng.standard_normal((8, 4)))).A
    loop = sum(A[k, l] * B[k, l] for k in range(8) for l in range(8)) / 64
    assert dcov2(CenteredDistanceMatrix(A), CenteredDistanceMatrix(B)) == pytest.approx(loop, rel=1e-12, abs=1e-13)


def test_dcov2_size_mismatch():
    with pytest.raises(DimensionError):
        dcov2(CenteredDistanceMatrix(np.zeros((2, 2))), CenteredDistanceMatrix(np.zeros((3, 3))))


def test_self_correlation_is_one(rng):
    x = rng.standard_normal((30, 4))
    assert dcor(x, x).dcor == pytest.approx(1.0, abs=1e-12)
    assert dcor(x, x.copy()).dcor == pytest.approx(1.0, abs=1e-12)


def test_constant_side_is_degenerate(rng):
    report = dcor(rng.standard_normal((20, 2)), np.full((20, 1), 3.0))
    assert report.degenerate
    assert report.dcor == 0.0


def test_single_sample_is_degenerate():
    report = dcor([[1.0, 2.0]], [[3.0]])
    assert report.degenerate and report.dcor == 0.0


def test_sample_count_mismatch(rng):
    with pytest.raises(DimensionError):
        dcor(rng.standard_normal((5, 2)), rng.standard_normal((6, 2)))


def test_independent_normals_give_small_dcor():
    rng = make_rng(2000)
    assert dcor(rng.standard_normal((2000, 3)), rng.standard_normal((2000, 3))).dcor < 0.1


def test_symmetry_range_and_invariances(rng):
    x, y = rng.standard_normal((50, 3)), rng.standard_normal((50, 2)) ** 2
    base = dcor(x, y).dcor
    assert dcor(y, x).dcor == base
    assert 0.0 <= base <= 1.0 + 1e-9
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    assert dcor(-3.0 * x + np.array([1.0, -2.0, 5.0]), y).dcor == pytest.approx(base, abs=1e-9)
    assert dcor(x @ q, y).dcor == pytest.approx(base, abs=1e-9)


def test_report_intermediates_are_consistent(rng):
    r = dcor(rng.standard_normal((40, 2)), rng.standard_normal((40, 2)))
    assert r.dvar2_x >= 0 and r.dvar2_y >= 0
    assert r.dcor ** 2 == pytest.approx(r.dcov2 / np.sqrt(r.dvar2_x * r.dvar2_y), abs=1e-12)


def test_pearson_basic_cases():
    x = np.arange(10.0)
    assert pearson(x, x) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    with pytest.raises(DegenerateError):
        pearson(x, np.ones(10))
    with pytest.raises(InvalidInputError):
        pearson([1.0], [2.0])


def test_demo_sampler_is_deterministic_and_validated():
    x1, y1 = demo_sampler("b", 100, 3)
    x2, y2 = demo_sampler("B", 100, 3)
    assert isinstance(x1, SampleBatch)
    assert np.array_equal(x1.data, x2.data) and np.array_equal(y1.data, y2.data)
    with pytest.raises(InvalidInputError):
        demo_sampler("e", 100, 0)
    with pytest.raises(InvalidInputError):
        demo_sampler("a", 1, 0)


def test_demo_case_c_pearson_matches_covariance():
    x, y = demo_sampler("c", 10000, 11)
    assert pearson(x.data, y.data) == pytest.approx(0.75 / np.sqrt(1.25), abs=0.05)
    assert dcor(x, y).dcor > 0.5


def test_demo_case_a_pearson_misses_quadratic_dependence():
    x, y = demo_sampler("a", 5000, 4)
    assert abs(pearson(x.data, y.data)) < 0.1
    assert dcor(x, y).dcor > 0.3


def test_demo_case_d_independent():
    x, y = demo_sampler("d", 5000, 0)
    assert dcor(x, y).dcor < 0.08
    assert abs(pearson(x.data, y.data)) < 0.05


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_demo_case_d_over_seeds(seed):
    x, y = demo_sampler("d", 5000, seed)
    assert dcor(x, y).dcor < 0.08
