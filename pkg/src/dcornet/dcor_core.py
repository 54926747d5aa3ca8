"""
Empirical distance covariance, variance and correlation built from
double-centered Euclidean distance matrices, plus the synthetic
distributions used to contrast distance correlation with Pearson.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy.spatial.distance import pdist, squareform

from dcornet.models import (
    CenteredDistanceMatrix, DCorReport, DistanceMatrix, SampleBatch, as_batch,
)
from dcornet.utils import (
    DEGENERATE_EPS, DegenerateError, DimensionError, InvalidInputError,
    make_rng, same_n,
)

logger = logging.getLogger(__name__)

DEMO_CASES = ("A", "B", "C", "D")


def _distances(x: np.ndarray) -> np.ndarray:
    # squareform gives an exactly symmetric matrix with a zero diagonal
    return squareform(pdist(x, "euclidean"))


def _center_inplace(a: np.ndarray) -> np.ndarray:
    # input is symmetric: row means stand in for column means
    row_mean = a.mean(axis=1)
    grand_mean = row_mean.mean()
    a -= row_mean[:, None] + row_mean[None, :]
    a += grand_mean
    return a


def centered_of(x) -> np.ndarray:
    """Double-centered distance matrix of a batch (raw array)."""
    return _center_inplace(_distances(as_batch(x)))


def frobenius_mean(a: np.ndarray, b: np.ndarray) -> float:
    n = a.shape[0]
    return float(np.vdot(a, b)) / (n * n)


def pairwise_distances(batch) -> DistanceMatrix:
    x = as_batch(batch)
    return DistanceMatrix(_distances(x))


def double_center(D: DistanceMatrix) -> CenteredDistanceMatrix:
    """A_kl = a_kl - row mean_k - column mean_l + grand mean."""
    return CenteredDistanceMatrix(_center_inplace(np.array(D.d, dtype=np.float64)))


def dcov2(A: CenteredDistanceMatrix, B: CenteredDistanceMatrix) -> float:
    if A.n != B.n:
        raise DimensionError(f"centered matrices differ in size: {A.n} vs {B.n}")
    return frobenius_mean(A.A, B.A)


def report_from_centered(A: np.ndarray, B: np.ndarray,
                         dvar2_x: float | None = None,
                         dvar2_y: float | None = None) -> DCorReport:
    """Assemble a DCorReport from two centered matrices.

    Variances can be passed in when the caller has them cached (heatmaps).
    """
    cov = frobenius_mean(A, B)
    vx = frobenius_mean(A, A) if dvar2_x is None else dvar2_x
    vy = frobenius_mean(B, B) if dvar2_y is None else dvar2_y
    denom2 = vx * vy
    if denom2 <= DEGENERATE_EPS:
        return DCorReport(dcor=0.0, dcov2=cov, dvar2_x=vx, dvar2_y=vy, degenerate=True)
    ratio = cov / math.sqrt(denom2)
    return DCorReport(dcor=math.sqrt(max(ratio, 0.0)), dcov2=cov,
                      dvar2_x=vx, dvar2_y=vy, degenerate=False)


def dcor(x, y) -> DCorReport:
    """Empirical distance correlation of two batches with equal sample counts.

    The feature dimensions of `x` and `y` may differ. A constant batch has
    zero distance variance; the report then carries `degenerate=True` and
    `dcor=0`.
    """
    x = as_batch(x, "x")
    y = as_batch(y, "y")
    same_n(x, y)
    A = _center_inplace(_distances(x))
    B = A if y is x else _center_inplace(_distances(y))
    return report_from_centered(A, B)


def dcor_value(x, y) -> float:
    return dcor(x, y).dcor


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"vectors differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise InvalidInputError("pearson needs at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateError("pearson correlation of a constant vector is undefined")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def demo_sampler(case: str, n: int, seed: int):
    """Draw one of the four pedagogical (x, y) distributions.

    A: y = 0.5 x^2 + 0.75 e; B: y = 0.15 x^3 + 0.75 e + 2.5; C: bivariate
    normal with mean (0, 2.5) and covariance [[1, .75], [.75, 1.25]];
    D: same means with independent components. x ~ N(0, 1) for A and B.
    """
    case = str(case).upper()
    if case not in DEMO_CASES:
        raise InvalidInputError(f"unknown case {case!r}; expected one of {DEMO_CASES}")
    if n < 2:
        raise InvalidInputError(f"need n >= 2, got {n}")
    rng = make_rng(seed)
    if case == "A":
        x = rng.standard_normal(n)
        y = 0.5 * x ** 2 + 0.75 * rng.standard_normal(n)
    elif case == "B":
        x = rng.standard_normal(n)
        y = 0.15 * x ** 3 + 0.75 * rng.standard_normal(n) + 2.5
    else:
        cov = [[1.0, 0.75], [0.75, 1.25]] if case == "C" else [[1.0, 0.0], [0.0, 1.25]]
        xy = rng.multivariate_normal([0.0, 2.5], cov, size=n, method="cholesky")
        x, y = xy[:, 0], xy[:, 1]
    logger.debug("demo case %s drawn with n=%d seed=%d", case, n, seed)
    return SampleBatch(x), SampleBatch(y)
