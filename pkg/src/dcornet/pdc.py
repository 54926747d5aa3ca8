"""
U-centered distance matrices, their unbiased inner product, orthogonal
projection in that Hilbert space, and partial distance covariance and
correlation.
"""
from __future__ import annotations

import logging
import math

import dcor
import numpy as np

from dcornet.dcor_core import _distances
from dcornet.models import DistanceMatrix, PDCorReport, UCenteredMatrix, as_batch
from dcornet.utils import DEGENERATE_EPS, DimensionError, same_n

logger = logging.getLogger(__name__)

# U-statistics need n > 2 to center and n != 3 for the 1/(n(n-3)) factor.
MIN_U_SAMPLES = 4


def _u_center_array(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    total = a.sum()
    row_sums = a.sum(axis=1)
    out = a - (row_sums[:, None] + row_sums[None, :]) / (n - 2) + total / ((n - 1) * (n - 2))
    np.fill_diagonal(out, 0.0)
    return out


def _u_inner_array(a: np.ndarray, b: np.ndarray) -> float:
    n = a.shape[0]
    return float(np.vdot(a, b)) / (n * (n - 3))


def u_centered_of(x) -> np.ndarray:
    """U-centered distance matrix of a batch (raw array)."""
    return _u_center_array(_distances(as_batch(x)))


def u_center(D: DistanceMatrix) -> UCenteredMatrix:
    if D.n <= 2:
        raise DimensionError(f"U-centering needs n > 2, got {D.n}")
    return UCenteredMatrix(_u_center_array(np.asarray(D.d, dtype=np.float64)))


def u_inner(At: UCenteredMatrix, Bt: UCenteredMatrix) -> float:
    if At.n != Bt.n:
        raise DimensionError(f"U-centered matrices differ in size: {At.n} vs {Bt.n}")
    if At.n < MIN_U_SAMPLES:
        raise DimensionError(f"U inner product needs n >= {MIN_U_SAMPLES}, got {At.n}")
    return _u_inner_array(At.At, Bt.At)


def projection_coefficient(At: UCenteredMatrix, Ct: UCenteredMatrix) -> float:
    """(A·C)/(C·C), or 0 when C carries no energy."""
    cc = u_inner(Ct, Ct)
    if cc <= DEGENERATE_EPS:
        return 0.0
    return u_inner(At, Ct) / cc


def project_orthogonal(At: UCenteredMatrix, Ct: UCenteredMatrix) -> UCenteredMatrix:
    """Component of `At` orthogonal to `Ct`.

    Conditioning on a matrix with (C·C) below the degenerate threshold removes
    nothing: `At` comes back unchanged with `degenerate=True`.
    """
    cc = u_inner(Ct, Ct)
    if cc <= DEGENERATE_EPS:
        return UCenteredMatrix(At.At.copy(), degenerate=True)
    beta = u_inner(At, Ct) / cc
    return UCenteredMatrix(At.At - beta * Ct.At)


def _projected_triplet(x, y, z):
    x = as_batch(x, "x")
    y = as_batch(y, "y")
    z = as_batch(z, "z")
    same_n(x, y, z, minimum=MIN_U_SAMPLES)
    a = UCenteredMatrix(u_centered_of(x))
    b = UCenteredMatrix(u_centered_of(y))
    c = UCenteredMatrix(u_centered_of(z))
    return a, b, c


def pdcov(x, y, z) -> float:
    """Partial distance covariance of x and y with z removed."""
    a, b, c = _projected_triplet(x, y, z)
    return u_inner(project_orthogonal(a, c), project_orthogonal(b, c))


def _correlation_of(px: UCenteredMatrix, py: UCenteredMatrix,
                    beta_xz: float = 0.0, beta_yz: float = 0.0) -> PDCorReport:
    cov = u_inner(px, py)
    nx2 = u_inner(px, px)
    ny2 = u_inner(py, py)
    nx = math.sqrt(max(nx2, 0.0))
    ny = math.sqrt(max(ny2, 0.0))
    if nx2 <= DEGENERATE_EPS or ny2 <= DEGENERATE_EPS:
        return PDCorReport(pdcor2=0.0, pdcov=cov, proj_x_norm=nx, proj_y_norm=ny,
                           beta_xz=beta_xz, beta_yz=beta_yz, degenerate=True)
    return PDCorReport(pdcor2=cov / (nx * ny), pdcov=cov, proj_x_norm=nx,
                       proj_y_norm=ny, beta_xz=beta_xz, beta_yz=beta_yz,
                       degenerate=False)


def pdcor(x, y, z) -> PDCorReport:
    """Partial distance correlation R*^2(x, y; z), reported signed and unclamped."""
    a, b, c = _projected_triplet(x, y, z)
    beta_xz = projection_coefficient(a, c)
    beta_yz = projection_coefficient(b, c)
    return _correlation_of(project_orthogonal(a, c), project_orthogonal(b, c),
                           beta_xz, beta_yz)


def bias_corrected_dcor2(x, y) -> float:
    """(A·B)/(|A||B|) on U-centered matrices; may dip slightly below zero."""
    x = as_batch(x, "x")
    y = as_batch(y, "y")
    same_n(x, y, minimum=MIN_U_SAMPLES)
    a = UCenteredMatrix(u_centered_of(x))
    b = a if y is x else UCenteredMatrix(u_centered_of(y))
    return _correlation_of(a, b).pdcor2


# --- O(n log n) path for scalar samples

def u_dcov2_univariate_fast(x, y) -> float:
    """Bias-corrected squared distance covariance of two scalar samples.

    Equals u_inner(u_center(|x_i - x_j|), u_center(|y_i - y_j|)) without
    forming n×n matrices, so it scales to n in the hundreds of thousands.
    Samples with repeated values go through the dense computation instead.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimensionError(f"sample counts differ: {x.size} vs {y.size}")
    n = x.size
    if n < MIN_U_SAMPLES:
        raise DimensionError(f"need n >= {MIN_U_SAMPLES}, got {n}")
    tied = np.unique(x).size < n or np.unique(y).size < n
    method = "naive" if tied else "avl"
    logger.debug("u_dcov2 of %d scalar pairs via the %s method", n, method)
    return float(dcor.u_distance_covariance_sqr(x, y, method=method))
