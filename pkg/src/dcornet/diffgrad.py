"""
Exact gradients of distance-correlation losses with respect to a sample
matrix, obtained by chaining hand-derived adjoints

    samples -> pairwise distances -> centering -> inner products -> ratio

and a central-difference checker for them.

At coincident samples the Euclidean distance is not differentiable; the
derivative is taken as 0 there, so batches with duplicate rows are legal.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Optional

import numpy as np

from dcornet.dcor_core import _center_inplace, _distances, frobenius_mean
from dcornet.models import GradResult, as_batch
from dcornet.pdc import MIN_U_SAMPLES, _u_center_array, _u_inner_array
from dcornet.utils import (
    DEGENERATE_EPS, DegenerateError, InvalidInputError, same_n,
)

logger = logging.getLogger(__name__)


def distance_backprop(X: np.ndarray, G: np.ndarray, d: Optional[np.ndarray] = None) -> np.ndarray:
    """Pull a gradient on the n×n distance matrix back to the n×p samples."""
    if d is None:
        d = _distances(X)
    S = G + G.T
    W = np.divide(S, d, out=np.zeros_like(S), where=d > 0)
    return W.sum(axis=1)[:, None] * X - W @ X


def _u_center_adjoint(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    Mp = M.copy()
    np.fill_diagonal(Mp, 0.0)
    rows = Mp.sum(axis=1)
    cols = Mp.sum(axis=0)
    return (Mp - (rows[:, None] + cols[None, :]) / (n - 2)
            + Mp.sum() / ((n - 1) * (n - 2)))


def _pick_side(X, Y, wrt):
    if wrt == "X":
        return X, Y
    if wrt == "Y":
        return Y, X
    raise InvalidInputError(f"wrt must be 'X' or 'Y', got {wrt!r}")


def _ratio_parts(X: np.ndarray, Y: np.ndarray):
    """Squared distance correlation and its gradient wrt X's distance matrix."""
    n = same_n(X, Y, minimum=2)
    d = _distances(X)
    A = _center_inplace(d.copy())
    B = _center_inplace(_distances(Y))
    sxy = frobenius_mean(A, B)
    sxx = frobenius_mean(A, A)
    syy = frobenius_mean(B, B)
    if sxx * syy <= DEGENERATE_EPS:
        raise DegenerateError("distance variance vanishes; the dCor gradient is undefined",
                              payload={"dvar2_x": sxx, "dvar2_y": syy})
    root = math.sqrt(sxx * syy)
    ratio = sxy / root
    G = (B / root - ratio * A / sxx) / (n * n)
    return ratio, G, d, sxy, A, B


def dcor_value_grad(X, Y, wrt: str = "X") -> GradResult:
    """dCor(X, Y) and its gradient with respect to the batch named by `wrt`."""
    X = as_batch(X, "X")
    Y = as_batch(Y, "Y")
    U, V = _pick_side(X, Y, wrt)
    ratio, G, d, *_ = _ratio_parts(U, V)
    value = math.sqrt(max(ratio, 0.0))
    if value == 0.0:
        # sqrt has no finite slope at zero
        return GradResult(0.0, np.zeros_like(U))
    return GradResult(value, distance_backprop(U, G / (2.0 * value), d))


def dcor2_value_grad(X, Y, wrt: str = "X") -> GradResult:
    """dCor²(X, Y), the ratio <A,B>/sqrt(<A,A><B,B>), and its gradient."""
    X = as_batch(X, "X")
    Y = as_batch(Y, "Y")
    U, V = _pick_side(X, Y, wrt)
    ratio, G, d, *_ = _ratio_parts(U, V)
    return GradResult(ratio, distance_backprop(U, G, d))


def dcov2_value_grad(X, Y, wrt: str = "X") -> GradResult:
    """V²_n(X, Y) = <A,B> and its gradient; no normalisation, no degeneracy."""
    X = as_batch(X, "X")
    Y = as_batch(Y, "Y")
    U, V = _pick_side(X, Y, wrt)
    n = same_n(U, V, minimum=2)
    d = _distances(U)
    A = _center_inplace(d.copy())
    B = _center_inplace(_distances(V))
    return GradResult(frobenius_mean(A, B), distance_backprop(U, B / (n * n), d))


def dvar2_value_grad(X) -> GradResult:
    """<A,A> for a single batch, the quantity the training constraint bounds."""
    X = as_batch(X, "X")
    n = X.shape[0]
    d = _distances(X)
    A = _center_inplace(d.copy())
    return GradResult(frobenius_mean(A, A), distance_backprop(X, 2.0 * A / (n * n), d))


def _partial_ratio_grad(X: np.ndarray, Y: np.ndarray, Z: Optional[np.ndarray]) -> GradResult:
    if Z is None:
        n = same_n(X, Y, minimum=MIN_U_SAMPLES)
    else:
        n = same_n(X, Y, Z, minimum=MIN_U_SAMPLES)
    d = _distances(X)
    a = _u_center_array(d)
    b = _u_center_array(_distances(Y))
    px, py = a, b
    if Z is not None:
        c = _u_center_array(_distances(Z))
        cc = _u_inner_array(c, c)
        if cc > DEGENERATE_EPS:
            px = a - (_u_inner_array(a, c) / cc) * c
            py = b - (_u_inner_array(b, c) / cc) * c
    nx2 = _u_inner_array(px, px)
    ny2 = _u_inner_array(py, py)
    if nx2 <= DEGENERATE_EPS or ny2 <= DEGENERATE_EPS:
        raise DegenerateError("projected U-centered matrix has no energy; R*² gradient undefined",
                              payload={"proj_x_norm2": nx2, "proj_y_norm2": ny2})
    root = math.sqrt(nx2 * ny2)
    value = _u_inner_array(px, py) / root
    kappa = 1.0 / (n * (n - 3))
    G_u = kappa * (py / root - value * px / nx2)
    G = _u_center_adjoint(G_u)
    return GradResult(value, distance_backprop(X, G, d))


def pdcor_value_grad(X, Y, Z, wrt: str = "X") -> GradResult:
    """R*²(X, Y; Z) and its gradient wrt X, holding Y and Z fixed."""
    if wrt != "X":
        raise InvalidInputError("pdcor gradients are only available with respect to X")
    return _partial_ratio_grad(as_batch(X, "X"), as_batch(Y, "Y"), as_batch(Z, "Z"))


def bias_corrected_dcor2_value_grad(X, Y) -> GradResult:
    """Unconditioned R*² (A·B)/(|A||B|) and its gradient wrt X."""
    return _partial_ratio_grad(as_batch(X, "X"), as_batch(Y, "Y"), None)


# --- verification

LossHandle = Callable[[np.ndarray], object]


def _value_and_grad(loss: LossHandle, X: np.ndarray):
    out = loss(X)
    if isinstance(out, GradResult):
        return out.value, out.grad
    value, grad = out
    return float(value), np.asarray(grad, dtype=np.float64)


def finite_diff_check(loss: LossHandle, X, h: float = 1e-5, abs_floor: float = 1e-4) -> float:
    """Largest discrepancy between the analytic and a central-difference gradient.

    `loss(X)` returns a GradResult or a (value, grad) pair. The discrepancy is
    measured against the gradient's largest entry, floored at `abs_floor`.
    """
    if not h > 0:
        raise InvalidInputError("finite-difference step h must be positive")
    X = np.array(as_batch(X, "X"), dtype=np.float64)
    _, grad = _value_and_grad(loss, X)
    numeric = np.zeros_like(X)
    for i in range(X.size):
        orig = X.flat[i]
        X.flat[i] = orig + h
        f_plus, _ = _value_and_grad(loss, X)
        X.flat[i] = orig - h
        f_minus, _ = _value_and_grad(loss, X)
        X.flat[i] = orig
        numeric.flat[i] = (f_plus - f_minus) / (2.0 * h)
    scale = max(np.abs(grad).max(), np.abs(numeric).max(), abs_floor)
    worst = float(np.abs(grad - numeric).max() / scale)
    logger.debug("finite-difference check: max discrepancy %.3e (scale %.3e)", worst, scale)
    return worst


def dcor_loss(Y) -> LossHandle:
    Y = as_batch(Y, "Y")
    return lambda X: dcor_value_grad(X, Y)


def pdcor_loss(Y, Z) -> LossHandle:
    Y = as_batch(Y, "Y")
    Z = as_batch(Z, "Z")
    return lambda X: pdcor_value_grad(X, Y, Z)
