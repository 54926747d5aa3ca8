"""
Direct-formula implementations written as explicit loops. They are slow
on purpose and serve as oracles for the vectorised code paths.
"""
from __future__ import annotations

import math

import numpy as np

from dcornet.models import as_batch
from dcornet.utils import DEGENERATE_EPS


def naive_distances(x) -> np.ndarray:
    x = as_batch(x)
    n = x.shape[0]
    d = np.zeros((n, n))
    for k in range(n):
        for l in range(n):
            d[k, l] = math.sqrt(sum((x[k, i] - x[l, i]) ** 2 for i in range(x.shape[1])))
    return d


def naive_double_center(d: np.ndarray) -> np.ndarray:
    n = d.shape[0]
    rows = [sum(d[k, l] for l in range(n)) / n for k in range(n)]
    cols = [sum(d[k, l] for k in range(n)) / n for l in range(n)]
    grand = sum(rows) / n
    out = np.zeros_like(d)
    for k in range(n):
        for l in range(n):
            out[k, l] = d[k, l] - rows[k] - cols[l] + grand
    return out


def naive_dcov2(A: np.ndarray, B: np.ndarray) -> float:
    n = A.shape[0]
    total = 0.0
    for k in range(n):
        for l in range(n):
            total += A[k, l] * B[k, l]
    return total / (n * n)


def naive_dcor(x, y) -> float:
    A = naive_double_center(naive_distances(x))
    B = naive_double_center(naive_distances(y))
    vxy = naive_dcov2(A, B)
    vx = naive_dcov2(A, A)
    vy = naive_dcov2(B, B)
    if vx * vy <= DEGENERATE_EPS:
        return 0.0
    return math.sqrt(max(vxy / math.sqrt(vx * vy), 0.0))


def naive_u_center(d: np.ndarray) -> np.ndarray:
    n = d.shape[0]
    rows = [sum(d[k, j] for j in range(n)) for k in range(n)]
    cols = [sum(d[i, l] for i in range(n)) for l in range(n)]
    total = sum(rows)
    out = np.zeros_like(d)
    for k in range(n):
        for l in range(n):
            if k != l:
                out[k, l] = (d[k, l] - cols[l] / (n - 2) - rows[k] / (n - 2)
                             + total / ((n - 1) * (n - 2)))
    return out


def naive_u_inner(a: np.ndarray, b: np.ndarray) -> float:
    n = a.shape[0]
    total = 0.0
    for k in range(n):
        for l in range(n):
            if k != l:
                total += a[k, l] * b[k, l]
    return total / (n * (n - 3))


def _naive_project(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    cc = naive_u_inner(c, c)
    if cc <= DEGENERATE_EPS:
        return a.copy()
    return a - (naive_u_inner(a, c) / cc) * c


def naive_pdcov(x, y, z) -> float:
    a = naive_u_center(naive_distances(x))
    b = naive_u_center(naive_distances(y))
    c = naive_u_center(naive_distances(z))
    return naive_u_inner(_naive_project(a, c), _naive_project(b, c))


def naive_pdcor(x, y, z) -> float:
    a = naive_u_center(naive_distances(x))
    b = naive_u_center(naive_distances(y))
    c = naive_u_center(naive_distances(z))
    pa = _naive_project(a, c)
    pb = _naive_project(b, c)
    na = naive_u_inner(pa, pa)
    nb = naive_u_inner(pb, pb)
    if na <= DEGENERATE_EPS or nb <= DEGENERATE_EPS:
        return 0.0
    return naive_u_inner(pa, pb) / math.sqrt(na * nb)
